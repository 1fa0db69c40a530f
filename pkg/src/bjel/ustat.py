"""U-statistics and their jackknife pseudo-values.

Kernels are vectorised: ``Kernel.func`` receives ``order`` numpy arrays of
a common (broadcast) shape and returns an array of that shape.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from math import comb
from typing import Callable

import numpy as np

from .errors import InvalidInput, SampleTooSmall

# Rows per block when forming pairwise kernel matrices; bounds memory at
# roughly _CHUNK * n doubles.
_CHUNK = 512


@dataclass(frozen=True)
class Kernel:
    """Symmetric kernel of ``order`` real arguments."""

    name: str
    order: int
    func: Callable[..., np.ndarray]

    def __post_init__(self):
        if int(self.order) != self.order or self.order < 1:
            raise InvalidInput(f"kernel order must be a positive integer, got {self.order!r}")

    def __call__(self, *args):
        if len(args) != self.order:
            raise InvalidInput(f"kernel {self.name!r} takes {self.order} arguments, got {len(args)}")
        return self.func(*(np.asarray(a, dtype=float) for a in args))


@dataclass(frozen=True)
class PseudoValues:
    """Jackknife pseudo-values of a sample together with the full-sample statistic."""

    values: np.ndarray
    u_stat: float
    n: int


def _mean_kernel(x):
    return x


def _variance_kernel(x, y):
    return 0.5 * (x - y) ** 2


def _pwm_kernel(x, y):
    return 0.5 * np.maximum(x, y)


_BUILTIN = (
    Kernel("mean", 1, _mean_kernel),
    Kernel("variance", 2, _variance_kernel),
    Kernel("pwm", 2, _pwm_kernel),
)


def builtin_kernels() -> list[Kernel]:
    """Return the mean, variance and probability-weighted-moment kernels."""
    return list(_BUILTIN)


def get_kernel(name: str) -> Kernel:
    for k in _BUILTIN:
        if k.name == name:
            return k
    raise InvalidInput(f"unknown kernel {name!r}; choose from {[k.name for k in _BUILTIN]}")


def _as_sample(y, k: Kernel, min_size: int) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    if y.ndim != 1:
        raise InvalidInput("sample must be one-dimensional")
    if not np.all(np.isfinite(y)):
        raise InvalidInput("sample contains non-finite values")
    if y.size < min_size:
        raise SampleTooSmall(
            f"kernel {k.name!r} of order {k.order} needs at least {min_size} observations, got {y.size}"
        )
    return y


def _checked(h: np.ndarray, k: Kernel) -> np.ndarray:
    if not np.all(np.isfinite(h)):
        raise InvalidInput(f"kernel {k.name!r} produced non-finite values")
    return h


def _pair_row_sums(y: np.ndarray, k: Kernel) -> np.ndarray:
    """R_i = sum_{j != i} h(y_i, y_j), computed blockwise in O(n^2)."""
    n = y.size
    out = np.empty(n)
    for start in range(0, n, _CHUNK):
        block = y[start:start + _CHUNK]
        h = _checked(k(block[:, None], y[None, :]), k)
        out[start:start + block.size] = h.sum(axis=1) - np.diagonal(h, offset=start)
    return out


def _u_stat_combinations(y: np.ndarray, k: Kernel) -> float:
    n, m = y.size, k.order
    if m == 1:
        return float(np.mean(_checked(k(y), k)))
    idx = np.array(list(combinations(range(n), m)))
    h = _checked(k(*(y[idx[:, j]] for j in range(m))), k)
    return float(h.mean())


def u_statistic(y, k: Kernel) -> float:
    """Average of the kernel over all ``k.order``-subsets of ``y``."""
    y = _as_sample(y, k, k.order)
    if k.order == 2:
        n = y.size
        return float(_pair_row_sums(y, k).sum() / (n * (n - 1)))
    return _u_stat_combinations(y, k)


def _loo_naive(y: np.ndarray, k: Kernel) -> np.ndarray:
    n = y.size
    mask = np.ones(n, dtype=bool)
    out = np.empty(n)
    for i in range(n):
        mask[i] = False
        out[i] = _u_stat_combinations(y[mask], k)
        mask[i] = True
    return out


def jackknife_pseudovalues(y, k: Kernel, method: str = "auto") -> PseudoValues:
    """Jackknife pseudo-values ``n*T_n - (n-1)*T_{n-1}^{(-i)}``.

    Parameters
    ----------
    y : array_like
        Sample of ``n > k.order`` finite reals.
    k : Kernel
    method : {"auto", "naive"}
        ``"auto"`` uses cached row sums for order-2 kernels (O(n^2)) and the
        closed form for order 1; ``"naive"`` recomputes every leave-one-out
        statistic from scratch, O(n^(m+1)).
    """
    y = _as_sample(y, k, k.order + 1)
    n = y.size
    if method not in ("auto", "naive"):
        raise InvalidInput(f"unknown method {method!r}")

    if method == "auto" and k.order == 1:
        h = _checked(k(y), k)
        return PseudoValues(values=h.copy(), u_stat=float(h.mean()), n=n)

    if method == "auto" and k.order == 2:
        row = _pair_row_sums(y, k)
        total = row.sum()  # twice the sum over unordered pairs
        t_full = total / (n * (n - 1))
        t_loo = (total - 2.0 * row) / ((n - 1) * (n - 2))
    else:
        t_full = _u_stat_combinations(y, k)
        t_loo = _loo_naive(y, k)

    values = n * t_full - (n - 1) * t_loo
    return PseudoValues(values=values, u_stat=float(t_full), n=n)
