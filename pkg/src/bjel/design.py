"""Sampling designs, survey weights and design-effect estimation."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Literal

import numpy as np

from .elcore import WeightedSample
from .errors import (
    DegenerateVariance,
    InvalidInput,
    NegativeCalibratedWeight,
    NonPositiveWeight,
    RejectionBudgetExceeded,
    SingularCalibration,
    SingularSystem,
    SizeMeasureTooLarge,
)

REJECTION_BUDGET = 10**6
# Draws generated per vectorised block of Rao-Sampford attempts.
_BLOCK_DRAWS = 200_000


@dataclass(frozen=True)
class DesignSpec:
    """Fixed-size single-stage design over units ``0..N-1``."""

    population_size: int
    sample_size: int
    kind: Literal["srswor", "rao_sampford"] = "srswor"
    size_measures: np.ndarray | None = None

    def __post_init__(self):
        N, n = self.population_size, self.sample_size
        if int(N) != N or int(n) != n or n < 1:
            raise InvalidInput("population and sample sizes must be positive integers")
        if n >= N:
            raise InvalidInput(f"sample size n={n} must be smaller than population size N={N}")
        if self.kind not in ("srswor", "rao_sampford"):
            raise InvalidInput(f"unknown design kind {self.kind!r}")
        if self.kind == "rao_sampford":
            if self.size_measures is None:
                raise InvalidInput("rao_sampford needs size measures")
            z = np.asarray(self.size_measures, dtype=float)
            if z.shape != (N,):
                raise InvalidInput(f"expected {N} size measures, got shape {z.shape}")
            if not np.all(np.isfinite(z)) or np.any(z <= 0):
                raise InvalidInput("size measures must be finite and positive")
            if np.any(n * z >= z.sum()):
                raise SizeMeasureTooLarge(
                    "n*z_i/sum(z) >= 1 for some unit; take it with certainty before sampling"
                )
            object.__setattr__(self, "size_measures", z)

    def inclusion_probabilities(self) -> np.ndarray:
        N, n = self.population_size, self.sample_size
        if self.kind == "srswor":
            return np.full(N, n / N)
        z = self.size_measures
        return n * z / z.sum()


@dataclass(frozen=True)
class SampleDraw:
    indices: np.ndarray
    incl_probs: np.ndarray
    design_weights: np.ndarray

    @property
    def n(self) -> int:
        return self.indices.size


@dataclass(frozen=True)
class DesignEffect:
    deff: float
    variance_vp: float
    srs_variance: float
    n_star: float
    clamped: bool = False


def _rao_sampford(z: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    """Sampford's rejection scheme: one draw with probabilities ``p_i``, then
    ``n-1`` with replacement proportional to ``p_i/(1 - n p_i)``; accept when
    all ``n`` units are distinct."""
    N = z.size
    p = z / z.sum()
    q = p / (1.0 - n * p)
    cdf_p = np.cumsum(p)
    cdf_q = np.cumsum(q / q.sum())
    cdf_p[-1] = cdf_q[-1] = 1.0
    max_block = max(1, _BLOCK_DRAWS // n)
    block = 4
    attempts = 0
    while attempts < REJECTION_BUDGET:
        a = min(block, REJECTION_BUDGET - attempts)
        block = min(2 * block, max_block)
        draws = np.empty((a, n), dtype=np.int64)
        draws[:, 0] = np.searchsorted(cdf_p, rng.random(a), side="right")
        if n > 1:
            draws[:, 1:] = np.searchsorted(cdf_q, rng.random((a, n - 1)), side="right")
        np.minimum(draws, N - 1, out=draws)
        srt = np.sort(draws, axis=1)
        distinct = np.all(np.diff(srt, axis=1) != 0, axis=1)
        hit = np.flatnonzero(distinct)
        if hit.size:
            return srt[hit[0]]
        attempts += a
    raise RejectionBudgetExceeded(f"no distinct Rao-Sampford sample within {REJECTION_BUDGET} attempts")


def draw_sample(spec: DesignSpec, seed) -> SampleDraw:
    """Draw one sample; ``seed`` is an int or a ``numpy.random.Generator``."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    n, N = spec.sample_size, spec.population_size
    if spec.kind == "srswor":
        idx = np.sort(rng.choice(N, size=n, replace=False))
    else:
        idx = _rao_sampford(spec.size_measures, n, rng)
    pi = spec.inclusion_probabilities()[idx]
    return SampleDraw(indices=idx, incl_probs=pi, design_weights=1.0 / pi)


def normalize_weights(raw) -> np.ndarray:
    raw = np.asarray(raw, dtype=float)
    if raw.size == 0 or not np.all(np.isfinite(raw)) or np.any(raw <= 0):
        raise NonPositiveWeight("weights must be finite and strictly positive")
    return raw / raw.sum()


def calibrate_weights(d, x, target_total) -> np.ndarray:
    """Chi-square (GREG) calibration of design weights ``d`` to known totals.

    ``w_i = d_i (1 + (X - X_HT)' T^{-1} x_i)`` with ``T = sum d_i x_i x_i'``,
    so that ``sum w_i x_i = X``. Negative weights are returned but flagged
    with a :class:`NegativeCalibratedWeight` warning.
    """
    d = np.asarray(d, dtype=float)
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    X = np.atleast_1d(np.asarray(target_total, dtype=float))
    if x.shape != (d.size, X.size):
        raise InvalidInput(f"aux shape {x.shape} does not match n={d.size}, k={X.size}")
    T = (d[:, None] * x).T @ x
    ev = np.linalg.eigvalsh(T)
    if ev[0] <= 1e-12 * max(ev[-1], np.finfo(float).tiny):
        raise SingularCalibration("weighted auxiliary cross-product matrix is singular")
    gap = X - d @ x
    w = d * (1.0 + x @ np.linalg.solve(T, gap))
    if np.any(w <= 0):
        warnings.warn(f"{int((w <= 0).sum())} calibrated weight(s) are not positive",
                      NegativeCalibratedWeight, stacklevel=2)
    return w


def regression_coeff(ws: WeightedSample) -> np.ndarray:
    """Weighted regression slope of pseudo-values on auxiliaries, Hajek-centred."""
    if not ws.has_aux:
        raise InvalidInput("regression_coeff needs auxiliary data")
    w = ws.norm_weights
    xc = ws.aux - w @ ws.aux
    vc = ws.values - ws.weighted_mean
    Sxx = (w[:, None] * xc).T @ xc
    ev = np.linalg.eigvalsh(Sxx)
    if ev[0] <= 1e-12 * max(ev[-1], np.finfo(float).tiny):
        raise SingularSystem("weighted auxiliary covariance is singular")
    return np.linalg.solve(Sxx, (w * vc) @ xc)


def _linearised_residuals(v, dn, aux, B):
    e = v - dn @ v
    if aux is not None:
        aux = np.asarray(aux, dtype=float)
        if aux.ndim == 1:
            aux = aux[:, None]
        e = e - (aux - dn @ aux) @ np.atleast_1d(B)
    return e


def _hajek_variance(dn, pi, e) -> float:
    """High-entropy approximation ``n/(n-1) sum (1-pi_i) (dn_i e_i)^2``."""
    n = e.size
    c = np.ones(n) if pi is None else 1.0 - pi
    return float(n / (n - 1) * np.sum(c * (dn * e) ** 2))


def _srs_scale(dn, e) -> float:
    n = e.size
    return float(n / (n - 1) * np.sum(dn * e**2))


def _resolve(draw, v, weights):
    v = np.asarray(v, dtype=float)
    if draw is not None:
        d, pi = draw.design_weights, draw.incl_probs
    else:
        d, pi = np.asarray(weights, dtype=float), None
    if d.shape != v.shape:
        raise InvalidInput("weights and values differ in length")
    return v, normalize_weights(d), pi


def _greg_B(v, dn, aux, B):
    if B is not None:
        return np.atleast_1d(np.asarray(B, dtype=float))
    k = np.asarray(aux).reshape(v.size, -1).shape[1]
    return regression_coeff(WeightedSample(v, dn, aux, np.zeros(k)))


def design_effect(draw: SampleDraw | None, v, variant: str = "hajek", aux=None, B=None,
                  weights=None, fpc: bool = True) -> DesignEffect:
    """Design effect of the Hajek (or GREG) estimator and effective sample size.

    Parameters
    ----------
    draw : SampleDraw or None
        Supplies design weights and inclusion probabilities. When ``None``,
        ``weights`` must be given and no finite-population correction is
        applied.
    v : array_like
        Pseudo-values of the sampled units.
    variant : {"hajek", "greg"}
        ``"greg"`` uses regression residuals on ``aux`` with slope ``B``
        (estimated if not supplied).
    fpc : bool
        Include the ``1 - pi_i`` factors in the variance approximation.
    """
    v, dn, pi = _resolve(draw, v, weights)
    n = v.size
    if n < 2:
        raise InvalidInput("design effect needs at least two units")
    if variant == "hajek":
        e = _linearised_residuals(v, dn, None, None)
    elif variant == "greg":
        if aux is None:
            raise InvalidInput("greg design effect needs auxiliary data")
        e = _linearised_residuals(v, dn, aux, _greg_B(v, dn, aux, B))
    else:
        raise InvalidInput(f"unknown variant {variant!r}")

    s2 = _srs_scale(dn, e)
    if not s2 > 1e-300 or s2 <= 1e-24 * max(1.0, float(np.mean(v**2))):
        raise DegenerateVariance("pseudo-values (or residuals) have no spread")
    vp = _hajek_variance(dn, pi if fpc else None, e)
    deff = vp / (s2 / n)
    clamped = False
    if deff <= 0.1:
        deff, clamped = 0.1, True
    return DesignEffect(deff=deff, variance_vp=vp, srs_variance=s2 / n, n_star=n / deff, clamped=clamped)


def scale_factor_w(draw: SampleDraw | None, v, aux, B=None, weights=None, fpc: bool = True) -> float:
    """Scale factor ``S_v^2 / var(GREG estimator)`` for calibration-weighted EL."""
    v, dn, pi = _resolve(draw, v, weights)
    s2_v = _srs_scale(dn, v - dn @ v)
    e = _linearised_residuals(v, dn, aux, _greg_B(v, dn, aux, B))
    var_gr = _hajek_variance(dn, pi if fpc else None, e)
    if not s2_v > 1e-24 * max(1.0, float(np.mean(v**2))) or var_gr <= 1e-24 * s2_v:
        raise DegenerateVariance("cannot form the calibration scale factor: zero variance")
    return s2_v / var_gr
