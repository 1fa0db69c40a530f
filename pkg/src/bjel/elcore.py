"""Inner empirical-likelihood problem for normalised survey weights.

For a fixed target ``theta`` the weighted log-EL ``sum_i w_i log p_i`` is
maximised subject to ``sum p_i = 1``, ``sum p_i (v_i - theta) = 0`` and,
optionally, ``sum p_i (x_i - xbar) = 0``. The solution has the form
``p_i = w_i / (1 + lam' u_i)`` where ``lam`` is the root of

    sum_i w_i u_i / (1 + lam' u_i) = 0.

Both solvers work on a batch of targets at once so that a whole posterior
grid costs one vectorised solve.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInput, NonConvergence, SingularSystem

logger = logging.getLogger(__name__)

TOL_1D = 1e-10
TOL_MULTI = 1e-8
MAX_ITER = 100
MIN_DENOM = 1e-10
STALL_STEPS = 30
# 1 + lam'u beyond this means lam is running off along a recession direction.
DIVERGENCE = 1e12


@dataclass(frozen=True)
class WeightedSample:
    """Pseudo-values with normalised weights and optional auxiliaries.

    ``aux`` is an ``(n, k)`` matrix and ``aux_mean`` the known population
    mean of its columns; both or neither must be given.
    """

    values: np.ndarray
    norm_weights: np.ndarray
    aux: np.ndarray | None = None
    aux_mean: np.ndarray | None = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        w = np.asarray(self.norm_weights, dtype=float)
        if v.ndim != 1 or w.shape != v.shape:
            raise InvalidInput("values and norm_weights must be 1-D arrays of equal length")
        if not (np.all(np.isfinite(v)) and np.all(np.isfinite(w))):
            raise InvalidInput("non-finite values or weights")
        if np.any(w <= 0):
            raise InvalidInput("norm_weights must be strictly positive")
        if abs(w.sum() - 1.0) > 1e-12:
            raise InvalidInput(f"norm_weights must sum to 1, got {w.sum()!r}")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "norm_weights", w)
        if (self.aux is None) != (self.aux_mean is None):
            raise InvalidInput("aux and aux_mean must be given together")
        if self.aux is not None:
            x = np.asarray(self.aux, dtype=float)
            if x.ndim == 1:
                x = x[:, None]
            xbar = np.atleast_1d(np.asarray(self.aux_mean, dtype=float))
            if x.shape[0] != v.size or x.shape[1] != xbar.size:
                raise InvalidInput(f"aux shape {x.shape} does not match n={v.size}, k={xbar.size}")
            if not (np.all(np.isfinite(x)) and np.all(np.isfinite(xbar))):
                raise InvalidInput("non-finite auxiliary data")
            object.__setattr__(self, "aux", x)
            object.__setattr__(self, "aux_mean", xbar)

    @classmethod
    def from_raw(cls, values, weights=None, aux=None, aux_mean=None) -> "WeightedSample":
        """Build from unnormalised positive weights (uniform if ``None``)."""
        v = np.asarray(values, dtype=float)
        if weights is None:
            w = np.full(v.size, 1.0 / v.size)
        else:
            w = np.asarray(weights, dtype=float)
            if np.any(~np.isfinite(w)) or np.any(w <= 0):
                raise InvalidInput("weights must be finite and positive")
            w = w / w.sum()
        return cls(v, w, aux, aux_mean)

    @property
    def n(self) -> int:
        return self.values.size

    @property
    def has_aux(self) -> bool:
        return self.aux is not None

    @property
    def weighted_mean(self) -> float:
        return float(self.norm_weights @ self.values)


@dataclass
class ELSolution:
    lam: np.ndarray
    p: np.ndarray
    log_el: float
    feasible: bool
    iterations: int
    residual: float = float("nan")
    status: str = "ok"
    notes: list = field(default_factory=list)


# ----------------------------------------------------------------------
# scalar constraint


def _solve_1d_batch(v, w, thetas, tol=TOL_1D, max_iter=MAX_ITER):
    """Safeguarded Newton/bisection for the scalar multiplier at many targets.

    Returns ``(lam, feasible, iterations, residual)``; infeasible rows carry
    ``nan``. The score is strictly decreasing on its domain, and the root is
    confined to ``[lo, hi]`` because every ``p_i`` must be at most one.
    """
    thetas = np.atleast_1d(np.asarray(thetas, dtype=float))
    G = thetas.size
    u = v[None, :] - thetas[:, None]
    umin, umax = u.min(axis=1), u.max(axis=1)
    feasible = (umin < 0) & (umax > 0)

    lam = np.full(G, np.nan)
    resid = np.full(G, np.nan)
    iters = np.zeros(G, dtype=int)
    if not feasible.any():
        return lam, feasible, iters, resid

    uf = u[feasible]
    wm = np.broadcast_to(w, uf.shape)
    with np.errstate(divide="ignore", invalid="ignore"):
        bound = (wm - 1.0) / uf
    lo = np.where(uf > 0, bound, -np.inf).max(axis=1)
    hi = np.where(uf < 0, bound, np.inf).min(axis=1)
    x = np.clip(0.0, lo, hi)
    done = np.zeros(x.size, dtype=bool)
    it = np.zeros(x.size, dtype=int)
    g = np.empty(x.size)

    for k in range(max_iter + 1):
        denom = 1.0 + x[:, None] * uf
        g = (w * uf / denom).sum(axis=1)
        done |= np.abs(g) <= tol
        # collapse of the bracket to machine precision also ends the search
        done |= (hi - lo) <= 4 * np.finfo(float).eps * np.maximum(1.0, np.abs(x))
        if done.all() or k == max_iter:
            break
        act = ~done
        it[act] += 1
        lo = np.where(act & (g > 0), x, lo)
        hi = np.where(act & (g < 0), x, hi)
        dg = -(w * uf**2 / denom**2).sum(axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            step = x - g / dg
        bad = ~np.isfinite(step) | (step <= lo) | (step >= hi)
        step = np.where(bad, 0.5 * (lo + hi), step)
        x = np.where(act, step, x)

    lam[feasible] = x
    resid[feasible] = np.abs(g)
    iters[feasible] = it
    if not done.all():
        n_bad = int((~done).sum())
        raise NonConvergence(
            f"scalar EL multiplier did not converge at {n_bad} target(s)",
            residual=float(np.nanmax(np.abs(g[~done]))),
            iterations=max_iter,
        )
    return lam, feasible, iters, resid


# ----------------------------------------------------------------------
# vector constraint


def _apply(A, b):
    """Batched matrix-vector product ``A[g] @ b[g]``."""
    return (A @ b[..., None])[..., 0]


def _weighted_gram(U, c):
    """``sum_i c[g, i] u_gi u_gi'`` for each batch row."""
    return (U * c[..., None]).transpose(0, 2, 1) @ U


def _solve_multi_batch(U, w, tol=TOL_MULTI, max_iter=MAX_ITER):
    """Damped Newton for the vector multiplier on a batch of constraint sets.

    ``U`` has shape ``(G, n, q)``. The multiplier maximises the concave
    function ``F(lam) = sum_i w_i log(1 + lam'u_i)``; steps are halved until
    every ``1 + lam'u_i >= MIN_DENOM`` and ``F`` does not decrease.

    Returns ``(lam, feasible, iterations, residual, status)``.
    """
    G, n, q = U.shape
    lam = np.zeros((G, q))
    status = np.array(["ok"] * G, dtype=object)
    # A coordinate that does not change sign cannot have 0 inside the hull.
    straddles = ((U.min(axis=1) < 0) & (U.max(axis=1) > 0)).all(axis=1)
    status[~straddles] = "infeasible"

    M0 = _weighted_gram(U, np.broadcast_to(w, U.shape[:2]))
    scale = np.maximum(np.abs(M0).max(axis=(1, 2)), np.finfo(float).tiny)
    eig = np.linalg.eigvalsh(M0 / scale[:, None, None])
    singular = eig[:, 0] <= 1e-12 * eig[:, -1]
    status[singular & straddles] = "singular"

    active = status == "ok"
    best = np.full(G, np.inf)
    since_best = np.zeros(G, dtype=int)
    iters = np.zeros(G, dtype=int)
    resid = np.full(G, np.nan)

    def objective(lmb, idx):
        t = 1.0 + _apply(U[idx], lmb)
        with np.errstate(invalid="ignore", divide="ignore"):
            f = (w * np.log(np.maximum(t, MIN_DENOM))).sum(axis=1)
        return t, f

    for k in range(max_iter + 1):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        t, f = objective(lam[idx], idx)
        wt = w / t
        g = (wt[:, None, :] @ U[idx])[:, 0, :]
        r = np.abs(g).max(axis=1)
        resid[idx] = r

        # Newton converges quadratically, so iterate well past the contract
        # tolerance; stalls that already meet it still count as converged.
        conv = r <= 1e-4 * tol
        diverged = t.max(axis=1) > DIVERGENCE
        improved = r < best[idx]
        best[idx] = np.where(improved, r, best[idx])
        since_best[idx] = np.where(improved, 0, since_best[idx] + 1)
        stalled = (since_best[idx] >= STALL_STEPS) | (k == max_iter)
        good_enough = r <= tol

        status[idx[conv | (stalled & good_enough)]] = "ok"
        status[idx[~conv & diverged]] = "infeasible"
        status[idx[~conv & ~diverged & stalled & ~good_enough]] = (
            "nonconvergence" if k == max_iter else "infeasible"
        )
        stop = conv | diverged | stalled
        active[idx[stop]] = False

        keep = ~stop
        idx, t, f, g, wt = idx[keep], t[keep], f[keep], g[keep], wt[keep]
        if idx.size == 0:
            break
        iters[idx] += 1
        H = _weighted_gram(U[idx], wt / t)
        try:
            delta = np.linalg.solve(H, g[..., None])[..., 0]
        except np.linalg.LinAlgError:
            delta = _apply(np.linalg.pinv(H), g)

        alpha = np.ones(idx.size)
        pending = np.ones(idx.size, dtype=bool)
        new = lam[idx].copy()
        for _ in range(60):
            pi = np.flatnonzero(pending)
            if pi.size == 0:
                break
            cand = lam[idx[pi]] + alpha[pi, None] * delta[pi]
            tc, fc = objective(cand, idx[pi])
            ok = (tc.min(axis=1) >= MIN_DENOM) & (fc >= f[pi] - 1e-14 * np.abs(f[pi]))
            new[pi[ok]] = cand[ok]
            pending[pi[ok]] = False
            alpha[pi[~ok]] *= 0.5
        lam[idx] = new

    feasible = status == "ok"
    # An apparently converged multiplier far out along a recession direction
    # drives every p_i to zero; a genuine solution has sum p_i = 1.
    if feasible.any():
        idx = np.flatnonzero(feasible)
        t = 1.0 + _apply(U[idx], lam[idx])
        total = (w / t).sum(axis=1)
        lost = np.abs(total - 1.0) > 1e-6
        status[idx[lost]] = "infeasible"
        feasible[idx[lost]] = False
    return lam, feasible, iters, resid, status


def _aux_block(ws: WeightedSample) -> np.ndarray:
    return ws.aux - ws.aux_mean[None, :]


def constraint_points(ws: WeightedSample, thetas, use_aux: bool) -> np.ndarray:
    """``u_i(theta)`` for each target, shape ``(G, n, q)``."""
    thetas = np.atleast_1d(np.asarray(thetas, dtype=float))
    first = ws.values[None, :, None] - thetas[:, None, None]
    if not use_aux:
        return first
    xa = np.broadcast_to(_aux_block(ws)[None], (thetas.size,) + ws.aux.shape)
    return np.concatenate([first, xa], axis=2)


def _solution(ws, u, lam, feasible, iters, resid, status) -> ELSolution:
    if not feasible:
        return ELSolution(
            lam=np.atleast_1d(lam), p=np.full(ws.n, np.nan), log_el=-np.inf,
            feasible=False, iterations=int(iters), residual=float(resid), status=status,
        )
    lam = np.atleast_1d(lam)
    p = ws.norm_weights / (1.0 + u @ lam)
    log_el = float(ws.norm_weights @ np.log(p))
    return ELSolution(
        lam=lam, p=p, log_el=log_el, feasible=True, iterations=int(iters), residual=float(resid),
    )


def solve_lambda_1d(ws: WeightedSample, theta: float, tol: float = TOL_1D,
                    max_iter: int = MAX_ITER) -> ELSolution:
    """Scalar multiplier for the mean constraint ``sum p_i v_i = theta``.

    An infeasible target (outside the open range of the values) yields
    ``feasible=False`` and ``log_el=-inf`` rather than an exception.
    """
    if not np.isfinite(theta):
        raise InvalidInput("theta must be finite")
    lam, feas, it, res = _solve_1d_batch(ws.values, ws.norm_weights, [theta], tol, max_iter)
    u = (ws.values - theta)[:, None]
    return _solution(ws, u, lam[0], bool(feas[0]), it[0], res[0],
                     "ok" if feas[0] else "infeasible")


def solve_lambda_multi(ws: WeightedSample, theta: float, tol: float = TOL_MULTI,
                       max_iter: int = MAX_ITER) -> ELSolution:
    """Vector multiplier for the mean and auxiliary-calibration constraints.

    Raises
    ------
    SingularSystem
        The constraint vectors span a degenerate subspace (collinear
        auxiliaries).
    NonConvergence
        Newton iterations exhausted without meeting the residual tolerance.
    """
    if not ws.has_aux:
        raise InvalidInput("solve_lambda_multi needs auxiliary data")
    if not np.isfinite(theta):
        raise InvalidInput("theta must be finite")
    U = constraint_points(ws, [theta], use_aux=True)
    lam, feas, it, res, status = _solve_multi_batch(U, ws.norm_weights, tol, max_iter)
    if status[0] == "singular":
        raise SingularSystem("auxiliary constraint matrix is numerically singular")
    if status[0] == "nonconvergence":
        raise NonConvergence("vector EL multiplier did not converge", residual=float(res[0]),
                             iterations=int(it[0]))
    return _solution(ws, U[0], lam[0], bool(feas[0]), it[0], res[0], status[0])


def profile_log_el_grid(ws: WeightedSample, thetas, scale: float, use_aux: bool = False) -> np.ndarray:
    """Vectorised ``scale * sum_i w_i log p_i(theta)``; ``-inf`` where infeasible."""
    if not scale > 0:
        raise InvalidInput("scale must be positive")
    thetas = np.atleast_1d(np.asarray(thetas, dtype=float))
    w = ws.norm_weights
    out = np.full(thetas.size, -np.inf)
    if use_aux:
        U = constraint_points(ws, thetas, use_aux=True)
        lam, feas, _, res, status = _solve_multi_batch(U, w)
        if np.any(status == "singular"):
            raise SingularSystem("auxiliary constraint matrix is numerically singular")
        bad = status == "nonconvergence"
        if bad.any():
            logger.debug("EL multiplier failed at %d of %d targets", bad.sum(), thetas.size)
        if feas.any():
            t = 1.0 + _apply(U[feas], lam[feas])
            out[feas] = -(w * np.log(t)).sum(axis=1)
    else:
        lam, feas, _, _ = _solve_1d_batch(ws.values, w, thetas)
        if feas.any():
            t = 1.0 + lam[feas, None] * (ws.values[None, :] - thetas[feas, None])
            out[feas] = -(w * np.log(t)).sum(axis=1)
    base = float(w @ np.log(w))
    finite = np.isfinite(out)
    out[finite] = scale * (out[finite] + base)
    return out


def profile_log_el(ws: WeightedSample, theta: float, scale: float, use_aux: bool = False) -> float:
    """Profile pseudo log-EL ``scale * sum_i w_i log p_i(theta)``.

    Returns ``-inf`` when ``theta`` is infeasible (or the solver fails there).
    """
    return float(profile_log_el_grid(ws, [theta], scale, use_aux)[0])


def el_maximizer(ws: WeightedSample, use_aux: bool = False) -> tuple[float, np.ndarray]:
    """Maximiser of the profile log-EL and the EL weights attained there.

    Without auxiliaries this is the weighted mean with ``p = w``. With
    auxiliaries the mean constraint is slack at the optimum, so the weights
    come from the auxiliary-only problem.
    """
    w = ws.norm_weights
    if not use_aux:
        return ws.weighted_mean, w.copy()
    U = _aux_block(ws)[None]
    lam, feas, it, res, status = _solve_multi_batch(U, w)
    if status[0] == "singular":
        raise SingularSystem("auxiliary constraint matrix is numerically singular")
    if not feas[0]:
        raise NonConvergence(f"auxiliary-only EL problem failed ({status[0]})",
                             residual=float(res[0]), iterations=int(it[0]))
    p = w / (1.0 + U[0] @ lam[0])
    return float(p @ ws.values), p
