"""Flat-prior posteriors built from the profile pseudo log-EL, and the
chi-square calibrated frequentist intervals they are compared against.

The parameter is scalar, so each posterior is evaluated on a grid and
normalised by trapezoid quadrature.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import stats

from .design import regression_coeff
from .elcore import WeightedSample, el_maximizer, profile_log_el, profile_log_el_grid
from .errors import DegeneratePosterior, InvalidInput, SingularSystem

logger = logging.getLogger(__name__)

GRID_POINTS = 2001
SPAN_SE = 6.0
MAX_EXTENSIONS = 3
BOUNDARY_MASS = 1e-6
METHODS = ("jel", "bjel", "jel_d", "bjel_d", "jel_w", "bjel_w")


@dataclass(frozen=True)
class PosteriorGrid:
    thetas: np.ndarray
    log_density: np.ndarray
    density: np.ndarray
    cdf: np.ndarray
    center: float
    scale_used: float
    se: float = float("nan")
    notes: tuple = ()

    @classmethod
    def from_log_density(cls, thetas, log_density, center=None, scale_used=float("nan"),
                         se=float("nan"), notes=()) -> "PosteriorGrid":
        """Normalise an unnormalised log density given on an increasing grid."""
        thetas = np.asarray(thetas, dtype=float)
        logd = np.asarray(log_density, dtype=float)
        if thetas.ndim != 1 or thetas.shape != logd.shape or np.any(np.diff(thetas) <= 0):
            raise InvalidInput("grid must be strictly increasing and match the log density")
        finite = np.isfinite(logd)
        if finite.sum() < 5:
            raise DegeneratePosterior(f"only {int(finite.sum())} feasible grid points")
        rel = np.full(logd.shape, -np.inf)
        rel[finite] = logd[finite] - logd[finite].max()
        dens = np.exp(rel)
        seg = 0.5 * (dens[1:] + dens[:-1]) * np.diff(thetas)
        total = seg.sum()
        if not total > 0:
            raise DegeneratePosterior("posterior has zero mass on the grid")
        dens = dens / total
        cdf = np.minimum(np.concatenate([[0.0], np.cumsum(seg) / total]), 1.0)
        cdf[-1] = 1.0
        logd_norm = np.where(finite, rel - np.log(total), -np.inf)
        if center is None:
            center = float(thetas[np.argmax(dens)])
        return cls(thetas, logd_norm, dens, cdf, float(center), float(scale_used), float(se), tuple(notes))

    @property
    def step(self) -> float:
        return float(np.max(np.diff(self.thetas)))

    def mean(self) -> float:
        f = self.thetas * self.density
        return float(np.sum(0.5 * (f[1:] + f[:-1]) * np.diff(self.thetas)))

    def mode(self) -> float:
        return float(self.thetas[np.argmax(self.density)])


@dataclass(frozen=True)
class IntervalResult:
    lower: float
    upper: float
    method: str
    level: float = 0.95
    estimate: float = float("nan")
    scale_used: float = float("nan")
    diagnostics: tuple = field(default_factory=tuple)

    @property
    def length(self) -> float:
        return self.upper - self.lower


def _residual_spread(ws: WeightedSample, theta_hat: float, use_aux: bool) -> float:
    w = ws.norm_weights
    if use_aux:
        try:
            B = regression_coeff(ws)
        except SingularSystem:
            B = None
        if B is not None:
            r = ws.values - ws.weighted_mean - (ws.aux - w @ ws.aux) @ B
            return float(w @ r**2)
    return float(w @ (ws.values - theta_hat) ** 2)


def approx_se(ws: WeightedSample, scale: float, use_aux: bool = False) -> tuple[float, float]:
    """Maximiser and normal-approximation standard error of the posterior."""
    theta_hat, _ = el_maximizer(ws, use_aux)
    spread = _residual_spread(ws, theta_hat, use_aux)
    return theta_hat, float(np.sqrt(spread / scale))


def build_posterior(ws: WeightedSample, scale: float, use_aux: bool = False,
                    grid_points: int = GRID_POINTS) -> PosteriorGrid:
    """Flat-prior posterior ``exp(scale * sum w_i log p_i(theta))`` on a grid.

    The grid is centred at the EL maximiser and spans ``+-6`` approximate
    standard errors; the span is doubled (at most three times) while more
    than ``1e-6`` of the mass sits in the outer 5% of either end.
    """
    if not scale > 0:
        raise InvalidInput("scale must be positive")
    theta_hat, se = approx_se(ws, scale, use_aux)
    if not se > 1e-12 * max(1.0, abs(theta_hat)):
        raise DegeneratePosterior("pseudo-values have no spread")
    half = SPAN_SE * se
    notes = []
    for ext in range(MAX_EXTENSIONS + 1):
        thetas = np.linspace(theta_hat - half, theta_hat + half, grid_points)
        logd = profile_log_el_grid(ws, thetas, scale, use_aux)
        pg = PosteriorGrid.from_log_density(thetas, logd, theta_hat, scale, se)
        edge = max(1, grid_points // 20)
        tail = max(pg.cdf[edge], 1.0 - pg.cdf[-1 - edge])
        if tail <= BOUNDARY_MASS:
            break
        if ext == MAX_EXTENSIONS:
            notes.append(f"boundary mass {tail:.2e} after {MAX_EXTENSIONS} extensions")
            logger.info("posterior grid still truncated: boundary mass %.2e", tail)
            break
        half *= 2.0
    if notes:
        pg = PosteriorGrid(pg.thetas, pg.log_density, pg.density, pg.cdf, pg.center,
                           pg.scale_used, pg.se, tuple(notes))
    return pg


def posterior_quantile(pg: PosteriorGrid, alpha: float) -> float:
    """Inverse posterior CDF by linear interpolation."""
    if not 0.0 < alpha < 1.0:
        raise InvalidInput("alpha must lie in (0, 1)")
    cdf, th = pg.cdf, pg.thetas
    if alpha <= cdf[0]:
        logger.debug("alpha=%g below resolved mass; clamping to grid start", alpha)
        return float(th[0])
    if alpha >= cdf[-1]:
        logger.debug("alpha=%g above resolved mass; clamping to grid end", alpha)
        return float(th[-1])
    i = int(np.searchsorted(cdf, alpha, side="left"))
    c0, c1 = cdf[i - 1], cdf[i]
    frac = 0.0 if c1 == c0 else (alpha - c0) / (c1 - c0)
    return float(th[i - 1] + frac * (th[i] - th[i - 1]))


def credible_interval(pg: PosteriorGrid, level: float = 0.95, method: str = "bjel") -> IntervalResult:
    """Equal-tailed credible interval."""
    if not 0.0 < level < 1.0:
        raise InvalidInput("level must lie in (0, 1)")
    a = 0.5 * (1.0 - level)
    return IntervalResult(
        lower=posterior_quantile(pg, a),
        upper=posterior_quantile(pg, 1.0 - a),
        method=method,
        level=level,
        estimate=pg.center,
        scale_used=pg.scale_used,
        diagnostics=pg.notes,
    )


def monahan_boos_H(pg: PosteriorGrid, theta_true: float) -> float:
    """Posterior CDF at the true value; uniform across replicates for a valid posterior."""
    return float(np.interp(theta_true, pg.thetas, pg.cdf, left=0.0, right=1.0))


def invert_ratio(loglik: Callable[[float], float], theta_hat: float, se: float, level: float = 0.95,
                 rel_tol: float = 1e-6, max_expand: int = 60) -> tuple[float, float, list[str]]:
    """Solve ``2 (loglik(theta_hat) - loglik(theta)) = chi2_1(level)`` on both sides.

    ``loglik`` may return ``-inf`` outside its support; if the support ends
    before the threshold is crossed the last feasible point is returned and
    a diagnostic recorded.
    """
    crit = stats.chi2.ppf(level, 1)
    top = loglik(theta_hat)
    if not np.isfinite(top):
        raise DegeneratePosterior("log-likelihood is not finite at its maximiser")
    tol = rel_tol * se
    notes = []

    def excess(t):
        val = loglik(t)
        return np.inf if not np.isfinite(val) else 2.0 * (top - val) - crit

    ends = []
    for sign in (-1.0, 1.0):
        inner, outer, step = theta_hat, None, se
        for _ in range(max_expand):
            cand = theta_hat + sign * step
            if excess(cand) >= 0:
                outer = cand
                break
            inner = cand
            step *= 2.0
        if outer is None:
            raise DegeneratePosterior("likelihood ratio never reaches the critical value")
        seen_finite = np.isfinite(excess(outer))
        while abs(outer - inner) > tol:
            mid = 0.5 * (inner + outer)
            ex = excess(mid)
            if ex >= 0:
                outer = mid
                seen_finite = seen_finite or np.isfinite(ex)
            else:
                inner = mid
        if not seen_finite:
            notes.append(f"RootNotBracketed: {'lower' if sign < 0 else 'upper'} end stopped at feasibility edge")
            ends.append(inner)
        else:
            ends.append(0.5 * (inner + outer))
    return ends[0], ends[1], notes


def jel_interval(ws: WeightedSample, scale: float, use_aux: bool = False, level: float = 0.95,
                 method: str = "jel") -> IntervalResult:
    """Frequentist EL-ratio interval with chi-square(1) calibration."""
    theta_hat, se = approx_se(ws, scale, use_aux)
    if not se > 1e-12 * max(1.0, abs(theta_hat)):
        raise DegeneratePosterior("pseudo-values have no spread")
    lo, hi, notes = invert_ratio(lambda t: profile_log_el(ws, t, scale, use_aux), theta_hat, se, level)
    return IntervalResult(lo, hi, method, level, theta_hat, scale, tuple(notes))
