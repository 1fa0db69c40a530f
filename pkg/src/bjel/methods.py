"""The six interval methods on one survey sample.

``jel``/``bjel`` treat the pseudo-values as an iid sample (uniform weights,
scale ``n``). ``*_d`` use normalised design weights with the effective
sample size ``n / deff`` and, when auxiliaries are known, the extra
calibration constraint. ``*_w`` use calibration weights and the scale
factor ``S_v^2 / var(GREG)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .design import SampleDraw, calibrate_weights, design_effect, scale_factor_w
from .elcore import WeightedSample
from .errors import InvalidInput
from .posterior import METHODS, IntervalResult, build_posterior, credible_interval, jel_interval
from .ustat import Kernel, jackknife_pseudovalues


@dataclass
class SurveySample:
    """Observed sample with its design information.

    ``incl_probs`` enables the finite-population correction in design-effect
    estimation; leave it ``None`` when only weights are known.
    ``population_size`` defaults to the sum of the design weights.
    """

    y: np.ndarray
    design_weights: np.ndarray
    incl_probs: np.ndarray | None = None
    aux: np.ndarray | None = None
    aux_mean: np.ndarray | None = None
    population_size: float | None = None

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=float)
        self.design_weights = np.asarray(self.design_weights, dtype=float)
        if self.design_weights.shape != self.y.shape:
            raise InvalidInput("design weights and y differ in length")
        if np.any(~np.isfinite(self.design_weights)) or np.any(self.design_weights <= 0):
            raise InvalidInput("design weights must be finite and positive")
        if self.aux is not None:
            self.aux = np.asarray(self.aux, dtype=float)
            if self.aux.ndim == 1:
                self.aux = self.aux[:, None]
            if self.aux_mean is None:
                raise InvalidInput("auxiliary columns need known population means")
            self.aux_mean = np.atleast_1d(np.asarray(self.aux_mean, dtype=float))

    @classmethod
    def from_draw(cls, y, draw: SampleDraw, aux=None, aux_mean=None, population_size=None):
        return cls(y, draw.design_weights, draw.incl_probs, aux, aux_mean, population_size)

    @property
    def n(self) -> int:
        return self.y.size

    @property
    def N(self) -> float:
        return float(self.population_size) if self.population_size else float(self.design_weights.sum())


class PreparedSample:
    """Pseudo-values and the weight/scale pairs each method needs, computed once."""

    def __init__(self, sample: SurveySample, kernel: Kernel):
        self.sample = sample
        self.kernel = kernel
        self.pseudo = jackknife_pseudovalues(sample.y, kernel)
        self.v = self.pseudo.values

    def _draw(self):
        s = self.sample
        if s.incl_probs is None:
            return None
        return SampleDraw(np.arange(s.n), s.incl_probs, s.design_weights)

    def _deff(self, variant):
        s = self.sample
        draw = self._draw()
        return design_effect(draw, self.v, variant, aux=s.aux if variant == "greg" else None,
                             weights=None if draw else s.design_weights, fpc=draw is not None)

    @cached_property
    def iid(self) -> tuple[WeightedSample, float, bool]:
        return WeightedSample.from_raw(self.v), float(self.sample.n), False

    @cached_property
    def design(self) -> tuple[WeightedSample, float, bool]:
        s = self.sample
        if s.aux is not None:
            ws = WeightedSample.from_raw(self.v, s.design_weights, s.aux, s.aux_mean)
            return ws, self._deff("greg").n_star, True
        return WeightedSample.from_raw(self.v, s.design_weights), self._deff("hajek").n_star, False

    @cached_property
    def calibrated(self) -> tuple[WeightedSample, float, bool]:
        s = self.sample
        if s.aux is None:
            return WeightedSample.from_raw(self.v, s.design_weights), self._deff("hajek").n_star, False
        w = self.calibration_weights
        draw = self._draw()
        m = scale_factor_w(draw, self.v, s.aux, weights=None if draw else s.design_weights,
                           fpc=draw is not None)
        return WeightedSample.from_raw(self.v, w), m, False

    @cached_property
    def calibration_weights(self) -> np.ndarray:
        s = self.sample
        x1 = np.column_stack([np.ones(s.n), s.aux])
        totals = s.N * np.concatenate([[1.0], s.aux_mean])
        return calibrate_weights(s.design_weights, x1, totals)

    def setup(self, method: str) -> tuple[WeightedSample, float, bool]:
        if method not in METHODS:
            raise InvalidInput(f"unknown method {method!r}; choose from {METHODS}")
        if method in ("jel", "bjel"):
            return self.iid
        if method.endswith("_d"):
            return self.design
        return self.calibrated

    def interval(self, method: str, level: float = 0.95) -> IntervalResult:
        ws, scale, use_aux = self.setup(method)
        if method.startswith("b"):
            pg = build_posterior(ws, scale, use_aux)
            return credible_interval(pg, level, method)
        return jel_interval(ws, scale, use_aux, level, method)

    def posterior(self, method: str):
        ws, scale, use_aux = self.setup(method)
        return build_posterior(ws, scale, use_aux)


def compute_interval(sample: SurveySample, kernel: Kernel, method: str, level: float = 0.95) -> IntervalResult:
    return PreparedSample(sample, kernel).interval(method, level)
