"""Finite-population coverage studies for the six interval methods."""

from __future__ import annotations

import json
import logging
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy import optimize

from .design import DesignSpec, draw_sample
from .errors import BJELError, InvalidInput, RhoUnattainable
from .methods import PreparedSample, SurveySample
from .posterior import METHODS
from .ustat import Kernel, get_kernel, u_statistic

logger = logging.getLogger(__name__)

MAX_FAILURE_RATE = 0.02


@dataclass(frozen=True)
class PopulationSpec:
    """``y = beta0 + beta1 * x + sigma * eps`` with ``x ~ Exp(1) + x_shift``.

    ``sigma`` is solved for so that the realised ``corr(y, x)`` equals
    ``target_rho``.
    """

    N: int = 1000
    beta0: float = 1.0
    beta1: float = 1.0
    target_rho: float = 0.3
    x_shift: float = 1.0
    seed: int = 2024

    def __post_init__(self):
        if self.N < 2:
            raise InvalidInput("population needs at least two units")
        if not 0.0 < abs(self.target_rho) < 1.0:
            raise RhoUnattainable(f"target correlation {self.target_rho} must lie strictly inside (-1, 1)")


@dataclass
class Population:
    y: np.ndarray
    x: np.ndarray
    sigma: float
    rho: float
    spec: PopulationSpec

    @property
    def N(self) -> int:
        return self.y.size

    def theta_true(self, kernel: Kernel) -> float:
        """Finite-population parameter: the kernel averaged over all units."""
        return u_statistic(self.y, kernel)


def _corr(a, b) -> float:
    return float(np.corrcoef(a, b)[0, 1])


def generate_population(spec: PopulationSpec) -> Population:
    rng = np.random.default_rng(spec.seed)
    x = rng.exponential(1.0, spec.N) + spec.x_shift
    eps = rng.standard_normal(spec.N)
    signal = spec.beta0 + spec.beta1 * x

    def gap(log_sigma):
        return _corr(signal + np.exp(log_sigma) * eps, x) - spec.target_rho

    lo, hi = np.log(1e-8), np.log(1e8)
    if np.sign(gap(lo)) == np.sign(gap(hi)):
        raise RhoUnattainable(f"correlation {spec.target_rho} is not reachable for this population")
    sigma = float(np.exp(optimize.brentq(gap, lo, hi, xtol=1e-14)))
    y = signal + sigma * eps
    return Population(y=y, x=x, sigma=sigma, rho=_corr(y, x), spec=spec)


@dataclass
class MethodMetrics:
    CP: float
    L: float
    U: float
    AL: float
    LB: float
    replicates: int
    failures: int


@dataclass
class StudyResult:
    metrics: dict[str, MethodMetrics]
    B: int
    theta_true: float
    config: dict = field(default_factory=dict)
    failure_messages: dict = field(default_factory=dict)

    def failure_rate(self, method: str) -> float:
        return self.metrics[method].failures / self.B

    @property
    def quality_ok(self) -> bool:
        return all(self.failure_rate(m) <= MAX_FAILURE_RATE for m in self.metrics)

    def to_dict(self) -> dict:
        return {
            "B": self.B,
            "theta_true": self.theta_true,
            "config": self.config,
            "methods": {m: asdict(v) for m, v in self.metrics.items()},
            "failures": self.failure_messages,
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=False, **kw)

    def to_table(self) -> str:
        head = f"{'CI':<8}{'CP(%)':>8}{'L':>7}{'U':>7}{'AL':>9}{'LB':>9}"
        lines = [head, "-" * len(head)]
        for m, r in self.metrics.items():
            lines.append(f"{m.upper():<8}{r.CP:>8.1f}{r.L:>7.1f}{r.U:>7.1f}{r.AL:>9.3f}{r.LB:>9.3f}")
        return "\n".join(lines)


def _summarise(lower, upper, theta, failures) -> MethodMetrics:
    lo = np.asarray(lower, dtype=float)
    hi = np.asarray(upper, dtype=float)
    k = lo.size
    if k == 0:
        nan = float("nan")
        return MethodMetrics(nan, nan, nan, nan, nan, 0, failures)
    below = int(np.sum(theta < lo))
    above = int(np.sum(theta > hi))
    inside = k - below - above
    return MethodMetrics(
        CP=100.0 * inside / k,
        L=100.0 * below / k,
        U=100.0 * above / k,
        AL=float(np.mean(hi - lo)),
        LB=float(np.mean(lo)),
        replicates=k,
        failures=failures,
    )


def pps_design(pop: Population, n: int, kind: str = "rao_sampford") -> DesignSpec:
    """Design over the population with size measures equal to the shifted ``x``."""
    if kind == "rao_sampford":
        return DesignSpec(pop.N, n, "rao_sampford", pop.x)
    return DesignSpec(pop.N, n, kind)


def run_study(pop: Population, design: DesignSpec, kernel: Kernel | str, methods=METHODS, B: int = 1000,
              level: float = 0.95, seed: int = 0, use_aux: bool = True) -> StudyResult:
    """Replicate sampling and interval construction ``B`` times.

    Replicate ``r`` draws its sample with seed ``seed + r``. Replicates on
    which a method fails are excluded from that method's metrics and counted.
    """
    if isinstance(kernel, str):
        kernel = get_kernel(kernel)
    methods = tuple(methods)
    if not methods:
        raise InvalidInput("at least one method is required")
    for m in methods:
        if m not in METHODS:
            raise InvalidInput(f"unknown method {m!r}")
    if B < 1:
        raise InvalidInput("B must be positive")
    if design.population_size != pop.N:
        raise InvalidInput("design and population sizes differ")

    theta = pop.theta_true(kernel)
    xbar = np.array([pop.x.mean()])
    lower = {m: [] for m in methods}
    upper = {m: [] for m in methods}
    fails = {m: 0 for m in methods}
    messages: dict[str, dict[str, int]] = {m: {} for m in methods}

    def record(m, exc):
        fails[m] += 1
        key = type(exc).__name__
        messages[m][key] = messages[m].get(key, 0) + 1

    for r in range(B):
        draw = draw_sample(design, seed + r)
        idx = draw.indices
        sample = SurveySample.from_draw(
            pop.y[idx], draw,
            aux=pop.x[idx] if use_aux else None,
            aux_mean=xbar if use_aux else None,
            population_size=pop.N,
        )
        try:
            prep = PreparedSample(sample, kernel)
        except BJELError as exc:
            for m in methods:
                record(m, exc)
            continue
        for m in methods:
            try:
                with warnings.catch_warnings():
                    warnings.simplefilter("error")
                    ci = prep.interval(m, level)
            except (BJELError, ArithmeticError, ValueError, Warning) as exc:
                record(m, exc)
                continue
            lower[m].append(ci.lower)
            upper[m].append(ci.upper)

    metrics = {m: _summarise(lower[m], upper[m], theta, fails[m]) for m in methods}
    config = {
        "population": asdict(pop.spec),
        "sigma": pop.sigma,
        "realised_rho": pop.rho,
        "n": design.sample_size,
        "design": design.kind,
        "kernel": kernel.name,
        "level": level,
        "seed": seed,
        "use_aux": use_aux,
    }
    return StudyResult(metrics, B, theta, config, {m: v for m, v in messages.items() if v})


# ----------------------------------------------------------------------
# configuration files

_CONFIG_TYPES = {
    "N": int,
    "n": int,
    "rho": float,
    "kernel": str,
    "design": str,
    "replicates": int,
    "methods": str,
    "level": float,
    "x_shift": float,
    "beta0": float,
    "beta1": float,
    "population_seed": int,
    "use_aux": str,
}


@dataclass
class StudyConfig:
    N: int = 1000
    n: int = 100
    rho: float = 0.3
    kernel: str = "pwm"
    design: str = "rao_sampford"
    replicates: int = 1000
    methods: tuple = METHODS
    level: float = 0.95
    x_shift: float = 1.0
    beta0: float = 1.0
    beta1: float = 1.0
    population_seed: int = 2024
    use_aux: bool = True

    @classmethod
    def from_mapping(cls, raw: dict) -> "StudyConfig":
        kw = {}
        for key, val in raw.items():
            if key not in _CONFIG_TYPES:
                raise InvalidInput(f"unknown config key {key!r}")
            if key == "methods":
                items = val if isinstance(val, (list, tuple)) else str(val).split(",")
                kw[key] = tuple(s.strip().lower() for s in items if str(s).strip())
            elif key == "use_aux":
                kw[key] = str(val).strip().lower() in ("1", "true", "yes", "on")
            else:
                try:
                    kw[key] = _CONFIG_TYPES[key](val)
                except (TypeError, ValueError) as exc:
                    raise InvalidInput(f"bad value for {key!r}: {val!r}") from exc
        cfg = cls(**kw)
        get_kernel(cfg.kernel)
        if not cfg.methods or any(m not in METHODS for m in cfg.methods):
            raise InvalidInput(f"methods must be a non-empty subset of {METHODS}")
        return cfg

    @classmethod
    def from_file(cls, path) -> "StudyConfig":
        """Read flat ``key = value`` text (``#`` comments) or a JSON object."""
        text = Path(path).read_text(encoding="utf-8")
        if text.lstrip().startswith("{"):
            try:
                raw = json.loads(text)
            except json.JSONDecodeError as exc:
                raise InvalidInput(f"{path}: invalid JSON: {exc}") from exc
            return cls.from_mapping(raw)
        raw = {}
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise InvalidInput(f"{path}:{lineno}: expected key = value")
            key, val = (s.strip() for s in line.split("=", 1))
            raw[key] = val
        return cls.from_mapping(raw)

    def population_spec(self) -> PopulationSpec:
        return PopulationSpec(self.N, self.beta0, self.beta1, self.rho, self.x_shift, self.population_seed)


def run_config(cfg: StudyConfig, seed: int, replicates: int | None = None) -> StudyResult:
    pop = generate_population(cfg.population_spec())
    design = pps_design(pop, cfg.n, cfg.design)
    return run_study(pop, design, cfg.kernel, cfg.methods, replicates or cfg.replicates, cfg.level, seed,
                     cfg.use_aux)
