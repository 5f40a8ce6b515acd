"""Monte Carlo estimation of P(period 3) with reproducible per-trial seeding."""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, replace
from statistics import NormalDist
from typing import List, Optional, Sequence

from . import chaos, netgen
from .errors import BudgetExceeded, ConfigError
from .netgen import InitScheme

DETECTORS = ("exact", "screen", "numeric")
FAMILIES = ("shallow", "depth2")
WORKERS_ENV = "RNNCHAOS_WORKERS"
DEFAULT_TRIALS = 10_000


def wilson_ci(successes: int, trials: int, level: float = 0.95) -> tuple:
    """Wilson score interval for a binomial proportion."""
    if trials < 1 or not 0 <= successes <= trials:
        raise ValueError("need 0 <= successes <= trials and trials >= 1")
    z = NormalDist().inv_cdf(0.5 + level / 2.0)
    p = successes / trials
    denom = 1.0 + z * z / trials
    center = (p + z * z / (2 * trials)) / denom
    half = z / denom * math.sqrt(p * (1 - p) / trials + z * z / (4 * trials * trials))
    low = 0.0 if successes == 0 else max(0.0, center - half)
    high = 1.0 if successes == trials else min(1.0, center + half)
    return low, high


@dataclass(frozen=True)
class SweepConfig:
    k: int
    scheme: InitScheme
    n_trials: int = DEFAULT_TRIALS
    master_seed: int = 0
    detector: str = "exact"
    family: str = "shallow"
    activation: str = "relu"
    clip: bool = True
    grid_size: int = 100_000
    budget: int = 1_000_000
    prefilter: bool = False

    def __post_init__(self):
        if self.n_trials < 1:
            raise ConfigError("n_trials must be >= 1")
        if self.detector not in DETECTORS:
            raise ConfigError(f"unknown detector {self.detector!r}")
        if self.family not in FAMILIES:
            raise ConfigError(f"unknown family {self.family!r}")
        if self.family == "shallow" and (self.activation != "relu" or not self.clip):
            raise ConfigError("the shallow family is a clipped ReLU network")
        if self.family == "depth2" and self.detector == "screen":
            raise ConfigError("the y-sequence screen only applies to the shallow family")
        if self.detector == "exact" and self.activation != "relu":
            raise ConfigError("exact detection needs ReLU (piecewise-linear) maps")
        if self.detector == "exact" and not self.clip:
            raise ConfigError("exact detection needs clipped maps; use the numeric detector")
        if self.k < 1:
            raise ConfigError("k must be >= 1")

    def to_json(self) -> dict:
        d = asdict(self)
        d["scheme"] = self.scheme.to_json()
        return d

    @classmethod
    def from_json(cls, obj: dict) -> "SweepConfig":
        obj = dict(obj)
        obj["scheme"] = InitScheme.from_json(obj["scheme"])
        return cls(**obj)


@dataclass(frozen=True)
class TrialOutcome:
    index: int
    is_period3: bool
    reliable: bool
    screen_fired: bool
    nonzero_fixed: bool


def run_trial(config: SweepConfig, index: int) -> TrialOutcome:
    """One trial: sample, build the map, classify.  Depends only on (config, index)."""
    seed = netgen.trial_seed(config.master_seed, index)
    if config.family == "shallow":
        sample = netgen.sample_network(config.k, config.scheme, seed)
        fired = chaos.screen_period3(netgen.y_sequence(sample))
        if config.detector == "screen":
            return TrialOutcome(index, fired, True, fired, False)
        m = netgen.build_map(sample)
        if config.prefilter and fired:
            return TrialOutcome(index, True, True, True, chaos.has_nonzero_fixed_point(m))
        handle = m
    else:
        fired = False
        net = netgen.sample_depth2(config.scheme, config.activation, config.clip, seed, width=config.k)
        m = net.to_pwl() if config.activation == "relu" and config.clip else None
        handle = m if config.detector == "exact" else net
    try:
        if config.detector == "exact":
            v = chaos.detect_period3_exact(handle, config.budget, screen_fired=fired)
        else:
            v = chaos.detect_period3_numeric(handle, config.grid_size, screen_fired=fired)
    except BudgetExceeded:
        return TrialOutcome(index, False, False, fired, False)
    nonzero = bool((v.fixed_points_f.points > chaos.NONZERO_FIXED_EPS).any())
    return TrialOutcome(index, v.is_period3, v.reliable, fired, nonzero)


@dataclass(frozen=True)
class SweepResult:
    config: SweepConfig
    n_chaotic: int
    n_unreliable: int
    n_screen_fired: int
    n_nonzero_fixed: int
    p_hat: float
    ci_low: float
    ci_high: float
    regime: str = ""

    @property
    def n_trials(self) -> int:
        return self.config.n_trials

    @property
    def n_reliable(self) -> int:
        return self.config.n_trials - self.n_unreliable

    @property
    def half_width(self) -> float:
        return 0.5 * (self.ci_high - self.ci_low)

    @property
    def lower_bound_only(self) -> bool:
        """Screen-only estimates undercount: the screen is sufficient, not necessary."""
        return self.config.detector == "screen"

    def row(self) -> dict:
        c = self.config
        return {
            "k": c.k,
            "scheme": c.scheme.name,
            "sigma2": c.scheme.sigma2_at(c.k) if c.family == "shallow" else (c.scheme.sigma2 or 2.0),
            "family": c.family,
            "activation": c.activation,
            "clip": c.clip,
            "detector": c.detector,
            "n_trials": c.n_trials,
            "n_chaotic": self.n_chaotic,
            "n_unreliable": self.n_unreliable,
            "n_screen_fired": self.n_screen_fired,
            "n_nonzero_fixed": self.n_nonzero_fixed,
            "p_hat": self.p_hat,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
            "regime": self.regime,
            "lower_bound_only": self.lower_bound_only,
        }


def tally(config: SweepConfig, outcomes: Sequence[TrialOutcome], regime: str = "") -> SweepResult:
    """Aggregate trial outcomes; unreliable trials leave numerator and denominator."""
    n_unrel = sum(not o.reliable for o in outcomes)
    n_chaos = sum(o.is_period3 and o.reliable for o in outcomes)
    n_rel = len(outcomes) - n_unrel
    if n_rel:
        p = n_chaos / n_rel
        lo, hi = wilson_ci(n_chaos, n_rel)
    else:
        p, lo, hi = float("nan"), 0.0, 1.0
    return SweepResult(
        config=config,
        n_chaotic=n_chaos,
        n_unreliable=n_unrel,
        n_screen_fired=sum(o.screen_fired for o in outcomes),
        n_nonzero_fixed=sum(o.nonzero_fixed for o in outcomes),
        p_hat=p,
        ci_low=lo,
        ci_high=hi,
        regime=regime,
    )


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        raise ConfigError(f"{WORKERS_ENV} must be an integer")


def _run_chunk(args):
    config, indices = args
    return [run_trial(config, i) for i in indices]


def run_trials(config: SweepConfig, workers: Optional[int] = None) -> List[TrialOutcome]:
    workers = default_workers() if workers is None else workers
    indices = range(config.n_trials)
    if workers <= 1:
        return [run_trial(config, i) for i in indices]
    chunks = [list(indices[i::workers]) for i in range(workers)]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(_run_chunk, [(config, c) for c in chunks]))
    outcomes = [o for part in parts for o in part]
    outcomes.sort(key=lambda o: o.index)
    return outcomes


def estimate_chaos_probability(config: SweepConfig, workers: Optional[int] = None) -> SweepResult:
    return tally(config, run_trials(config, workers), regime_label(config))


def regime_label(config: SweepConfig) -> str:
    """Annotation only: which variance regime the shallow configuration sits in."""
    if config.family != "shallow":
        return ""
    k = config.k
    var = config.scheme.weight_variance(k, 1)
    slack = 1.0 + 1e-9  # sigma = sqrt(2) squares to just above 2
    if k >= 2 and var <= slack / (4.0 * k * math.log(k)):
        return "order"
    if var <= slack * 2.0 / k:
        return "edge-of-chaos"
    return "chaos"


def sweep_sigma(
    k: int,
    sigma_grid: Sequence[float],
    template: SweepConfig,
    n_trials: Optional[int] = None,
    master_seed: Optional[int] = None,
    workers: Optional[int] = None,
) -> List[SweepResult]:
    """One estimate per sigma (weights N(0, sigma^2 / k)), ordered by sigma.

    Every grid point reuses the same master seed, so trial i sees the same
    biases and the same standardized weights at every sigma.
    """
    if not sigma_grid or any(s <= 0 for s in sigma_grid):
        raise ConfigError("sigma_grid must be nonempty and positive")
    out = []
    for sigma in sorted(sigma_grid):
        scheme = InitScheme("custom-variance", sigma2=float(sigma) ** 2, bias_rule=template.scheme.bias_rule)
        cfg = replace(
            template,
            k=k,
            scheme=scheme,
            n_trials=template.n_trials if n_trials is None else n_trials,
            master_seed=template.master_seed if master_seed is None else master_seed,
        )
        out.append(estimate_chaos_probability(cfg, workers))
    return out
