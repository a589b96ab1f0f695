"""Monte Carlo trials: detection accuracy, sum rate per set policy, convergence traces.

Every trial draws its randomness from ``SeedSequence([base_seed + trial, stream])``
with a fixed stream per purpose, so runs of different policies or sweep
points on the same trial index share geometry, channels, sensing noise and
optimizer initialization.
"""

from __future__ import annotations

import enum
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Sequence

import numpy as np

from blockris.channel_model import ChannelSet, SystemDims, generate_channels, random_geometry
from blockris.crpa import CrpaConfig, IterationTrace, crpa_run, initial_state, wsr
from blockris.errors import InvalidParameterError
from blockris.sync_detect import DetectionReport, PilotConfig, ZcConfig, detect_blockage

STREAM_CHANNEL = 0
STREAM_SENSING = 1
STREAM_INIT = 2


class SetPolicy(str, enum.Enum):
    """Which per-user panel sets the optimizer is told about."""

    ESTIMATED = "estimated"
    GENIE = "genie"
    OBLIVIOUS = "oblivious"
    NONE = "none"
    RANDOM_PHASE = "random-phase"

    @classmethod
    def parse(cls, name: str) -> "SetPolicy":
        try:
            return cls(name.strip().lower())
        except ValueError:
            valid = ", ".join(p.value for p in cls)
            raise InvalidParameterError(f"unknown policy {name!r} (expected one of: {valid})") from None


@dataclass(frozen=True)
class ScenarioConfig:
    """One experiment. Powers are given as SNRs over ``noise_var``."""

    dims: SystemDims = field(default_factory=SystemDims)
    area_side: float = 100.0
    k_factor: float = 5.0
    p_block: float = 0.1
    snr_db: float = 15.0
    pilot_snr_db: float = 0.0
    noise_var: float = 1.0
    alpha: float | tuple[float, ...] = 1e-3
    sensing_phase: str = "ones"
    zc: ZcConfig = field(default_factory=ZcConfig)
    crpa: CrpaConfig = field(default_factory=CrpaConfig)
    trials: int = 100
    base_seed: int = 0

    def __post_init__(self):
        if self.trials < 1:
            raise InvalidParameterError(f"trials must be >= 1, got {self.trials}")
        if not self.area_side > 0:
            raise InvalidParameterError(f"area_side must be > 0, got {self.area_side}")
        if not self.k_factor >= 0:
            raise InvalidParameterError(f"k_factor must be >= 0, got {self.k_factor}")
        if not 0.0 <= self.p_block <= 1.0:
            raise InvalidParameterError(f"p_block must lie in [0, 1], got {self.p_block}")
        if not self.noise_var > 0:
            raise InvalidParameterError(f"noise_var must be > 0, got {self.noise_var}")
        if self.sensing_phase not in ("ones", "random"):
            raise InvalidParameterError(f"sensing_phase must be 'ones' or 'random', got {self.sensing_phase!r}")
        if not isinstance(self.alpha, (int, float)):
            object.__setattr__(self, "alpha", tuple(float(a) for a in self.alpha))
        self.zc.check_panels(self.dims.M)
        self.pilot_config().alphas(self.dims.M)
        self.crpa.omega(self.dims.K)

    @property
    def power(self) -> float:
        return self.noise_var * 10 ** (self.snr_db / 10)

    @property
    def pilot_power(self) -> float:
        return self.noise_var * 10 ** (self.pilot_snr_db / 10)

    def pilot_config(self) -> PilotConfig:
        return PilotConfig(total_power=self.pilot_power, alpha=self.alpha, noise_var=self.noise_var)

    def with_(self, **changes) -> "ScenarioConfig":
        return replace(self, **changes)


@dataclass
class TrialResult:
    trial: int
    policy: SetPolicy
    wsr_realized: float
    wsr_assumed: float
    trace: IterationTrace
    iterations_to_95pct: int
    jaccard: np.ndarray | None = None
    assumed_sets: list[frozenset[int]] | None = None
    true_sets: list[frozenset[int]] | None = None


def trial_rng(cfg: ScenarioConfig, trial: int, stream: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([cfg.base_seed + trial, stream]))


def trial_channels(cfg: ScenarioConfig, trial: int) -> ChannelSet:
    rng = trial_rng(cfg, trial, STREAM_CHANNEL)
    geometry = random_geometry(cfg.dims, cfg.area_side, rng)
    return generate_channels(cfg.dims, geometry, cfg.k_factor, cfg.p_block, rng)


def _sensing_phases(cfg: ScenarioConfig, rng: np.random.Generator):
    M, Ni = cfg.dims.M, cfg.dims.Ni
    if cfg.sensing_phase == "ones":
        return np.ones((M, Ni), dtype=complex)
    return np.exp(2j * np.pi * rng.random((M, Ni)))


def detect_trial_sets(cfg: ScenarioConfig, channels: ChannelSet, trial: int) -> DetectionReport:
    K, M = cfg.dims.K, cfg.dims.M
    if M == 0:
        empty = [frozenset()] * K
        return DetectionReport(np.zeros((K, 0), complex), np.zeros(0), empty, np.ones(K))
    rng = trial_rng(cfg, trial, STREAM_SENSING)
    u0 = _sensing_phases(cfg, rng)
    return detect_blockage(channels, cfg.zc, cfg.pilot_config(), rng, sensing_phases=u0)


def run_detection_trial(cfg: ScenarioConfig, trial: int):
    """Fresh channels and one sensing interval; returns ``(jaccard, report)``."""
    report = detect_trial_sets(cfg, trial_channels(cfg, trial), trial)
    return report.jaccard, report


def assumed_sets_for(policy: SetPolicy, channels: ChannelSet, detected=None) -> list[frozenset[int]]:
    K, M = channels.dims.K, channels.dims.M
    if policy in (SetPolicy.GENIE, SetPolicy.RANDOM_PHASE):
        return channels.true_sets()
    if policy is SetPolicy.OBLIVIOUS:
        return [frozenset(range(M))] * K
    if policy is SetPolicy.NONE:
        return [frozenset()] * K
    if detected is None:
        raise InvalidParameterError("the estimated policy needs detected sets")
    return list(detected)


def realized_sets_for(policy: SetPolicy, channels: ChannelSet) -> list[frozenset[int]]:
    """Sets the link actually experiences: the true ones, or none when RIS is unused."""
    if policy is SetPolicy.NONE:
        return [frozenset()] * channels.dims.K
    return channels.true_sets()


def run_policy_trials(
    cfg: ScenarioConfig, policies: Sequence[SetPolicy], trial: int
) -> dict[SetPolicy, TrialResult]:
    """Run several policies on the same trial; identical optimizer inputs are solved once."""
    channels = trial_channels(cfg, trial)
    truth = channels.true_sets()
    report = None
    if SetPolicy.ESTIMATED in policies:
        report = detect_trial_sets(cfg, channels, trial)
    power, s2 = cfg.power, cfg.noise_var
    omega = cfg.crpa.omega(cfg.dims.K)
    solved: dict = {}
    out = {}
    for policy in policies:
        assumed = assumed_sets_for(policy, channels, report.estimated_sets if report else None)
        optimize = policy is not SetPolicy.RANDOM_PHASE
        key = (tuple(assumed), optimize)
        if key not in solved:
            init = initial_state(channels, assumed, power, s2, cfg.crpa, trial_rng(cfg, trial, STREAM_INIT))
            solved[key] = crpa_run(channels, assumed, power, s2, cfg.crpa, state=init, optimize_phases=optimize)
        state, trace = solved[key]
        out[policy] = TrialResult(
            trial=trial,
            policy=policy,
            wsr_realized=wsr(channels, state.phases, realized_sets_for(policy, channels), state.F, s2, omega),
            wsr_assumed=wsr(channels, state.phases, assumed, state.F, s2, omega),
            trace=trace,
            iterations_to_95pct=trace.iterations_to_fraction(0.95),
            jaccard=None if report is None else report.jaccard,
            assumed_sets=assumed,
            true_sets=truth,
        )
    return out


def run_wsr_trial(cfg: ScenarioConfig, policy: SetPolicy | str, trial: int) -> TrialResult:
    policy = SetPolicy.parse(policy) if isinstance(policy, str) else policy
    return run_policy_trials(cfg, [policy], trial)[policy]


@dataclass(frozen=True)
class Summary:
    mean: float
    stderr: float
    trials: int


def aggregate(values: Iterable[float]) -> Summary:
    """Mean and standard error (sample std / sqrt(n)); exact summation, order-free."""
    v = [float(x) for x in values]
    n = len(v)
    if n == 0:
        raise InvalidParameterError("cannot aggregate an empty result list")
    mean = math.fsum(v) / n
    if n == 1:
        return Summary(mean, 0.0, 1)
    var = math.fsum((x - mean) ** 2 for x in v) / (n - 1)
    return Summary(mean, math.sqrt(var / n), n)


def aggregate_results(results: Iterable[TrialResult], metric: Callable[[TrialResult], float]) -> Summary:
    ordered = sorted(results, key=lambda r: r.trial)
    return aggregate(metric(r) for r in ordered)


def map_trials(fn, items: Sequence, jobs: int = 1) -> list:
    """Apply ``fn`` to each item, optionally in a process pool; output keeps input order."""
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items, chunksize=max(1, len(items) // (4 * jobs))))


class _DetectJob:
    def __init__(self, cfg):
        self.cfg = cfg

    def __call__(self, trial):
        jac, _ = run_detection_trial(self.cfg, trial)
        return trial, float(np.mean(jac))


class _PolicyJob:
    def __init__(self, cfg, policies):
        self.cfg = cfg
        self.policies = list(policies)

    def __call__(self, trial):
        res = run_policy_trials(self.cfg, self.policies, trial)
        return trial, {p.value: (r.wsr_realized, r.wsr_assumed, r.iterations_to_95pct) for p, r in res.items()}


def detection_summary(cfg: ScenarioConfig, jobs: int = 1) -> Summary:
    """Mean over trials of the per-trial average Jaccard index across users."""
    out = sorted(map_trials(_DetectJob(cfg), range(cfg.trials), jobs))
    return aggregate(v for _, v in out)


def wsr_summaries(cfg: ScenarioConfig, policies: Sequence[SetPolicy], jobs: int = 1) -> dict[SetPolicy, dict]:
    """Realized WSR (nats) per policy, plus the raw per-trial values for paired comparisons."""
    out = sorted(map_trials(_PolicyJob(cfg, policies), range(cfg.trials), jobs), key=lambda t: t[0])
    summaries = {}
    for p in policies:
        realized = [r[p.value][0] for _, r in out]
        summaries[p] = {
            "summary": aggregate(realized),
            "realized": realized,
            "assumed": [r[p.value][1] for _, r in out],
            "iters95": [r[p.value][2] for _, r in out],
        }
    return summaries


def trace_run(cfg: ScenarioConfig, policy: SetPolicy = SetPolicy.GENIE, trial: int = 0) -> IterationTrace:
    return run_wsr_trial(cfg, policy, trial).trace
