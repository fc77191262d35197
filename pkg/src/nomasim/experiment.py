"""Monte Carlo harness: disparity sweeps, strategy comparisons, aggregation.

Every trial owns a counter-based random stream keyed by (master seed,
theta index, disparity index, trial index), so results are bit-reproducible
for any worker count and trial execution order.  Point aggregates are exact
(``math.fsum`` over the pooled per-trial values), which keeps the reduction
order-insensitive.
"""
from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from multiprocessing import Pool
from typing import Optional, Sequence

import numpy as np

from .allocation import (
    AllocationMode,
    PowerAllocation,
    fixed_fractions,
    min_power_qos,
    sumrate_max_weak_qos,
)
from .channel import ChannelParams, make_user_states
from .clustering import (
    Cluster,
    ClusterStrategy,
    OrderingMethod,
    order_users,
    select_cluster,
)
from .geometry import MaxAttemptsExceeded, place_disparity_pair, sample_realization
from .sic import DecodingOutcome, QoSTargets, decode_cluster

CHUNK_TRIALS = 2048
_MASK64 = 0xFFFFFFFFFFFFFFFF


@dataclass(frozen=True)
class StrategySpec:
    """One entry of a strategy comparison; mode/fractions override the
    run-wide configuration so e.g. fixed-power NOMA can face the adaptive
    allocations under shared randomness."""

    label: str
    strategy: ClusterStrategy
    mode: Optional[AllocationMode] = None
    fixed_fractions: Optional[tuple[float, ...]] = None


@dataclass(frozen=True)
class SimConfig:
    """Full configuration of a simulation run."""

    density: float = 1.0
    window_radius: Optional[float] = None
    eta: float = 4.0
    noise: float = 0.0
    interferer_power: float = 1.0
    budget: float = 1.0
    mode: AllocationMode = AllocationMode.SUM_RATE_WEAK_QOS
    fixed_fractions: Optional[tuple[float, ...]] = None
    theta_list: tuple[float, ...] = (0.5, 0.9, 1.0)
    disparity_min: float = 1.0
    disparity_max: float = 6.0
    disparity_step: float = 0.25
    trials: int = 100_000
    master_seed: int = 1
    strategies: tuple[StrategySpec, ...] = ()
    ordering: OrderingMethod = OrderingMethod.BY_LINK_DISTANCE
    ordering_instantaneous: bool = False
    robust_allocation: bool = True
    instantaneous_csi: bool = True

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError(f"trials must be >= 1, got {self.trials}")
        if self.disparity_min < 1.0:
            raise ValueError(f"disparity min must be >= 1, got {self.disparity_min}")
        if self.disparity_max < self.disparity_min or self.disparity_step <= 0.0:
            raise ValueError("disparity grid is empty or ill-formed")
        if not self.theta_list:
            raise ValueError("theta_list must be non-empty")
        if any(t < 0.0 for t in self.theta_list):
            raise ValueError(f"theta values must be >= 0, got {self.theta_list}")
        if self.mode is AllocationMode.SUM_RATE_WEAK_QOS and any(
                t <= 0.0 for t in self.theta_list):
            raise ValueError("sum_rate_weak_qos requires theta > 0")
        if self.mode is AllocationMode.FIXED and self.fixed_fractions is None:
            raise ValueError("fixed mode requires fixed_fractions")
        for spec in self.strategies:
            mode = spec.mode if spec.mode is not None else self.mode
            if (mode is AllocationMode.FIXED and spec.fixed_fractions is None
                    and self.fixed_fractions is None):
                raise ValueError(
                    f"strategy '{spec.label}' runs fixed mode without fractions")

    @cached_property
    def window(self) -> float:
        """Window radius; defaults to 15/sqrt(density) so truncation error in
        the aggregate interference stays below Monte Carlo noise."""
        if self.window_radius is not None:
            return self.window_radius
        return 15.0 / math.sqrt(self.density)

    @cached_property
    def channel_params(self) -> ChannelParams:
        return ChannelParams(self.eta, self.noise, self.interferer_power)


def disparity_values(config: SimConfig) -> list[float]:
    count = int(math.floor((config.disparity_max - config.disparity_min)
                           / config.disparity_step + 1e-9)) + 1
    return [config.disparity_min + i * config.disparity_step for i in range(count)]


class TrialStreams:
    """Counter-based per-trial random streams for one (theta, disparity) point.

    The Philox key holds (master seed, theta index << 32 | disparity index)
    and the trial index occupies a high counter word, so distinct trials get
    non-overlapping streams and any worker can reproduce any trial.
    """

    def __init__(self, master_seed: int, theta_index: int, d_index: int):
        if not (0 <= theta_index < 2 ** 32 and 0 <= d_index < 2 ** 32):
            raise ValueError("theta/disparity indices must fit in 32 bits")
        self._key = np.array([master_seed & _MASK64,
                              (theta_index << 32) | d_index], dtype=np.uint64)
        self._bg = np.random.Philox(counter=np.zeros(4, dtype=np.uint64),
                                    key=self._key)
        self._gen = np.random.Generator(self._bg)
        self._template = self._bg.state

    def rng(self, trial_index: int) -> np.random.Generator:
        st = dict(self._template)
        st["state"] = {"counter": np.array([0, 0, trial_index & _MASK64, 0],
                                           dtype=np.uint64),
                       "key": self._key}
        st["buffer_pos"] = 4
        st["has_uint32"] = 0
        st["uinteger"] = 0
        self._bg.state = st
        return self._gen


def trial_rng(master_seed: int, theta_index: int, d_index: int,
              trial_index: int) -> np.random.Generator:
    """Standalone random stream for one trial (fresh generator)."""
    return TrialStreams(master_seed, theta_index, d_index).rng(trial_index)


@dataclass(frozen=True)
class TrialRecord:
    """Everything one trial produced; failure modes are data, not faults."""

    disparity: float
    theta: float
    placement_feasible: bool
    allocation: Optional[PowerAllocation]
    outcome: Optional[DecodingOutcome]
    success: bool
    r_strong: Optional[float] = None
    r_weak: Optional[float] = None


def thetas_for_mode(mode: AllocationMode, theta: float, n: int) -> tuple[float, ...]:
    """Per-message thresholds for a scalar QoS target: in sum-rate mode the
    strongest user's own message is rate-adaptive (threshold zero), everyone
    else must hit the target."""
    if mode is AllocationMode.SUM_RATE_WEAK_QOS:
        return (0.0,) + (theta,) * (n - 1)
    return (theta,) * n


@lru_cache(maxsize=64)
def _qos_for(mode: AllocationMode, theta: float, n: int) -> QoSTargets:
    return QoSTargets(thetas_for_mode(mode, theta, n))


def evaluate_cluster(cluster: Cluster, theta: float, config: SimConfig,
                     mode: Optional[AllocationMode] = None,
                     fractions: Optional[Sequence[float]] = None,
                     ) -> tuple[PowerAllocation, Optional[DecodingOutcome], bool]:
    """Allocate, decode and judge one ready-made cluster.

    Success means the allocation fits the budget and every QoS-constrained
    user (threshold > 0) is covered.  Infeasible allocations are not decoded;
    their raw power demand is kept for diagnostics.
    """
    mode = mode if mode is not None else config.mode
    n = len(cluster.users)
    qos = _qos_for(mode, theta, n)
    if mode is AllocationMode.SUM_RATE_WEAK_QOS:
        allocation = sumrate_max_weak_qos(
            cluster, qos, config.budget,
            robust=config.robust_allocation,
            instantaneous_csi=config.instantaneous_csi)
    elif mode is AllocationMode.MIN_POWER_QOS:
        allocation = min_power_qos(
            cluster, qos, config.budget,
            instantaneous_csi=config.instantaneous_csi)
    else:
        fr = fractions if fractions is not None else config.fixed_fractions
        if fr is None or len(fr) != n:
            raise ValueError(f"fixed mode needs {n} fractions, got {fr}")
        allocation = fixed_fractions(fr, config.budget)
    if not allocation.feasible:
        return allocation, None, False
    outcome = decode_cluster(cluster, allocation, qos, mode)
    success = all(bool(outcome.covered[i])
                  for i in range(n) if qos.theta[i] > 0.0)
    return allocation, outcome, success


def run_trial(config: SimConfig, d: float, theta: float, trial_index: int,
              theta_index: int = 0, d_index: int = 0,
              streams: Optional[TrialStreams] = None) -> TrialRecord:
    """One controlled-disparity trial: sample a deployment, place the pair,
    draw channels, allocate, decode."""
    if streams is None:
        streams = TrialStreams(config.master_seed, theta_index, d_index)
    rng = streams.rng(trial_index)
    realization = sample_realization(config.density, config.window, rng)
    placed = place_disparity_pair(realization, d, rng)
    if not placed.feasible:
        return TrialRecord(d, theta, False, None, None, False)
    params = config.channel_params
    states = make_user_states([placed.strong_position, placed.weak_position],
                              realization, params, rng)
    cluster = order_users(states, config.ordering,
                          instantaneous=config.ordering_instantaneous)
    allocation, outcome, success = evaluate_cluster(cluster, theta, config)
    return TrialRecord(d, theta, True, allocation, outcome, success,
                       r_strong=cluster.users[0].link_distance,
                       r_weak=cluster.users[-1].link_distance)


# --- aggregation -------------------------------------------------------------

@dataclass
class _Partial:
    """Raw per-chunk tallies; conditional metrics stay as value lists so the
    final fsum is independent of chunking and completion order."""

    trials: int = 0
    placement: int = 0
    success: int = 0
    rate_strong: list = field(default_factory=list)
    rate_weak: list = field(default_factory=list)
    power_strong: list = field(default_factory=list)
    power_weak: list = field(default_factory=list)
    sum_rate: list = field(default_factory=list)
    r_strong: list = field(default_factory=list)
    r_weak: list = field(default_factory=list)

    def add(self, rec: TrialRecord):
        self.trials += 1
        if rec.placement_feasible:
            self.placement += 1
            if rec.r_strong is not None:
                self.r_strong.append(rec.r_strong)
                self.r_weak.append(rec.r_weak)
        if rec.success:
            self.success += 1
            rates = rec.outcome.achieved_rate
            self.rate_strong.append(float(rates[0]))
            self.rate_weak.append(float(rates[-1]))
            self.power_strong.append(rec.allocation.powers[0])
            self.power_weak.append(rec.allocation.powers[-1])
            self.sum_rate.append(math.fsum(float(r) for r in rates))


def _cond_mean(values: list) -> Optional[float]:
    """Mean of the conditional values; None when there are none.  A constant
    list returns the constant itself so by-construction-exact metrics (e.g.
    covered users' fixed rate) survive aggregation exactly."""
    if not values:
        return None
    lo, hi = min(values), max(values)
    if lo == hi:
        return lo
    return math.fsum(values) / len(values)


@dataclass(frozen=True)
class SweepRow:
    """Aggregated metrics of one (theta, disparity) grid point; rate and
    power means are conditioned on success and None when nothing succeeded."""

    theta: float
    disparity: float
    trials: int
    placement_feasible_pct: float
    success_pct: float
    mean_rate_strong: Optional[float]
    mean_rate_weak: Optional[float]
    mean_power_strong: Optional[float]
    mean_power_weak: Optional[float]
    mean_sum_rate: Optional[float]


@dataclass(frozen=True)
class SweepResult:
    rows: tuple[SweepRow, ...]


@dataclass(frozen=True)
class ComparisonRow:
    """Aggregates of one (strategy, theta) cell, plus mean link distances of
    the formed clusters so the strategies' geometry can be compared."""

    strategy: str
    mode: str
    theta: float
    trials: int
    placement_feasible_pct: float
    success_pct: float
    mean_rate_strong: Optional[float]
    mean_rate_weak: Optional[float]
    mean_power_strong: Optional[float]
    mean_power_weak: Optional[float]
    mean_sum_rate: Optional[float]
    mean_r_strong: Optional[float]
    mean_r_weak: Optional[float]


@dataclass(frozen=True)
class ComparisonResult:
    rows: tuple[ComparisonRow, ...]


def _merge(partials: Sequence[_Partial]) -> _Partial:
    out = _Partial()
    for p in partials:
        out.trials += p.trials
        out.placement += p.placement
        out.success += p.success
        out.rate_strong.extend(p.rate_strong)
        out.rate_weak.extend(p.rate_weak)
        out.power_strong.extend(p.power_strong)
        out.power_weak.extend(p.power_weak)
        out.sum_rate.extend(p.sum_rate)
        out.r_strong.extend(p.r_strong)
        out.r_weak.extend(p.r_weak)
    return out


def _sweep_row(theta: float, d: float, merged: _Partial) -> SweepRow:
    return SweepRow(
        theta=theta,
        disparity=d,
        trials=merged.trials,
        placement_feasible_pct=100.0 * merged.placement / merged.trials,
        success_pct=100.0 * merged.success / merged.trials,
        mean_rate_strong=_cond_mean(merged.rate_strong),
        mean_rate_weak=_cond_mean(merged.rate_weak),
        mean_power_strong=_cond_mean(merged.power_strong),
        mean_power_weak=_cond_mean(merged.power_weak),
        mean_sum_rate=_cond_mean(merged.sum_rate),
    )


def aggregate(records: Sequence[TrialRecord]) -> SweepRow:
    """Collapse trial records sharing one (theta, disparity) into a row."""
    if not records:
        raise ValueError("cannot aggregate zero records")
    p = _Partial()
    for rec in records:
        p.add(rec)
    return _sweep_row(records[0].theta, records[0].disparity, p)


# --- parallel sweep ----------------------------------------------------------

def _chunks(trials: int) -> list[tuple[int, int]]:
    return [(start, min(CHUNK_TRIALS, trials - start))
            for start in range(0, trials, CHUNK_TRIALS)]


def _sweep_chunk(task) -> _Partial:
    config, theta, ti, d, di, start, count = task
    streams = TrialStreams(config.master_seed, ti, di)
    p = _Partial()
    for k in range(start, start + count):
        p.add(run_trial(config, d, theta, k, ti, di, streams=streams))
    return p


def _compare_chunk(task) -> _Partial:
    config, spec, theta, ti, start, count = task
    streams = TrialStreams(config.master_seed, ti, 0)
    params = config.channel_params
    p = _Partial()
    for k in range(start, start + count):
        rng = streams.rng(k)
        realization = sample_realization(config.density, config.window, rng)
        try:
            cluster = select_cluster(spec.strategy, realization, params, 2, rng,
                                     ordering=config.ordering)
        except MaxAttemptsExceeded:
            p.add(TrialRecord(math.nan, theta, False, None, None, False))
            continue
        allocation, outcome, success = evaluate_cluster(
            cluster, theta, config, mode=spec.mode,
            fractions=spec.fixed_fractions)
        r_s = cluster.users[0].link_distance
        r_w = cluster.users[-1].link_distance
        p.add(TrialRecord(r_w / r_s, theta, True, allocation, outcome, success,
                          r_strong=r_s, r_weak=r_w))
    return p


class _Mapper:
    """Maps chunk tasks onto one reusable worker pool (or serially); results
    come back in task order either way, so the reduction never depends on the
    worker count."""

    def __init__(self, workers: Optional[int]):
        eff = os.cpu_count() or 1 if workers is None else max(1, workers)
        self._pool = Pool(processes=eff) if eff > 1 else None

    def map(self, fn, tasks):
        if self._pool is not None and len(tasks) > 1:
            return self._pool.map(fn, tasks, chunksize=1)
        return [fn(t) for t in tasks]

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        if self._pool is not None:
            self._pool.terminate()
            self._pool.join()
        return False


def run_disparity_sweep(config: SimConfig, workers: Optional[int] = None) -> SweepResult:
    """Run the controlled-disparity grid and aggregate each (theta, d) point.

    Byte-deterministic for a given master seed, regardless of worker count.
    """
    ds = disparity_values(config)
    rows = []
    with _Mapper(workers) as mapper:
        for ti, theta in enumerate(config.theta_list):
            for di, d in enumerate(ds):
                tasks = [(config, theta, ti, d, di, start, count)
                         for start, count in _chunks(config.trials)]
                merged = _merge(mapper.map(_sweep_chunk, tasks))
                rows.append(_sweep_row(theta, d, merged))
    rows.sort(key=lambda r: (r.theta, r.disparity))
    return SweepResult(tuple(rows))


def run_strategy_comparison(config: SimConfig,
                            workers: Optional[int] = None) -> ComparisonResult:
    """Run every configured strategy under identical trial streams so the
    comparison shares randomness, one aggregated row per (strategy, theta)."""
    if not config.strategies:
        raise ValueError("strategy comparison needs at least one strategy entry")
    rows = []
    with _Mapper(workers) as mapper:
        for spec in config.strategies:
            mode = spec.mode if spec.mode is not None else config.mode
            for ti, theta in enumerate(config.theta_list):
                tasks = [(config, spec, theta, ti, start, count)
                         for start, count in _chunks(config.trials)]
                merged = _merge(mapper.map(_compare_chunk, tasks))
                rows.append(ComparisonRow(
                    strategy=spec.label,
                    mode=mode.value,
                    theta=theta,
                    trials=merged.trials,
                    placement_feasible_pct=100.0 * merged.placement / merged.trials,
                    success_pct=100.0 * merged.success / merged.trials,
                    mean_rate_strong=_cond_mean(merged.rate_strong),
                    mean_rate_weak=_cond_mean(merged.rate_weak),
                    mean_power_strong=_cond_mean(merged.power_strong),
                    mean_power_weak=_cond_mean(merged.power_weak),
                    mean_sum_rate=_cond_mean(merged.sum_rate),
                    mean_r_strong=_cond_mean(merged.r_strong),
                    mean_r_weak=_cond_mean(merged.r_weak),
                ))
    return ComparisonResult(tuple(rows))
