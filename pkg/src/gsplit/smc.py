"""Fixed-level sequential Monte Carlo baseline.

The baseline estimates the same rare-event probability as the splitting
engine, but with the classic interacting-particle scheme: hold N
particles, count the fraction passing each level, resample the survivors
back to N, apply a few kernel moves, repeat. The estimate is the product
of the per-level fractions. Unlike splitting trials, the N particles are
dependent after the first resampling, so confidence statements need
independent replications of the whole run; the comparison driver below
does exactly that for both methods at a matched work budget.

Work is counted in draw units: one base-density draw or one kernel step
of one particle costs 1. This matches the accounting used by
RawTrials.total_work, so budgets transfer across methods.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import streams
from .engine import LevelSchedule, ModelSpec
from .errors import KernelFailureError
from .estimators import simulate_raw_trials
from .tables import write_csv

COMPARISON_HEADER = ("method", "effort", "ell_hat", "re")


@dataclass(frozen=True)
class SmcConfig:
    particle_count: int
    moves_per_level: int = 1

    def __post_init__(self):
        if self.particle_count < 2:
            raise ValueError("need at least 2 particles")
        if self.moves_per_level < 1:
            raise ValueError("moves_per_level must be >= 1")


@dataclass(frozen=True)
class SmcResult:
    """One SMC run: product estimate plus per-level pass fractions.

    ``extinct`` flags a run where some level killed every particle; the
    estimate is then 0 and the remaining fractions are reported as 0.
    """

    estimate: float
    level_fractions: tuple[float, ...]
    extinct: bool
    particle_count: int
    effort: int


def run_smc(
    model: ModelSpec,
    schedule: LevelSchedule,
    config: SmcConfig,
    rng: np.random.Generator,
) -> SmcResult:
    sign = schedule.sign
    levels = schedule.levels
    N = config.particle_count
    w = config.moves_per_level

    pop = np.asarray(model.sample_f(N, rng), dtype=float)
    effort = N
    fractions: list[float] = []
    estimate = 1.0
    for l, level in enumerate(levels):
        alive = sign * model.importance(pop) >= sign * level
        frac = float(alive.mean())
        fractions.append(frac)
        if frac == 0.0:
            fractions.extend([0.0] * (len(levels) - l - 1))
            return SmcResult(0.0, tuple(fractions), True, N, effort)
        estimate *= frac
        if l + 1 < len(levels):
            idx = rng.integers(0, int(alive.sum()), size=N)
            pop = pop[alive][idx]
            for _ in range(w):
                pop = np.asarray(model.kernel_step(level, pop, rng), dtype=float)
                effort += N
            if not np.all(np.isfinite(pop)):
                raise KernelFailureError("kernel emitted a non-finite state",
                                         detail={"level": level})
    return SmcResult(float(estimate), tuple(fractions), False, N, effort)


@dataclass(frozen=True)
class MethodSummary:
    """Replication summary for one method at one budget."""

    method: str
    estimates: np.ndarray
    efforts: np.ndarray

    @property
    def mean_estimate(self) -> float:
        return float(self.estimates.mean())

    @property
    def relative_error(self) -> float:
        """Per-replication sd over mean; NaN when the mean is 0."""
        m = self.estimates.mean()
        if m <= 0:
            return float("nan")
        return float(self.estimates.std(ddof=1) / m)

    @property
    def mean_effort(self) -> float:
        return float(self.efforts.mean())

    def row(self) -> tuple:
        return (self.method, self.mean_effort, self.mean_estimate, self.relative_error)


def replicate_smc(
    model: ModelSpec,
    schedule: LevelSchedule,
    config: SmcConfig,
    reps: int,
    seed: int,
) -> MethodSummary:
    """Independent SMC runs, one substream per replication."""
    if reps < 2:
        raise ValueError("need at least 2 replications")
    estimates = np.empty(reps)
    efforts = np.empty(reps)
    for i in range(reps):
        rng = streams.substream(seed, streams.SMC, i)
        res = run_smc(model, schedule, config, rng)
        estimates[i] = res.estimate
        efforts[i] = res.effort
    return MethodSummary("smc", estimates, efforts)


def replicate_splitting(
    model: ModelSpec,
    schedule: LevelSchedule,
    budget: int,
    reps: int,
    seed: int,
    *,
    chunk: int = 4096,
    memory_cap: int = 10_000_000,
) -> MethodSummary:
    """Raw-trial splitting runs, each consuming about ``budget`` work units.

    Each replication draws raw-trial chunks from its own disjoint stream
    range and stops at the trial whose cumulative work first crosses the
    budget (that trial is kept whole; cutting it would bias against
    expensive trials). Chunks never cross the 4096 streams reserved per
    replication.
    """
    if reps < 2:
        raise ValueError("need at least 2 replications")
    scale = float(schedule.max_trial_size())
    stride = 4096
    estimates = np.empty(reps)
    efforts = np.empty(reps)
    for i in range(reps):
        total_size = 0
        work = 0
        trials = 0
        for c in range(stride):
            if trials:
                per_trial = max(work / trials, 1.0)
                this_chunk = int(min(chunk, max(1, round((budget - work) / per_trial))))
            else:
                # conservative first probe; a trial costs at least 1 unit
                # but deep ladders multiply that, so start small
                this_chunk = int(min(chunk, max(1, budget // 8)))
            raw = simulate_raw_trials(
                model, schedule, this_chunk, seed,
                block_size=chunk, keep_states=False,
                memory_cap=memory_cap,
                stream_domain=streams.COMPARE,
                stream_offset=i * stride + c,
            )
            cum = work + np.cumsum(1 + raw.trial_kernel_steps)
            if cum[-1] >= budget:
                j = int(np.argmax(cum >= budget))
                total_size += int(raw.sizes[: j + 1].sum())
                work = int(cum[j])
                trials += j + 1
                break
            total_size += int(raw.sizes.sum())
            work = int(cum[-1])
            trials += raw.trial_count
        else:
            raise RuntimeError("budget never reached; raise chunk size")
        estimates[i] = total_size / (trials * scale)
        efforts[i] = work
    return MethodSummary("splitting", estimates, efforts)


@dataclass(frozen=True)
class ComparisonResult:
    splitting: MethodSummary
    smc: MethodSummary

    def rows(self) -> list[tuple]:
        return [self.splitting.row(), self.smc.row()]

    @property
    def re_ratio(self) -> float:
        """RE(SMC) / RE(splitting); large values favor splitting."""
        return self.smc.relative_error / self.splitting.relative_error


def compare_methods(
    model: ModelSpec,
    schedule: LevelSchedule,
    budget: int,
    reps: int,
    seed: int,
    *,
    smc_moves: int = 1,
    memory_cap: int = 10_000_000,
) -> ComparisonResult:
    """Both methods replicated at a matched per-replication work budget.

    The SMC particle count is solved from the budget identity
    N * (1 + moves * (tau - 1)) = budget so both methods consume the same
    number of draw units per replication.
    """
    if budget < 10:
        raise ValueError("budget too small to split between levels")
    tau = schedule.tau
    per_particle = 1 + smc_moves * (tau - 1)
    N = max(2, int(round(budget / per_particle)))
    chunk = int(min(4096, max(64, budget)))
    gs = replicate_splitting(model, schedule, budget, reps, seed,
                             chunk=chunk, memory_cap=memory_cap)
    smc = replicate_smc(model, schedule, SmcConfig(N, smc_moves), reps, seed)
    return ComparisonResult(splitting=gs, smc=smc)


def write_comparison_csv(path, result: ComparisonResult) -> None:
    write_csv(path, COMPARISON_HEADER, result.rows())


def comparison_dict(result: ComparisonResult) -> dict:
    return {
        "rows": [dict(zip(COMPARISON_HEADER, row)) for row in result.rows()],
        "re_ratio": result.re_ratio,
        "replications": int(len(result.splitting.estimates)),
    }
