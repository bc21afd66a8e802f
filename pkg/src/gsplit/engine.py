"""Generalized-splitting engine.

A branching trial pushes states from the base density f through a fixed
ladder of importance levels. The initial draw is tested against the first
level directly; from then on every state that reached level l-1 starts a
chain of s kernel steps targeting the density conditioned on level l-1,
and every visited chain state that clears level l joins the next
population. The retained states of one trial form an exchangeable multiset
whose cardinality M is the tour length of a regenerative process, which is
what the diagnostics in :mod:`gsplit.diagnostics` consume.

Models plug in through a three-method contract (see :class:`ModelSpec`).
All engine entry points are batch-vectorized per trial: a level population
of k states advances through one kernel call on a (k, dim) array. Kernels
must act row-independently, so the batched chain is distributionally
identical to running each parent's chain one at a time.

Events of either orientation are supported. A schedule with direction
"at_most" (rare event {S <= gamma}) is canonicalized internally by sign
flip, so there is a single code path; user-facing values stay in natural
units.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol, runtime_checkable

import numpy as np

from . import streams
from .errors import (
    KernelFailureError,
    MemoryCapError,
    RetryLimitError,
    ScheduleError,
)

DEFAULT_MEMORY_CAP = 10_000_000
DEFAULT_RETRY_CAP = 1_000_000

_DIRECTIONS = ("at_least", "at_most")


@runtime_checkable
class ModelSpec(Protocol):
    """Contract a sampling problem must satisfy.

    dim:          state dimension; states are float arrays of shape (k, dim).
    sample_f:     k independent draws from the base density f.
    importance:   the scalar S per state; shape (k,).
    kernel_step:  one Markov step per row, stationary with respect to f
                  conditioned on the event at ``level`` (natural units).
                  Rows evolve independently given the generator.
    """

    dim: int

    def sample_f(self, count: int, rng: np.random.Generator) -> np.ndarray: ...

    def importance(self, states: np.ndarray) -> np.ndarray: ...

    def kernel_step(self, level: float, states: np.ndarray, rng: np.random.Generator) -> np.ndarray: ...


@dataclass(frozen=True)
class LevelSchedule:
    """Importance-level ladder with splitting factor and event orientation.

    ``levels`` are in natural units and must be strictly monotone toward
    the rare event: increasing for direction "at_least", decreasing for
    "at_most". The final entry is the event threshold itself.
    """

    levels: tuple[float, ...]
    split_factor: int
    direction: str = "at_least"

    def __post_init__(self):
        levels = tuple(float(g) for g in self.levels)
        object.__setattr__(self, "levels", levels)
        if len(levels) < 1:
            raise ScheduleError("schedule needs at least one level")
        if not all(np.isfinite(levels)):
            raise ScheduleError("levels must be finite")
        if self.direction not in _DIRECTIONS:
            raise ScheduleError(f"direction must be one of {_DIRECTIONS}")
        if int(self.split_factor) != self.split_factor or self.split_factor < 2:
            raise ScheduleError("split_factor must be an integer >= 2")
        object.__setattr__(self, "split_factor", int(self.split_factor))
        canon = self.sign * np.asarray(levels)
        if np.any(np.diff(canon) <= 0):
            raise ScheduleError(
                "levels must be strictly monotone toward the rare event",
                detail={"levels": list(levels), "direction": self.direction},
            )

    @property
    def sign(self) -> float:
        return 1.0 if self.direction == "at_least" else -1.0

    @property
    def tau(self) -> int:
        return len(self.levels)

    @property
    def final_level(self) -> float:
        return self.levels[-1]

    def max_trial_size(self) -> int:
        return self.split_factor ** (self.tau - 1)


@dataclass(frozen=True)
class TrialResult:
    """Outcome of one branching trial.

    ``kernel_steps`` counts every kernel application consumed while
    producing this result, including work spent inside empty attempts that
    a retry wrapper discarded. ``discarded_empty_trials`` is 0 for a bare
    trial and the retry count for :func:`run_nonempty_trial`.
    """

    retained: np.ndarray
    size: int
    kernel_steps: int
    discarded_empty_trials: int = 0

    def __post_init__(self):
        if self.size != len(self.retained):
            raise ValueError("size must equal the number of retained states")


class FixedN:
    """Stop after exactly n nonempty trials."""

    __slots__ = ("n",)

    def __init__(self, n: int):
        if n < 1:
            raise ValueError("n must be >= 1")
        self.n = int(n)

    def __repr__(self):
        return f"FixedN({self.n})"

    def __eq__(self, other):
        return isinstance(other, FixedN) and other.n == self.n


class ExceedT:
    """Stop at the first trial taking the cumulative size above t."""

    __slots__ = ("t",)

    def __init__(self, t: int):
        if t < 1:
            raise ValueError("t must be >= 1")
        self.t = int(t)

    def __repr__(self):
        return f"ExceedT({self.t})"

    def __eq__(self, other):
        return isinstance(other, ExceedT) and other.t == self.t


@dataclass(frozen=True)
class RunLedger:
    """Ordered collection of nonempty trials plus run metadata."""

    trials: tuple[TrialResult, ...]
    stopping_rule: FixedN | ExceedT
    schedule: LevelSchedule
    seed: int | None = None

    def __post_init__(self):
        sizes = self.sizes()
        if len(sizes) == 0:
            raise ValueError("ledger must contain at least one trial")
        if np.any(sizes < 1):
            raise ValueError("every ledger trial must be nonempty")
        if isinstance(self.stopping_rule, ExceedT):
            cum = np.cumsum(sizes)
            t = self.stopping_rule.t
            if not (cum[-1] > t and (len(cum) == 1 or cum[-2] <= t)):
                raise ValueError("stopped ledger must satisfy T_N > t >= T_{N-1}")

    def sizes(self) -> np.ndarray:
        return np.array([tr.size for tr in self.trials], dtype=np.int64)

    def cumulative_sizes(self) -> np.ndarray:
        return np.cumsum(self.sizes())

    @property
    def trial_count(self) -> int:
        return len(self.trials)

    def pooled_states(self) -> np.ndarray:
        return np.concatenate([tr.retained for tr in self.trials], axis=0)

    def total_kernel_steps(self) -> int:
        return int(sum(tr.kernel_steps for tr in self.trials))

    def total_raw_trials(self) -> int:
        """Branching trials consumed, counting the discarded empty ones."""
        return int(sum(1 + tr.discarded_empty_trials for tr in self.trials))


def run_gs_trial(
    model: ModelSpec,
    schedule: LevelSchedule,
    rng: np.random.Generator,
    *,
    memory_cap: int = DEFAULT_MEMORY_CAP,
) -> TrialResult:
    """One branching trial. The returned multiset may be empty.

    Raises MemoryCapError when a level population would exceed
    ``memory_cap`` states, and KernelFailureError if a kernel emits a
    non-finite state or a retained state fails the final-level constraint.
    """
    sign = schedule.sign
    levels = schedule.levels
    s = schedule.split_factor
    steps = 0

    state = np.asarray(model.sample_f(1, rng), dtype=float)
    if not np.all(np.isfinite(state)):
        raise KernelFailureError("base-density draw produced a non-finite state")
    if sign * float(model.importance(state)[0]) < sign * levels[0]:
        return TrialResult(retained=state[:0], size=0, kernel_steps=0)

    population = state
    for l in range(1, schedule.tau):
        if population.shape[0] * s > memory_cap:
            raise MemoryCapError(
                "next level population could exceed the memory cap",
                detail={"level_index": l, "parents": int(population.shape[0]),
                        "split_factor": s, "memory_cap": int(memory_cap)},
            )
        survivors = []
        chain = population
        for _ in range(s):
            chain = np.asarray(model.kernel_step(levels[l - 1], chain, rng), dtype=float)
            steps += chain.shape[0]
            if not np.all(np.isfinite(chain)):
                raise KernelFailureError(
                    "kernel emitted a non-finite state",
                    detail={"level_index": l - 1, "level": levels[l - 1]},
                )
            passed = sign * model.importance(chain) >= sign * levels[l]
            if np.any(passed):
                survivors.append(chain[passed])
        if not survivors:
            return TrialResult(retained=population[:0], size=0, kernel_steps=steps)
        population = np.concatenate(survivors, axis=0)

    if np.any(sign * model.importance(population) < sign * levels[-1]):
        raise KernelFailureError("retained state violates the final-level constraint")
    size = int(population.shape[0])
    assert size <= schedule.max_trial_size()
    return TrialResult(retained=population, size=size, kernel_steps=steps)


def run_nonempty_trial(
    model: ModelSpec,
    schedule: LevelSchedule,
    rng: np.random.Generator,
    *,
    retry_cap: int = DEFAULT_RETRY_CAP,
    memory_cap: int = DEFAULT_MEMORY_CAP,
) -> TrialResult:
    """Repeat branching trials until one retains at least one state.

    Raising after ``retry_cap`` empty attempts surfaces a first level far
    too deep for the base density instead of looping forever; the error
    reports how many attempts even cleared level one.
    """
    steps = 0
    cleared_first = 0
    for attempt in range(int(retry_cap)):
        trial = run_gs_trial(model, schedule, rng, memory_cap=memory_cap)
        steps += trial.kernel_steps
        if trial.kernel_steps > 0:
            cleared_first += 1
        if trial.size > 0:
            return TrialResult(
                retained=trial.retained,
                size=trial.size,
                kernel_steps=steps,
                discarded_empty_trials=attempt,
            )
    raise RetryLimitError(
        "no nonempty trial within the retry budget; the schedule is mis-tuned for this model",
        detail={
            "retry_cap": int(retry_cap),
            "attempts_clearing_first_level": cleared_first,
            "levels": list(schedule.levels),
        },
    )


def _collect_range(args):
    model, schedule, seed, start, stop, retry_cap, memory_cap = args
    out = []
    for i in range(start, stop):
        rng = streams.substream(seed, streams.NONEMPTY_TRIALS, i)
        out.append(run_nonempty_trial(model, schedule, rng, retry_cap=retry_cap, memory_cap=memory_cap))
    return out


def collect_fixed_n(
    model: ModelSpec,
    schedule: LevelSchedule,
    n: int,
    seed: int,
    *,
    workers: int = 1,
    retry_cap: int = DEFAULT_RETRY_CAP,
    memory_cap: int = DEFAULT_MEMORY_CAP,
) -> RunLedger:
    """n independent nonempty trials, one derived RNG stream per trial index.

    Results are merged in index order, so the ledger is byte-identical for
    any worker count. Trial i of a fixed-n run equals trial i of a
    sequential run with the same seed, which makes prefixes of a large run
    exact smaller runs.
    """
    n = int(n)
    if n < 1:
        raise ValueError("n must be >= 1")
    workers = max(1, int(workers))
    if workers == 1:
        trials = _collect_range((model, schedule, seed, 0, n, retry_cap, memory_cap))
    else:
        from concurrent.futures import ProcessPoolExecutor

        chunk = max(1, (n + workers - 1) // workers)
        ranges = [(model, schedule, seed, lo, min(lo + chunk, n), retry_cap, memory_cap)
                  for lo in range(0, n, chunk)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_collect_range, ranges))
        trials = [tr for part in parts for tr in part]
    return RunLedger(trials=tuple(trials), stopping_rule=FixedN(n), schedule=schedule, seed=int(seed))


def collect_until_t(
    model: ModelSpec,
    schedule: LevelSchedule,
    t: int,
    seed: int,
    *,
    retry_cap: int = DEFAULT_RETRY_CAP,
    memory_cap: int = DEFAULT_MEMORY_CAP,
) -> RunLedger:
    """Nonempty trials until the cumulative retained count exceeds t.

    Sequential by construction (the stopping time depends on earlier
    trials); uses the same per-trial streams as :func:`collect_fixed_n`.
    """
    t = int(t)
    if t < 1:
        raise ValueError("t must be >= 1")
    trials = []
    total = 0
    i = 0
    while total <= t:
        rng = streams.substream(seed, streams.NONEMPTY_TRIALS, i)
        trial = run_nonempty_trial(model, schedule, rng, retry_cap=retry_cap, memory_cap=memory_cap)
        trials.append(trial)
        total += trial.size
        i += 1
    return RunLedger(trials=tuple(trials), stopping_rule=ExceedT(t), schedule=schedule, seed=int(seed))


def empirical_measure(ledger: RunLedger, predicate) -> float:
    """Pooled empirical probability of ``predicate`` under the ledger.

    Computes sum_i H_i(A) / sum_i M_i over the retained states, the ratio
    the conditional-law estimators are built on.
    """
    hits = 0
    total = 0
    for tr in ledger.trials:
        flags = np.asarray(predicate(tr.retained), dtype=bool)
        if flags.shape != (tr.size,):
            raise ValueError("predicate must return one boolean per state")
        hits += int(flags.sum())
        total += tr.size
    return hits / total
