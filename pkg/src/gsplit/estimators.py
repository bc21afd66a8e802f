"""Estimators over branching-trial output.

The rare-event probability estimator consumes raw trials, empties
included: ell_hat = mean(M_raw) / s^(tau-1). Conditional-law estimates
consume ledgers of nonempty trials and use the ratio form
sum H_i(A) / sum M_i. Substituting the nonempty-trial lists into the
raw-trial identity is a known bias trap; the two inputs are kept as
distinct types on purpose.

simulate_raw_trials is the fast path for large raw-trial counts. It runs
whole blocks of trials in lockstep: one kernel call advances every live
chain of the block at a given (level, step) slot. Kernels act
row-independently, so the pooled batch has the same law as trial-by-trial
simulation. Randomness comes from one substream per block, which makes
output independent of the internal batching only at fixed block size;
block_size is therefore part of the reproducibility contract and defaults
to a constant.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from . import streams
from .engine import LevelSchedule, ModelSpec, RunLedger, TrialResult
from .errors import InsufficientDataError, KernelFailureError, MemoryCapError
from .tables import write_csv

DEFAULT_BLOCK_SIZE = 4096


class SetPredicate:
    """Measurable-set indicator over batches of states.

    Instances are callables mapping a (k, dim) array to a boolean vector.
    Construct through the classmethods; ``kind`` and ``params`` describe
    the set for reports.
    """

    def __init__(self, kind: str, fn: Callable[[np.ndarray], np.ndarray], params: dict):
        self.kind = kind
        self._fn = fn
        self.params = params

    def __call__(self, states: np.ndarray) -> np.ndarray:
        return np.asarray(self._fn(np.atleast_2d(states)), dtype=bool)

    def __repr__(self):
        return f"SetPredicate({self.kind}, {self.params})"

    @classmethod
    def one_sided(cls, bound) -> "SetPredicate":
        """{x : x_j <= bound_j for all j}; scalar bounds broadcast."""
        b = np.asarray(bound, dtype=float)
        return cls("one_sided_interval", lambda x: np.all(x <= b, axis=1), {"bound": b.tolist()})

    @classmethod
    def rectangle(cls, lower, upper) -> "SetPredicate":
        lo = np.asarray(lower, dtype=float)
        hi = np.asarray(upper, dtype=float)
        if np.any(lo > hi):
            raise ValueError("rectangle needs lower <= upper")
        return cls(
            "rectangle",
            lambda x: np.all((x >= lo) & (x <= hi), axis=1),
            {"lower": lo.tolist(), "upper": hi.tolist()},
        )

    @classmethod
    def halfspace(cls, normal, offset: float) -> "SetPredicate":
        """{x : <normal, x> >= offset}."""
        w = np.asarray(normal, dtype=float)
        return cls("halfspace", lambda x: x @ w >= offset, {"normal": w.tolist(), "offset": offset})

    @classmethod
    def custom(cls, fn: Callable[[np.ndarray], np.ndarray], name: str = "custom") -> "SetPredicate":
        return cls(name, fn, {})


@dataclass(frozen=True)
class ProbabilityEstimate:
    """Point estimate with relative error sd/(mean*sqrt(n)).

    relative_error is NaN when the estimate is zero (no surviving trial),
    reported explicitly rather than hidden.
    """

    value: float
    relative_error: float
    trial_count: int
    raw_trial_mean_size: float


@dataclass(frozen=True)
class RawTrials:
    """Output of a block-vectorized raw-trial run.

    sizes holds M for every trial, zeros included. states stacks the
    retained states of all trials; trial_ids maps each row back to its
    trial index. trial_kernel_steps attributes the kernel work to the
    trial that caused it, so a caller can account work trial by trial.
    """

    sizes: np.ndarray
    states: np.ndarray
    trial_ids: np.ndarray
    kernel_steps: int
    trial_kernel_steps: np.ndarray
    first_level_passes: int
    schedule: LevelSchedule
    seed: int

    @property
    def trial_count(self) -> int:
        return int(len(self.sizes))

    def total_work(self) -> int:
        """f-draws plus kernel steps, one unit each."""
        return self.trial_count + self.kernel_steps

    def predicate_counts(self, predicate) -> np.ndarray:
        """Per-trial count of retained states inside the predicate set."""
        if len(self.states) == 0:
            return np.zeros(self.trial_count, dtype=np.int64)
        hits = np.asarray(predicate(self.states), dtype=bool)
        return np.bincount(self.trial_ids[hits], minlength=self.trial_count).astype(np.int64)


def simulate_raw_trials(
    model: ModelSpec,
    schedule: LevelSchedule,
    n_trials: int,
    seed: int,
    *,
    block_size: int = DEFAULT_BLOCK_SIZE,
    memory_cap: int = 10_000_000,
    keep_states: bool = True,
    stream_domain: int = streams.RAW_TRIALS,
    stream_offset: int = 0,
) -> RawTrials:
    """Run ``n_trials`` independent branching trials in lockstep blocks.

    ``stream_offset`` shifts the per-block substream indices, letting a
    caller carve disjoint stream ranges out of one domain (replicated
    comparisons do this).
    """
    n_trials = int(n_trials)
    if n_trials < 1:
        raise ValueError("n_trials must be >= 1")
    sign = schedule.sign
    levels = schedule.levels
    s = schedule.split_factor

    sizes = np.zeros(n_trials, dtype=np.int64)
    trial_steps = np.zeros(n_trials, dtype=np.int64)
    all_states: list[np.ndarray] = []
    all_ids: list[np.ndarray] = []
    kernel_steps = 0
    first_passes = 0

    for block_index, start in enumerate(range(0, n_trials, block_size)):
        nb = min(block_size, n_trials - start)
        rng = streams.substream(seed, stream_domain, stream_offset + block_index)

        pool = np.asarray(model.sample_f(nb, rng), dtype=float)
        alive = sign * model.importance(pool) >= sign * levels[0]
        first_passes += int(alive.sum())
        ids = np.flatnonzero(alive)
        pool = pool[alive]

        if schedule.tau == 1:
            sizes[start + ids] = 1
            if keep_states and len(pool):
                all_states.append(pool)
                all_ids.append(start + ids)
            continue

        for l in range(1, schedule.tau):
            if pool.shape[0] == 0:
                break
            next_states: list[np.ndarray] = []
            next_ids: list[np.ndarray] = []
            chain = pool
            chain_ids = ids
            # every pool state takes exactly s steps over this level
            trial_steps[start:start + nb] += s * np.bincount(chain_ids, minlength=nb)
            for _ in range(s):
                chain = np.asarray(model.kernel_step(levels[l - 1], chain, rng), dtype=float)
                kernel_steps += chain.shape[0]
                if not np.all(np.isfinite(chain)):
                    raise KernelFailureError(
                        "kernel emitted a non-finite state",
                        detail={"level_index": l - 1, "level": levels[l - 1]},
                    )
                passed = sign * model.importance(chain) >= sign * levels[l]
                if np.any(passed):
                    next_states.append(chain[passed])
                    next_ids.append(chain_ids[passed])
            if not next_states:
                pool = pool[:0]
                ids = ids[:0]
                break
            pool = np.concatenate(next_states, axis=0)
            ids = np.concatenate(next_ids)
            per_trial = np.bincount(ids, minlength=nb)
            if per_trial.max() > memory_cap or pool.shape[0] > memory_cap:
                raise MemoryCapError(
                    "level population exceeded the memory cap",
                    detail={"level_index": l, "max_per_trial": int(per_trial.max()),
                            "pooled": int(pool.shape[0]), "memory_cap": int(memory_cap)},
                )

        if pool.shape[0]:
            if np.any(sign * model.importance(pool) < sign * levels[-1]):
                raise KernelFailureError("retained state violates the final-level constraint")
            sizes[start:start + nb] = np.bincount(ids, minlength=nb)
            if keep_states:
                all_states.append(pool)
                all_ids.append(start + ids)

    states = (np.concatenate(all_states, axis=0) if all_states
              else np.empty((0, model.dim)))
    trial_ids = (np.concatenate(all_ids) if all_ids else np.empty(0, dtype=np.int64))
    return RawTrials(
        sizes=sizes,
        states=states,
        trial_ids=trial_ids,
        kernel_steps=int(kernel_steps),
        trial_kernel_steps=trial_steps,
        first_level_passes=int(first_passes),
        schedule=schedule,
        seed=int(seed),
    )


def estimate_rare_event_probability(
    raw: RawTrials | Iterable[TrialResult],
    schedule: LevelSchedule | None = None,
) -> ProbabilityEstimate:
    """ell_hat = mean(M_raw)/s^(tau-1) over raw trials, empties included."""
    if isinstance(raw, RawTrials):
        sizes = raw.sizes
        schedule = raw.schedule
    else:
        trials = list(raw)
        if schedule is None:
            raise ValueError("schedule required when passing TrialResult sequences")
        sizes = np.array([tr.size for tr in trials], dtype=np.int64)
    return _rare_event_estimate_from_sizes(sizes, schedule)


def estimate_rare_event_probability_from_ledger(ledger: RunLedger) -> ProbabilityEstimate:
    """Recover ell_hat from a nonempty-trial ledger.

    The empty trials a retry wrapper discarded are still raw trials; their
    count is recorded per ledger entry, so the full raw size sequence is
    the ledger sizes padded with that many zeros. The run stopped on the
    n-th success rather than at a fixed raw count, which introduces a
    small inverse-binomial bias, negligible when the per-trial success
    probability is small.
    """
    sizes = ledger.sizes()
    zeros = int(sum(tr.discarded_empty_trials for tr in ledger.trials))
    raw_sizes = np.concatenate([sizes, np.zeros(zeros, dtype=np.int64)])
    return _rare_event_estimate_from_sizes(raw_sizes, ledger.schedule)


def _rare_event_estimate_from_sizes(sizes: np.ndarray, schedule: LevelSchedule) -> ProbabilityEstimate:
    n = len(sizes)
    if n < 1:
        raise InsufficientDataError("need at least one raw trial")
    scale = float(schedule.max_trial_size())
    mean = float(sizes.mean())
    value = mean / scale
    if mean > 0 and n > 1:
        re = float(sizes.std(ddof=1) / (mean * np.sqrt(n)))
    elif mean > 0:
        re = 0.0
    else:
        re = float("nan")
    return ProbabilityEstimate(
        value=value, relative_error=re, trial_count=n, raw_trial_mean_size=mean
    )


def estimate_conditional_probability(ledger: RunLedger, predicate) -> ProbabilityEstimate:
    """Ratio estimator sum H_i(A)/sum M_i with a delta-method error.

    The per-trial pairs (H_i, M_i) are iid, so the variance of the ratio R
    is estimated from the residuals H_i - R*M_i.
    """
    n = ledger.trial_count
    counts = np.array(
        [int(np.asarray(predicate(tr.retained), dtype=bool).sum()) for tr in ledger.trials],
        dtype=np.int64,
    )
    sizes = ledger.sizes()
    ratio = float(counts.sum() / sizes.sum())
    mean_size = float(sizes.mean())
    if n > 1:
        resid = counts - ratio * sizes
        se = float(np.sqrt(resid.var(ddof=1) / n) / mean_size)
    else:
        se = float("nan")
    re = se / ratio if ratio > 0 else float("nan")
    return ProbabilityEstimate(
        value=ratio, relative_error=re, trial_count=n, raw_trial_mean_size=mean_size
    )


@dataclass(frozen=True)
class OracleCheck:
    """Comparison of a mean estimate against a closed-form target."""

    estimate: float
    oracle: float
    se: float
    z: float
    trial_count: int


def unbiasedness_oracle_check(
    model: ModelSpec,
    schedule: LevelSchedule,
    predicate,
    trials: int,
    seed: int,
    oracle_value: float,
) -> OracleCheck:
    """Check E[H(A)]/s^(tau-1) against a closed-form joint probability.

    Runs raw trials on the self-check stream domain and reports the
    z-score of the sample mean against ``oracle_value``; |z| <= 3 is the
    conventional acceptance band.
    """
    raw = simulate_raw_trials(
        model, schedule, trials, seed, stream_domain=streams.CHECKS
    )
    scale = float(schedule.max_trial_size())
    counts = raw.predicate_counts(predicate) / scale
    est = float(counts.mean())
    se = float(counts.std(ddof=1) / np.sqrt(len(counts)))
    if se == 0.0:
        z = 0.0 if est == oracle_value else float("inf")
    else:
        z = (est - oracle_value) / se
    return OracleCheck(estimate=est, oracle=float(oracle_value), se=se, z=float(z),
                       trial_count=raw.trial_count)


MARGINAL_HEADER = ("coordinate", "q05", "q25", "q50", "q75", "q95", "ols_reference_optional")
_QUANTILES = (0.05, 0.25, 0.50, 0.75, 0.95)


def summarize_marginals(states: np.ndarray, names: Sequence[str] | None = None):
    """Per-coordinate quantile rows (type-7 linear interpolation)."""
    states = np.atleast_2d(np.asarray(states, dtype=float))
    if states.shape[0] < 1:
        raise InsufficientDataError("no states to summarize")
    d = states.shape[1]
    if names is None:
        names = [f"x{j}" for j in range(d)]
    if len(names) != d:
        raise ValueError("one name per coordinate required")
    q = np.quantile(states, _QUANTILES, axis=0, method="linear")
    return [(names[j], *(float(q[i, j]) for i in range(len(_QUANTILES)))) for j in range(d)]


def write_marginal_csv(path, states, names=None, ols_reference=None) -> None:
    """Marginal-summary CSV; the reference column stays empty when absent."""
    rows = []
    for row in summarize_marginals(states, names):
        name = row[0]
        ref = None
        if ols_reference is not None:
            ref = ols_reference.get(name) if hasattr(ols_reference, "get") else None
        rows.append((*row, float(ref) if ref is not None else None))
    write_csv(path, MARGINAL_HEADER, rows)
