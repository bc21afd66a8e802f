"""Adaptive level-schedule construction.

A fixed splitting factor s only pays off when each level is cleared with
conditional probability near 1/s. The pilot finds such a ladder
empirically: simulate a population, take the upper target_rho quantile of
the importance values as the next level, keep the survivors, resample
them back to full size, mix with the model kernel, repeat until the final
threshold is inside reach. A fresh-stream validation pass then re-
measures every conditional fraction and rejects ladders whose fractions
drifted outside [target/3, 3*target]; a ladder built from one lucky
population would otherwise poison every later run.

The pilot is a tuning device. Its output schedule feeds the unbiased
engine; nothing from the pilot population is reused.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import streams
from .engine import LevelSchedule, ModelSpec
from .errors import KernelFailureError, ScheduleError

VALIDATION_BAND = 3.0


@dataclass(frozen=True)
class PilotConfig:
    target_rho: float = 0.1
    population: int = 1000
    max_levels: int = 60
    mixing_sweeps: int = 10

    def __post_init__(self):
        if not 0.0 < self.target_rho < 1.0:
            raise ValueError("target_rho must lie in (0, 1)")
        if self.population < 100:
            raise ValueError("pilot population must be >= 100")
        if self.max_levels < 1:
            raise ValueError("max_levels must be >= 1")
        if self.mixing_sweeps < 0:
            raise ValueError("mixing_sweeps must be >= 0")


@dataclass(frozen=True)
class PilotReport:
    """Constructed schedule plus the fractions that justified it.

    construction_rho[l] is the survivor fraction seen while placing level
    l+1; validation_rho[l] is the same fraction re-measured on the
    independent validation stream. Both have one entry per level.
    """

    schedule: LevelSchedule
    construction_rho: tuple[float, ...]
    validation_rho: tuple[float, ...]
    target_rho: float
    population: int

    def rows(self):
        return [
            (i + 1, self.schedule.levels[i], self.construction_rho[i], self.validation_rho[i])
            for i in range(self.schedule.tau)
        ]

    def to_dict(self) -> dict:
        return {
            "levels": list(self.schedule.levels),
            "split_factor": self.schedule.split_factor,
            "direction": self.schedule.direction,
            "target_rho": self.target_rho,
            "population": self.population,
            "construction_rho": list(self.construction_rho),
            "validation_rho": list(self.validation_rho),
        }


def _advance(model: ModelSpec, pop: np.ndarray, level: float, sign: float,
             sweeps: int, rng: np.random.Generator, population: int) -> np.ndarray:
    """Resample survivors to full size and mix at the given level."""
    idx = rng.integers(0, pop.shape[0], size=population)
    pop = pop[idx]
    for _ in range(sweeps):
        pop = np.asarray(model.kernel_step(level, pop, rng), dtype=float)
    if not np.all(np.isfinite(pop)):
        raise KernelFailureError("pilot mixing produced a non-finite state",
                                 detail={"level": level})
    # tolerance absorbs inverse-CDF roundoff at the boundary
    slack = 1e-9 * max(1.0, abs(level))
    if np.any(sign * model.importance(pop) < sign * level - slack):
        raise KernelFailureError(
            "pilot mixing kernel left its conditioning set",
            detail={"level": level},
        )
    return pop


def _stage_fractions(model: ModelSpec, levels: tuple[float, ...], sign: float,
                     config: PilotConfig, rng: np.random.Generator) -> list[float]:
    """Measure the per-level conditional pass fractions with a fresh population."""
    fractions: list[float] = []
    pop = np.asarray(model.sample_f(config.population, rng), dtype=float)
    for i, level in enumerate(levels):
        keep = sign * model.importance(pop) >= sign * level
        fractions.append(float(keep.mean()))
        if not np.any(keep):
            fractions.extend([0.0] * (len(levels) - i - 1))
            break
        if i + 1 < len(levels):
            pop = _advance(model, pop[keep], level, sign, config.mixing_sweeps,
                           rng, config.population)
    return fractions


def pilot_levels(
    model: ModelSpec,
    split_factor: int,
    final_level: float,
    *,
    direction: str = "at_least",
    config: PilotConfig | None = None,
    seed: int = 0,
) -> PilotReport:
    """Build and validate a level ladder ending at ``final_level``.

    Raises ScheduleError when ``config.max_levels`` stages cannot reach
    the final threshold (the error names the deepest level attained), when
    progress stalls, or when the validation fractions for the non-final
    levels leave [target_rho/3, 3*target_rho].
    """
    config = config or PilotConfig()
    sign = 1.0 if direction == "at_least" else -1.0
    if direction not in ("at_least", "at_most"):
        raise ScheduleError("direction must be 'at_least' or 'at_most'")
    canon_final = sign * float(final_level)
    P = config.population
    k = max(1, math.ceil(P * config.target_rho))

    rng = streams.substream(seed, streams.PILOT, 0)
    pop = np.asarray(model.sample_f(P, rng), dtype=float)

    levels: list[float] = []
    construction: list[float] = []
    prev_canon = -math.inf
    for _stage in range(config.max_levels):
        canon = sign * np.asarray(model.importance(pop), dtype=float)
        level_canon = np.sort(canon)[::-1][k - 1]
        if level_canon >= canon_final:
            frac = float((canon >= canon_final).mean())
            if frac == 0.0:
                raise ScheduleError(
                    "pilot population cannot reach the final threshold",
                    detail={"deepest_level": sign * prev_canon if levels else None},
                )
            levels.append(float(final_level))
            construction.append(frac)
            break
        if level_canon <= prev_canon:
            raise ScheduleError(
                "pilot stalled: the population stopped advancing",
                detail={"deepest_level": levels[-1] if levels else None,
                        "stage": _stage},
            )
        level = float(sign * level_canon)
        levels.append(level)
        construction.append(float((canon >= level_canon).mean()))
        pop = _advance(model, pop[canon >= level_canon], level, sign,
                       config.mixing_sweeps, rng, P)
        prev_canon = level_canon
    else:
        raise ScheduleError(
            "maximum pilot stages reached before the final threshold",
            detail={"max_levels": config.max_levels,
                    "deepest_level": levels[-1] if levels else None},
        )

    schedule = LevelSchedule(tuple(levels), int(split_factor), direction)

    val_rng = streams.substream(seed, streams.PILOT, 1)
    validation = _stage_fractions(model, schedule.levels, sign, config, val_rng)
    lo, hi = config.target_rho / VALIDATION_BAND, config.target_rho * VALIDATION_BAND
    bad = [i + 1 for i in range(schedule.tau - 1) if not lo <= validation[i] <= hi]
    if bad:
        raise ScheduleError(
            "validation rerun rejected the pilot schedule: conditional pass "
            "fractions left the acceptance band",
            detail={
                "levels": list(schedule.levels),
                "validation_rho": validation,
                "acceptance_band": [lo, hi],
                "failing_levels": bad,
            },
        )

    return PilotReport(
        schedule=schedule,
        construction_rho=tuple(construction),
        validation_rho=tuple(validation),
        target_rho=config.target_rho,
        population=P,
    )
