"""Tour-size moments, error bounds, and renewal sanity checks.

Every convergence bound here is a plain function of the tour-size moments
(m = E M, m2 = E M^2, and so on) plus the sample size, so one moment
summary converts into the full family of total-variation, mean-absolute
-error, and expected-TV bound curves. All logarithms are natural.

Bounds:
    tv_fixed_n        c1 / n
    mae_fixed_n       c1_tilde(n) / sqrt(n)
    tv_until_t        c2(t) * (t/m)^(-3/2)
    mae_until_t       c2_tilde(t) * (t/m)^(-1/2)
    tv_asymptotic     c3 * (t/m)^(-2), an asymptotic form whose ignored
                      exponentially small remainder is flagged on every
                      report
    expected_tv_b5    set-class bound for n fixed trials
    expected_tv_b6    schedule-aware set-class bound, tighter only for
                      astronomically large n

Bounds above 1 carry no information but are still reported (with a
vacuous flag) so curves can be compared across the full grid.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .engine import ExceedT, LevelSchedule, RunLedger
from .errors import InsufficientDataError
from .tables import write_csv


@dataclass(frozen=True)
class SetClassSpec:
    """VC complexity of the set family a TV statement quantifies over."""

    kind: str
    v: int

    def __post_init__(self):
        if self.v < 1:
            raise ValueError("VC dimension must be >= 1")

    @classmethod
    def one_sided_intervals(cls, dim: int) -> "SetClassSpec":
        return cls("one_sided_intervals", int(dim) + 1)

    @classmethod
    def rectangles(cls, dim: int) -> "SetClassSpec":
        return cls("rectangles", 2 * int(dim))

    @classmethod
    def custom(cls, v: int) -> "SetClassSpec":
        return cls("custom", int(v))


@dataclass(frozen=True)
class MomentSummary:
    """Plug-in tour-size moments with standard errors.

    var_m is m2 - m^2 from the same sample, so it is never negative.
    m2_absdev is E[M^2 |M - 1 - 2r|] with the plug-in r_hat from this same
    sample; its standard error treats r_hat as fixed (the double-plug-in
    contribution is quadratically small). Standard errors of the plain
    moments are the usual sd/sqrt(n); var_m uses a delete-one jackknife.
    """

    m: float
    m2: float
    m3: float
    m4: float
    m2logm: float
    var_m: float
    m2_absdev: float
    r_hat: float
    se_m: float
    se_m2: float
    se_m3: float
    se_m4: float
    se_m2logm: float
    se_var_m: float
    se_m2_absdev: float
    sample_count: int


def estimate_moments(source: RunLedger | np.ndarray) -> MomentSummary:
    """Moment summary from a ledger or a plain array of tour sizes."""
    sizes = source.sizes() if isinstance(source, RunLedger) else np.asarray(source)
    x = sizes.astype(float)
    n = len(x)
    if n < 2:
        raise InsufficientDataError("need at least 2 trials for moment estimates")
    if np.any(x < 1):
        raise ValueError("tour sizes must be >= 1 (nonempty trials)")

    def mean_se(values: np.ndarray) -> tuple[float, float]:
        return float(values.mean()), float(values.std(ddof=1) / math.sqrt(n))

    m, se_m = mean_se(x)
    m2, se_m2 = mean_se(x**2)
    m3, se_m3 = mean_se(x**3)
    m4, se_m4 = mean_se(x**4)
    m2logm, se_m2logm = mean_se(x**2 * np.log(x))  # log(1) = 0 exactly
    var_m = m2 - m * m

    # delete-one jackknife for the nonlinear var statistic
    s1 = x.sum()
    s2 = (x**2).sum()
    m_loo = (s1 - x) / (n - 1)
    m2_loo = (s2 - x**2) / (n - 1)
    theta = m2_loo - m_loo**2
    se_var = float(math.sqrt((n - 1) / n * ((theta - theta.mean()) ** 2).sum()))

    r_hat = (m2 + m) / (2.0 * m)
    absdev_terms = x**2 * np.abs(x - 1.0 - 2.0 * r_hat)
    m2_absdev, se_absdev = mean_se(absdev_terms)

    return MomentSummary(
        m=m, m2=m2, m3=m3, m4=m4, m2logm=m2logm, var_m=float(var_m),
        m2_absdev=m2_absdev, r_hat=float(r_hat),
        se_m=se_m, se_m2=se_m2, se_m3=se_m3, se_m4=se_m4,
        se_m2logm=se_m2logm, se_var_m=se_var, se_m2_absdev=se_absdev,
        sample_count=n,
    )


def exact_moments_from_pmf(values: Sequence[float], probs: Sequence[float]) -> MomentSummary:
    """MomentSummary from an exact tour-size pmf (for tests and synthetic use)."""
    v = np.asarray(values, dtype=float)
    p = np.asarray(probs, dtype=float)
    if not math.isclose(float(p.sum()), 1.0, rel_tol=1e-12):
        raise ValueError("probabilities must sum to 1")
    if np.any(v < 1):
        raise ValueError("tour sizes must be >= 1")
    m = float((p * v).sum())
    m2 = float((p * v**2).sum())
    r = (m2 + m) / (2 * m)
    return MomentSummary(
        m=m, m2=m2, m3=float((p * v**3).sum()), m4=float((p * v**4).sum()),
        m2logm=float((p * v**2 * np.log(v)).sum()), var_m=m2 - m * m,
        m2_absdev=float((p * v**2 * np.abs(v - 1 - 2 * r)).sum()), r_hat=r,
        se_m=0.0, se_m2=0.0, se_m3=0.0, se_m4=0.0, se_m2logm=0.0,
        se_var_m=0.0, se_m2_absdev=0.0, sample_count=0,
    )


@dataclass(frozen=True)
class Bound:
    constant: float
    value: float


@dataclass(frozen=True)
class AsymptoticBound:
    c3: float
    r: float
    value: float
    asymptotic_caveat: bool = True


@dataclass(frozen=True)
class ExpectedTvBound:
    value: float
    psi: float | None


def bound_tv_fixed_n(moments: MomentSummary, n: int) -> Bound:
    """c1 = (var M + sqrt(var M * E M^2)) / m^2; bound c1/n."""
    c1 = (moments.var_m + math.sqrt(moments.var_m * moments.m2)) / moments.m**2
    return Bound(constant=c1, value=c1 / n)


def bound_mae_fixed_n(moments: MomentSummary, n: int) -> Bound:
    """c1_tilde(n) = (sqrt(E M^2) + sqrt(3 E M^4 / n)) / m; bound / sqrt(n)."""
    c = (math.sqrt(moments.m2) + math.sqrt(3.0 * moments.m4 / n)) / moments.m
    return Bound(constant=c, value=c / math.sqrt(n))


def bound_tv_until_t(moments: MomentSummary, t: float) -> Bound:
    """c2(t) = sqrt((4/3) E M^3 E M^2 (m + E M^2/t)) / m^3; bound c2*(t/m)^(-3/2)."""
    c2 = math.sqrt((4.0 / 3.0) * moments.m3 * moments.m2 * (moments.m + moments.m2 / t)) / moments.m**3
    return Bound(constant=c2, value=c2 * (t / moments.m) ** -1.5)


def bound_mae_until_t(moments: MomentSummary, t: float) -> Bound:
    """c2_tilde(t) = sqrt(E M^2)/m + E M^2 m^(-3/2) t^(-1/2); bound *(t/m)^(-1/2)."""
    c = math.sqrt(moments.m2) / moments.m + moments.m2 * moments.m**-1.5 * t**-0.5
    return Bound(constant=c, value=c * (t / moments.m) ** -0.5)


def bound_tv_asymptotic(moments: MomentSummary, t: float) -> AsymptoticBound:
    """c3 = E[M^2 |M - 1 - 2r|] / (2 m^3); bound c3*(t/m)^(-2).

    The exponentially small remainder of the underlying expansion is
    dropped; every report carries the caveat flag. c3 uses the plug-in
    r_hat estimated from the same sample as the other moments.
    """
    c3 = moments.m2_absdev / (2.0 * moments.m**3)
    return AsymptoticBound(c3=c3, r=moments.r_hat, value=c3 * (t / moments.m) ** -2.0)


def bound_expected_tv_b5(moments: MomentSummary, n: int, set_class: SetClassSpec) -> ExpectedTvBound:
    """Expected-TV bound for n trials over a VC class of dimension v.

    Computed in the combined-radical form
        sqrt(var M)/(m sqrt(n))
        + 2 sqrt((ln2 + v + v ln(2n/v)) E M^2 + v E[M^2 ln M]) / (m sqrt(n)),
    which stays well defined when E[M^2 ln M] = 0. The psi factor of the
    two-factor presentation is reported when it exists.
    """
    v = float(set_class.v)
    inner = (math.log(2.0) + v + v * math.log(2.0 * n / v)) * moments.m2 + v * moments.m2logm
    root_n = math.sqrt(n)
    value = math.sqrt(moments.var_m) / (moments.m * root_n) + 2.0 * math.sqrt(inner) / (moments.m * root_n)
    psi = None
    if moments.m2logm > 0.0:
        psi = math.sqrt(inner / (v * math.log(2.0 * n) * moments.m2logm))
    return ExpectedTvBound(value=value, psi=psi)


def bound_expected_tv_b6(
    moments: MomentSummary, n: int, set_class: SetClassSpec, schedule: LevelSchedule
) -> ExpectedTvBound:
    """Schedule-aware expected-TV bound with the geometric psi2 sum.

    psi2 = sum_{k=1}^{K} s^(-k) sqrt(ln2/(2nv) + (1+ln(v+1))/v + 1 + ln(2 s^(2k)))
    with K = ceil(tau + log_s sqrt(n)).
    """
    v = float(set_class.v)
    s = float(schedule.split_factor)
    tau = schedule.tau
    K = math.ceil(tau + math.log(n) / (2.0 * math.log(s)))
    base = math.log(2.0) / (2.0 * n * v) + (1.0 + math.log(v + 1.0)) / v + 1.0
    psi2 = 0.0
    for k in range(1, K + 1):
        psi2 += s**-k * math.sqrt(base + math.log(2.0) + 2.0 * k * math.log(s))
    root_n = math.sqrt(n)
    value = (math.sqrt(moments.var_m) / (moments.m * root_n)
             + 4.0 * (s + 1.0) * math.sqrt(v * moments.m2) / (moments.m * root_n) * psi2)
    return ExpectedTvBound(value=value, psi=psi2)


BOUND_CSV_HEADER = ("n_or_t", "criterion", "constant", "bound", "vacuous_flag")


@dataclass(frozen=True)
class BoundReport:
    """All bound evaluations at one grid point.

    ``n`` drives the fixed-trial-count bounds, ``t`` the stopped-process
    bounds; either may be absent. Rows render in the documented CSV
    schema, one per available bound.
    """

    moments: MomentSummary
    set_class: SetClassSpec | None = None
    n: int | None = None
    t: float | None = None
    tv_fixed_n: Bound | None = None
    mae_fixed_n: Bound | None = None
    tv_until_t: Bound | None = None
    mae_until_t: Bound | None = None
    tv_asymptotic: AsymptoticBound | None = None
    expected_tv_b5: ExpectedTvBound | None = None
    expected_tv_b6: ExpectedTvBound | None = None

    def rows(self):
        out = []

        def emit(point, criterion, constant, bound):
            out.append((point, criterion, constant, bound, bound > 1.0))

        if self.n is not None:
            if self.tv_fixed_n:
                emit(self.n, "tv_fixed_n", self.tv_fixed_n.constant, self.tv_fixed_n.value)
            if self.mae_fixed_n:
                emit(self.n, "mae_fixed_n", self.mae_fixed_n.constant, self.mae_fixed_n.value)
            if self.expected_tv_b5:
                emit(self.n, "expected_tv_b5", self.expected_tv_b5.psi, self.expected_tv_b5.value)
            if self.expected_tv_b6:
                emit(self.n, "expected_tv_b6", self.expected_tv_b6.psi, self.expected_tv_b6.value)
        if self.t is not None:
            if self.tv_until_t:
                emit(self.t, "tv_until_t", self.tv_until_t.constant, self.tv_until_t.value)
            if self.mae_until_t:
                emit(self.t, "mae_until_t", self.mae_until_t.constant, self.mae_until_t.value)
            if self.tv_asymptotic:
                emit(self.t, "tv_asymptotic", self.tv_asymptotic.c3, self.tv_asymptotic.value)
        return out

    def to_dict(self) -> dict:
        d: dict = {"n": self.n, "t": self.t}
        if self.set_class:
            d["set_class"] = {"kind": self.set_class.kind, "v": self.set_class.v}
        for name in ("tv_fixed_n", "mae_fixed_n", "tv_until_t", "mae_until_t"):
            b: Bound | None = getattr(self, name)
            if b:
                d[name] = {"constant": b.constant, "bound": b.value, "vacuous": b.value > 1.0}
        if self.tv_asymptotic:
            d["tv_asymptotic"] = {
                "c3": self.tv_asymptotic.c3, "r": self.tv_asymptotic.r,
                "bound": self.tv_asymptotic.value,
                "vacuous": self.tv_asymptotic.value > 1.0,
                "asymptotic_caveat": True,
            }
        for name in ("expected_tv_b5", "expected_tv_b6"):
            e: ExpectedTvBound | None = getattr(self, name)
            if e:
                d[name] = {"psi": e.psi, "bound": e.value, "vacuous": e.value > 1.0}
        return d


def evaluate_bounds(
    moments: MomentSummary,
    *,
    n: int | None = None,
    t: float | None = None,
    set_class: SetClassSpec | None = None,
    schedule: LevelSchedule | None = None,
) -> BoundReport:
    """Evaluate every bound the given inputs allow at one grid point."""
    if n is None and t is None:
        raise ValueError("provide n, t, or both")
    kw: dict = {"moments": moments, "set_class": set_class, "n": n, "t": t}
    if n is not None:
        kw["tv_fixed_n"] = bound_tv_fixed_n(moments, n)
        kw["mae_fixed_n"] = bound_mae_fixed_n(moments, n)
        if set_class is not None:
            kw["expected_tv_b5"] = bound_expected_tv_b5(moments, n, set_class)
            if schedule is not None:
                kw["expected_tv_b6"] = bound_expected_tv_b6(moments, n, set_class, schedule)
    if t is not None:
        kw["tv_until_t"] = bound_tv_until_t(moments, t)
        kw["mae_until_t"] = bound_mae_until_t(moments, t)
        kw["tv_asymptotic"] = bound_tv_asymptotic(moments, t)
    return BoundReport(**kw)


def write_bound_csv(path, reports: Sequence[BoundReport]) -> None:
    rows = [row for rep in reports for row in rep.rows()]
    write_csv(path, BOUND_CSV_HEADER, rows)


@dataclass(frozen=True)
class WaldReport:
    """Stopped-process identities measured over replications.

    discrepancy = mean(T_N) - mean(N) * m_hat should sit within a few
    standard errors of zero when m_hat comes from an independent sample
    (with the pooled m_hat = sum T/sum N it is zero by construction).
    r_hat estimates the stationary overshoot constant (m2 + m)/(2m).
    """

    t: int
    replications: int
    mean_stopped_total: float
    mean_trial_count: float
    m_hat: float
    m_hat_source: str
    discrepancy: float
    discrepancy_se: float
    overshoot_mean: float
    lorden_bound: float
    r_hat: float
    r_plug_in: float


def wald_check(
    ledgers: Sequence[RunLedger],
    independent_moments: MomentSummary | None = None,
) -> WaldReport:
    """Renewal checks over independent until-t replications."""
    if not ledgers:
        raise InsufficientDataError("need at least one ledger")
    rules = {repr(led.stopping_rule) for led in ledgers}
    if len(rules) != 1 or not isinstance(ledgers[0].stopping_rule, ExceedT):
        raise ValueError("wald_check needs replications of a single until-t stopping rule")
    t = ledgers[0].stopping_rule.t
    R = len(ledgers)

    totals = np.array([led.cumulative_sizes()[-1] for led in ledgers], dtype=float)
    counts = np.array([led.trial_count for led in ledgers], dtype=float)
    pooled_sizes = np.concatenate([led.sizes() for led in ledgers]).astype(float)

    if independent_moments is not None:
        m_hat = independent_moments.m
        se_m = independent_moments.se_m
        m2_hat = independent_moments.m2
        source = "independent"
    else:
        m_hat = float(totals.sum() / counts.sum())
        se_m = 0.0
        m2_hat = float((pooled_sizes**2).mean())
        source = "pooled"

    resid = totals - m_hat * counts
    disc = float(resid.mean())
    var_disc = resid.var(ddof=1) / R if R > 1 else float("nan")
    var_disc += (counts.mean() * se_m) ** 2
    r_plug_in = (m2_hat + m_hat) / (2.0 * m_hat)

    return WaldReport(
        t=t,
        replications=R,
        mean_stopped_total=float(totals.mean()),
        mean_trial_count=float(counts.mean()),
        m_hat=float(m_hat),
        m_hat_source=source,
        discrepancy=disc,
        discrepancy_se=float(math.sqrt(var_disc)),
        overshoot_mean=float(totals.mean() - t),
        lorden_bound=float(m2_hat / m_hat),
        r_hat=float(m_hat * counts.mean() - t),
        r_plug_in=float(r_plug_in),
    )


def empirical_ks(ledger: RunLedger, reference_cdf: Callable, coordinate: int | None = None) -> float:
    """Sup distance between the pooled empirical law and a reference CDF.

    One-dimensional data (or a selected ``coordinate``) is computed
    exactly by sorting. In higher dimension the sup over one-sided
    intervals is approximated on the anchor grid formed by the pooled
    sample points themselves (an evenly strided subset of at most 2048
    anchors when the pool is larger); the reference must then accept a
    batch of corner points.
    """
    pooled = ledger.pooled_states()
    if coordinate is not None:
        pooled = pooled[:, coordinate:coordinate + 1]
    N, d = pooled.shape
    if d == 1:
        x = np.sort(pooled[:, 0])
        ref = np.asarray(reference_cdf(x), dtype=float)
        grid = np.arange(1, N + 1) / N
        return float(np.max(np.maximum(grid - ref, ref - (grid - 1.0 / N))))
    anchors = pooled
    if N > 2048:
        anchors = pooled[:: max(1, N // 2048)][:2048]
    emp = np.array([(pooled <= a).all(axis=1).mean() for a in anchors])
    ref = np.asarray(reference_cdf(anchors), dtype=float)
    return float(np.max(np.abs(emp - ref)))
