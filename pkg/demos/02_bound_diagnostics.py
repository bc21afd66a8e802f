"""Certify sample quality with computable accuracy bounds.

A splitting run produces dependent draws, so standard sample-size
heuristics do not apply. The bounds below convert the empirical size
moments of nonempty trials into non-asymptotic guarantees on the total
variation distance and mean absolute error of the empirical measure.
The second half checks the run against two identities that any valid
until-t stopping rule must satisfy.
"""
import numpy as np

from gsplit import (
    LevelSchedule,
    SetClassSpec,
    ToyNormalModel,
    collect_until_t,
    estimate_moments,
    evaluate_bounds,
    normal_tail_quantile,
    simulate_raw_trials,
    wald_check,
)

model = ToyNormalModel()
gammas = tuple(normal_tail_quantile(p) for p in (1e-1, 1e-2, 1e-3))
schedule = LevelSchedule(gammas, split_factor=10)

raw = simulate_raw_trials(model, schedule, 200_000, seed=5, keep_states=False)
moments = estimate_moments(raw.sizes[raw.sizes > 0])
print(f"size moments from {moments.sample_count} nonempty trials: "
      f"m={moments.m:.3f}, m2={moments.m2:.3f}")

# one-sided intervals on the line form a set class of complexity v = 2
spec = SetClassSpec.one_sided_intervals(1)
print("\n      n   tv_fixed_n  expected_tv_b5        t  tv_until_t")
for n in (100, 1_000, 10_000, 100_000):
    t = n * moments.m
    rep = evaluate_bounds(moments, n=n, t=t, set_class=spec, schedule=schedule)
    print(f"{n:>7d}   {rep.tv_fixed_n.value:10.4f}  {rep.expected_tv_b5.value:14.4f}"
          f"  {t:7.0f}  {rep.tv_until_t.value:10.4f}")
print("(values above 1 are vacuous; they shrink like n^(-1/2) or faster)")

# stopping-rule sanity: the mean stopped total must equal m times the
# mean trial count (tested against the independent moment estimate
# above), and the mean overshoot is capped by a moment bound
ledgers = [collect_until_t(model, schedule, 300, seed=100 + j) for j in range(40)]
ind = wald_check(ledgers, independent_moments=moments)
report = wald_check(ledgers)
print(f"\nuntil-t check at t=300 over {report.replications} replications:")
print(f"  identity discrepancy {ind.discrepancy:+.3f} "
      f"(se {ind.discrepancy_se:.3f})")
print(f"  mean overshoot {report.overshoot_mean:.2f} "
      f"<= bound {report.lorden_bound:.2f}")
print(f"  stationary excess: observed {report.r_hat:.2f}, "
      f"plug-in {report.r_plug_in:.2f}")
