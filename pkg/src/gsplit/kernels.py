"""Sampling primitives used by the built-in Markov kernels.

Everything here is vectorized: scalar arguments broadcast, and a batch of
k states is processed in one call. Functions are pure given (inputs, rng),
so parallel trials can share them freely.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr, ndtri

from .errors import ZeroMassIntervalError

# Standardized lower endpoint beyond which the inverse-CDF route loses all
# precision and the exponential-proposal tail sampler takes over.
_TAIL_SWITCH = 4.0
_TAIL_MAX_ROUNDS = 200


def truncated_normal_draw(mean, stddev, lo, hi, rng: np.random.Generator):
    """Draw from N(mean, stddev^2) conditioned to [lo, hi].

    Broadcasts over array arguments and returns an array of the broadcast
    shape (a 0-d input returns a float). Either endpoint may be infinite.
    The bulk uses inverse-CDF sampling in Phi space; intervals lying
    entirely beyond 4 standard deviations use a rejection sampler with a
    shifted-exponential proposal, which keeps acceptance above ~0.66 no
    matter how deep the interval sits.

    Raises ZeroMassIntervalError when the interval carries no probability
    mass at double precision, naming the interval.
    """
    mean = np.asarray(mean, dtype=float)
    stddev = np.asarray(stddev, dtype=float)
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    if np.any(stddev <= 0):
        raise ValueError("stddev must be strictly positive")
    if np.any(~(lo < hi)):
        raise ValueError("require lo < hi elementwise")

    a, b, mean, stddev, lo, hi = np.broadcast_arrays(
        (lo - mean) / stddev, (hi - mean) / stddev, mean, stddev, lo, hi
    )
    shape = a.shape
    scalar = a.ndim == 0
    a = np.atleast_1d(a).ravel().astype(float)
    b = np.atleast_1d(b).ravel().astype(float)

    # mirror so the hard (deep) side is always the left endpoint
    flip = b < -a
    a2 = np.where(flip, -b, a)
    b2 = np.where(flip, -a, b)

    x = np.empty_like(a2)
    deep = a2 > _TAIL_SWITCH

    def _zero_mass(flat_index: int) -> ZeroMassIntervalError:
        return ZeroMassIntervalError(
            "truncation interval has zero probability mass at double precision",
            detail={"standardized_lo": float(a2[flat_index]), "standardized_hi": float(b2[flat_index])},
        )

    bulk = ~deep
    if np.any(bulk):
        pa = ndtr(a2[bulk])
        pb = ndtr(b2[bulk])
        dead = pb - pa <= 0.0
        if np.any(dead):
            raise _zero_mass(int(np.flatnonzero(bulk)[dead][0]))
        u = rng.uniform(size=pa.shape)
        x[bulk] = ndtri(pa + u * (pb - pa))

    if np.any(deep):
        ad = a2[deep]
        bd = b2[deep]
        alpha = 0.5 * (ad + np.sqrt(ad * ad + 4.0))
        with np.errstate(over="ignore"):
            span = -np.expm1(-alpha * (bd - ad))  # bd = inf gives 1 exactly
        if np.any(span <= 0.0):
            raise _zero_mass(int(np.flatnonzero(deep)[span <= 0.0][0]))
        out = np.empty(ad.shape)
        pending = np.ones(ad.shape, dtype=bool)
        for _ in range(_TAIL_MAX_ROUNDS):
            k = int(pending.sum())
            if k == 0:
                break
            z = ad[pending] - np.log1p(-rng.uniform(size=k) * span[pending]) / alpha[pending]
            acc = rng.uniform(size=k) <= np.exp(-0.5 * (z - alpha[pending]) ** 2)
            idx = np.flatnonzero(pending)[acc]
            out[idx] = z[acc]
            pending[idx] = False
        else:  # pragma: no cover - acceptance >= 0.66 makes this unreachable
            raise ZeroMassIntervalError("tail rejection sampler failed to accept")
        x[deep] = out

    x = np.where(flip, -x, x)
    mean_f = np.atleast_1d(mean).ravel()
    sd_f = np.atleast_1d(stddev).ravel()
    result = mean_f + sd_f * x
    # clip float roundoff at the endpoints back into the interval
    result = np.minimum(np.maximum(result, np.atleast_1d(lo).ravel()), np.atleast_1d(hi).ravel())
    return float(result[0]) if scalar else result.reshape(shape)


def gamma_precision_draw(shape, rate, rng: np.random.Generator):
    """Gamma draw in the shape-rate parameterization, mean = shape/rate.

    numpy's own gamma takes a scale; the conversion lives here exactly once
    so the classic shape-scale mix-up cannot occur elsewhere.
    """
    shape = np.asarray(shape, dtype=float)
    rate = np.asarray(rate, dtype=float)
    if np.any(shape <= 0) or np.any(rate <= 0):
        raise ValueError("gamma shape and rate must be strictly positive")
    out = rng.gamma(shape, 1.0 / rate)
    return float(out) if np.ndim(out) == 0 else out


def unit_sphere_direction(d: int, rng: np.random.Generator, count: int | None = None):
    """Uniform direction(s) on the unit sphere in R^d.

    Returns shape (d,) when count is None, else (count, d).
    """
    if d < 1:
        raise ValueError("dimension must be >= 1")
    n = 1 if count is None else int(count)
    z = rng.standard_normal((n, d))
    norms = np.linalg.norm(z, axis=1)
    while np.any(norms == 0.0):  # probability zero, guarded anyway
        bad = norms == 0.0
        z[bad] = rng.standard_normal((int(bad.sum()), d))
        norms = np.linalg.norm(z, axis=1)
    z /= norms[:, None]
    return z[0] if count is None else z


@dataclass(frozen=True)
class LineSection:
    """The 1-d conditional law along a hit-and-run direction.

    A normal in the step length, truncated to the feasible interval:
    length ~ N(mean, sd^2) restricted to [lo, hi]. Arrays hold one row per
    chain in a batch.
    """

    direction: np.ndarray  # (k, d) unit rows
    mean: np.ndarray       # (k,)
    sd: np.ndarray         # (k,)
    lo: np.ndarray         # (k,)
    hi: np.ndarray         # (k,)


def hit_and_run_step(current: np.ndarray, section: LineSection, rng: np.random.Generator) -> np.ndarray:
    """Advance each row of ``current`` along its line section.

    The feasible interval always contains 0 (the current point), so the
    truncated draw is well defined whenever the precondition holds.
    """
    if np.any(section.lo > 0) or np.any(section.hi < 0):
        raise ValueError("feasible interval must contain 0; current state violates the constraint")
    lam = truncated_normal_draw(section.mean, section.sd, section.lo, section.hi, rng)
    return current + np.atleast_1d(lam)[:, None] * section.direction


def l1_feasible_interval(beta: np.ndarray, dirs: np.ndarray, gamma: float):
    """Exact interval {lam : ||beta + lam*dirs||_1 <= gamma} per row.

    g(lam) = ||beta + lam*dirs||_1 - gamma is convex piecewise linear with
    breakpoints -beta_j/dirs_j, so the positive root follows from one sort
    and a cumulative-slope scan; the negative endpoint is the mirrored
    problem. O(d log d) per row and exact up to roundoff.

    Requires ||beta||_1 <= gamma for every row (so 0 is feasible).
    """
    beta = np.atleast_2d(np.asarray(beta, dtype=float))
    dirs = np.atleast_2d(np.asarray(dirs, dtype=float))
    if beta.shape != dirs.shape:
        raise ValueError("beta and dirs must have matching shapes")
    slack = np.abs(beta).sum(axis=1) - gamma
    if np.any(slack > 1e-9 * max(gamma, 1.0)):
        raise ValueError("||beta||_1 exceeds gamma; state outside the feasible set")
    hi = _l1_positive_root(beta, dirs, gamma)
    lo = -_l1_positive_root(beta, -dirs, gamma)
    return lo, hi


def _l1_positive_root(beta: np.ndarray, dirs: np.ndarray, gamma: float) -> np.ndarray:
    k, _ = beta.shape
    g0 = np.abs(beta).sum(axis=1) - gamma  # <= 0 by precondition
    with np.errstate(divide="ignore", invalid="ignore"):
        p = -beta / dirs
    absd = np.abs(dirs)
    # slope at 0+: sign(beta_j)*dirs_j, except |dirs_j| where beta_j == 0
    slope0 = np.where(beta == 0.0, absd, dirs * np.sign(beta)).sum(axis=1)
    pos = (p > 0) & np.isfinite(p)
    p = np.where(pos, p, np.inf)
    add = np.where(pos, 2.0 * absd, 0.0)
    order = np.argsort(p, axis=1)
    p = np.take_along_axis(p, order, axis=1)
    add = np.take_along_axis(add, order, axis=1)
    slopes_after = slope0[:, None] + np.cumsum(add, axis=1)
    slopes_before = np.concatenate([slope0[:, None], slopes_after[:, :-1]], axis=1)
    pprev = np.concatenate([np.zeros((k, 1)), p[:, :-1]], axis=1)
    with np.errstate(invalid="ignore", over="ignore"):  # inf breakpoints are masked out
        seg = np.where(np.isfinite(p), p - pprev, 0.0)
        gvals = g0[:, None] + np.cumsum(slopes_before * seg, axis=1)
        gprev = np.concatenate([g0[:, None], gvals[:, :-1]], axis=1)

        crossed = (gvals >= 0.0) & np.isfinite(p)
        any_cross = crossed.any(axis=1)
        first = np.argmax(crossed, axis=1)
        rows = np.arange(k)
        denom = np.maximum(slopes_before[rows, first], np.finfo(float).tiny)
        hi = pprev[rows, first] - gprev[rows, first] / denom

    # no crossing among finite breakpoints: extend past the last one, where
    # the slope is the full sum of |dirs| (all coordinates point outward)
    nfin = pos.sum(axis=1)
    lastidx = np.maximum(nfin - 1, 0)
    lastp = np.where(nfin == 0, 0.0, p[rows, lastidx])
    lastg = np.where(nfin == 0, g0, gvals[rows, lastidx])
    total_slope = absd.sum(axis=1)
    hi = np.where(any_cross, hi, lastp - lastg / total_slope)
    return np.maximum(hi, 0.0)
