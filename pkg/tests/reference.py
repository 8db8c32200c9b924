"""Independent reference implementations used as test oracles.

Nothing here may share a code path with the package routines it checks:
state prices come from a dense linear solve, option prices from exhaustive
path enumeration, t-test p-values from scipy, tail means from sorting.
"""

import itertools
import math

import numpy as np
from scipy import stats

from trilattice import (
    Convention,
    NaturalParams,
    StepFactors,
    build_step_factors,
    compute_UD,
    risk_neutral_probs,
)
from trilattice.errors import InvalidRiskNeutralMeasure


def state_prices(u, d, gamma, R_f):
    """Branch state prices from the dense 3x3 repricing system."""
    A = np.array([
        [R_f, R_f, R_f],
        [u, 1.0, d],
        [u ** gamma, 1.0, d ** gamma],
    ])
    return np.linalg.solve(A, np.ones(3))


def path_enumeration_price(S0, strike, kind, u, d, qs, R_fs):
    """Discounted expectation over all 3^N branch paths."""
    n = len(qs)
    codes = np.array(list(itertools.product((0, 1, 2), repeat=n)), dtype=int)
    factors = np.where(codes == 0, u, np.where(codes == 1, 1.0, d))
    s_T = S0 * factors.prod(axis=1)
    prob = np.ones(len(codes))
    for k in range(n):
        q = qs[k]
        prob *= np.where(codes[:, k] == 0, q.q_u,
                         np.where(codes[:, k] == 1, q.q_m, q.q_d))
    payoff = np.maximum(s_T - strike, 0.0) if kind == "call" \
        else np.maximum(strike - s_T, 0.0)
    discount = float(np.prod([1.0 / r for r in R_fs]))
    return float((prob * payoff).sum() * discount)


def reference_scan(values, alpha, dp_bp, sign):
    """Sequential one-sample t-test threshold scan on scipy p-values.

    Returns (threshold, last_non_rejected_j, warning) with the same scan
    semantics as the package: samples under caps of j*dp_bp basis points,
    sub-2-point samples skipped, zero-variance samples decided by their mean,
    the scan ending at the first rejection or once the sample holds the whole
    sign-restricted side.
    """
    values = np.asarray(values, dtype=float)
    side = values[values >= 0.0] if sign > 0 else values[values <= 0.0]
    if side.size == 0:
        return 0.0, None, "empty-side"
    mags = np.abs(side)
    max_mag = float(mags.max())
    alt = "greater" if sign > 0 else "less"
    last_mean, last_j, j = None, None, 1
    while True:
        cap = 1e-4 * j * dp_bp
        sample = side[mags <= cap]
        if sample.size >= 2:
            if sample.std(ddof=1) == 0.0:
                mean = sample.mean()
                rejected = (mean > 0.0) if sign > 0 else (mean < 0.0)
                p = 0.0 if rejected else 1.0
            else:
                p = stats.ttest_1samp(sample, 0.0, alternative=alt).pvalue
            if p < alpha:
                if last_j is None:
                    return 0.0, None, "ns"
                return last_mean, last_j, None
            last_mean = float(sample.mean())
            last_j = j
        if cap >= max_mag:
            if last_j is None:
                return 0.0, None, "ns"
            return last_mean, last_j, "exhausted"
        j += 1


def brute_force_tail_means(values, beta):
    """Tail means from an explicit sort, duplicates of the boundary included."""
    values = np.asarray(values, dtype=float)
    n = values.size
    m = math.ceil(beta * n)
    xs = np.sort(values)
    lower = xs[xs <= xs[m - 1]]
    upper = xs[xs >= xs[n - m]]
    return float(lower.mean()), float(upper.mean())


def cent_quantized_window(seed, length=1006, s0=150.0, mu=8e-4, sigma=0.02):
    """Synthetic daily returns from cent-rounded prices; realistic near zero."""
    rng = np.random.default_rng(seed)
    steps = rng.normal(mu, sigma, size=length)
    prices = np.round(s0 * np.exp(np.cumsum(steps)), 2)
    prices = np.concatenate([[round(s0, 2)], prices])
    return prices[1:] / prices[:-1] - 1.0


def random_natural_params(rng, dt=1.0):
    """A feasible NaturalParams draw (moment radicand and branches valid)."""
    while True:
        p_m = rng.uniform(0.0, 0.5)
        p_u = rng.uniform(0.25, 0.75) * (1.0 - p_m)
        p_d = 1.0 - p_m - p_u
        mu = rng.uniform(-1.5e-3, 1.5e-3)
        sigma = rng.uniform(8e-3, 3.5e-2)
        r_f = rng.uniform(1e-4, 8e-4)
        m = mu * dt
        if (1.0 - p_m) * sigma * sigma * dt - p_m * m * m <= 0.0:
            continue
        return NaturalParams(p_u=p_u, p_m=p_m, p_d=p_d, mu_r=mu,
                             sigma_r=sigma, r_f=r_f, dt=dt)


def random_valid_factors(rng, convention=None, dt=1.0):
    """StepFactors admitting a valid risk-neutral measure (rejection sampled)."""
    while True:
        p = random_natural_params(rng, dt=dt)
        conv = convention
        if conv is None:
            conv = Convention.ARITHMETIC if rng.random() < 0.5 else Convention.LOG
        try:
            U, D = compute_UD(p)
            f = build_step_factors(p, U, D, conv)
            risk_neutral_probs(f)
        except InvalidRiskNeutralMeasure:
            continue
        except ValueError:
            continue
        return f


def aapl_natural_params():
    """The reference large-cap calibration used as a fixture throughout."""
    p_m, p_d = 0.00995, 0.473
    return NaturalParams(p_u=1.0 - p_m - p_d, p_m=p_m, p_d=p_d,
                         mu_r=1.09e-3, sigma_r=0.0212, r_f=5.83e-4, dt=1.0)
