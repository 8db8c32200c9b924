"""Natural-world parameter estimation from a historical return window.

Covers the no-significant-change band (sequential one-sample t-tests),
branch probabilities, moment-matched step returns, lattice factors and
tail-mean extreme thresholds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    ArbitrageBounds,
    DegenerateBranch,
    DegenerateVolatility,
    InsufficientData,
    InsufficientTail,
    MomentInfeasible,
)
from .lattice import Convention, StepFactors, gamma_exponent
from .stats import one_sided_pvalue

__all__ = [
    "ReturnSeries",
    "Thresholds",
    "NaturalParams",
    "estimate_thresholds",
    "estimate_probabilities",
    "estimate_moments",
    "compute_UD",
    "build_step_factors",
    "cvar_thresholds",
]

DEFAULT_MIN_WINDOW = 30

# warning codes attached to a threshold scan
WARN_NS = "ns"                  # rejected before any testable non-rejection
WARN_EXHAUSTED = "exhausted"    # the full sign-restricted sample never rejected
WARN_EMPTY_SIDE = "empty-side"  # no returns at all on this side of zero


@dataclass(frozen=True)
class ReturnSeries:
    """Per-step returns in a declared convention with their step length."""

    values: np.ndarray
    convention: Convention
    dt: float = 1.0

    def __post_init__(self) -> None:
        arr = np.asarray(self.values, dtype=float)
        if arr.ndim != 1:
            raise ValueError("returns must be one-dimensional")
        if arr.size and not np.all(np.isfinite(arr)):
            raise ValueError("returns must be finite")
        if self.dt <= 0.0:
            raise ValueError("dt must be positive")
        object.__setattr__(self, "values", arr)

    def __len__(self) -> int:
        return int(self.values.size)


@dataclass(frozen=True)
class Thresholds:
    """Boundaries of the no-significant-change return band.

    ``j_minus``/``j_plus`` are the last non-rejected scan indices (None when
    the scan never accepted a sample); the ``warn_*`` fields carry the scan
    warning codes, if any.
    """

    r_minus: float
    r_plus: float
    alpha: float
    delta_p_bp: float
    j_minus: int | None = None
    j_plus: int | None = None
    warn_minus: str | None = None
    warn_plus: str | None = None

    def __post_init__(self) -> None:
        if not self.r_minus <= 0.0 <= self.r_plus:
            raise ValueError(
                f"need r_minus <= 0 <= r_plus, got ({self.r_minus}, {self.r_plus})"
            )

    @property
    def band(self) -> tuple[float, float]:
        return (self.r_minus, self.r_plus)


@dataclass(frozen=True)
class NaturalParams:
    """Per-step natural-world state: branch probabilities, moments, rate."""

    p_u: float
    p_m: float
    p_d: float
    mu_r: float
    sigma_r: float
    r_f: float
    dt: float = 1.0

    def __post_init__(self) -> None:
        probs = (self.p_u, self.p_m, self.p_d)
        for name, p in zip(("p_u", "p_m", "p_d"), probs):
            if p < -1e-12 or p > 1.0 + 1e-12:
                raise ValueError(f"{name} = {p} outside [0, 1]")
        if abs(sum(probs) - 1.0) > 1e-9:
            raise ValueError(f"probabilities sum to {sum(probs)}, not 1")
        if self.sigma_r <= 0.0:
            raise DegenerateVolatility(f"sigma_r must be positive, got {self.sigma_r}")
        if self.dt <= 0.0:
            raise ValueError("dt must be positive")


def _scan_side(values: np.ndarray, alpha: float, delta_p_bp: float,
               sign: int) -> tuple[float, int | None, str | None]:
    """One directional threshold scan; returns (threshold, last_j, warning).

    Walks caps j*delta_p basis points outward from zero, t-testing the
    sign-restricted sample under each cap until the first rejection. The
    threshold is the mean of the last non-rejected sample. Samples with
    fewer than two points cannot be tested and are skipped.
    """
    side = values[values >= 0.0] if sign > 0 else values[values <= 0.0]
    if side.size == 0:
        return 0.0, None, WARN_EMPTY_SIDE
    magnitudes = np.abs(side)
    max_mag = float(magnitudes.max())
    alternative = "greater" if sign > 0 else "less"

    last_mean: float | None = None
    last_j: int | None = None
    j = 1
    while True:
        cap = 1e-4 * j * delta_p_bp
        sample = side[magnitudes <= cap]
        if sample.size >= 2:
            if one_sided_pvalue(sample, alternative) < alpha:
                if last_j is None:
                    return 0.0, None, WARN_NS
                return last_mean, last_j, None
            last_mean = float(sample.mean())
            last_j = j
        if cap >= max_mag:
            # the sample now holds the whole side; nothing left to scan
            if last_j is None:
                return 0.0, None, WARN_NS
            return last_mean, last_j, WARN_EXHAUSTED
        j += 1


def estimate_thresholds(
    r: ReturnSeries,
    alpha: float,
    delta_p_bp: float = 1.0,
    min_window: int = DEFAULT_MIN_WINDOW,
) -> Thresholds:
    """Estimate the no-significant-change band by sequential t-tests.

    ``delta_p_bp`` is the scan step in basis points. A scan that rejects at
    its first testable sample pins that threshold to zero and flags it.
    """
    if not 0.0 < alpha < 0.5:
        raise ValueError(f"alpha must lie in (0, 0.5), got {alpha}")
    if delta_p_bp <= 0.0:
        raise ValueError(f"delta_p_bp must be positive, got {delta_p_bp}")
    if len(r) < min_window:
        raise InsufficientData(
            f"window of {len(r)} returns is below the floor of {min_window}"
        )
    r_plus, j_plus, warn_plus = _scan_side(r.values, alpha, delta_p_bp, +1)
    r_minus, j_minus, warn_minus = _scan_side(r.values, alpha, delta_p_bp, -1)
    return Thresholds(
        r_minus=r_minus,
        r_plus=r_plus,
        alpha=alpha,
        delta_p_bp=delta_p_bp,
        j_minus=j_minus,
        j_plus=j_plus,
        warn_minus=warn_minus,
        warn_plus=warn_plus,
    )


def estimate_probabilities(
    r: ReturnSeries, thr: Thresholds | tuple[float, float]
) -> tuple[float, float, float]:
    """Empirical (p_u, p_m, p_d) for a band of no-significant-change returns.

    Up counts r >= r_plus, middle counts r strictly inside the band, and the
    down probability is the complement. ``thr`` may be a Thresholds object or
    a raw (low, high) band (the extreme tail-mean band may sit on one side of
    zero for unusual windows).
    """
    if len(r) == 0:
        raise InsufficientData("cannot estimate probabilities from an empty window")
    lo, hi = thr.band if isinstance(thr, Thresholds) else (float(thr[0]), float(thr[1]))
    if lo > hi:
        raise ValueError(f"band is empty: ({lo}, {hi})")
    v = r.values
    p_u = float(np.count_nonzero(v >= hi)) / len(r)
    p_m = float(np.count_nonzero((v > lo) & (v < hi))) / len(r)
    return p_u, p_m, 1.0 - p_u - p_m


def estimate_moments(r: ReturnSeries) -> tuple[float, float]:
    """Per-unit-time mean and volatility of the window (unbiased variance)."""
    if len(r) < 2:
        raise InsufficientData("need at least two returns to estimate moments")
    mean = float(r.values.mean())
    sd = float(r.values.std(ddof=1))
    if sd == 0.0:
        raise DegenerateVolatility("return window has zero variance")
    return mean / r.dt, sd / math.sqrt(r.dt)


def compute_UD(p: NaturalParams) -> tuple[float, float]:
    """Step returns (U, D) matching the window's conditional moments.

    Substituting them back reproduces E[r] = mu*dt and Var[r] = sigma^2*dt
    exactly; with p_m == 0 the expressions collapse to the two-branch case.
    """
    if p.p_u <= 0.0 or p.p_d <= 0.0:
        raise DegenerateBranch(
            f"both directional branches need positive probability, "
            f"got p_u={p.p_u}, p_d={p.p_d}"
        )
    m = p.mu_r * p.dt
    one_minus_pm = 1.0 - p.p_m
    radicand = one_minus_pm * p.sigma_r * p.sigma_r * p.dt - p.p_m * m * m
    if radicand < 0.0:
        raise MomentInfeasible(
            f"moment-matching radicand {radicand:.3e} is negative"
        )
    w = math.sqrt(radicand)
    U = (m + math.sqrt(p.p_d / p.p_u) * w) / one_minus_pm
    D = (m - math.sqrt(p.p_u / p.p_d) * w) / one_minus_pm
    return U, D


def build_step_factors(
    p: NaturalParams, U: float, D: float, convention: Convention
) -> StepFactors:
    """Assemble per-step lattice factors, enforcing the no-arbitrage band."""
    rf_dt = p.r_f * p.dt
    if not D < rf_dt:
        raise ArbitrageBounds(f"violated D < r_f*dt: {D} >= {rf_dt}")
    if not rf_dt < U:
        raise ArbitrageBounds(f"violated r_f*dt < U: {rf_dt} >= {U}")
    if not (D < 0.0 < U):
        raise ArbitrageBounds(f"violated D < 0 < U: D={D}, U={U}")
    gamma = gamma_exponent(p.r_f, p.sigma_r)
    drift = None
    if convention is Convention.LOG:
        drift = p.mu_r + 0.5 * p.sigma_r * p.sigma_r
    return StepFactors.from_returns(U, D, rf_dt, gamma, convention, price_drift=drift)


def cvar_thresholds(r: ReturnSeries, beta: float) -> tuple[float, float]:
    """Tail-mean extreme thresholds at tail level beta.

    The lower value is the mean of all returns at or below the beta-quantile
    (losses kept negative), the upper the mean of all returns at or above the
    (1-beta)-quantile. Quantiles are order statistics at rank ceil(beta*L);
    every duplicate of the boundary value enters its tail.
    """
    if not 0.0 < beta < 0.5:
        raise ValueError(f"beta must lie in (0, 0.5), got {beta}")
    n = len(r)
    if n * beta < 1.0:
        raise InsufficientTail(
            f"window of {n} returns has no observations at tail level {beta}"
        )
    m = math.ceil(beta * n)
    xs = np.sort(r.values)
    lower = r.values[r.values <= xs[m - 1]]
    upper = r.values[r.values >= xs[n - m]]
    if lower.size == 0 or upper.size == 0:
        raise InsufficientTail("empty tail")
    return float(lower.mean()), float(upper.mean())
