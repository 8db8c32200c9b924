"""Recombining trinomial lattice with closed-form risk-neutral pricing.

A market of {stock, bond, power-of-stock perpetual claim} is complete on a
trinomial step, so the branch state prices are unique. European claims are
priced by discounted backward induction over (up-count, down-count) states;
a one-step replicating-portfolio solver is provided as an independent check.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import (
    DegenerateVolatility,
    InvalidRiskNeutralMeasure,
    SingularDenominator,
    SingularReplication,
)

__all__ = [
    "Convention",
    "OptionKind",
    "StepFactors",
    "RiskNeutralProbs",
    "LatticeSpec",
    "OptionSpec",
    "PortfolioWeights",
    "gamma_exponent",
    "risk_neutral_probs",
    "price_european",
    "value_slices",
    "node_prices",
    "solve_replication",
    "deflator_identities",
]

# slack allowed on [0, 1] membership of branch probabilities
Q_MEMBERSHIP_TOL = 1e-12
# |D1| below this is treated as an exactly singular system
SINGULAR_TOL = 1e-14
# stored price ratios must match stored returns this tightly
_CONSISTENCY_RTOL = 1e-12


class Convention(Enum):
    """How per-step returns map to price ratios."""

    ARITHMETIC = "arithmetic"
    LOG = "log"


class OptionKind(Enum):
    CALL = "call"
    PUT = "put"


def gamma_exponent(r_f: float, sigma: float) -> float:
    """Exponent of the perpetual claim completing the market, -2*r_f/sigma^2.

    Both rates must be expressed per the same unit of time; the ratio is
    dimensionless. Negative r_f is allowed (it arises while inverting the
    implied riskless rate) and yields a positive exponent.
    """
    if sigma <= 0.0:
        raise DegenerateVolatility(f"sigma must be positive, got {sigma}")
    return -2.0 * r_f / (sigma * sigma)


@dataclass(frozen=True)
class StepFactors:
    """One lattice step in a fixed return convention.

    U and D are the per-step up/down returns, u and d the matching price
    ratios, R_f the gross riskless growth over the step, and gamma the
    exponent of the completing perpetual claim. ``price_drift`` records the
    price-process drift implied by a log-return calibration (mu + sigma^2/2)
    and is informational only.
    """

    U: float
    D: float
    u: float
    d: float
    R_f: float
    gamma: float
    convention: Convention
    price_drift: float | None = None

    def __post_init__(self) -> None:
        for name in ("U", "D", "u", "d", "R_f", "gamma"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"non-finite StepFactors field {name!r}")
        if not 0.0 < self.d < 1.0 < self.u:
            raise ValueError(f"need 0 < d < 1 < u, got d={self.d}, u={self.u}")
        if self.R_f <= 0.0:
            raise ValueError(f"R_f must be positive, got {self.R_f}")
        u_ref, d_ref = _ratios(self.U, self.D, self.convention)
        if (abs(self.u - u_ref) > _CONSISTENCY_RTOL * u_ref
                or abs(self.d - d_ref) > _CONSISTENCY_RTOL * d_ref):
            raise ValueError(
                "price ratios inconsistent with stored returns for "
                f"{self.convention.value} convention"
            )

    @classmethod
    def from_returns(
        cls,
        U: float,
        D: float,
        rf_dt: float,
        gamma: float,
        convention: Convention,
        price_drift: float | None = None,
    ) -> "StepFactors":
        """Build factors from per-step returns and the riskless step return."""
        u, d = _ratios(U, D, convention)
        if convention is Convention.ARITHMETIC:
            R_f = 1.0 + rf_dt
        else:
            R_f = math.exp(rf_dt)
        return cls(U, D, u, d, R_f, gamma, convention, price_drift)

    def log_ratios(self) -> tuple[float, float]:
        """(ln u, ln d) computed from the exact stored returns."""
        if self.convention is Convention.LOG:
            return self.U, self.D
        return math.log1p(self.U), math.log1p(self.D)


def _ratios(U: float, D: float, convention: Convention) -> tuple[float, float]:
    if convention is Convention.ARITHMETIC:
        return 1.0 + U, 1.0 + D
    return math.exp(U), math.exp(D)


@dataclass(frozen=True)
class RiskNeutralProbs:
    """Branch probabilities and the matching one-step price deflators."""

    q_u: float
    q_m: float
    q_d: float
    pi_u: float
    pi_m: float
    pi_d: float


def risk_neutral_probs(f: StepFactors) -> RiskNeutralProbs:
    """Closed-form branch probabilities making all three assets martingales.

    The middle probability is defined as 1 - q_u - q_d; the directly printed
    closed form is evaluated as a cross-check and a RuntimeWarning is emitted
    if the two disagree beyond rounding.

    Raises
    ------
    SingularDenominator
        When the system degenerates (gamma == 0, i.e. a zero riskless rate,
        makes the perpetual claim indistinguishable from the bond).
    InvalidRiskNeutralMeasure
        When any branch probability leaves [0, 1] beyond a 1e-12 slack.
        Values inside the slack are clamped.
    """
    lu, ld = f.log_ratios()
    # small-difference primitives: au = u-1, bu = u^gamma - 1, etc.
    if f.convention is Convention.ARITHMETIC:
        au, ad = f.U, f.D
    else:
        au, ad = math.expm1(f.U), math.expm1(f.D)
    bu = math.expm1(f.gamma * lu)
    bd = math.expm1(f.gamma * ld)
    rho = f.R_f - 1.0

    d1 = au * bd - ad * bu
    if abs(d1) < SINGULAR_TOL:
        raise SingularDenominator(
            f"branch-probability denominator {d1:.3e} is numerically zero "
            "(gamma == 0 leaves the market incomplete)"
        )

    q_u = (bd - ad) * rho / d1
    q_d = (au - bu) * rho / d1
    q_m = 1.0 - q_u - q_d

    # cross-check against the directly expanded middle-probability formula;
    # the raw form loses several digits to cancellation, so the gate only
    # flags disagreement far above that noise floor
    d1_raw = (f.u - 1.0) * f.d ** f.gamma - (f.u - f.d) + (1.0 - f.d) * f.u ** f.gamma
    if d1_raw != 0.0:
        q_m_raw = (
            f.u ** f.gamma * (f.R_f - f.d)
            + f.R_f * (f.d - f.u)
            + f.d ** f.gamma * (f.u - f.R_f)
        ) / d1_raw
        if abs(q_m - q_m_raw) > 1e-6 * max(1.0, abs(q_m)):
            warnings.warn(
                f"middle-probability forms disagree: {q_m} vs {q_m_raw}; "
                "inputs are near-singular",
                RuntimeWarning,
                stacklevel=2,
            )

    for name, q in (("q_u", q_u), ("q_m", q_m), ("q_d", q_d)):
        if q < -Q_MEMBERSHIP_TOL or q > 1.0 + Q_MEMBERSHIP_TOL:
            raise InvalidRiskNeutralMeasure(
                f"{name} = {q} outside [0, 1]; inputs are arbitrage-inconsistent",
                q=(q_u, q_m, q_d),
            )
    q_u = min(max(q_u, 0.0), 1.0)
    q_d = min(max(q_d, 0.0), 1.0)
    q_m = min(max(1.0 - q_u - q_d, 0.0), 1.0)

    inv_r = 1.0 / f.R_f
    return RiskNeutralProbs(q_u, q_m, q_d, q_u * inv_r, q_m * inv_r, q_d * inv_r)


@dataclass(frozen=True)
class LatticeSpec:
    """A recombining lattice: spot, step count, step length, per-step factors.

    Paths merge by their (up, down) move counts, which is valid only when the
    price ratios (u, d) are shared by every step; per-step variation in the
    riskless rate, gamma and hence the branch probabilities is allowed.
    """

    S0: float
    N: int
    dt: float
    factors: tuple[StepFactors, ...]

    def __post_init__(self) -> None:
        if self.N < 1:
            raise ValueError("N must be at least 1")
        if not (math.isfinite(self.S0) and self.S0 > 0.0):
            raise ValueError(f"S0 must be positive, got {self.S0}")
        if self.dt <= 0.0:
            raise ValueError("dt must be positive")
        if len(self.factors) != self.N:
            raise ValueError(f"need {self.N} per-step factors, got {len(self.factors)}")
        first = self.factors[0]
        for k, f in enumerate(self.factors):
            if f.u != first.u or f.d != first.d or f.convention is not first.convention:
                raise ValueError(
                    f"step {k}: price ratios must be step-invariant for the "
                    "lattice to recombine (rates and probabilities may vary)"
                )

    @classmethod
    def constant(cls, S0: float, N: int, dt: float, f: StepFactors) -> "LatticeSpec":
        return cls(S0, N, dt, (f,) * N)


@dataclass(frozen=True)
class OptionSpec:
    """A European claim on the lattice stock."""

    kind: OptionKind
    strike: float
    maturity_steps: int

    def __post_init__(self) -> None:
        if self.strike < 0.0 or not math.isfinite(self.strike):
            raise ValueError(f"strike must be non-negative, got {self.strike}")
        if self.maturity_steps < 1:
            raise ValueError("maturity_steps must be at least 1")


def node_prices(spec: LatticeSpec, k: int) -> np.ndarray:
    """Stock prices of slice k as a (k+1, k+1) array indexed [ups, downs].

    Entries with ups + downs > k are filler and never used by induction.
    """
    u, d = spec.factors[0].u, spec.factors[0].d
    a = np.arange(k + 1)
    return spec.S0 * np.power(u, a)[:, None] * np.power(d, a)[None, :]


def _payoff(prices: np.ndarray, opt: OptionSpec) -> np.ndarray:
    if opt.kind is OptionKind.CALL:
        return np.maximum(prices - opt.strike, 0.0)
    return np.maximum(opt.strike - prices, 0.0)


def _step_probs(spec: LatticeSpec, m: int) -> list[RiskNeutralProbs]:
    qs = []
    for k in range(m):
        try:
            qs.append(risk_neutral_probs(spec.factors[k]))
        except InvalidRiskNeutralMeasure as exc:
            raise InvalidRiskNeutralMeasure(
                f"step {k}: {exc}", q=exc.q, step=k
            ) from exc
    return qs


def _induct(F: np.ndarray, q: RiskNeutralProbs, R_f: float) -> np.ndarray:
    # slice k from slice k+1: child states are (ups+1, downs), (ups, downs),
    # (ups, downs+1)
    return (q.q_u * F[1:, :-1] + q.q_m * F[:-1, :-1] + q.q_d * F[:-1, 1:]) / R_f


def price_european(spec: LatticeSpec, opt: OptionSpec) -> float:
    """Price a European claim by backward induction; returns a value >= 0."""
    m = opt.maturity_steps
    if m > spec.N:
        raise ValueError(f"maturity_steps {m} exceeds lattice N {spec.N}")
    qs = _step_probs(spec, m)
    F = _payoff(node_prices(spec, m), opt)
    for k in range(m - 1, -1, -1):
        F = _induct(F, qs[k], spec.factors[k].R_f)
    return float(F[0, 0])


def value_slices(spec: LatticeSpec, opt: OptionSpec) -> list[np.ndarray]:
    """All option-value slices, index k in 0..maturity. Diagnostic helper:
    memory grows cubically, intended for small lattices."""
    m = opt.maturity_steps
    if m > spec.N:
        raise ValueError(f"maturity_steps {m} exceeds lattice N {spec.N}")
    qs = _step_probs(spec, m)
    out: list[np.ndarray] = [np.empty(0)] * (m + 1)
    out[m] = _payoff(node_prices(spec, m), opt)
    for k in range(m - 1, -1, -1):
        out[k] = _induct(out[k + 1], qs[k], spec.factors[k].R_f)
    return out


@dataclass(frozen=True)
class PortfolioWeights:
    """Share counts (stock, bond, perpetual claim) replicating a one-step claim."""

    a: float
    b: float
    c: float

    def value(self, stock: float, bond: float, gamma: float) -> float:
        """Mark the portfolio at a node with the given asset prices."""
        return self.a * stock + self.b * bond + self.c * stock ** gamma


def solve_replication(
    stock: float,
    bond: float,
    f: StepFactors,
    next_values: tuple[float, float, float],
) -> PortfolioWeights:
    """Solve the 3x3 one-step replication system at a node.

    ``next_values`` are the claim values after an up, middle and down move.
    The returned weights reproduce them exactly and, marked at the node,
    equal the backward-induction value.
    """
    g = f.gamma
    # solve for the dollar positions (a*S, b*B*R_f, c*S^g); the unscaled
    # matrix mixes price scales badly when gamma is far from zero
    M = np.array(
        [
            [f.u, 1.0, f.u ** g],
            [1.0, 1.0, 1.0],
            [f.d, 1.0, f.d ** g],
        ]
    )
    try:
        x = np.linalg.solve(M, np.asarray(next_values, dtype=float))
    except np.linalg.LinAlgError as exc:
        raise SingularReplication(f"replication system singular: {exc}") from exc
    if not np.all(np.isfinite(x)):
        raise SingularReplication("replication system produced non-finite weights")
    return PortfolioWeights(
        float(x[0] / stock),
        float(x[1] / (bond * f.R_f)),
        float(x[2] / stock ** g),
    )


def deflator_identities(f: StepFactors, q: RiskNeutralProbs) -> tuple[float, float, float]:
    """Absolute residuals of the three one-step repricing identities.

    In order: the bond, the stock and the perpetual claim, each deflated by
    the branch state prices. All are <= 1e-12 for a valid measure.
    """
    g = f.gamma
    r_bond = abs((q.pi_u + q.pi_m + q.pi_d) * f.R_f - 1.0)
    r_stock = abs(q.pi_u * f.u + q.pi_m + q.pi_d * f.d - 1.0)
    r_deriv = abs(q.pi_u * f.u ** g + q.pi_m + q.pi_d * f.d ** g - 1.0)
    return (r_bond, r_stock, r_deriv)
