"""Implied parameter surfaces from market option quotes.

Each quote is inverted for one scalar parameter by bounded minimization of
the squared relative price error against a freshly built lattice; the sparse
implied points are then filled onto a dense (maturity, moneyness) grid with
a product-Gaussian kernel smoother.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from enum import Enum
from typing import Callable, NamedTuple, Sequence

import numpy as np
from scipy.optimize import minimize_scalar

from .calibrate import NaturalParams, build_step_factors, compute_UD
from .errors import (
    ArbitrageBounds,
    DegenerateBranch,
    DegenerateVolatility,
    DuplicateQuote,
    InvalidRiskNeutralMeasure,
    MomentInfeasible,
    NoFeasiblePoint,
    SingularDenominator,
)
from .lattice import Convention, LatticeSpec, OptionKind, OptionSpec, price_european

__all__ = [
    "ImpliedParam",
    "Quote",
    "QuoteSet",
    "ImpliedPoint",
    "SurfaceGrid",
    "SurfaceBuild",
    "default_bounds",
    "model_price",
    "invert_point",
    "invert_extreme",
    "complement_pu",
    "smooth_surface",
    "build_surfaces",
]

# squared-relative-error objective above this gets the point flagged
DEFAULT_FIT_TOLERANCE = 1e-4
# quotes below this price are filtered as numerically unreliable
DEFAULT_PRICE_FLOOR = 0.01
# finite stand-in for an infinite objective at infeasible candidates
_INFEASIBLE = 1e30

# lattice prices oscillate as a moving strike crosses node levels, so the
# objective is multimodal with narrow global basins; a dense deterministic
# scan locates the basins before the golden-section/parabolic polish
_SCAN_POINTS = 129
_REFINE_BASINS = 8
_XATOL = 1e-8
_MAXITER = 200

_FEASIBILITY_ERRORS = (
    ArbitrageBounds,
    DegenerateBranch,
    DegenerateVolatility,
    InvalidRiskNeutralMeasure,
    MomentInfeasible,
    SingularDenominator,
    ValueError,
)


class ImpliedParam(Enum):
    SIGMA = "sigma"
    MU = "mu"
    RISK_FREE = "rf"
    P_DOWN = "pd"
    P_MID = "pm"
    P_DOWN_EXTREME = "pdext"
    P_MID_EXTREME = "pmext"


_EXTREME = (ImpliedParam.P_DOWN_EXTREME, ImpliedParam.P_MID_EXTREME)


class Quote(NamedTuple):
    maturity_steps: int
    strike: float
    price: float


@dataclass(frozen=True)
class QuoteSet:
    """Published option prices for one underlying on one observation date."""

    S0: float
    quotes: tuple[Quote, ...]
    kind: OptionKind = OptionKind.CALL

    def __post_init__(self) -> None:
        if self.S0 <= 0.0:
            raise ValueError(f"S0 must be positive, got {self.S0}")
        seen: set[tuple[int, float]] = set()
        for q in self.quotes:
            if q.price <= 0.0:
                raise ValueError(f"quote prices must be positive, got {q}")
            if q.strike <= 0.0:
                raise ValueError(f"quote strikes must be positive, got {q}")
            key = (q.maturity_steps, q.strike)
            if key in seen:
                raise DuplicateQuote(f"duplicate quote for (T={key[0]}, K={key[1]})")
            seen.add(key)


@dataclass(frozen=True)
class ImpliedPoint:
    """One inverted quote: maturity in steps, moneyness, value, residual."""

    T: int
    M: float
    value: float
    objective: float
    flagged: bool = False

    def __post_init__(self) -> None:
        if self.objective < 0.0:
            raise ValueError("objective cannot be negative")


@dataclass(frozen=True)
class SurfaceGrid:
    """Dense parameter values over (maturity, moneyness) axes."""

    t_axis: np.ndarray
    m_axis: np.ndarray
    values: np.ndarray
    bandwidth: tuple[float, float]
    widened_nodes: tuple[tuple[int, int], ...] = ()

    def __post_init__(self) -> None:
        t = np.asarray(self.t_axis, dtype=float)
        m = np.asarray(self.m_axis, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if v.shape != (t.size, m.size):
            raise ValueError(
                f"values shape {v.shape} does not match axes ({t.size}, {m.size})"
            )
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(m)) and np.all(np.isfinite(v))):
            raise ValueError("surface axes and values must be finite")
        if not (self.bandwidth[0] > 0.0 and self.bandwidth[1] > 0.0):
            raise ValueError(f"bandwidths must be positive, got {self.bandwidth}")
        object.__setattr__(self, "t_axis", t)
        object.__setattr__(self, "m_axis", m)
        object.__setattr__(self, "values", v)


def default_bounds(param: ImpliedParam, fixed: NaturalParams) -> tuple[float, float]:
    """Feasible search box for one parameter given the held calibration."""
    if param is ImpliedParam.SIGMA:
        return (1e-4, 1.0)
    if param in (ImpliedParam.MU, ImpliedParam.RISK_FREE):
        return (-0.05, 0.05)
    if param in (ImpliedParam.P_DOWN, ImpliedParam.P_DOWN_EXTREME):
        return (0.0, 1.0 - fixed.p_m)
    return (0.0, 1.0 - fixed.p_d)


def _candidate(param: ImpliedParam, theta: float, fixed: NaturalParams) -> NaturalParams:
    if param is ImpliedParam.SIGMA:
        return replace(fixed, sigma_r=theta)
    if param is ImpliedParam.MU:
        return replace(fixed, mu_r=theta)
    if param is ImpliedParam.RISK_FREE:
        return replace(fixed, r_f=theta)
    if param in (ImpliedParam.P_DOWN, ImpliedParam.P_DOWN_EXTREME):
        return replace(fixed, p_d=theta, p_u=1.0 - fixed.p_m - theta)
    if param in (ImpliedParam.P_MID, ImpliedParam.P_MID_EXTREME):
        return replace(fixed, p_m=theta, p_u=1.0 - fixed.p_d - theta)
    raise ValueError(f"unknown parameter {param}")


def model_price(
    s0: float,
    maturity_steps: int,
    strike: float,
    params: NaturalParams,
    convention: Convention,
    kind: OptionKind = OptionKind.CALL,
) -> float:
    """Theoretical price from a lattice built fresh off the given parameters."""
    U, D = compute_UD(params)
    factors = build_step_factors(params, U, D, convention)
    spec = LatticeSpec.constant(s0, maturity_steps, params.dt, factors)
    return price_european(spec, OptionSpec(kind, strike, maturity_steps))


def _minimize_bracketed(
    fn: Callable[[float], float], lo: float, hi: float
) -> tuple[float, float]:
    """Global-then-local bounded minimization.

    A dense equispaced scan maps the basins, then every promising local
    minimum of the scan (capped at the best few) is polished by a bounded
    golden-section search with parabolic interpolation inside the bracket of
    its scan neighbours. Fully deterministic for identical inputs.
    """
    grid = np.linspace(lo, hi, _SCAN_POINTS)
    scan = np.array([fn(float(x)) for x in grid])
    best = int(scan.argmin())
    best_x, best_val = float(grid[best]), float(scan[best])
    if not np.isfinite(best_val) or best_val >= _INFEASIBLE:
        return best_x, best_val

    padded = np.concatenate([[np.inf], scan, [np.inf]])
    is_min = (padded[1:-1] <= padded[:-2]) & (padded[1:-1] <= padded[2:])
    candidates = [i for i in np.flatnonzero(is_min) if scan[i] < _INFEASIBLE]
    candidates.sort(key=lambda i: scan[i])
    for i in candidates[:_REFINE_BASINS]:
        b_lo = float(grid[max(i - 1, 0)])
        b_hi = float(grid[min(i + 1, _SCAN_POINTS - 1)])
        if not b_lo < b_hi:
            continue
        res = minimize_scalar(
            fn,
            bounds=(b_lo, b_hi),
            method="bounded",
            options={"xatol": _XATOL, "maxiter": _MAXITER},
        )
        if res.fun < best_val:
            best_x, best_val = float(res.x), float(res.fun)
    return best_x, best_val


def invert_point(
    s0: float,
    quote: Quote,
    param: ImpliedParam,
    fixed: NaturalParams,
    convention: Convention,
    bounds: tuple[float, float] | None = None,
    kind: OptionKind = OptionKind.CALL,
    fit_tolerance: float = DEFAULT_FIT_TOLERANCE,
) -> ImpliedPoint:
    """Invert one quote for one parameter.

    The objective is the squared relative price error; candidates for which
    no valid lattice exists score an effectively infinite penalty. A point
    whose best objective exceeds ``fit_tolerance`` is retained but flagged.
    """
    if bounds is None:
        bounds = default_bounds(param, fixed)
    lo, hi = bounds
    if not lo < hi:
        raise ValueError(f"bounds are empty: ({lo}, {hi})")

    def objective(theta: float) -> float:
        try:
            cand = _candidate(param, float(theta), fixed)
            g = model_price(s0, quote.maturity_steps, quote.strike, cand,
                            convention, kind)
        except _FEASIBILITY_ERRORS:
            return _INFEASIBLE
        return ((g - quote.price) / quote.price) ** 2

    best_x, best_val = _minimize_bracketed(objective, lo, hi)
    if best_val >= _INFEASIBLE:
        raise NoFeasiblePoint(
            f"no feasible {param.value} in [{lo}, {hi}] for quote {quote}"
        )
    return ImpliedPoint(
        T=quote.maturity_steps,
        M=quote.strike / s0,
        value=best_x,
        objective=best_val,
        flagged=best_val > fit_tolerance,
    )


def invert_extreme(
    s0: float,
    quote: Quote,
    param: ImpliedParam,
    fixed_extreme: NaturalParams,
    convention: Convention,
    bounds: tuple[float, float] | None = None,
    kind: OptionKind = OptionKind.CALL,
    fit_tolerance: float = DEFAULT_FIT_TOLERANCE,
) -> ImpliedPoint:
    """Invert against the extreme-threshold calibration, holding its
    complementary probability fixed."""
    if param not in _EXTREME:
        raise ValueError(f"{param} is not an extreme-probability parameter")
    return invert_point(
        s0, quote, param, fixed_extreme, convention,
        bounds=bounds, kind=kind, fit_tolerance=fit_tolerance,
    )


def complement_pu(fixed: float, implied: float) -> float:
    """Remaining up probability once the held and implied values are known."""
    for name, v in (("fixed", fixed), ("implied", implied)):
        if not 0.0 <= v <= 1.0:
            raise ValueError(f"{name} probability {v} outside [0, 1]")
    return min(max(1.0 - fixed - implied, 0.0), 1.0)


def _median_nn_spacing(x: np.ndarray) -> float:
    """Median positive nearest-neighbour distance along one axis."""
    if x.size < 2:
        return 1.0
    xs = np.sort(x)
    gaps = np.diff(xs)
    gaps = gaps[gaps > 0.0]
    if gaps.size == 0:
        return 1.0
    # nearest neighbour of an interior site is its smaller adjacent gap
    nn = np.minimum(np.append(gaps, np.inf), np.insert(gaps, 0, np.inf))
    nn = nn[np.isfinite(nn)]
    return float(np.median(nn))


def smooth_surface(
    points: Sequence[ImpliedPoint],
    t_axis: Sequence[float] | np.ndarray,
    m_axis: Sequence[float] | np.ndarray,
    bandwidth: tuple[float, float] | None = None,
) -> SurfaceGrid:
    """Fill a dense grid from sparse implied points by kernel-weighted means.

    The weight of a point at a grid node is the product Gaussian of its
    bandwidth-standardized distances in maturity and moneyness; the node value
    is the weighted mean (a smoother, not an interpolant). Should every
    weight underflow at a node, the bandwidth is doubled locally until one
    survives, and the node is recorded in ``widened_nodes``.
    """
    if len(points) == 0:
        raise ValueError("need at least one implied point to smooth")
    t_axis = np.asarray(t_axis, dtype=float)
    m_axis = np.asarray(m_axis, dtype=float)
    pt = np.array([p.T for p in points], dtype=float)
    pm = np.array([p.M for p in points], dtype=float)
    pv = np.array([p.value for p in points], dtype=float)
    if bandwidth is None:
        bandwidth = (_median_nn_spacing(pt), _median_nn_spacing(pm))
    h_t, h_m = bandwidth
    if h_t <= 0.0 or h_m <= 0.0:
        raise ValueError(f"bandwidths must be positive, got {bandwidth}")

    values = np.empty((t_axis.size, m_axis.size))
    widened: list[tuple[int, int]] = []
    for i, t in enumerate(t_axis):
        dt2 = ((t - pt) / h_t) ** 2
        for j, m in enumerate(m_axis):
            dm2 = ((m - pm) / h_m) ** 2
            w = np.exp(-0.5 * (dt2 + dm2))
            total = w.sum()
            scale = 1.0
            while total < 1e-300:
                scale *= 2.0
                w = np.exp(-0.5 * (dt2 + dm2) / (scale * scale))
                total = w.sum()
            if scale > 1.0:
                widened.append((i, j))
            values[i, j] = float((w * pv).sum() / total)
    return SurfaceGrid(t_axis, m_axis, values, (float(h_t), float(h_m)),
                       tuple(widened))


@dataclass(frozen=True)
class SurfaceBuild:
    """Outcome of a multi-parameter surface build."""

    surfaces: dict[ImpliedParam, SurfaceGrid]
    report: dict


def build_surfaces(
    quotes: QuoteSet,
    calibration: NaturalParams,
    params: Sequence[ImpliedParam],
    convention: Convention,
    extreme_calibration: NaturalParams | None = None,
    t_axis: Sequence[float] | None = None,
    m_axis: Sequence[float] | None = None,
    bandwidth: tuple[float, float] | None = None,
    fit_tolerance: float = DEFAULT_FIT_TOLERANCE,
    price_floor: float = DEFAULT_PRICE_FLOOR,
    workers: int = 1,
) -> SurfaceBuild:
    """Invert every usable quote for every requested parameter, then smooth.

    Point inversions are independent pure calls and may run on a thread pool;
    results are reduced in quote order, so output is deterministic. Per-point
    failures are aggregated into the report; the build fails only when every
    point of every parameter does.
    """
    usable: list[Quote] = []
    floored: list[Quote] = []
    for q in quotes.quotes:
        (usable if q.price >= price_floor else floored).append(q)

    if t_axis is None:
        t_axis = np.unique([q.maturity_steps for q in quotes.quotes]).astype(float)
    if m_axis is None:
        m_axis = np.unique([q.strike / quotes.S0 for q in quotes.quotes])

    surfaces: dict[ImpliedParam, SurfaceGrid] = {}
    report: dict = {
        "n_quotes": len(quotes.quotes),
        "n_below_price_floor": len(floored),
        "price_floor": price_floor,
        "parameters": {},
    }
    any_success = False
    for param in params:
        if param in _EXTREME:
            if extreme_calibration is None:
                raise ValueError(
                    f"{param.value} inversion needs the extreme-threshold calibration"
                )
            fixed = extreme_calibration
        else:
            fixed = calibration

        def run(q: Quote) -> ImpliedPoint:
            return invert_point(quotes.S0, q, param, fixed, convention,
                                kind=quotes.kind, fit_tolerance=fit_tolerance)

        outcomes: list[ImpliedPoint | Exception] = []
        if workers > 1 and len(usable) > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                futures = [pool.submit(run, q) for q in usable]
                for fut in futures:
                    exc = fut.exception()
                    if exc is None:
                        outcomes.append(fut.result())
                    elif isinstance(exc, NoFeasiblePoint):
                        outcomes.append(exc)
                    else:
                        raise exc
        else:
            for q in usable:
                try:
                    outcomes.append(run(q))
                except NoFeasiblePoint as exc:
                    outcomes.append(exc)

        points: list[ImpliedPoint] = []
        failures = [
            {"T": q.maturity_steps, "K": q.strike, "reason": "below price floor"}
            for q in floored
        ]
        for q, out in zip(usable, outcomes):
            if isinstance(out, ImpliedPoint):
                points.append(out)
            else:
                failures.append(
                    {"T": q.maturity_steps, "K": q.strike, "reason": str(out)}
                )
        entry = {
            "n_points": len(points),
            "n_failures": len(failures),
            "failures": failures,
            "points": [
                {"T": p.T, "M": p.M, "value": p.value,
                 "objective": p.objective, "flagged": p.flagged}
                for p in points
            ],
        }
        if points:
            any_success = True
            surfaces[param] = smooth_surface(points, t_axis, m_axis, bandwidth)
            entry["status"] = "ok"
        else:
            entry["status"] = "failed"
        report["parameters"][param.value] = entry

    if params and not any_success:
        raise NoFeasiblePoint("every point of every requested parameter failed")
    return SurfaceBuild(surfaces=surfaces, report=report)
