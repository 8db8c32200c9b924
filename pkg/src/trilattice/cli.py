"""Command-line front end: ingestion -> calibration -> pricing -> surfaces.

Subcommands: calibrate, price, implied. Options come from an optional JSON
config file with flag overrides; every run writes a machine-readable report
into the output directory and exits 0 iff no fatal error occurred.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

import numpy as np

from . import calibrate as cal
from .errors import TrilatticeError
from .implied import ImpliedParam, SurfaceGrid, build_surfaces
from .lattice import (
    Convention,
    LatticeSpec,
    OptionKind,
    OptionSpec,
    price_european,
)
from .marketdata import load_chain, load_prices, to_returns, write_surface

__all__ = ["RunConfig", "cmd_calibrate", "cmd_price", "cmd_implied", "main"]

_CONVENTIONS = {"arith": Convention.ARITHMETIC, "log": Convention.LOG}
_PARAM_NAMES = {p.value: p for p in ImpliedParam}


@dataclass(frozen=True)
class RunConfig:
    """Knobs for a full run; numeric defaults follow the reference setup."""

    prices: str | None = None
    chain: str | None = None
    out: str = "out"
    convention: str = "arith"
    alpha: float = 0.001
    dp_bp: float = 1.0
    beta: float = 0.01
    rf_daily: float | None = None
    dt: float = 1.0
    kind: str = "call"
    params: tuple[str, ...] = ()
    strikes: tuple[float, ...] = ()
    maturities: tuple[int, ...] = ()
    bandwidth_T: float | None = None
    bandwidth_M: float | None = None
    min_window: int = cal.DEFAULT_MIN_WINDOW
    fit_tolerance: float = 1e-4
    price_floor: float = 0.01
    workers: int = 1

    def __post_init__(self) -> None:
        if self.convention not in _CONVENTIONS:
            raise ValueError(f"convention must be one of {sorted(_CONVENTIONS)}")
        if self.kind not in ("call", "put"):
            raise ValueError("kind must be 'call' or 'put'")
        if not 0.0 < self.alpha < 0.5:
            raise ValueError(f"alpha {self.alpha} outside (0, 0.5)")
        if not 0.0 < self.beta < 0.5:
            raise ValueError(f"beta {self.beta} outside (0, 0.5)")
        if self.dp_bp <= 0.0 or self.dt <= 0.0:
            raise ValueError("dp_bp and dt must be positive")
        for name in self.params:
            if name not in _PARAM_NAMES:
                raise ValueError(
                    f"unknown parameter {name!r}; choose from {sorted(_PARAM_NAMES)}"
                )

    @classmethod
    def from_file(cls, path: str | Path) -> "RunConfig":
        with Path(path).open(encoding="utf-8") as fh:
            data = json.load(fh)
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        for key in ("params",):
            if key in data:
                data[key] = tuple(data[key])
        for key in ("strikes", "maturities"):
            if key in data:
                data[key] = tuple(data[key])
        return cls(**data)

    @property
    def convention_enum(self) -> Convention:
        return _CONVENTIONS[self.convention]

    @property
    def kind_enum(self) -> OptionKind:
        return OptionKind(self.kind)


def _require(cfg: RunConfig, *names: str) -> None:
    for name in names:
        if getattr(cfg, name) is None:
            raise TrilatticeError(f"config field {name!r} is required for this command")


def _calibration_bundle(cfg: RunConfig):
    """Shared pipeline prefix: load prices, calibrate, build factors."""
    history = load_prices(cfg.prices)
    returns = to_returns(history, cfg.convention_enum, cfg.dt)
    warnings: list[str] = []

    thresholds = cal.estimate_thresholds(
        returns, cfg.alpha, cfg.dp_bp, min_window=cfg.min_window
    )
    for side, warn in (("minus", thresholds.warn_minus), ("plus", thresholds.warn_plus)):
        if warn is not None:
            warnings.append(f"threshold scan ({side} side): {warn}")
    p_u, p_m, p_d = cal.estimate_probabilities(returns, thresholds)
    mu_r, sigma_r = cal.estimate_moments(returns)
    params = cal.NaturalParams(
        p_u=p_u, p_m=p_m, p_d=p_d, mu_r=mu_r, sigma_r=sigma_r,
        r_f=cfg.rf_daily, dt=cfg.dt,
    )
    U, D = cal.compute_UD(params)
    factors = cal.build_step_factors(params, U, D, cfg.convention_enum)

    cvar_lo, cvar_hi = cal.cvar_thresholds(returns, cfg.beta)
    pe_u, pe_m, pe_d = cal.estimate_probabilities(returns, (cvar_lo, cvar_hi))
    extreme = cal.NaturalParams(
        p_u=pe_u, p_m=pe_m, p_d=pe_d, mu_r=mu_r, sigma_r=sigma_r,
        r_f=cfg.rf_daily, dt=cfg.dt,
    )

    spot = float(history.adj_close[-1])
    report = {
        "window": {
            "rows": len(history),
            "returns": len(returns),
            "start": history.dates[0].isoformat(),
            "end": history.dates[-1].isoformat(),
            "convention": cfg.convention,
            "dt": cfg.dt,
        },
        "spot": spot,
        "thresholds": {
            "r_minus": thresholds.r_minus,
            "r_plus": thresholds.r_plus,
            "alpha": thresholds.alpha,
            "delta_p_bp": thresholds.delta_p_bp,
            "j_minus": thresholds.j_minus,
            "j_plus": thresholds.j_plus,
            "warn_minus": thresholds.warn_minus,
            "warn_plus": thresholds.warn_plus,
        },
        "probabilities": {"p_u": p_u, "p_m": p_m, "p_d": p_d},
        "moments": {"mu": mu_r, "sigma": sigma_r},
        "risk_free_daily": cfg.rf_daily,
        "step_returns": {"U": U, "D": D},
        "factors": {
            "u": factors.u, "d": factors.d, "R_f": factors.R_f,
            "gamma": factors.gamma, "price_drift": factors.price_drift,
        },
        "extremes": {
            "beta": cfg.beta,
            "cvar_lower": cvar_lo,
            "cvar_upper": cvar_hi,
            "p_u_ext": pe_u, "p_m_ext": pe_m, "p_d_ext": pe_d,
        },
        "warnings": warnings,
    }
    return spot, params, extreme, factors, report


def _write_json(payload: dict, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def cmd_calibrate(cfg: RunConfig) -> dict:
    """Calibrate from the price file and write the calibration report."""
    _require(cfg, "prices", "rf_daily")
    _, _, _, _, report = _calibration_bundle(cfg)
    _write_json(report, Path(cfg.out) / "calibration.json")
    return report


def cmd_price(cfg: RunConfig) -> dict:
    """Price the (maturity, strike) grid and write it as a surface CSV."""
    _require(cfg, "prices", "rf_daily")
    if not cfg.strikes or not cfg.maturities:
        raise TrilatticeError("price command needs --strikes and --maturities")
    spot, _, _, factors, report = _calibration_bundle(cfg)

    maturities = sorted(set(cfg.maturities))
    strikes = sorted(set(cfg.strikes))
    n_max = max(maturities)
    spec = LatticeSpec.constant(spot, n_max, cfg.dt, factors)
    values = np.empty((len(maturities), len(strikes)))
    failures: list[dict] = []
    for i, T in enumerate(maturities):
        for j, K in enumerate(strikes):
            try:
                values[i, j] = price_european(
                    spec, OptionSpec(cfg.kind_enum, K, T)
                )
            except TrilatticeError as exc:
                failures.append({"T": T, "K": K, "reason": str(exc)})
    if failures:
        report["price_failures"] = failures
        _write_json(report, Path(cfg.out) / "price_report.json")
        raise TrilatticeError(
            f"{len(failures)} grid cells failed, first: {failures[0]}"
        )

    grid = SurfaceGrid(
        t_axis=np.array(maturities, dtype=float),
        m_axis=np.array([k / spot for k in strikes]),
        values=values,
        bandwidth=(1.0, 1.0),  # placeholder, no smoothing applied to prices
    )
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    write_surface(grid, out / "prices_grid.csv")
    report["price_grid"] = {
        "file": str(out / "prices_grid.csv"),
        "kind": cfg.kind,
        "maturities": maturities,
        "strikes": strikes,
    }
    _write_json(report, out / "price_report.json")
    return report


def cmd_implied(cfg: RunConfig) -> dict:
    """Invert the chain into per-parameter surfaces and write them."""
    _require(cfg, "prices", "chain", "rf_daily")
    spot, params_nat, extreme, _, report = _calibration_bundle(cfg)
    chain = load_chain(cfg.chain, spot)

    requested = [_PARAM_NAMES[name] for name in cfg.params]
    bandwidth = None
    if cfg.bandwidth_T is not None and cfg.bandwidth_M is not None:
        bandwidth = (cfg.bandwidth_T, cfg.bandwidth_M)
    build = build_surfaces(
        chain,
        params_nat,
        requested,
        cfg.convention_enum,
        extreme_calibration=extreme,
        bandwidth=bandwidth,
        fit_tolerance=cfg.fit_tolerance,
        price_floor=cfg.price_floor,
        workers=cfg.workers,
    )
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    surface_files = {}
    for param, grid in build.surfaces.items():
        target = out / f"implied_{param.value}.csv"
        write_surface(grid, target)
        surface_files[param.value] = str(target)
    report["implied"] = build.report
    report["implied"]["surface_files"] = surface_files
    _write_json(report, out / "implied_report.json")
    return report


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON config file; flags override it")
    parser.add_argument("--prices", help="price history CSV (date, adj_close)")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--convention", choices=sorted(_CONVENTIONS),
                        help="return convention")
    parser.add_argument("--alpha", type=float, help="t-test significance level")
    parser.add_argument("--dp-bp", dest="dp_bp", type=float,
                        help="threshold scan step in basis points")
    parser.add_argument("--beta", type=float, help="extreme tail level")
    parser.add_argument("--rf-daily", dest="rf_daily", type=float,
                        help="riskless rate per step")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="trilattice",
        description="Trinomial-lattice calibration, pricing and implied surfaces",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_cal = sub.add_parser("calibrate", help="calibrate natural-world parameters")
    _add_common(p_cal)

    p_price = sub.add_parser("price", help="price a (maturity, strike) grid")
    _add_common(p_price)
    p_price.add_argument("--strikes", help="comma-separated strike list")
    p_price.add_argument("--maturities", help="comma-separated maturity steps")
    p_price.add_argument("--kind", choices=["call", "put"], help="option kind")

    p_imp = sub.add_parser("implied", help="build implied parameter surfaces")
    _add_common(p_imp)
    p_imp.add_argument("--chain", help="option chain CSV (expiry_steps, strike, price)")
    p_imp.add_argument("--params",
                       help="comma-separated parameters: "
                            + ",".join(sorted(_PARAM_NAMES)))
    p_imp.add_argument("--bandwidth-T", dest="bandwidth_T", type=float,
                       help="kernel bandwidth along maturity")
    p_imp.add_argument("--bandwidth-M", dest="bandwidth_M", type=float,
                       help="kernel bandwidth along moneyness")
    p_imp.add_argument("--workers", type=int, help="parallel point inversions")
    return parser


def _config_from_args(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig.from_file(args.config) if args.config else RunConfig()
    overrides: dict = {}
    for name in ("prices", "chain", "out", "convention", "alpha", "dp_bp",
                 "beta", "rf_daily", "kind", "bandwidth_T", "bandwidth_M",
                 "workers"):
        value = getattr(args, name, None)
        if value is not None:
            overrides[name] = value
    if getattr(args, "params", None):
        overrides["params"] = tuple(p.strip() for p in args.params.split(","))
    if getattr(args, "strikes", None):
        overrides["strikes"] = tuple(float(s) for s in args.strikes.split(","))
    if getattr(args, "maturities", None):
        overrides["maturities"] = tuple(int(t) for t in args.maturities.split(","))
    return replace(cfg, **overrides) if overrides else cfg


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = _config_from_args(args)
        if args.command == "calibrate":
            cmd_calibrate(cfg)
        elif args.command == "price":
            cmd_price(cfg)
        else:
            cmd_implied(cfg)
    except (TrilatticeError, ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"trilattice {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
