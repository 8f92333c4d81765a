"""
sphereplane.cli

Command-line front end.

    sphereplane fit-cap   --input run.csv --output fit.json --model ideal
    sphereplane v0-test   --input v0.csv  --output v0.json
    sphereplane exponents --output exponents.csv
    sphereplane synth     --kind capacitance --output run.csv --seed 7

Exit status: 0 on success, 1 if a fit did not converge, 2 on invalid input or
configuration.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import json
import logging
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .capcal import (
    PztMap,
    coefficient_discrepancy,
    default_v0_init,
    exponent_report,
    fit_ideal,
    fit_modified,
    fit_powerlaw,
    model_curve,
    propagate_beta_uncertainty,
    residual_table,
)
from .dataio import (
    MV,
    NM,
    PF,
    atomic_write_text,
    capacitance_csv,
    ingest_capacitance,
    ingest_vzero,
    table_csv,
    vzero_csv,
)
from .errors import DomainError, InputError, NonFiniteModelError
from .models import IdealGeometry, ModifiedGeometry, theoretical_A3
from .synthgen import NoiseSpec, calib_voltage_grid, gen_capacitance, gen_vzero
from .vzero import constancy_test, scatter_comparison, trend_fits

log = logging.getLogger("sphereplane")

SCHEMA_VERSION = 1
EXIT_OK, EXIT_NONCONVERGED, EXIT_INPUT = 0, 1, 2


@dataclass
class RunConfig:
    command: str
    input_path: Optional[Path] = None
    output_path: Optional[Path] = None
    model: str = "ideal"
    radius_mm: float = 30.9
    rab_mm: float = 49.4
    rcd_um: float = 30.0
    H_nm: float = 250.0
    h_nm: float = 8.0
    beta_nm_per_v: float = 87.0
    beta_sigma_nm_per_v: float = 0.0
    v0_init: Optional[float] = None
    constrain_a2: bool = True
    p_fixed: Optional[float] = None
    seed: int = 0
    timestamp: bool = True
    extra: dict = field(default_factory=dict)

    def validate(self) -> None:
        for name in ("radius_mm", "rab_mm", "rcd_um", "H_nm", "h_nm", "beta_nm_per_v"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0.0):
                raise InputError(f"--{name.replace('_', '-')} must be > 0, got {value!r}")
        if self.p_fixed is not None and self.model != "powerlaw":
            raise InputError("--p-fixed only applies to --model powerlaw")
        if self.p_fixed is not None and not math.isfinite(self.p_fixed):
            raise InputError("--p-fixed must be finite")
        if not 0 <= self.seed < 2**64:
            raise InputError("--seed must be an unsigned 64-bit integer")

    @property
    def ideal_geometry(self) -> IdealGeometry:
        return IdealGeometry(self.radius_mm * 1e-3)

    @property
    def modified_geometry(self) -> ModifiedGeometry:
        try:
            return ModifiedGeometry(
                R=self.radius_mm * 1e-3,
                R_AB=self.rab_mm * 1e-3,
                R_CD=self.rcd_um * 1e-6,
                H=self.H_nm * 1e-9,
                h=self.h_nm * 1e-9,
            )
        except ValueError as exc:
            raise InputError(str(exc)) from None

    @property
    def beta(self) -> float:
        return self.beta_nm_per_v * 1e-9


# unit label and lab-unit multiplier for reported parameters
_PARAM_UNITS = {
    "A1": ("pF", PF),
    "A2": ("pF/m", PF),
    "A3": ("pF", PF),
    "s": ("", 1.0),
    "p": ("", 1.0),
    "v0_pzt": ("V", 1.0),
}


def _param_block(fit, model: str) -> dict:
    out = {}
    for i, name in enumerate(fit.names):
        unit, k = _PARAM_UNITS[name]
        if name == "A3" and model == "powerlaw":
            unit = f"pF/m^{fit.params[fit.names.index('p')]:.6g}"
        out[name] = {
            "value": float(fit.params[i] * k),
            "std_error": float(fit.std_errors[i] * k),
            "unit": unit,
            "value_si": float(fit.params[i]),
            "std_error_si": float(fit.std_errors[i]),
            "fixed": not bool(fit.free[i]),
        }
    return out


def _fit_summary(fit, model: str) -> dict:
    return {
        "parameters": _param_block(fit, model),
        "covariance_si": [[float(c) for c in row] for row in fit.covariance],
        "chi2": float(fit.chi2),
        "dof": int(fit.dof),
        "chi2_red": float(fit.chi2_red),
        "residual_scaled": bool(fit.residual_scaled),
        "converged": bool(fit.converged),
        "iterations": int(fit.iterations),
        "message": fit.message,
    }


def _json_text(report: dict) -> str:
    def clean(obj):
        if isinstance(obj, dict):
            return {k: clean(v) for k, v in obj.items()}
        if isinstance(obj, (list, tuple)):
            return [clean(v) for v in obj]
        if isinstance(obj, float) and not math.isfinite(obj):
            return None
        return obj

    return json.dumps(clean(report), indent=2, sort_keys=True) + "\n"


def _envelope(cfg: RunConfig) -> dict:
    report = {"schema_version": SCHEMA_VERSION, "command": cfg.command, "version": __version__}
    if cfg.timestamp:
        report["generated_at"] = _dt.datetime.now(_dt.timezone.utc).isoformat()
    return report


def _sidecar(path: Path, suffix: str) -> Path:
    return path.with_name(f"{path.stem}_{suffix}.csv")


def _require_paths(cfg: RunConfig, need_input: bool = True) -> None:
    if need_input and cfg.input_path is None:
        raise InputError("--input is required")
    if cfg.output_path is None:
        raise InputError("--output is required")


def _fit_cap(cfg: RunConfig) -> int:
    _require_paths(cfg)
    series = ingest_capacitance(cfg.input_path)
    v0_init = cfg.v0_init if cfg.v0_init is not None else default_v0_init(series)
    pzt = PztMap(cfg.beta, v0_init, cfg.beta_sigma_nm_per_v * 1e-9)
    geom = None
    if cfg.model == "ideal":
        geom = cfg.ideal_geometry

        def fitter(m):
            return fit_ideal(series, geom, m, cfg.constrain_a2)

    elif cfg.model == "modified":
        geom = cfg.modified_geometry

        def fitter(m):
            return fit_modified(series, geom, m, cfg.constrain_a2)

    else:

        def fitter(m):
            return fit_powerlaw(series, m, cfg.p_fixed, cfg.constrain_a2)

    fit = propagate_beta_uncertainty(fitter, pzt)
    report = _envelope(cfg)
    report.update(
        {
            "model": cfg.model,
            "n_points": len(series),
            "weighted": series.weighted,
            "config": {
                "beta_nm_per_v": cfg.beta_nm_per_v,
                "beta_sigma_nm_per_v": cfg.beta_sigma_nm_per_v,
                "v0_pzt_init_V": v0_init,
                "constrain_a2": cfg.constrain_a2,
                "p_fixed": cfg.p_fixed,
                "radius_mm": cfg.radius_mm,
            },
            "fit": _fit_summary(fit, cfg.model),
        }
    )
    if cfg.model == "ideal":
        report["theoretical_A3_pF"] = theoretical_A3(geom) * PF
        report["coefficient_discrepancy"] = coefficient_discrepancy("ideal", fit, geom)
    elif cfg.model == "modified":
        report["coefficient_discrepancy"] = coefficient_discrepancy("modified", fit)
        report["config"].update(
            {"rab_mm": cfg.rab_mm, "rcd_um": cfg.rcd_um, "H_nm": cfg.H_nm, "h_nm": cfg.h_nm}
        )

    out = Path(cfg.output_path)
    tables = {}
    try:
        res = residual_table(cfg.model, fit, series, cfg.beta, geom)
        resid_path = _sidecar(out, "residuals")
        atomic_write_text(
            resid_path,
            table_csv(
                {
                    "v_pzt_V": res["v_pzt"],
                    "distance_nm": res["distance"] * NM,
                    "capacitance_pF": res["capacitance"] * PF,
                    "fitted_pF": res["fitted"] * PF,
                    "residual_pF": res["residual"] * PF,
                    "normalized_residual": res["normalized_residual"],
                }
            ),
        )
        v_dense = np.linspace(float(series.v_pzt.min()), float(series.v_pzt.max()), 400)
        curve = model_curve(cfg.model, fit, v_dense, cfg.beta, geom)
        curve_path = _sidecar(out, "curve")
        atomic_write_text(
            curve_path,
            table_csv(
                {
                    "v_pzt_V": v_dense,
                    "distance_nm": cfg.beta * (fit.value("v0_pzt") - v_dense) * NM,
                    "fitted_pF": curve * PF,
                }
            ),
        )
        tables = {"residuals": resid_path.name, "curve": curve_path.name}
    except DomainError as exc:
        log.warning("fitted curve not tabulated: %s", exc)
    report["tables"] = tables
    atomic_write_text(out, _json_text(report))
    if not fit.converged:
        log.error("fit did not converge: %s", fit.message)
        return EXIT_NONCONVERGED
    return EXIT_OK


def _v0_test(cfg: RunConfig) -> int:
    _require_paths(cfg)
    series = ingest_vzero(cfg.input_path)
    rep = constancy_test(series)
    scatter = scatter_comparison(series)
    trends = trend_fits(series)
    fits = {
        "constant": trends.constant.to_dict(),
        "linear": trends.linear.to_dict(),
        "sinusoid": trends.sinusoid.to_dict() if trends.sinusoid is not None else None,
        "delta_chi2_linear": trends.delta_chi2_linear,
        "delta_chi2_sinusoid": trends.delta_chi2_sinusoid,
    }
    report = _envelope(cfg)
    report.update(
        {
            "n_points": len(series),
            "constancy": rep.to_dict(),
            "constancy_mV": {
                "weighted_mean": rep.weighted_mean * MV,
                "unweighted_mean": rep.unweighted_mean * MV,
                "sample_std": rep.sample_std * MV,
                "mean_sigma": rep.mean_sigma * MV,
                "inflated_mean_sigma": rep.inflated_mean_sigma * MV,
            },
            "scatter": {"sample_std": scatter.sample_std, "mean_sigma": scatter.mean_sigma, "ratio": scatter.ratio},
            "trend_fits": fits,
        }
    )
    atomic_write_text(cfg.output_path, _json_text(report))
    # the sinusoid is exploratory; only the core fits decide the exit status
    return EXIT_OK if trends.linear.converged else EXIT_NONCONVERGED


def _exponents(cfg: RunConfig) -> int:
    _require_paths(cfg, need_input=False)
    geom = cfg.ideal_geometry if cfg.model == "ideal" else cfg.modified_geometry
    d_min = cfg.extra.get("d_min_nm", 20.0) * 1e-9
    d_max = cfg.extra.get("d_max_nm", 1000.0) * 1e-9
    n = cfg.extra.get("n_points", 25)
    try:
        rows = exponent_report(geom, (d_min, d_max), n)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    table = {
        "distance_nm": [r.distance * NM for r in rows],
        "exponent_c2": [r.exponent_c2 for r in rows],
        "exponent_kel": [r.exponent_kel for r in rows],
    }
    atomic_write_text(cfg.output_path, table_csv(table))
    return EXIT_OK


def _synth(cfg: RunConfig) -> int:
    _require_paths(cfg, need_input=False)
    x = cfg.extra
    if x.get("kind", "capacitance") == "capacitance":
        pzt = PztMap(cfg.beta, x.get("v0_pzt", 69.31))
        d_range = (x.get("d_min_nm", 20.0) * 1e-9, x.get("d_max_nm", 3000.0) * 1e-9)
        v = calib_voltage_grid(x.get("n_points", 500), pzt, d_range)
        params = {"A1": x.get("a1_pf", 193.9) / PF, "A2": x.get("a2_pf_per_m", 0.0) / PF}
        geom = None
        if cfg.model == "ideal":
            params["A3"] = x.get("a3_pf", -1.757) / PF
            geom = cfg.ideal_geometry
        elif cfg.model == "modified":
            params["s"] = x.get("scale", 1.0)
            geom = cfg.modified_geometry
        else:
            params["A3"] = x.get("a3_pf", -1.757) / PF
            params["p"] = cfg.p_fixed if cfg.p_fixed is not None else x.get("p", 0.3)
        noise = NoiseSpec(x.get("noise", 0.0), relative=x.get("relative", True), seed=cfg.seed)
        series = gen_capacitance(cfg.model, params, pzt, v, noise, geom)
        atomic_write_text(cfg.output_path, capacitance_csv(series))
    else:
        profile = x.get("profile", "constant")
        params = {
            "c": x.get("v0_mv", 15.29) / MV,
            "b": x.get("slope_mv_per_nm", 0.0) / MV * NM,
            "A": x.get("amplitude_mv", 0.0) / MV,
            "wavelength": x.get("wavelength_nm", 1000.0) / NM,
            "phase": x.get("phase", 0.0),
        }
        d = np.linspace(x.get("d_min_nm", 200.0), x.get("d_max_nm", 3000.0), x.get("n_points", 500)) / NM
        series = gen_vzero(
            profile,
            params,
            d,
            x.get("quoted_sigma_mv", 0.13) / MV,
            x.get("true_scatter_mv", 0.31) / MV,
            cfg.seed,
        )
        atomic_write_text(cfg.output_path, vzero_csv(series))
    return EXIT_OK


COMMANDS = {"fit-cap": _fit_cap, "v0-test": _v0_test, "exponents": _exponents, "synth": _synth}


def run(cfg: RunConfig) -> int:
    """Execute one command; diagnostics go to the ``sphereplane`` logger."""
    try:
        cfg.validate()
        return COMMANDS[cfg.command](cfg)
    except (InputError, DomainError, NonFiniteModelError, ValueError) as exc:
        log.error("%s", exc)
        return EXIT_INPUT


def _u64(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sphereplane", description=__doc__.split("\n\n")[0].strip())
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, model_choices=("ideal", "modified", "powerlaw")):
        p.add_argument("--input", type=Path)
        p.add_argument("--output", type=Path)
        p.add_argument("--model", choices=model_choices, default="ideal")
        p.add_argument("--radius-mm", type=float, default=30.9)
        p.add_argument("--rab-mm", type=float, default=49.4)
        p.add_argument("--rcd-um", type=float, default=30.0)
        p.add_argument("--H-nm", dest="H_nm", type=float, default=250.0)
        p.add_argument("--h-nm", dest="h_nm", type=float, default=8.0)
        p.add_argument("--beta-nm-per-v", type=float, default=87.0)
        p.add_argument("--seed", type=_u64, default=0)
        p.add_argument("--no-timestamp", action="store_true")
        p.add_argument("-v", "--verbose", action="store_true")

    p = sub.add_parser("fit-cap", help="fit a capacitance-versus-PZT-voltage run")
    common(p)
    a2 = p.add_mutually_exclusive_group()
    a2.add_argument("--constrain-a2", dest="constrain_a2", action="store_true", default=None)
    a2.add_argument("--free-a2", dest="free_a2", action="store_true")
    p.add_argument("--p-fixed", type=float)
    p.add_argument("--v0-init", type=float, help="initial contact voltage (V); default max(v_pzt) + 2")
    p.add_argument("--beta-sigma-nm-per-v", type=float, default=0.0)

    p = sub.add_parser("v0-test", help="constancy and trend analysis of a V0 series")
    common(p)

    p = sub.add_parser("exponents", help="local scaling exponents of C'' and k_el")
    common(p, ("ideal", "modified"))
    p.set_defaults(model="modified")
    p.add_argument("--d-min-nm", type=float, default=20.0)
    p.add_argument("--d-max-nm", type=float, default=1000.0)
    p.add_argument("--n-points", type=int, default=25)

    p = sub.add_parser("synth", help="write a seeded synthetic series in the ingestion format")
    common(p)
    p.add_argument("--kind", choices=("capacitance", "vzero"), default="capacitance")
    p.add_argument("--n-points", type=int, default=500)
    p.add_argument("--d-min-nm", type=float)
    p.add_argument("--d-max-nm", type=float)
    p.add_argument("--v0-pzt", type=float, default=69.31)
    p.add_argument("--a1-pf", type=float, help="default 193.9 (222.96 for powerlaw)")
    p.add_argument("--a2-pf-per-m", type=float, default=0.0)
    p.add_argument("--a3-pf", type=float, help="pF (pF/m^p for powerlaw); default -1.757 (-346.2)")
    p.add_argument("--scale", type=float, default=1.0)
    p.add_argument("--p-fixed", type=float, help="power-law exponent of the generator")
    p.add_argument("--noise", type=float, default=0.0, help="noise sigma (fraction of signal unless --absolute-noise-pf)")
    p.add_argument("--absolute-noise-pf", action="store_true")
    p.add_argument("--profile", choices=("constant", "linear", "sinusoid"), default="constant")
    p.add_argument("--v0-mv", type=float, default=15.29)
    p.add_argument("--slope-mv-per-nm", type=float, default=0.0)
    p.add_argument("--amplitude-mv", type=float, default=0.0)
    p.add_argument("--wavelength-nm", type=float, default=1000.0)
    p.add_argument("--phase", type=float, default=0.0)
    p.add_argument("--quoted-sigma-mv", type=float, default=0.13)
    p.add_argument("--true-scatter-mv", type=float, default=0.31)
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig(
        command=args.command,
        input_path=args.input,
        output_path=args.output,
        model=args.model,
        radius_mm=args.radius_mm,
        rab_mm=args.rab_mm,
        rcd_um=args.rcd_um,
        H_nm=args.H_nm,
        h_nm=args.h_nm,
        beta_nm_per_v=args.beta_nm_per_v,
        seed=args.seed,
        timestamp=not args.no_timestamp,
    )
    if args.command == "fit-cap":
        cfg.constrain_a2 = not args.free_a2
        cfg.p_fixed = args.p_fixed
        cfg.v0_init = args.v0_init
        cfg.beta_sigma_nm_per_v = args.beta_sigma_nm_per_v
    elif args.command == "exponents":
        cfg.extra = {"d_min_nm": args.d_min_nm, "d_max_nm": args.d_max_nm, "n_points": args.n_points}
    elif args.command == "synth":
        is_cap = args.kind == "capacitance"
        extra = {
            "kind": args.kind,
            "n_points": args.n_points,
            "d_min_nm": args.d_min_nm if args.d_min_nm is not None else (20.0 if is_cap else 200.0),
            "d_max_nm": args.d_max_nm if args.d_max_nm is not None else 3000.0,
            "v0_pzt": args.v0_pzt,
            "a1_pf": args.a1_pf if args.a1_pf is not None else (222.96 if args.model == "powerlaw" else 193.9),
            "a2_pf_per_m": args.a2_pf_per_m,
            "a3_pf": args.a3_pf if args.a3_pf is not None else (-346.2 if args.model == "powerlaw" else -1.757),
            "scale": args.scale,
            "relative": not args.absolute_noise_pf,
            "noise": args.noise / PF if args.absolute_noise_pf else args.noise,
            "profile": args.profile,
            "v0_mv": args.v0_mv,
            "slope_mv_per_nm": args.slope_mv_per_nm,
            "amplitude_mv": args.amplitude_mv,
            "wavelength_nm": args.wavelength_nm,
            "phase": args.phase,
            "quoted_sigma_mv": args.quoted_sigma_mv,
            "true_scatter_mv": args.true_scatter_mv,
        }
        cfg.p_fixed = args.p_fixed
        cfg.extra = extra
    return cfg


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        format="%(levelname)s: %(message)s",
        level=logging.DEBUG if args.verbose else logging.WARNING,
        stream=sys.stderr,
    )
    return run(config_from_args(args))


if __name__ == "__main__":
    sys.exit(main())
