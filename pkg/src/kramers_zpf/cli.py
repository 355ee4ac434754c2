"""Command-line interface: ``kramers-zpf <subcommand> [flags]``.

Every subcommand also reads ``--config file.json``; explicit flags win over
config fields.  Results go to stdout (or ``--output``) as JSON or CSV.
Failures print ``{"error": {...}}`` on stderr with exit status 1, or 2 for
usage errors.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from .bath import Bath, diffusion_energy
from .fit import RateDataset, curve_csv, fit_rate_curve, predict_curve
from .fokker_planck import GridSpec, decay_rate
from .kramers import RateInputs, rate_full, rate_paper_fit
from .langevin import SimulationConfig, estimate_rate
from .potential import Potential, analyze, make_cubic, make_quartic
from .units import ReducedUnits

PAPER_HBAR_OMEGA_A = 5.06e-3
PAPER_DELTA_U = 6.68e-2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _positive(text: str) -> float:
    v = float(text)
    if not (v > 0 and math.isfinite(v)):
        raise argparse.ArgumentTypeError(f"must be positive, got {text}")
    return v


def _nonnegative(text: str) -> float:
    v = float(text)
    if not (v >= 0 and math.isfinite(v)):
        raise argparse.ArgumentTypeError(f"must be >= 0, got {text}")
    return v


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {text}")
    return v


def _clean(obj):
    """Make values strict-JSON safe (no NaN/inf, no numpy scalars)."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _dumps(obj) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n"


def _pick(flag, section: dict, key: str, default=None):
    if flag is not None:
        return flag
    return section.get(key, default)


def _add_common(p: argparse.ArgumentParser, default_format: str = "json") -> None:
    p.add_argument("--config", type=Path, help="JSON config; flags override its fields")
    p.add_argument("--format", choices=("json", "csv"), default=default_format, dest="output_format")
    p.add_argument("--output", type=Path, help="write here instead of stdout")


def _add_reduced_model(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("reduced-unit model (used when the config has no potential)")
    g.add_argument("--omega-a", type=_positive, help="well frequency")
    g.add_argument("--omega-b", type=_positive, help="barrier frequency (quartic if != omega-a)")
    g.add_argument("--delta-u", type=_positive, help="barrier height")
    g.add_argument("--mass", type=_positive)
    g.add_argument("--diffusion", type=_positive, help="D in reduced energy units")
    g.add_argument("--gamma", type=_nonnegative, help="friction rate")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="kramers-zpf", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="subcommand", required=True, parser_class=_Parser)

    p = sub.add_parser("rate", help="analytic escape rate")
    _add_common(p)
    p.add_argument("--hbar-omega-a-eV", type=_positive)
    p.add_argument("--delta-u-eV", type=_positive)
    p.add_argument("--temperature-K", type=_nonnegative)
    p.add_argument("--zero-point", action=argparse.BooleanOptionalAction, default=None)
    _add_reduced_model(p)

    p = sub.add_parser("dcoeff", help="diffusion energy D(T) in eV")
    _add_common(p)
    p.add_argument("--hbar-omega-a-eV", type=_positive)
    p.add_argument("--temperature-K", type=_nonnegative)
    p.add_argument("--zero-point", action=argparse.BooleanOptionalAction, default=None)

    p = sub.add_parser("simulate", help="Langevin first-passage Monte Carlo rate")
    _add_common(p)
    _add_reduced_model(p)
    p.add_argument("--dt", type=_positive)
    p.add_argument("--absorb-at", type=float)
    p.add_argument("--max-time", type=_positive)
    p.add_argument("--n-trajectories", type=_positive_int)
    p.add_argument("--seed", type=int)
    p.add_argument("--initial-condition", choices=("well-thermal", "well-bottom-rest"))
    p.add_argument("--histogram-csv", type=Path, help="write the FPT histogram here")

    p = sub.add_parser("fpe", help="phase-space Fokker-Planck decay rate")
    _add_common(p)
    _add_reduced_model(p)
    p.add_argument("--nx", type=_positive_int)
    p.add_argument("--np", type=_positive_int)
    p.add_argument("--dt", type=_positive)
    p.add_argument("--horizon", type=_positive)
    p.add_argument("--fit-start", type=_positive)
    p.add_argument("--series-csv", type=Path, help="write P(t) here")
    p.add_argument("--snapshot-csv", type=Path, help="write the final W(x, p) here")

    p = sub.add_parser("fit", help="fit (hbar omega_a, dU) to a kappa(T) CSV")
    _add_common(p)
    p.add_argument("--data", type=Path, help="CSV with temperature_K,kappa_per_s[,weight]")
    p.add_argument("--initial-hbar-omega-a-eV", type=_positive)
    p.add_argument("--initial-delta-u-eV", type=_positive)
    p.add_argument("--zero-point", action=argparse.BooleanOptionalAction, default=None)

    p = sub.add_parser("curve", help="kappa(T) table for plotting")
    _add_common(p, default_format="csv")
    p.add_argument("--hbar-omega-a-eV", type=_positive)
    p.add_argument("--delta-u-eV", type=_positive)
    p.add_argument("--t-min", type=_positive)
    p.add_argument("--t-max", type=_positive)
    p.add_argument("--points", type=_positive_int)
    p.add_argument("--compare-arrhenius", action="store_true", default=None)
    p.add_argument("--zero-point", action=argparse.BooleanOptionalAction, default=None)

    p = sub.add_parser("potential-info", help="well and barrier features of a potential")
    _add_common(p)
    _add_reduced_model(p)
    p.add_argument("--coefficients", type=float, nargs="+", help="ascending polynomial coefficients")
    p.add_argument("--search-interval", type=float, nargs=2, metavar=("LO", "HI"))
    return parser


def _load_config(path: Path | None) -> dict:
    if path is None:
        return {}
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    if not isinstance(data, dict):
        raise UsageError("config must be a JSON object")
    return data


def _potential(args, cfg: dict) -> Potential:
    coeffs = getattr(args, "coefficients", None)
    model = cfg.get("model", {})
    if coeffs is not None:
        return Potential(tuple(coeffs), _pick(args.mass, model, "mass", 1.0))
    if "potential" in cfg and args.omega_a is None and args.delta_u is None:
        pot = Potential.from_dict(cfg["potential"])
        return pot if args.mass is None else Potential(pot.coefficients, args.mass)
    wa = _pick(args.omega_a, model, "omega_a", 1.0)
    wb = _pick(args.omega_b, model, "omega_b", None)
    du = _pick(args.delta_u, model, "delta_u", None)
    m = _pick(args.mass, model, "mass", 1.0)
    if du is None:
        raise UsageError("need a potential: --delta-u (with --omega-a/--omega-b) or 'potential' in --config")
    if wb is None or wb == wa:
        return make_cubic(wa, du, m)
    return make_quartic(wa, wb, du, m)


def _bath_units(args, cfg: dict) -> tuple[Bath, ReducedUnits]:
    units = ReducedUnits(**cfg["units"]) if "units" in cfg else ReducedUnits()
    model = cfg.get("model", {})
    d = _pick(args.diffusion, model, "diffusion", None)
    if d is not None:
        g = _pick(args.gamma, model, "gamma", 0.0)
        return Bath.with_diffusion(d * units.energy_scale, g), units
    if "bath" not in cfg:
        raise UsageError("need a bath: --diffusion/--gamma or 'bath' in --config")
    b = Bath.from_dict(cfg["bath"])
    if args.gamma is not None:
        b = Bath(b.temperature, b.hbar_omega_a, args.gamma, b.zero_point)
    return b, units


def _reduced_requested(args, cfg: dict) -> bool:
    return "potential" in cfg or "model" in cfg or args.omega_a is not None or args.delta_u is not None


def _rate(args, cfg):
    if _reduced_requested(args, cfg):
        pot = _potential(args, cfg)
        b, units = _bath_units(args, cfg)
        inputs = RateInputs.from_bath(analyze(pot), b, pot.mass, units)
        return rate_full(inputs).to_dict(), None
    sec = cfg.get("rate", {})
    h = _pick(args.hbar_omega_a_eV, sec, "hbar_omega_a_eV", PAPER_HBAR_OMEGA_A)
    du = _pick(args.delta_u_eV, sec, "delta_u_eV", PAPER_DELTA_U)
    t = _pick(args.temperature_K, sec, "temperature_K", None)
    if t is None:
        raise UsageError("--temperature-K is required")
    zp = _pick(args.zero_point, sec, "zero_point", True)
    est = rate_paper_fit(t, h, du, zp)
    out = est.to_dict()
    out.update(temperature_K=t, hbar_omega_a_eV=h, delta_u_eV=du, zero_point=zp)
    return out, [["kappa_per_s"], [est.kappa]]


def _dcoeff(args, cfg):
    sec = cfg.get("bath", {})
    h = _pick(args.hbar_omega_a_eV, sec, "hbar_omega_a_eV", PAPER_HBAR_OMEGA_A)
    t = _pick(args.temperature_K, sec, "temperature_K", None)
    if t is None:
        raise UsageError("--temperature-K is required")
    zp = _pick(args.zero_point, sec, "zero_point", True)
    d = diffusion_energy(Bath(t, h, 0.0, zp))
    return {"D_eV": d, "temperature_K": t, "hbar_omega_a_eV": h, "zero_point": zp}, [["D_eV"], [d]]


def _simulate(args, cfg):
    pot = _potential(args, cfg)
    b, units = _bath_units(args, cfg)
    sim = cfg.get("simulation", {})
    kwargs = {}
    for key in ("dt", "absorb_at", "max_time", "n_trajectories", "seed", "initial_condition"):
        v = _pick(getattr(args, key), sim, key, None)
        if v is not None:
            kwargs[key] = v
    config = SimulationConfig(potential=pot, bath=b, units=units, **kwargs)
    stats = estimate_rate(config)
    if args.histogram_csv is not None:
        args.histogram_csv.write_text(stats.histogram_csv(), encoding="utf-8")
    out = stats.to_dict()
    out["analytic"] = rate_full(RateInputs.from_bath(config.features, b, pot.mass, units)).kappa
    return out, [["kappa", "kappa_stderr"], [stats.kappa, stats.kappa_stderr]]


def _fpe(args, cfg):
    pot = _potential(args, cfg)
    b, units = _bath_units(args, cfg)
    inputs = RateInputs.from_bath(analyze(pot), b, pot.mass, units)
    grid = cfg.get("grid", {})
    nx = _pick(args.nx, grid, "nx", 256)
    npc = _pick(args.np, grid, "np", 256)
    spec = GridSpec.default(inputs, nx, npc)
    res = decay_rate(
        pot,
        inputs,
        spec,
        dt=_pick(args.dt, grid, "dt", None),
        horizon=_pick(args.horizon, grid, "horizon", None),
        fit_start=_pick(args.fit_start, grid, "fit_start", None),
    )
    if args.series_csv is not None:
        args.series_csv.write_text(res.series_csv(), encoding="utf-8")
    if args.snapshot_csv is not None:
        args.snapshot_csv.write_text(res.grid.snapshot_csv(), encoding="utf-8")
    out = res.to_estimate().to_dict()
    out["analytic"] = rate_full(inputs).kappa
    return out, [["kappa", "residual"], [res.kappa, res.residual]]


def _fit(args, cfg):
    sec = cfg.get("fit", {})
    path = _pick(args.data, sec, "data", None)
    if path is None:
        raise UsageError("--data is required")
    text = Path(path).read_text(encoding="utf-8")
    data = RateDataset.from_csv(text, label=str(path))
    h0 = _pick(args.initial_hbar_omega_a_eV, sec, "initial_hbar_omega_a_eV", None)
    du0 = _pick(args.initial_delta_u_eV, sec, "initial_delta_u_eV", None)
    guess = (h0, du0) if h0 is not None and du0 is not None else None
    zp = _pick(args.zero_point, sec, "zero_point", True)
    res = fit_rate_curve(data, guess, zp)
    return res.to_dict(), [["hbar_omega_a_eV", "delta_u_eV", "rms_log_residual"], [res.hbar_omega_a, res.delta_u, res.rms_log_residual]]


def _curve(args, cfg):
    sec = cfg.get("curve", {})
    h = _pick(args.hbar_omega_a_eV, sec, "hbar_omega_a_eV", PAPER_HBAR_OMEGA_A)
    du = _pick(args.delta_u_eV, sec, "delta_u_eV", PAPER_DELTA_U)
    t_min = _pick(args.t_min, sec, "t_min", 10.0)
    t_max = _pick(args.t_max, sec, "t_max", 340.0)
    n = _pick(args.points, sec, "points", 100)
    if not t_max > t_min:
        raise UsageError("--t-max must exceed --t-min")
    temps = np.linspace(t_min, t_max, n) if n > 1 else np.array([t_min])
    compare = bool(_pick(args.compare_arrhenius, sec, "compare_arrhenius", False))
    zp = _pick(args.zero_point, sec, "zero_point", True)
    if compare:
        zpc = predict_curve((h, du), temps, True)
        arr = predict_curve((h, du), temps, False)
        header = ["temperature_K", "kappa_zp", "kappa_arrhenius"]
        rows = [[t, a, b] for (t, a), (_, b) in zip(zpc, arr)]
    else:
        header = ["temperature_K", "kappa_per_s"]
        rows = [list(r) for r in predict_curve((h, du), temps, zp)]
    js = {"columns": header, "rows": rows, "hbar_omega_a_eV": h, "delta_u_eV": du}
    return js, [header] + rows


def _potential_info(args, cfg):
    pot = _potential(args, cfg)
    interval = args.search_interval or cfg.get("search_interval")
    f = analyze(pot, interval)
    out = f.to_dict()
    out["potential"] = pot.to_dict()
    return out, [list(f.to_dict()), list(f.to_dict().values())]


HANDLERS = {
    "rate": _rate,
    "dcoeff": _dcoeff,
    "simulate": _simulate,
    "fpe": _fpe,
    "fit": _fit,
    "curve": _curve,
    "potential-info": _potential_info,
}


def _emit_error(kind: str, message: str, code: int) -> int:
    sys.stderr.write(_dumps({"error": {"type": kind, "message": message, "exit_status": code}}))
    return code


def run(argv: list[str] | None = None, stdout=None) -> int:
    """Parse ``argv``, dispatch, write the artifact; return the exit status."""
    stdout = stdout or sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        cfg = _load_config(args.config)
        payload, table = HANDLERS[args.subcommand](args, cfg)
    except UsageError as exc:
        return _emit_error("usage", str(exc), 2)
    except (OSError, json.JSONDecodeError) as exc:
        return _emit_error(type(exc).__name__, str(exc), 1)
    except (ValueError, RuntimeError, ArithmeticError) as exc:
        return _emit_error(type(exc).__name__, str(exc), 1)
    if args.output_format == "csv":
        text = curve_csv(table[1:], table[0]) if table is not None else ""
        if table is None:
            return _emit_error("usage", f"{args.subcommand} has no CSV form here; use --format json", 2)
    else:
        text = _dumps(payload)
    if args.output is not None:
        args.output.write_text(text, encoding="utf-8")
    else:
        stdout.write(text)
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
