"""Command-line front end: design, analyze, bounds, simulate, reproduce.

Exit codes: 0 ok, 1 a reproduction row out of tolerance, 2 bad configuration,
3 a certificate was refused (artifacts are still written).
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .bounds import coarse_bounds, iterate_bounds
from .design import (
    TABLE_CASES,
    Corridor,
    case_phi_target,
    deadbeat_f_slope,
    phi_star_slope,
    solve_corridor,
    synthesize_coeffs,
    table_controller,
    validate_compatibility,
)
from .errors import CertificateRefused, ConfigError, DesignError, DomainError
from .kinetics import HillPD, PlantParams, hill
from .modulation import Clamps, Controller, classify_feedback
from .retmap import UNCERTIFIED, analyze
from .sim import SimConfig, audit_corridor, pib_schedule, simulate_closed, simulate_openloop

EXIT_OK, EXIT_MISMATCH, EXIT_CONFIG, EXIT_REFUSED = 0, 1, 2, 3

MODES = ("synthesized", "paper-case-1", "paper-case-2", "paper-case-3", "open-loop-pib")

_SECTIONS = {
    "plant": {"elimination_rate_per_h": -0.28, "volume_of_distribution_l": 42.0},
    "pd": {"e0_score": 10.0, "emax_score": 5.17, "ec50_mg_per_l": 9.98},
    "corridor": {"x_min_mg_per_l": 10.0, "x_max_mg_per_l": 20.0},
    "clamps": {"phi_lo_h": 1.0, "phi_hi_h": 8.0, "f_lo_mg": 200.0, "f_hi_mg": 2000.0},
}
_SCALARS = {
    "mode": "synthesized",
    "phi_slope_target_h_per_mg_per_l": None,
    "controller": None,
    "initial_dose_mg": 2000.0,
    "start_mode": "event-triggered",
    "t0_h": None,
    "horizon_h": 48.0,
    "sample_step_h": 0.005,
    "schedule": None,
    "out_dir": "out",
}


@dataclass
class RunConfig:
    plant: PlantParams
    pd: HillPD
    corridor: Corridor
    clamps: Clamps
    mode: str = "synthesized"
    phi_slope_target: float | None = None
    controller: Controller | None = None
    initial_dose_mg: float = 2000.0
    start_mode: str = "event-triggered"
    t0_h: float | None = None
    horizon_h: float = 48.0
    sample_step_h: float = 0.005
    schedule: list = field(default_factory=pib_schedule)
    out_dir: Path = Path("out")

    @property
    def case(self) -> int | None:
        return int(self.mode[-1]) if self.mode.startswith("paper-case-") else None


def _num(section, key, value, positive=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise ConfigError(f"{section}.{key}" if section else key, f"expected a finite number, got {value!r}")
    if positive and not value > 0:
        raise ConfigError(f"{section}.{key}" if section else key, f"must be positive, got {value}")
    return float(value)


def parse_config(raw: dict) -> RunConfig:
    """Validate a JSON config dict; every key is optional and unit-suffixed."""
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "config must be a JSON object")
    unknown = set(raw) - set(_SECTIONS) - set(_SCALARS)
    if unknown:
        raise ConfigError(sorted(unknown)[0], "unknown field")
    sec = {}
    for name, defaults in _SECTIONS.items():
        given = raw.get(name, {})
        if not isinstance(given, dict):
            raise ConfigError(name, "expected an object")
        bad = set(given) - set(defaults)
        if bad:
            raise ConfigError(f"{name}.{sorted(bad)[0]}", "unknown field")
        sec[name] = {k: _num(name, k, given.get(k, v)) for k, v in defaults.items()}
    vals = {k: raw.get(k, v) for k, v in _SCALARS.items()}
    try:
        plant = PlantParams(sec["plant"]["elimination_rate_per_h"], sec["plant"]["volume_of_distribution_l"])
    except DomainError as e:
        raise ConfigError("plant", str(e)) from None
    try:
        pd = HillPD(sec["pd"]["e0_score"], sec["pd"]["emax_score"], sec["pd"]["ec50_mg_per_l"])
    except DomainError as e:
        raise ConfigError("pd", str(e)) from None
    try:
        corridor = Corridor(sec["corridor"]["x_min_mg_per_l"], sec["corridor"]["x_max_mg_per_l"])
    except DomainError as e:
        raise ConfigError("corridor", str(e)) from None
    cl = sec["clamps"]
    try:
        clamps = Clamps.from_mg(cl["phi_lo_h"], cl["phi_hi_h"], cl["f_lo_mg"], cl["f_hi_mg"], plant.vd)
    except DomainError as e:
        raise ConfigError("clamps", str(e)) from None
    if vals["mode"] not in MODES:
        raise ConfigError("mode", f"must be one of {', '.join(MODES)}")
    target = vals["phi_slope_target_h_per_mg_per_l"]
    if target is not None:
        target = _num("", "phi_slope_target_h_per_mg_per_l", target)
    controller = None
    if vals["controller"] is not None:
        try:
            controller = Controller.from_dict(vals["controller"])
        except (KeyError, TypeError, ValueError) as e:
            raise ConfigError("controller", f"invalid controller object ({e})") from None
    if vals["start_mode"] not in ("event-triggered", "immediate", "scheduled"):
        raise ConfigError("start_mode", "must be event-triggered, immediate or scheduled")
    t0 = None if vals["t0_h"] is None else _num("", "t0_h", vals["t0_h"])
    if vals["start_mode"] == "scheduled" and (t0 is None or t0 < 0):
        raise ConfigError("t0_h", "scheduled start needs t0_h >= 0")
    schedule = pib_schedule()
    if vals["schedule"] is not None:
        try:
            schedule = [(float(t), float(d)) for t, d in vals["schedule"]]
        except (TypeError, ValueError):
            raise ConfigError("schedule", "expected a list of [t_h, dose_mg] pairs") from None
    dose = _num("", "initial_dose_mg", vals["initial_dose_mg"])
    if dose < 0:
        raise ConfigError("initial_dose_mg", "must be non-negative")
    return RunConfig(
        plant, pd, corridor, clamps, vals["mode"], target, controller, dose,
        vals["start_mode"], t0,
        _num("", "horizon_h", vals["horizon_h"], positive=True),
        _num("", "sample_step_h", vals["sample_step_h"], positive=True),
        schedule, Path(vals["out_dir"]),
    )


def build_controller(cfg: RunConfig):
    """(controller, cycle, label) for the configured mode."""
    cycle = solve_corridor(cfg.corridor, cfg.plant)
    if cfg.controller is not None:
        return cfg.controller, cycle, "explicit"
    if cfg.mode == "open-loop-pib":
        raise ConfigError("mode", "open-loop-pib has no feedback controller")
    if cfg.case is not None:
        c = table_controller(cfg.case, cycle, cfg.plant, cfg.pd, cfg.clamps)
        return c, cycle, "paper-table"
    target = cfg.phi_slope_target
    if target is None:
        target = phi_star_slope(cycle, cfg.plant)
    try:
        c = synthesize_coeffs(cycle, cfg.plant, cfg.pd, target, cfg.clamps)
    except DesignError as e:
        raise ConfigError("clamps", str(e)) from None
    return c, cycle, "synthesized"


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.bool_):
        return bool(o)
    if isinstance(o, Path):
        return str(o)
    raise TypeError(type(o))


def _write(out: Path, name: str, payload):
    out.mkdir(parents=True, exist_ok=True)
    path = out / name
    if isinstance(payload, str):
        path.write_text(payload)
    else:
        path.write_text(json.dumps(payload, indent=2, sort_keys=True, default=_json_default) + "\n")
    return path


def _bounds_payload(c, cfg):
    try:
        rep = iterate_bounds(c, cfg.plant)
    except CertificateRefused as e:
        lo, hi = coarse_bounds(Clamps.of(c), cfg.plant)
        return None, {"refused": str(e), "coarse_lo": lo, "coarse_hi": hi}
    return rep, rep.to_dict()


def cmd_design(cfg: RunConfig) -> int:
    c, cycle, label = build_controller(cfg)
    report = analyze(c, cfg.plant, cycle.x_star)
    k1, k2, k3, k4 = c.k
    payload = {
        "cycle": cycle.to_dict(),
        "coefficients": {"k1": k1, "k2": k2, "k3": k3, "k4": k4},
        "mode": label,
        "controller": c.to_dict(),
        "feedback": classify_feedback(c),
        "compatibility": validate_compatibility(cfg.corridor, Clamps.of(c), cfg.plant).to_dict(),
        "certificates": report.to_dict(),
    }
    _write(cfg.out_dir, "design.json", payload)
    print(f"design: T={cycle.t_period:.4f} h lambda={cycle.lam:.4f} mg/L x*={cycle.x_star:.4f} "
          f"k=({k1:.4f}, {k2:.4f}, {k3:.4f}, {k4:.4f}) -> {report.classification}")
    return EXIT_REFUSED if report.classification == UNCERTIFIED else EXIT_OK


def cmd_analyze(cfg: RunConfig) -> int:
    c, cycle, _ = build_controller(cfg)
    x_star = cycle.x_star if cfg.controller is None else None
    report = analyze(c, cfg.plant, x_star)
    _, bounds = _bounds_payload(c, cfg)
    _write(cfg.out_dir, "analyze.json", {"stability": report.to_dict(), "bounds": bounds})
    print(f"analyze: x*={report.x_star:.6f} Q'(x*)={report.q_prime_at_star:.4g} "
          f"-> {report.classification}")
    if report.classification == UNCERTIFIED:
        print(f"analyze: no certificate; witness x = {report.witness_x}")
        return EXIT_REFUSED
    return EXIT_OK


def cmd_bounds(cfg: RunConfig) -> int:
    c, _, _ = build_controller(cfg)
    rep, payload = _bounds_payload(c, cfg)
    _write(cfg.out_dir, "bounds.json", payload)
    if rep is None:
        print(f"bounds: {payload['refused']}")
        return EXIT_REFUSED
    _write(cfg.out_dir, "bounds_sequences.csv", rep.sequences_csv())
    print(f"bounds: coarse [{rep.coarse_lo:.4f}, {rep.coarse_hi:.4f}] "
          f"tightened [{rep.m_star:.4f}, {rep.tightened_hi:.4f}] after {rep.iterations} steps")
    return EXIT_OK


def run_simulation(cfg: RunConfig):
    if cfg.mode == "open-loop-pib" and cfg.controller is None:
        return simulate_openloop(cfg.plant, cfg.pd, cfg.schedule, cfg.horizon_h, cfg.sample_step_h)
    c, cycle, _ = build_controller(cfg)
    sim = SimConfig(cfg.plant, c, cfg.initial_dose_mg, cfg.horizon_h, cfg.sample_step_h,
                    cfg.start_mode, cfg.t0_h,
                    x_target=cycle.x_star if cfg.controller is None else None)
    return simulate_closed(sim)


def cmd_simulate(cfg: RunConfig) -> int:
    trace = run_simulation(cfg)
    audit = audit_corridor(trace, cfg.corridor)
    _write(cfg.out_dir, "trace.csv", trace.trace_csv())
    _write(cfg.out_dir, "impulses.csv", trace.impulses_csv())
    _write(cfg.out_dir, "audit.json", audit.to_dict())
    lo, hi = audit.steady_span
    print(f"simulate: {len(trace.impulses)} impulses, steady span [{lo:.4f}, {hi:.4f}], "
          f"outside {100 * audit.fraction_outside:.1f}% after entry")
    return EXIT_OK


def comparison_rows(case) -> list[dict]:
    """Reported vs computed values for one reproduction preset."""
    cfg = parse_config({"mode": "open-loop-pib" if case == "pib" else f"paper-case-{case}",
                        "horizon_h": 36.0 if case == "pib" else 48.0})
    rows = []

    def row(name, reported, computed, tol, source="reported"):
        diff = abs(float(computed) - float(reported))
        rows.append({"quantity": name, "source": source, "reported": float(reported),
                     "computed": float(computed), "abs_diff": diff, "tol": tol, "ok": diff <= tol})

    plant, pd = cfg.plant, cfg.pd
    if case == "pib":
        trace = run_simulation(cfg)
        second = trace.impulses[1]
        trough = 2000.0 / plant.vd * math.exp(plant.a * 6.0)
        row("trough before 2nd dose [mg/L]", 8.876, second.x_pre, 1e-2, "closed-form")
        row("peak after 2nd dose [mg/L]", 32.686, second.x_post, 1e-2, "closed-form")
        row("trough vs exact decay chain [mg/L]", trough, second.x_pre, 1e-12, "closed-form")
        late = trace.t > 6.0
        row("any sample below 10 mg/L after first interval", 1.0,
            float(np.any(trace.x[late] < cfg.corridor.x_min)), 0.0, "narrative")
        row("any sample above 20 mg/L after first interval", 1.0,
            float(np.any(trace.x[late] > cfg.corridor.x_max)), 0.0, "narrative")
        return rows

    c, cycle, _ = build_controller(cfg)
    row("T [h]", 2.4755, cycle.t_period, 1e-3)
    row("lambda [mg/L]", 10.0, cycle.lam, 1e-3)
    row("x* [mg/L]", 10.0, cycle.x_star, 1e-3)
    row("y*max = phi(10)", 7.4124, hill(10.0, pd), 1e-3)
    row("y*min = phi(20)", 6.5510, hill(20.0, pd), 1e-3)
    row("phi(30)", 6.1206, hill(30.0, pd), 1e-3)
    row("Phi'* [h per mg/L]", 0.1786, phi_star_slope(cycle, plant), 1e-4)
    lo, hi = coarse_bounds(cfg.clamps, plant)
    row("coarse lower bound [mg/L]", 0.5673, lo, 1e-3)
    row("coarse upper bound [mg/L]", 194.9872, hi, 1e-2)
    table = TABLE_CASES[case]
    for name, printed, used in zip(("k1", "k2", "k3", "k4"),
                                   (table.k1, table.k2, table.k3, table.k4), c.k):
        row(name, printed, used, 1e-3)
    trace = run_simulation(cfg)
    audit = audit_corridor(trace, cfg.corridor)
    if case == 1:
        row("F'(x*) for Phi'(x*) = 4", 21.4, deadbeat_f_slope(case_phi_target(1, cycle, plant), cycle, plant), 1e-2)
        first = trace.feedback()[0]
        row("x at first feedback impulse [mg/L]", 10.0, first.x_pre, 1e-6, "deadbeat")
        row("steady lower [mg/L]", 10.0, audit.steady_span[0], 1e-3)
        row("steady upper [mg/L]", 20.0, audit.steady_span[1], 1e-3)
    else:
        if case == 2:
            row("t1 [h]", 2.7085, trace.feedback()[0].t, 2e-3)
        rep = iterate_bounds(c, plant)
        row("tightened lower m* [mg/L]", 10.0, rep.m_star, 1e-3)
        row("tightened upper [mg/L]", 20.0, rep.tightened_hi, 1e-3)
        row("psi iterations to 1e-3 gap", 3, rep.steps_to_gap(1e-3), 2)
    return rows


def cmd_reproduce(cfg: RunConfig, case) -> int:
    rows = comparison_rows(case)
    name = f"case-{case}" if case != "pib" else "pib"
    _write(cfg.out_dir, f"reproduce_{name}.json", rows)
    lines = ["quantity,source,reported,computed,abs_diff,tol,ok"]
    for r in rows:
        lines.append(",".join([r["quantity"], r["source"], repr(r["reported"]), repr(r["computed"]),
                               repr(r["abs_diff"]), repr(r["tol"]), str(r["ok"])]))
    _write(cfg.out_dir, f"reproduce_{name}.csv", "\n".join(lines) + "\n")
    width = max(len(r["quantity"]) for r in rows)
    print(f"{'quantity':<{width}}  {'reported':>12}  {'computed':>14}  {'abs diff':>10}  ok")
    for r in rows:
        print(f"{r['quantity']:<{width}}  {r['reported']:>12.6g}  {r['computed']:>14.8g}  "
              f"{r['abs_diff']:>10.2e}  {'yes' if r['ok'] else 'NO'}")
    return EXIT_OK if all(r["ok"] for r in rows) else EXIT_MISMATCH


def _parse_case(text):
    t = str(text).lower().removeprefix("case-").removeprefix("case")
    if t == "pib":
        return "pib"
    if t in ("1", "2", "3"):
        return int(t)
    raise argparse.ArgumentTypeError(f"unknown case {text!r}")


def make_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pulsedose", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("design", "analyze", "simulate", "bounds", "reproduce"):
        s = sub.add_parser(name)
        if name == "reproduce":
            s.add_argument("which", nargs="?", type=_parse_case, help="case-1, case-2, case-3 or pib")
        s.add_argument("--config", type=Path)
        s.add_argument("--out", type=Path)
        s.add_argument("--case", type=_parse_case)
        s.add_argument("--mode", choices=("synthesized", "paper-table"))
        s.add_argument("--horizon", type=float)
        s.add_argument("--step", type=float)
    return p


def _load(args) -> RunConfig:
    raw = {}
    if args.config is not None:
        try:
            raw = json.loads(args.config.read_text())
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError("--config", str(e)) from None
    if args.horizon is not None:
        raw["horizon_h"] = args.horizon
    if args.step is not None:
        raw["sample_step_h"] = args.step
    if args.out is not None:
        raw["out_dir"] = str(args.out)
    cfg = parse_config(raw)
    if args.case == "pib":
        return replace(cfg, mode="open-loop-pib")
    if args.case is not None:
        if args.mode == "synthesized":
            cycle = solve_corridor(cfg.corridor, cfg.plant)
            return replace(cfg, mode="synthesized",
                           phi_slope_target=case_phi_target(args.case, cycle, cfg.plant))
        return replace(cfg, mode=f"paper-case-{args.case}")
    if args.mode == "paper-table":
        raise ConfigError("--mode", "paper-table needs --case 1, 2 or 3")
    return cfg


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    try:
        if args.command == "reproduce":
            case = args.which if args.which is not None else args.case
            if case is None:
                raise ConfigError("case", "reproduce needs a case (case-1, case-2, case-3, pib)")
            args.case = None
            cfg = _load(args)
            return cmd_reproduce(cfg, case)
        cfg = _load(args)
        return {"design": cmd_design, "analyze": cmd_analyze,
                "simulate": cmd_simulate, "bounds": cmd_bounds}[args.command](cfg)
    except (ConfigError, DomainError, DesignError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
