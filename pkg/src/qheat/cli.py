"""Command-line front end: deterministic CSV/JSONL artifact emission.

Subcommands wrap one analysis each (steady, landscape, adapt, sweep, joint).
Data goes to files in the output directory, diagnostics to stderr, nothing to
stdout; reruns with identical config and seed are byte-identical. Exit codes:
0 success, 1 runtime failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .config import ConfigError, GridConfig, RunConfig, load_config, load_schedule
from .controller import (
    NotOperableError,
    landscape,
    operability_form,
    optimal_position,
)
from .engine import adaptability, carnot_efficiency, steady_currents
from .joint import (
    ConvergenceTimeoutError,
    TruncationError,
    build_joint_generator,
    conditional_current_comparison,
    joint_steady_state,
)
from .learner import run_schedule


def _fmt(value) -> str:
    """CSV cell: 12 significant digits for floats, lowercase booleans, '' for None."""
    if value is None:
        return ""
    if isinstance(value, bool) or isinstance(value, np.bool_):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".12g")
    return str(value)


def _write_csv(path: Path, header, rows):
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _write_json(path: Path, obj):
    with open(path, "w", newline="\n") as fh:
        json.dump(obj, fh, indent=2)
        fh.write("\n")


def _form_dict(form) -> dict:
    return {
        "a": form.a,
        "b": form.b,
        "c": form.c,
        "discriminant": form.discriminant,
        "kind": form.kind,
        "root_lo": form.root_lo,
        "root_hi": form.root_hi,
        "theta": form.theta,
    }


def cmd_steady(cfg: RunConfig, out: Path) -> int:
    x = cfg.steady_x if cfg.steady_x is not None else 0.0
    rep = steady_currents(cfg.engine, cfg.baths, x)
    _write_json(
        out / "steady.json",
        {
            "x": x,
            "populations": [rep.p1, rep.p2, rep.p3],
            "J12": rep.J12,
            "J13": rep.J13,
            "J23": rep.J23,
            "power": rep.power,
            "eta": rep.eta,
            "operable": rep.operable,
            "adaptability": adaptability(cfg.engine, cfg.baths, x),
            "eta_carnot": carnot_efficiency(cfg.baths.theta),
        },
    )
    return 0


def cmd_landscape(cfg: RunConfig, out: Path) -> int:
    if cfg.grid is None:
        raise ConfigError("landscape command needs a [landscape] grid section")
    samples = landscape(
        cfg.engine, cfg.baths, cfg.controller,
        (cfg.grid.x_min, cfg.grid.x_max), cfg.grid.n_points,
    )
    _write_csv(
        out / "landscape.csv",
        ("x", "J12", "J13", "J23", "eta", "pC", "operable"),
        ((s.x, s.J12, s.J13, s.J23, s.eta, s.pC, s.operable) for s in samples),
    )
    form = operability_form(cfg.engine, cfg.baths)
    summary = {
        "form": _form_dict(form),
        "eta_carnot": carnot_efficiency(cfg.baths.theta),
        "operable_somewhere": form.operable_somewhere,
        "x_opt": None,
        "power_opt": None,
    }
    try:
        x_opt, power_opt = optimal_position(cfg.engine, cfg.baths)
        summary["x_opt"] = x_opt
        summary["power_opt"] = power_opt
    except NotOperableError as exc:
        summary["diagnosis"] = str(exc)
    _write_json(out / "landscape_summary.json", summary)
    return 0


def cmd_adapt(cfg: RunConfig, out: Path, schedule_path, seed) -> int:
    path = schedule_path or (cfg.adapt.schedule_path if cfg.adapt else None)
    if path is None:
        raise ConfigError("adapt command needs --schedule or an [adapt] schedule path")
    schedule = load_schedule(path)
    if seed is None:
        seed = cfg.seed
    if seed is not None:
        schedule = replace(schedule, seed=seed)
    records = run_schedule(cfg.engine, cfg.controller, schedule, gamma12=cfg.baths.gamma12)
    operable = [r for r in records if r.status != "not-operable"]
    powers = [abs(r.power_after) for r in operable if r.power_after is not None]
    summary = {
        "summary": True,
        "steps": len(records),
        "fraction_operable": len(operable) / len(records),
        "mean_abs_power_operable": sum(powers) / len(powers) if powers else None,
    }
    with open(out / "adapt.jsonl", "w", newline="\n") as fh:
        for rec in records:
            fh.write(json.dumps(rec.to_dict()) + "\n")
        fh.write(json.dumps(summary) + "\n")
    return 0


def cmd_sweep(cfg: RunConfig, out: Path) -> int:
    if cfg.sweep is None:
        raise ConfigError("sweep command needs a [sweep] section")
    sw = cfg.sweep
    t13s = np.linspace(sw.T13_min, sw.T13_max, sw.n_points)
    t23s = np.linspace(sw.T23_min, sw.T23_max, sw.n_points)
    rows = []
    for t13 in t13s:
        for t23 in t23s:
            baths = replace(cfg.baths, T13=float(t13), T23=float(t23))
            eta_c = carnot_efficiency(baths.theta)
            try:
                x_opt, power_opt = optimal_position(cfg.engine, baths)
                rows.append((t13, t23, eta_c, abs(power_opt), x_opt, True))
            except NotOperableError:
                rows.append((t13, t23, eta_c, None, None, False))
    _write_csv(
        out / "sweep.csv",
        ("T13", "T23", "eta_carnot", "max_abs_power", "x_opt", "operable"),
        rows,
    )
    return 0


def cmd_joint(cfg: RunConfig, out: Path) -> int:
    if cfg.joint is None:
        raise ConfigError("joint command needs a [joint] section")
    jc = cfg.joint
    gen = build_joint_generator(cfg.engine, cfg.baths, cfg.controller, jc.joint)
    state = joint_steady_state(gen, t_max=jc.t_max, dt=jc.dt, stop_tol=jc.stop_tol)
    cmp = conditional_current_comparison(gen, state)
    _write_csv(
        out / "joint.csv",
        ("x", "marginal", "pC_analytic", "J12_conditional_numeric", "J12_conditional_analytic"),
        zip(
            cmp["x"],
            cmp["marginal"],
            cmp["analytic_density"],
            (None if np.isnan(v) else v for v in cmp["J12_numeric"]),
            cmp["J12_analytic"],
        ),
    )
    l2 = float(
        np.linalg.norm(cmp["marginal"] - cmp["analytic_density"])
        / np.linalg.norm(cmp["analytic_density"])
    )
    _write_json(
        out / "joint_summary.json",
        {
            "fock_dim": jc.joint.fock_dim,
            "coupling_scale": jc.joint.coupling_scale,
            "oscillator_frequency": gen.omega,
            "thermal_occupancy": gen.nbar,
            "occupancy_tail": gen.tail_mass,
            "negativity": state.negativity,
            "marginal_l2_error": l2,
            "converged": state.converged,
            "t_final": state.t_final,
            "residual": state.residual,
        },
    )
    return 0


def _parse_grid_flag(text: str) -> GridConfig:
    parts = text.split(":")
    if len(parts) != 3:
        raise ConfigError(f"--grid expects MIN:MAX:N, got {text!r}")
    try:
        lo, hi, n = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError:
        raise ConfigError(f"--grid expects numbers MIN:MAX:N, got {text!r}")
    if n < 2 or hi <= lo:
        raise ConfigError(f"--grid needs N >= 2 and MAX > MIN, got {text!r}")
    return GridConfig(x_min=lo, x_max=hi, n_points=n)


def _apply_overrides(cfg: RunConfig, args) -> RunConfig:
    if args.grid is not None:
        g = _parse_grid_flag(args.grid)
        if args.command == "joint":
            if cfg.joint is None:
                raise ConfigError("--grid for joint needs a [joint] section in the config")
            joint = replace(
                cfg.joint,
                joint=replace(
                    cfg.joint.joint, x_min=g.x_min, x_max=g.x_max, n_points=g.n_points
                ),
            )
            cfg = replace(cfg, joint=joint)
        else:
            cfg = replace(cfg, grid=g)
    return cfg


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qheat",
        description="Adaptive three-level quantum heat engine simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("steady", "stationary state, currents and operability at one position"),
        ("landscape", "conditional power/efficiency over a position grid (CSV)"),
        ("adapt", "run the feedback loop over a temperature schedule (JSONL)"),
        ("sweep", "operability and maximum power over a temperature grid (CSV)"),
        ("joint", "truncated joint simulation vs closed-form marginals (CSV)"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="run configuration (TOML)")
        p.add_argument("--out", default=None, help="output directory (default from config)")
        p.add_argument("--seed", type=int, default=None, help="override the configured seed")
        p.add_argument("--grid", default=None, help="grid override MIN:MAX:N")
        if name == "adapt":
            p.add_argument("--schedule", default=None, help="temperature schedule (TOML)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        cfg = _apply_overrides(cfg, args)
        out = Path(args.out) if args.out else Path(cfg.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        if args.command == "steady":
            return cmd_steady(cfg, out)
        if args.command == "landscape":
            return cmd_landscape(cfg, out)
        if args.command == "adapt":
            schedule_path = args.schedule
            if schedule_path is None and cfg.adapt and cfg.adapt.schedule_path:
                # paths inside the config resolve relative to the config file
                schedule_path = str(Path(args.config).parent / cfg.adapt.schedule_path)
            return cmd_adapt(cfg, out, schedule_path, args.seed)
        if args.command == "sweep":
            return cmd_sweep(cfg, out)
        if args.command == "joint":
            return cmd_joint(cfg, out)
        raise AssertionError(f"unhandled command {args.command}")
    except ConfigError as exc:
        print(f"qheat: config error: {exc}", file=sys.stderr)
        return 2
    except (TruncationError, ConvergenceTimeoutError, NotOperableError, ValueError) as exc:
        print(f"qheat: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
