"""Command line entry point: ``analyze``, ``validate`` and ``sweep``."""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .config import AnalysisConfig, Scenario, config_to_dict, load_config, load_delta
from .errors import AssumptionViolationError, ConfigParseError, MarginError
from .margins import compute_margins
from .model import check_assumptions, transformed_loops
from .report import dumps, report_to_dict, write_margin_csv, write_sweep_csv
from .sweep import gain_critical_candidates, phase_critical_set, sweep_loop
from .verify import perturbed_loop_stable, simulate_delayed_consensus, simulate_perturbed_consensus

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_ASSUMPTION = 2
EXIT_WARNINGS = 3

TRAJECTORY_ROWS = 5000


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="consensus-margins", description="Robustness margins of linear consensus networks.")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="YAML configuration file")
    common.add_argument("--out", help="output directory (overrides the config)")
    common.add_argument("--seed", type=int, default=None, help="optimizer seed (default 42)")
    common.add_argument("--grid-points", type=int, default=None, help="frequency grid size")
    common.add_argument("--strict", action="store_true", help="exit with status 3 when warnings are raised")

    a = sub.add_parser("analyze", parents=[common], help="compute all margins and write report.json")
    a.add_argument("--csv", action="store_true", help="also write per-frequency margins.csv")
    v = sub.add_parser("validate", parents=[common], help="time-domain and spectral checks")
    v.add_argument("--tau", type=float, action="append", help="uniform input delay to simulate (repeatable)")
    v.add_argument("--delta", action="append", help="perturbation file to simulate (repeatable)")
    sub.add_parser("sweep", parents=[common], help="write the raw frequency sweep to sweep.csv")
    return ap


def _apply_overrides(cfg: AnalysisConfig, args) -> AnalysisConfig:
    if args.seed is not None:
        cfg = replace(cfg, optimizer=replace(cfg.optimizer, seed=args.seed))
    if args.grid_points is not None:
        cfg = replace(cfg, sweep=replace(cfg.sweep, grid_points=args.grid_points))
    return cfg


def _out_dir(cfg: AnalysisConfig, args) -> Path:
    out = Path(args.out) if args.out else cfg.resolve(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _fmt(x: float) -> str:
    return f"{x:.6g}"


def cmd_analyze(cfg: AnalysisConfig, args, out: Path) -> list[str]:
    model, graph = cfg.model, cfg.graph
    assumptions = check_assumptions(model, graph)
    loops = transformed_loops(model, graph)
    report = compute_margins(model, loops, cfg.margin_config)
    doc = report_to_dict(report, loops, config_to_dict(cfg), assumptions.as_dict())
    (out / "report.json").write_text(dumps(doc))
    if args.csv:
        write_margin_csv(out / "margins.csv", report, loops)
    print(f"phase margin  {_fmt(report.phase_margin_rad)} rad")
    print(f"delay margin  {_fmt(report.delay_margin_s)} s")
    lo, hi = report.gain_sv_interval
    print(f"gain margin   {_fmt(report.gain_margin)}  (singular values in [{_fmt(lo)}, {_fmt(hi)}])")
    print(f"report        {out / 'report.json'}")
    return report.warnings


def _scenarios(cfg: AnalysisConfig, args) -> list[Scenario]:
    if args.tau or args.delta:
        scen = [Scenario(f"tau={t:g}", tau=t) for t in args.tau or []]
        scen += [Scenario(Path(d).stem, delta=str(Path(d).resolve())) for d in args.delta or []]
        return scen
    return list(cfg.simulate.scenarios) if cfg.simulate else []


def cmd_validate(cfg: AnalysisConfig, args, out: Path) -> list[str]:
    if cfg.simulate is None:
        raise ConfigParseError("validate needs a 'simulate' section with x0")
    model, graph = cfg.model, cfg.graph
    loops = transformed_loops(model, graph)
    x0 = np.array(cfg.simulate.x0)
    results = []
    warnings = []
    for sc in _scenarios(cfg, args):
        horizon = sc.horizon or cfg.simulate.horizon
        dt = sc.dt or cfg.simulate.dt
        entry = {"name": sc.name}
        if sc.delta is not None:
            D = load_delta(cfg.resolve(sc.delta))
            entry.update(delta_phases=D.phases, delta_gains=D.gains)
            entry["loops"] = [
                {"p": lp.p, "stable": ok, "abscissa": a}
                for lp in loops
                for ok, a in [perturbed_loop_stable(lp, D)]
            ]
            res = simulate_perturbed_consensus(model, graph, D, x0, horizon, dt)
        else:
            tau = float(sc.tau or 0.0)
            if tau > 0:
                dt = min(dt, tau / 10)
            entry["tau"] = tau
            res = simulate_delayed_consensus(model, graph, tau, x0, horizon, dt)
        entry.update(verdict=res.verdict, horizon=horizon, dt=dt,
                     final_disagreement=res.disagreement[-1], final_time=res.times[-1])
        safe = sc.name.replace("=", "_").replace("/", "_")
        res.write_csv(out / f"trajectory_{safe}.csv", stride=max(1, len(res.times) // TRAJECTORY_ROWS))
        results.append(entry)
        print(f"{sc.name:<20} {res.verdict}  (disagreement {res.disagreement[-1]:.3g} at t={res.times[-1]:g})")
    if not results:
        warnings.append("no scenarios to validate")
    (out / "validate.json").write_text(dumps({"tool_version": __version__, "scenarios": results, "warnings": warnings}))
    return warnings


def cmd_sweep(cfg: AnalysisConfig, args, out: Path) -> list[str]:
    model, graph = cfg.model, cfg.graph
    loops = transformed_loops(model, graph)
    rows = []
    for lp in loops:
        data = sweep_loop(lp, cfg.sweep)
        rows.append((data, phase_critical_set(lp, cfg.sweep, data), gain_critical_candidates(lp, cfg.sweep, data)))
    write_sweep_csv(out / "sweep.csv", rows, model.n)
    print(f"sweep         {out / 'sweep.csv'} ({len(loops)} loops)")
    return []


COMMANDS = {"analyze": cmd_analyze, "validate": cmd_validate, "sweep": cmd_sweep}


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = _apply_overrides(load_config(args.config), args)
        out = _out_dir(cfg, args)
        warnings = COMMANDS[args.command](cfg, args, out)
    except (ConfigParseError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except AssumptionViolationError as exc:
        print(f"assumption violated: {exc}", file=sys.stderr)
        return EXIT_ASSUMPTION
    except MarginError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    for w in warnings:
        print(f"warning: {w}", file=sys.stderr)
    if args.strict and warnings:
        return EXIT_WARNINGS
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
