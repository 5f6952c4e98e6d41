"""Command-line entry point.

Exit status: 0 success, 2 usage error, 3 invalid configuration, 4 solver failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import platform
import sys
import time
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .errors import SingularMatrixError, SolverError, TopologyError, ValidationError
from .postprocess import export, write_csv
from .scenarios import apply_overrides, build_scenario, load_config, run_scenario
from .studies import StudyTable, energy_study, spatial_convergence, sweep, temporal_convergence

log = logging.getLogger("hydroelastic")

EXIT_OK, EXIT_USAGE, EXIT_INVALID, EXIT_SOLVER = 0, 2, 3, 4

#: shortcut flags forwarded to the scenario builders
_SHORTCUTS = {"k": "k", "r": "r", "xi": "xi", "omega": "omega", "nx": "nx", "nz": "nz"}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(EXIT_USAGE)


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v]


def _ints(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v]


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="hydroelastic", description="Monolithic C/DG solver for floating beams on potential flow.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, scenario_flags=True):
        sp.add_argument("--out", default="out", help="output directory (created if absent)")
        sp.add_argument("--threads", type=int, default=1, help="concurrent sweep points")
        if scenario_flags:
            src = sp.add_mutually_exclusive_group(required=True)
            src.add_argument("--scenario", help="built-in scenario name")
            src.add_argument("--config", help="JSON configuration file")
            sp.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                            help="override a configuration value (repeatable)")
            sp.add_argument("--k", type=float, help="wavenumber of the periodic scenarios")
            sp.add_argument("--r", type=int, help="polynomial order")
            sp.add_argument("--xi", type=float, help="joint stiffness parameter (khabakhpasheva)")
            sp.add_argument("--omega", type=float, help="wave frequency (liu)")
            sp.add_argument("--nx", type=int, help="horizontal cells")
            sp.add_argument("--nz", type=int, help="vertical cells")

    run = sub.add_parser("run", help="run one scenario")
    common(run)

    cs = sub.add_parser("converge-space", help="mesh refinement at a tiny time step")
    common(cs, scenario_flags=False)
    cs.add_argument("--k", type=float, default=15.0)
    cs.add_argument("--orders", type=_ints, default=[2, 3, 4])
    cs.add_argument("--r-eta", type=int, default=None, help="elevation order (default: same as the potential)")
    cs.add_argument("--nx", type=_ints, default=[16, 32, 64, 128])
    cs.add_argument("--dt", type=float, default=1e-6)
    cs.add_argument("--t-final", type=float, default=1e-4)

    ct = sub.add_parser("converge-time", help="time-step halving on a fixed mesh")
    common(ct, scenario_flags=False)
    ct.add_argument("--k", type=float, default=1.0)
    ct.add_argument("--r", type=int, default=4)
    ct.add_argument("--nx", type=int, default=128)
    ct.add_argument("--nz", type=int, default=64)
    ct.add_argument("--dt", type=_floats, default=[0.1 / 2 ** i for i in range(5)])
    ct.add_argument("--t-final", type=float, default=1.0)

    es = sub.add_parser("energy-study", help="energy error under mesh refinement and time-step sweep")
    common(es, scenario_flags=False)
    es.add_argument("--scenario", default="periodic_beam", choices=["periodic_beam", "finite_beam"])
    es.add_argument("--k", type=float, default=15.0)
    es.add_argument("--r", type=int, default=4)
    es.add_argument("--nx", type=_ints, default=[16, 32, 64, 128])
    es.add_argument("--dt", type=float, default=1e-3)
    es.add_argument("--periods", type=float, default=10.0)
    es.add_argument("--case2-nx", type=int, default=128)
    es.add_argument("--case2-dt", type=_floats, default=[4e-3, 2e-3, 1e-3, 5e-4])
    es.add_argument("--case2-periods", type=float, default=1.0)

    sw = sub.add_parser("sweep", help="run a scenario over a parameter grid")
    common(sw)
    sw.add_argument("--grid", action="append", default=[], metavar="KEY=V1,V2,...", required=True,
                    help="values of one configuration key (repeatable; the product is swept)")
    return p


# --------------------------------------------------------------------------- helpers

def _resolve_config(args):
    shortcuts = {_SHORTCUTS[k]: getattr(args, k) for k in _SHORTCUTS if getattr(args, k, None) is not None}
    if args.config:
        if shortcuts:
            raise _UsageError(f"--{', --'.join(shortcuts)} only apply to --scenario; use --set with --config")
        cfg = load_config(args.config)
    else:
        cfg = build_scenario(args.scenario, **shortcuts)
    cfg = apply_overrides(cfg, args.overrides)
    cfg.validate()
    return cfg


class _UsageError(Exception):
    pass


def _prepare_outdir(path) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ValidationError(f"cannot create output directory {out}: {exc}") from None
    return out


def _environment() -> dict:
    return {"hydroelastic": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__}


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return None if v.size > 64 else v.tolist()
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    return v


def write_metadata(outdir: Path, payload: dict) -> Path:
    path = outdir / "metadata.json"
    path.write_text(json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n")
    return path


def _write_run(res, outdir: Path, argv) -> list[Path]:
    files = export(res, "csv", outdir) if res.config["outputs"].get("csv", True) else []
    if res.config["outputs"].get("vtk"):
        files += export(res, "vtk_legacy", outdir)
    scalar_errors = {k: v for k, v in res.errors.items() if np.isscalar(v)}
    write_metadata(outdir, {"argv": list(argv), "config": res.config, "residuals": res.residuals,
                            "errors": scalar_errors, "run": res.metadata, "environment": _environment(),
                            "files": sorted(f.name for f in files)})
    return files


def _write_table(table: StudyTable, outdir: Path) -> list[Path]:
    files = [write_csv(outdir / f"{table.name}.csv", table.columns())]
    if table.slopes:
        files.append(write_csv(outdir / f"{table.name}_slopes.csv", {k: [v] for k, v in table.slopes.items()}))
    return files


def _report(table: StudyTable) -> None:
    for label, s in table.slopes.items():
        print(f"{table.name}: slope {label} = {s:.3f}")


# --------------------------------------------------------------------------- commands

def cmd_run(args, argv) -> int:
    cfg = _resolve_config(args)
    outdir = _prepare_outdir(args.out)
    res = run_scenario(cfg, outdir=outdir)
    files = _write_run(res, outdir, argv)
    for k, v in res.errors.items():
        if np.isscalar(v):
            print(f"{k} = {v:.6e}")
    print(f"max relative residual = {res.residuals['max_relative_residual']:.3e}")
    print(f"wrote {len(files) + 1} files to {outdir}")
    return EXIT_OK


def cmd_converge_space(args, argv) -> int:
    outdir = _prepare_outdir(args.out)
    table = spatial_convergence(k=args.k, orders=tuple(args.orders), nxs=tuple(args.nx), dt=args.dt,
                                t_final=args.t_final, r_eta=args.r_eta)
    _write_table(table, outdir)
    write_metadata(outdir, {"argv": list(argv), "study": table.name, "slopes": table.slopes,
                            "environment": _environment()})
    _report(table)
    return EXIT_OK


def cmd_converge_time(args, argv) -> int:
    outdir = _prepare_outdir(args.out)
    table = temporal_convergence(k=args.k, r=args.r, nx=args.nx, nz=args.nz, dts=args.dt, t_final=args.t_final)
    _write_table(table, outdir)
    write_metadata(outdir, {"argv": list(argv), "study": table.name, "slopes": table.slopes,
                            "environment": _environment()})
    _report(table)
    return EXIT_OK


def cmd_energy_study(args, argv) -> int:
    outdir = _prepare_outdir(args.out)
    case1, case2, hists = energy_study(args.scenario, k=args.k, r=args.r, nxs=tuple(args.nx), dt=args.dt,
                                       periods=args.periods, case2_nx=args.case2_nx, case2_dts=tuple(args.case2_dt),
                                       case2_periods=args.case2_periods)
    _write_table(case1, outdir)
    _write_table(case2, outdir)
    for h in hists:
        write_csv(outdir / f"{args.scenario}_energy_nx{h.nx}.csv",
                  {"t": h.times, "e_E": h.e_E, "e_E_discrete": h.e_E_discrete}, {"t": "s", "e_E": "-",
                                                                                 "e_E_discrete": "-"})
    write_metadata(outdir, {"argv": list(argv), "study": "energy", "case1": case1.rows, "case2": case2.rows,
                            "slopes": case2.slopes, "environment": _environment()})
    for row in case1.rows:
        print(f"nx={row['nx']}: max e_E = {row['max_e_E']:.3e}, trend = {row['trend']:.3e}")
    _report(case2)
    return EXIT_OK


def _parse_grid(items) -> dict:
    grid = {}
    for item in items:
        if "=" not in item:
            raise _UsageError(f"grid entry {item!r} is not of the form key=v1,v2")
        key, raw = item.split("=", 1)
        values = []
        for tok in raw.split(","):
            try:
                values.append(json.loads(tok))
            except json.JSONDecodeError:
                values.append(tok)
        grid[key.strip()] = values
    return grid


def cmd_sweep(args, argv) -> int:
    base = _resolve_config(args)
    grid = _parse_grid(args.grid)
    outdir = _prepare_outdir(args.out)
    results = sweep(base, grid, threads=max(1, args.threads))
    summary = {k: [] for k in grid}
    summary["max_relative_residual"] = []
    for i, (point, res) in enumerate(results):
        sub = _prepare_outdir(outdir / f"point_{i:03d}")
        _write_run(res, sub, argv)
        for k in grid:
            summary[k].append(point[k])
        summary["max_relative_residual"].append(res.residuals["max_relative_residual"])
        print(f"point {i:03d} {json.dumps(point)}: residual {res.residuals['max_relative_residual']:.3e}")
    numeric = {k: v for k, v in summary.items() if all(isinstance(x, (int, float)) for x in v)}
    write_csv(outdir / "sweep_summary.csv", numeric)
    write_metadata(outdir, {"argv": list(argv), "grid": grid, "points": [p for p, _ in results],
                            "environment": _environment()})
    return EXIT_OK


_COMMANDS = {"run": cmd_run, "converge-space": cmd_converge_space, "converge-time": cmd_converge_time,
             "energy-study": cmd_energy_study, "sweep": cmd_sweep}


def parse_and_dispatch(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    t0 = time.perf_counter()
    try:
        status = _COMMANDS[args.command](args, argv)
    except _UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"hydroelastic: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValidationError, TopologyError) as exc:
        print(f"hydroelastic: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (SolverError, SingularMatrixError) as exc:
        print(f"hydroelastic: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    log.info("%s finished in %.1f s", args.command, time.perf_counter() - t0)
    return status


def main(argv=None) -> int:
    return parse_and_dispatch(argv)
