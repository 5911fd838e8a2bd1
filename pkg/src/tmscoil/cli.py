"""Command-line driver: calibrate, run, sweep, report.

Exit codes: 0 success, 2 configuration error, 3 planning abort, 4 I/O failure.
The default output root is ``$TMSCOIL_OUT`` or ``./runs``.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
import warnings
from dataclasses import replace
from pathlib import Path

from . import experiments as ex
from . import geometry as geo
from .configs import ConfigError, bundled_names, load_config
from .trajectory import PlanningError

EXIT_OK, EXIT_CONFIG, EXIT_PLANNING, EXIT_IO = 0, 2, 3, 4
OUT_ENV = "TMSCOIL_OUT"


def _out_root(arg: str | None) -> Path:
    return Path(arg or os.environ.get(OUT_ENV) or "runs")


def _seed(text: str) -> int:
    try:
        v = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}")
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be a 64-bit unsigned value")
    return v


def _values(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _apply_overrides(sc: ex.Scenario, args) -> ex.Scenario:
    if args.seed is not None:
        sc = replace(sc, seed=args.seed)
    if args.f2_sign is not None:
        sc = replace(sc, f2_sign=args.f2_sign)
    return sc


# --- commands ----------------------------------------------------------------

def _load_samples(path: Path) -> list:
    doc = json.loads(path.read_text())
    rows = doc.get("samples", doc) if isinstance(doc, dict) else doc
    if not isinstance(rows, list) or not rows:
        raise ConfigError(f"{path}: no calibration samples")
    out = []
    for i, row in enumerate(rows):
        try:
            out.append((geo.Pose.from_dict(row["bTe"]).relabel("b", "e"),
                        geo.Pose.from_dict(row["eTt"]).relabel("e", "t"),
                        geo.Pose.from_dict(row["cTt"]).relabel("c", "t")))
        except (AttributeError, KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"{path}: sample {i}: {exc}") from exc
    return out


def cmd_calibrate(args) -> int:
    try:
        samples = _load_samples(Path(args.samples))
    except FileNotFoundError:
        raise ConfigError(f"samples file not found: {args.samples}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{args.samples}: invalid JSON ({exc})")
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", geo.CalibrationWarning)
        bTc = geo.calibrate_camera_to_base(samples)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    result = {"bTc": bTc.to_dict(), "residuals": geo.calibration_residuals(samples, bTc),
              "warnings": [str(w.message) for w in caught]}
    text = json.dumps(result, indent=2)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text + "\n")
    print(text)
    return EXIT_OK


def cmd_run(args) -> int:
    doc = load_config(args.scenario, args.scene)
    sc = _apply_overrides(doc.scenario, args)
    root = _out_root(args.out)
    runs = [replace(sc, name=f"{sc.name}_{v}", variant=v) for v in doc.compare_variants] or [sc]
    for run in runs:
        log = ex.run_scenario(run)
        d = ex.write_outputs(root, run.name, log, plots=args.plots)
        s = ex.summarize(log) if len(log) else ex.SummaryMetrics()
        print(f"{run.name}: {_fmt_summary(s)} -> {d}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    doc = load_config(args.scenario, args.scene)
    sc = _apply_overrides(doc.scenario, args)
    axis = args.axis or (doc.sweep or {}).get("axis")
    if axis is None:
        raise ConfigError("no sweep axis given (use --axis force|kp)")
    if axis not in ex.SWEEP_AXES:
        raise ConfigError(f"unknown sweep axis {axis!r}")
    values = args.values
    if values is None:
        values = doc.sweep["values"] if doc.sweep and doc.sweep["axis"] == axis else list(ex.SWEEP_AXES[axis])
    summaries, logs = ex.run_sweep(sc, axis, values, workers=args.workers, keep_logs=True)
    root = _out_root(args.out)
    for run, log in zip(ex.sweep_scenarios(sc, axis, values), logs):
        ex.write_outputs(root, run.name, log, plots=args.plots)
    table = ex.comparison_table(axis, values, summaries)
    path = root / f"{sc.name}_sweep_{axis}.csv"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(table)
    print(table, end="")
    print(f"table -> {path}")
    return EXIT_OK


def cmd_report(args) -> int:
    path = Path(args.log)
    if path.is_dir():
        path = path / "log.csv"
    try:
        text = path.read_text()
    except FileNotFoundError:
        raise ConfigError(f"log not found: {path}")
    meta = {}
    side = path.with_name("summary.json")
    if side.exists():
        meta = json.loads(side.read_text()).get("meta", {})
    log = ex.TimeSeriesLog.from_csv(text, meta)
    if len(log) == 0:
        print("empty log: nothing to summarize")
        return EXIT_OK
    s = ex.summarize(log)
    text = json.dumps(s.to_dict(), indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n")
    print(text)
    if args.plots:
        from .plotting import write_plots
        write_plots(path.parent, log)
    return EXIT_OK


def _fmt_summary(s: ex.SummaryMetrics) -> str:
    def f(v):
        return "null" if v is None or (isinstance(v, float) and math.isnan(v)) else f"{v:.3f}"
    return (f"e_converged={f(s.e_converged)} mm, t_below_5mm={f(s.t_below_5mm)} s, "
            f"t_above_20N={f(s.t_above_20N)} s, steady_ratio={f(s.steady_ratio)} mm")


# --- parser ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tmscoil", description=__doc__,
                                formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("calibrate", help="estimate the camera-to-base transform from samples")
    c.add_argument("samples", help="JSON file with a 'samples' list of {bTe, eTt, cTt} poses")
    c.add_argument("--out", help="also write the result JSON to this file")
    c.set_defaults(func=cmd_calibrate)

    def scenario_args(sp):
        sp.add_argument("scenario", nargs="?", default="scheduled",
                        help=f"bundled name ({', '.join(bundled_names())}) or scenario JSON path")
        sp.add_argument("--scene", help="scene JSON file replacing the scenario's scene block")
        sp.add_argument("--out", help=f"output root (default ${OUT_ENV} or ./runs)")
        sp.add_argument("--seed", type=_seed, help="override the scenario seed")
        sp.add_argument("--plots", action="store_true", help="write plot_<channel>.svg files")
        sp.add_argument("--f2-sign", choices=("error", "printed"), help="F2 direction convention")

    r = sub.add_parser("run", help="run one scenario (or each listed variant)")
    scenario_args(r)
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", help="run a force or k_p sweep and write a comparison table")
    scenario_args(s)
    s.add_argument("--axis", choices=sorted(ex.SWEEP_AXES), help="sweep axis (default from the config)")
    s.add_argument("--values", type=_values, help="comma-separated values, e.g. 0,1,2,4,4.5")
    s.add_argument("--workers", type=int, default=1, help="parallel worker processes")
    s.set_defaults(func=cmd_sweep)

    rep = sub.add_parser("report", help="re-summarize an existing log.csv")
    rep.add_argument("log", help="log.csv or a run directory")
    rep.add_argument("--out", help="write the summary JSON to this file")
    rep.add_argument("--plots", action="store_true", help="write plots next to the log")
    rep.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except PlanningError as exc:
        print(f"planning aborted: {exc}", file=sys.stderr)
        return EXIT_PLANNING
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
