"""Command-line entry point: run, sweep, oracle, plot, validate.

Log verbosity comes from the FEMTOQ_LOG environment variable (DEBUG, INFO,
WARNING, ...; default WARNING).
"""

from __future__ import annotations

import argparse
import contextlib
import json
import logging
import os
import sys
from pathlib import Path

from . import charts
from .baselines import write_grid_csv
from .errors import ConfigurationError, FemtoError
from .mac import Algorithm
from .scenario import (ScenarioConfig, load_config, read_metrics_csv, run_oracle, run_scenario,
                       run_sweep, write_metrics_csv, write_summary_csv)

ALGORITHMS = [a.value for a in Algorithm]


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _common(p: argparse.ArgumentParser, out_help: str):
    p.add_argument("--config", default="two_fbs",
                   help="scenario TOML path or shipped name (one_fbs, two_fbs, incremental)")
    p.add_argument("--seed", type=int)
    p.add_argument("--algorithm", choices=ALGORITHMS)
    p.add_argument("--frames", type=int)
    p.add_argument("--out", help=out_help)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="femtoq", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("run", help="simulate one scenario and write the metrics CSV")
    _common(p, "metrics CSV path (default: stdout)")
    p.add_argument("--trace", metavar="PATH", help="write the MAC message trace as JSON lines")

    p = sub.add_parser("sweep", help="run every (seed, algorithm) pair and write a summary CSV")
    _common(p, "summary CSV path (default: stdout)")
    p.add_argument("--seeds", default="1-10", help="e.g. 1-20 or 1,2,5")
    p.add_argument("--algorithms", default="pdpa,cdpa", help="comma list of pdpa, cdpa, ep")
    p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("oracle", help="exhaustive search over every joint FBS action")
    _common(p, "result JSON path (default: stdout)")
    p.add_argument("--dump-grid", nargs="?", const="oracle_grid.csv", metavar="PATH",
                   help="also write the full grid as CSV (default path oracle_grid.csv)")
    p.add_argument("--slack", type=float, default=0.0, help="feasibility slack on the MBS target")

    p = sub.add_parser("plot", help="render an SVG chart from metrics CSV files")
    p.add_argument("inputs", nargs="+", help="metrics CSV files from `run`")
    p.add_argument("--series", default="c_m", help="c_m, c_0 or c_n_<i>")
    p.add_argument("--labels", help="comma list of legend labels, one per input")
    p.add_argument("--target", type=float, help="reference line (default: from run metadata)")
    p.add_argument("--title", default="")
    p.add_argument("--out", default="chart.svg")

    p = sub.add_parser("validate", help="check a scenario config without running it")
    p.add_argument("--config", default="two_fbs")
    return parser


def parse_seeds(text: str) -> list[int]:
    seeds = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part:
            lo, hi = part.split("-", 1)
            seeds.extend(range(int(lo), int(hi) + 1))
        else:
            seeds.append(int(part))
    if not seeds:
        raise UsageError(f"no seeds in {text!r}")
    return seeds


def _config(args) -> ScenarioConfig:
    cfg = load_config(args.config)
    return cfg.with_overrides(seed=args.seed, algorithm=args.algorithm, frames=args.frames)


@contextlib.contextmanager
def _output(path: str | None):
    if path is None:
        yield sys.stdout
    else:
        with open(path, "w", newline="") as f:
            yield f


def meta_path(csv_path: str | Path) -> Path:
    return Path(f"{csv_path}.meta.json")


def cmd_run(args) -> int:
    cfg = _config(args)
    trace_file = open(args.trace, "w") if args.trace else None
    try:
        trace = (lambda m: trace_file.write(m.to_json() + "\n")) if trace_file else None
        records = run_scenario(cfg, trace=trace)
    finally:
        if trace_file:
            trace_file.close()
    with _output(args.out) as out:
        write_metrics_csv(records, len(cfg.fbs), out)
    if args.out:
        meta = {"config_sha256": cfg.config_hash(), "seed": cfg.scenario.seed,
                "algorithm": cfg.scenario.algorithm.value, "scenario": cfg.scenario.name,
                "frames": cfg.scenario.frames, "target_capacity": cfg.learning.target_capacity}
        meta_path(args.out).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return 0


def cmd_sweep(args) -> int:
    cfg = _config(args)
    algorithms = [a.strip() for a in args.algorithms.split(",") if a.strip()]
    bad = [a for a in algorithms if a not in ALGORITHMS]
    if bad or not algorithms:
        raise UsageError(f"unknown algorithms {bad}; choose from {ALGORITHMS}")
    rows = run_sweep(cfg, parse_seeds(args.seeds), algorithms, workers=args.workers)
    with _output(args.out) as out:
        write_summary_csv(rows, len(cfg.fbs), out)
    failed = [r for r in rows if r["error"]]
    for r in failed:
        print(f"femtoq: seed {r['seed']} {r['algorithm']}: {r['error']}", file=sys.stderr)
    return 1 if failed else 0


def cmd_oracle(args) -> int:
    cfg = _config(args)
    space = cfg.action_space()
    res = run_oracle(cfg, slack=args.slack, keep_grid=bool(args.dump_grid))
    summary = {"best_joint_action": list(res.best_joint_action),
               "best_levels_db": [list(space.tuple_of(a)) for a in res.best_joint_action],
               "best_c0": res.best_c0, "best_cm": res.best_cm, "evaluations": res.evaluations,
               "feasible": res.feasible, "target_capacity": cfg.learning.target_capacity,
               "config_sha256": cfg.config_hash()}
    with _output(args.out) as out:
        out.write(json.dumps(summary, indent=2) + "\n")
    if args.dump_grid:
        with open(args.dump_grid, "w", newline="") as f:
            write_grid_csv(res, f, space)
    return 0


def cmd_plot(args) -> int:
    labels = args.labels.split(",") if args.labels else [Path(p).stem for p in args.inputs]
    if len(labels) != len(args.inputs):
        raise UsageError("--labels needs one label per input")
    series, metadata = [], []
    target = args.target
    for path, label in zip(args.inputs, labels):
        cols = read_metrics_csv(path)
        if args.series not in cols:
            raise ConfigurationError(f"{path}: no column {args.series!r}; have {list(cols)}")
        pts = [(f, v) for f, v in zip(cols["frame"], cols[args.series]) if v is not None]
        series.append(charts.Series(label, [p[0] for p in pts], [p[1] for p in pts]))
        mp = meta_path(path)
        meta = json.loads(mp.read_text()) if mp.exists() else {"config_sha256": None, "seed": None}
        meta["input"] = str(path)
        metadata.append(meta)
        if target is None and meta.get("target_capacity") is not None:
            target = meta["target_capacity"]
    if target is None:
        target = 11.0
    ylabel = {"c_m": "MBS capacity (bps/Hz)", "c_0": "aggregate FBS capacity (bps/Hz)"}.get(
        args.series, f"{args.series} (bps/Hz)")
    svg = charts.render_svg(series, title=args.title, ylabel=ylabel, reference=target,
                            metadata=metadata)
    Path(args.out).write_text(svg)
    return 0


def cmd_validate(args) -> int:
    cfg = load_config(args.config)
    print(f"ok: {cfg.scenario.name} ({len(cfg.fbs)} FBS, {cfg.scenario.frames} frames, "
          f"sha256 {cfg.config_hash()[:12]})")
    return 0


COMMANDS = {"run": cmd_run, "sweep": cmd_sweep, "oracle": cmd_oracle, "plot": cmd_plot,
            "validate": cmd_validate}


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("FEMTOQ_LOG", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args = build_parser().parse_args(argv)
        return COMMANDS[args.command](args)
    except (UsageError, ConfigurationError) as e:
        print(f"femtoq: {str(e).splitlines()[0]}", file=sys.stderr)
        return 2
    except (FemtoError, OSError, ValueError) as e:
        print(f"femtoq: {str(e).splitlines()[0]}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
