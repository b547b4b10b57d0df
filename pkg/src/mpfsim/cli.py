"""Command line front end.

Four subcommands: ``run`` one scenario, ``sweep`` a grid of them,
``report`` a finished sweep as a topology comparison table, and
``print-defaults`` for a starting config file.  Config problems exit
with status 2 and name the offending key; runtime failures exit 1.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from importlib import resources

from . import __version__
from . import config as cfgmod
from . import sweep as sweepmod
from .core import ConfigError, SimulationError
from .engine import run, write_events_csv
from .metrics import compute_report
from .sweep import SweepSpec

LOG = logging.getLogger(__name__)

_REPORT_METRICS = ("conflicts_total", "collisions", "travel_time_s")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mpfsim",
        description="Corridor traffic simulator for connected platooning studies.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0,
                        help="-v for info, -vv for debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one scenario")
    p_run.add_argument("--config", help="scenario YAML file (defaults apply underneath)")
    p_run.add_argument("--set", dest="sets", action="append", default=[], metavar="KEY=VALUE",
                       help="override one config value (repeatable), e.g. --set mpr=0.4")
    p_run.add_argument("--seed", type=int, help="override the scenario seed")
    p_run.add_argument("--out", help="directory for trajectories.csv, events.csv, metrics.json")
    p_run.add_argument("--print-effective-config", action="store_true",
                       help="print the merged config as YAML and exit without running")

    p_sweep = sub.add_parser("sweep", help="run a grid of scenarios")
    p_sweep.add_argument("--spec", required=True,
                         help="sweep YAML file, or the name of a bundled spec "
                              "(tuning_grid, mixing_matrix)")
    p_sweep.add_argument("--set", dest="sets", action="append", default=[], metavar="KEY=VALUE",
                         help="override one base config value (repeatable)")
    p_sweep.add_argument("--out", help="output directory for results.csv and summary.csv "
                                       "(required unless --dry-run)")
    p_sweep.add_argument("--workers", type=int, default=1, help="parallel worker processes")
    p_sweep.add_argument("--dry-run", action="store_true",
                         help="list the expanded cells without running them")

    p_report = sub.add_parser("report", help="summarize a sweep CSV as PF vs MPF")
    p_report.add_argument("results", help="results.csv written by the sweep command")
    p_report.add_argument("--baseline", default="PF",
                          help="topology treated as the baseline column (default PF)")
    p_report.add_argument("--out", help="also write the comparison table as CSV here")

    sub.add_parser("print-defaults", help="print the default config as YAML")

    return parser


def _resolve_spec_path(name_or_path: str) -> str:
    if os.path.exists(name_or_path):
        return name_or_path
    if "/" not in name_or_path and not name_or_path.endswith(".yaml"):
        bundled = resources.files("mpfsim").joinpath("specs", name_or_path + ".yaml")
        if bundled.is_file():
            return str(bundled)
    raise ConfigError(name_or_path, "no such sweep spec (file or bundled name)")


def _cmd_run(args: argparse.Namespace) -> int:
    file_doc = cfgmod.load_yaml(args.config) if args.config else None
    doc = cfgmod.effective_document(file_doc, args.sets, args.seed)
    if args.print_effective_config:
        sys.stdout.write(cfgmod.dump_yaml(doc))
        return 0
    scenario = cfgmod.document_to_scenario(doc)
    result = run(scenario)
    report = compute_report(
        result.log,
        result.events,
        scenario.corridor,
        scenario.ttc,
        result.beacons_sent,
        result.beacons_delivered,
    )
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "trajectories.csv"), "w", encoding="utf-8") as fh:
            result.log.to_csv(fh)
        with open(os.path.join(args.out, "events.csv"), "w", encoding="utf-8") as fh:
            write_events_csv(result.events, fh)
        payload = {
            "schema_version": cfgmod.SCHEMA_VERSION,
            "config": doc,
            "metrics": report.to_json_dict(),
        }
        with open(os.path.join(args.out, "metrics.json"), "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2)
            fh.write("\n")
    rate = report.delivery_rate
    print(
        f"seed={scenario.seed} conflicts={report.conflicts_total} "
        f"(cav={report.conflicts_cav} hdv={report.conflicts_hdv}) "
        f"collisions={report.collisions} travel_time_s={report.travel_time_s:.3f} "
        f"delivery_rate={'n/a' if rate is None else f'{rate:.4f}'}"
    )
    return 0


def _cmd_sweep(args: argparse.Namespace) -> int:
    path = _resolve_spec_path(args.spec)
    doc = cfgmod.load_sweep_document(path)
    if args.sets:
        base = doc.get("base", {})
        for option in args.sets:
            cfgmod.apply_set_option(base, option)
        doc["base"] = base
    spec = SweepSpec.from_document(doc)
    cells = spec.expand()
    total = len(cells) * spec.replications
    if args.dry_run:
        for cell in cells:
            print(f"cell {cell.index}: {cell.label()}")
        print(f"{len(cells)} cells x {spec.replications} replications = {total} runs")
        return 0
    if not args.out:
        raise ConfigError("--out", "required unless --dry-run")
    print(f"{len(cells)} cells x {spec.replications} replications = {total} runs", file=sys.stderr)

    def progress(done: int, total_runs: int, row: dict) -> None:
        print(
            f"[{done}/{total_runs}] cell {row['cell']} rep {row['rep']} {row['status']}",
            file=sys.stderr,
        )

    rows = sweepmod.run_sweep(spec, workers=args.workers, progress=progress)
    os.makedirs(args.out, exist_ok=True)
    results_path = os.path.join(args.out, "results.csv")
    with open(results_path, "w", encoding="utf-8") as fh:
        fh.write(sweepmod.rows_to_csv(rows, spec.columns()))
    group_cols = [path for path, _ in spec.axes]
    sum_cols, sum_rows = sweepmod.summary_rows(rows, group_cols)
    with open(os.path.join(args.out, "summary.csv"), "w", encoding="utf-8") as fh:
        fh.write(sweepmod.rows_to_csv(sum_rows, sum_cols))
    failed = sum(1 for r in rows if r["status"] != "ok")
    print(f"{len(cells)} cells, {len(rows)} rows written to {results_path} ({failed} failed)")
    return 0


def _cmd_report(args: argparse.Namespace) -> int:
    import csv as csvmod

    with open(args.results, "r", encoding="utf-8", newline="") as fh:
        rows = list(csvmod.DictReader(fh))
    needed = {"mpr", "channel.per", "controller.topology", *_REPORT_METRICS}
    if not rows or not needed.issubset(rows[0]):
        missing = sorted(needed - set(rows[0] if rows else ()))
        raise ConfigError(args.results, f"not a topology sweep (missing columns: {', '.join(missing)})")
    base = args.baseline
    stats = sweepmod.aggregate(
        rows, group_by=("mpr", "channel.per", "controller.topology"), metrics=_REPORT_METRICS
    )
    topologies = sorted({key[2] for key in stats}, key=lambda t: (t != base, t))
    if base not in topologies:
        raise ConfigError("--baseline", f"{base!r} never appears in controller.topology")
    others = [t for t in topologies if t != base]
    groups = sorted(
        {(mpr, per) for mpr, per, _ in stats},
        key=lambda g: (float(g[0]), float(g[1])),
    )
    missing_baseline = [
        f"mpr={mpr} per={per}"
        for mpr, per in groups
        if (mpr, per, base) not in stats and any((mpr, per, t) in stats for t in others)
    ]
    if missing_baseline:
        raise ConfigError(args.results, f"no {base} baseline for: " + "; ".join(missing_baseline))

    table: list[dict] = []
    for metric in _REPORT_METRICS:
        for mpr, per in groups:
            ref = stats.get((mpr, per, base), {}).get(metric)
            if ref is None:
                continue
            for other in others or [base]:
                cmp_stats = stats.get((mpr, per, other), {}).get(metric)
                change = (
                    sweepmod.percent_change(cmp_stats.mean, ref.mean) if cmp_stats else None
                )
                table.append(
                    {
                        "metric": metric,
                        "mpr": mpr,
                        "per": per,
                        "baseline": base,
                        "baseline_mean": ref.mean,
                        "baseline_sd": ref.sd,
                        "compare": other,
                        "compare_mean": cmp_stats.mean if cmp_stats else "",
                        "compare_sd": cmp_stats.sd if cmp_stats else "",
                        "change_pct": "" if change is None else change,
                    }
                )
    header = (
        f"{'metric':<16} {'mpr':>5} {'per':>5}  {base + ' mean±sd':>18}  "
        f"{'vs mean±sd':>18}  {'change':>8}"
    )
    print(header)
    print("-" * len(header))
    for row in table:
        ref_txt = f"{row['baseline_mean']:.3f}±{row['baseline_sd']:.3f}"
        if row["compare_mean"] == "":
            cmp_txt, change_txt = "n/a", "n/a"
        else:
            cmp_txt = f"{row['compare_mean']:.3f}±{row['compare_sd']:.3f}"
            change_txt = "n/a" if row["change_pct"] == "" else f"{row['change_pct']:+.1f}%"
        print(
            f"{row['metric']:<16} {row['mpr']:>5} {row['per']:>5}  "
            f"{ref_txt:>18}  {cmp_txt:>18}  {change_txt:>8}"
        )
    if args.out:
        columns = [
            "metric", "mpr", "per", "baseline", "baseline_mean", "baseline_sd",
            "compare", "compare_mean", "compare_sd", "change_pct",
        ]
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(sweepmod.rows_to_csv(table, columns))
    return 0


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    handlers = {
        "run": _cmd_run,
        "sweep": _cmd_sweep,
        "report": _cmd_report,
        "print-defaults": lambda a: (sys.stdout.write(cfgmod.dump_yaml(cfgmod.default_document())), 0)[1],
    }
    try:
        return handlers[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except SimulationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
