"""Command-line entry point: run scenarios, emit metrics/plots, drive sweeps.

``tiersim run scenario.toml --out DIR`` writes metrics.csv and summary.txt
(and SVG timeline plots with --plot). ``tiersim sweep`` reruns a scenario
across migration-cap or epoch-duration values and tabulates convergence.
Exit codes: 0 clean, 2 scenario error, 3 a process was killed.
"""

from __future__ import annotations

import argparse
import csv
import sys
from dataclasses import replace
from pathlib import Path

from . import units
from .engine import (RunSummary, Simulation, format_metrics_row,
                     metrics_csv_header)
from .workload import ScenarioError, ScenarioScript, parse_scenario

EXIT_OK = 0
EXIT_SCENARIO_ERROR = 2
EXIT_PROCESS_KILLED = 3


def write_metrics(sim: Simulation, path: Path) -> None:
    with open(path, "w") as fh:
        fh.write(metrics_csv_header() + "\n")
        for row in sim.history:
            fh.write(format_metrics_row(row) + "\n")


def plot_timelines(csv_path: Path, out_dir: Path) -> list[Path]:
    """Render per-process FMMR and throughput timelines from the CSV alone."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    series: dict[int, dict[str, list]] = {}
    with open(csv_path) as fh:
        for rec in csv.DictReader(fh):
            pid = int(rec["pid"])
            s = series.setdefault(pid, {"epoch": [], "ewma": [], "ops": []})
            s["epoch"].append(int(rec["epoch"]))
            s["ewma"].append(float(rec["ewma_fmmr"]))
            s["ops"].append(int(rec["ops_completed"]))

    outputs = []
    for metric, ylabel, fname in (("ewma", "EWMA fast-memory miss ratio",
                                   "fmmr_timeline.svg"),
                                  ("ops", "operations per epoch",
                                   "throughput_timeline.svg")):
        fig, ax = plt.subplots(figsize=(9, 4))
        for pid in sorted(series):
            ax.plot(series[pid]["epoch"], series[pid][metric],
                    label=f"process {pid}")
        ax.set_xlabel("epoch")
        ax.set_ylabel(ylabel)
        ax.legend(loc="upper right", fontsize="small")
        fig.tight_layout()
        path = out_dir / fname
        fig.savefig(path, format="svg")
        plt.close(fig)
        outputs.append(path)
    return outputs


def run_one(script: ScenarioScript, out_dir: Path, plot: bool) -> tuple[Simulation, RunSummary]:
    out_dir.mkdir(parents=True, exist_ok=True)
    sim = Simulation(script)
    summary = sim.run()
    csv_path = out_dir / "metrics.csv"
    write_metrics(sim, csv_path)
    (out_dir / "summary.txt").write_text(summary.format_text() + "\n")
    if plot:
        plot_timelines(csv_path, out_dir)
    return sim, summary


def cmd_run(args) -> int:
    try:
        script = parse_scenario(args.scenario)
    except (ScenarioError, OSError, ValueError) as e:
        print(f"error: {args.scenario}: {e}", file=sys.stderr)
        return EXIT_SCENARIO_ERROR
    if args.seed is not None:
        script.seed = args.seed
    out_dir = Path(args.out)
    try:
        sim, summary = run_one(script, out_dir, args.plot)
    except ScenarioError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_SCENARIO_ERROR
    print(summary.format_text())
    print(f"metrics written to {out_dir / 'metrics.csv'}")
    if summary.kills:
        return EXIT_PROCESS_KILLED
    return EXIT_OK


def _sweep_script(base: ScenarioScript, param: str, raw_value: str) -> ScenarioScript:
    script = replace(base, events=list(base.events))
    if param == "migration_cap":
        script.migration_cap = units.parse_rate(raw_value, script.epoch_duration)
        script.migration_cap_spec = raw_value
    elif param == "epoch_duration":
        script.epoch_duration = units.parse_seconds(raw_value)
        if script.migration_cap_spec is not None:
            # per-second cap specs re-translate to the new epoch length
            script.migration_cap = units.parse_rate(script.migration_cap_spec,
                                                    script.epoch_duration)
    else:
        raise ScenarioError(f"unknown sweep parameter {param!r}")
    return script


def _steady_state_fmmr(sim: Simulation, window: int = 10) -> float:
    last = max((r.epoch for r in sim.history), default=0)
    tail = [r.ewma_fmmr for r in sim.history if r.epoch > last - window]
    return max(tail) if tail else 0.0


def cmd_sweep(args) -> int:
    try:
        base = parse_scenario(args.scenario)
    except (ScenarioError, OSError, ValueError) as e:
        print(f"error: {args.scenario}: {e}", file=sys.stderr)
        return EXIT_SCENARIO_ERROR
    if args.seed is not None:
        base.seed = args.seed
    out_dir = Path(args.out)
    results = []
    killed = False
    for i, value in enumerate(args.values.split(",")):
        value = value.strip()
        try:
            script = _sweep_script(base, args.param, value)
            sim, summary = run_one(script, out_dir / f"point_{i}_{value.replace('/', '_')}",
                                   plot=False)
        except ScenarioError as e:
            print(f"error: sweep value {value!r}: {e}", file=sys.stderr)
            return EXIT_SCENARIO_ERROR
        killed = killed or bool(summary.kills)
        conv = [c for c in summary.convergence_epoch.values() if c is not None]
        results.append({
            "value": value,
            "converged": len(conv),
            "processes": len(summary.convergence_epoch),
            "last_convergence_epoch": max(conv) if conv else -1,
            "steady_state_fmmr": _steady_state_fmmr(sim),
            "migrated_bytes": summary.total_migrated_bytes,
        })

    header = (f"{'value':>12} {'converged':>10} {'last_conv_epoch':>16} "
              f"{'steady_fmmr':>12} {'migrated_bytes':>15}")
    print(header)
    for r in results:
        print(f"{r['value']:>12} {r['converged']}/{r['processes']:<8} "
              f"{r['last_convergence_epoch']:>16} {r['steady_state_fmmr']:>12.4f} "
              f"{r['migrated_bytes']:>15}")
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "sweep.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(results[0].keys()))
        writer.writeheader()
        writer.writerows(results)
    return EXIT_PROCESS_KILLED if killed else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tiersim",
        description="Two-tier memory QoS simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one scenario")
    p_run.add_argument("scenario", help="scenario TOML file")
    p_run.add_argument("--out", default="out", help="output directory")
    p_run.add_argument("--seed", type=int, default=None, help="override the seed")
    p_run.add_argument("--plot", action="store_true", help="emit SVG timelines")
    p_run.set_defaults(func=cmd_run)

    p_sweep = sub.add_parser("sweep", help="run a parameter sweep")
    p_sweep.add_argument("scenario", help="scenario TOML file")
    p_sweep.add_argument("--param", required=True,
                         choices=("migration_cap", "epoch_duration"))
    p_sweep.add_argument("--values", required=True,
                         help="comma-separated values, e.g. 1MiB,4MiB,1GiB/s")
    p_sweep.add_argument("--out", default="sweep_out", help="output directory")
    p_sweep.add_argument("--seed", type=int, default=None)
    p_sweep.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
