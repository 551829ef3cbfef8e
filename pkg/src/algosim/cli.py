"""Scenario runner CLI: single runs or full grids, CSV emission, and an
optional comparison against the published 500-node numbers.

Exit codes: 0 success, 2 config problems, 3 internal invariant violation.
"""

from __future__ import annotations

import argparse
import multiprocessing
import os
import sys
from pathlib import Path

from . import reference
from .config import (
    ConfigError,
    DESK_HONEST,
    PAPER_HONEST,
    GridCell,
    ScenarioConfig,
    cell_scenario,
    expand_grid,
    load_config,
)
from .metrics import SUMMARY_HEADER, write_cell_csv, write_summary_csv
from .netsim import SimulatorBugError
from .simulation import Simulation, derive_seed


def build_simulation(scenario: ScenarioConfig, trace: bool = False) -> Simulation:
    return Simulation(
        n_honest=scenario.network.n_honest,
        degree=scenario.network.degree,
        bandwidth_mbps=scenario.network.bandwidth_mbps,
        stake_per_node=scenario.run.stake_per_node,
        consensus_cfg=scenario.consensus,
        validation_cfg=scenario.validation,
        attack_cfg=scenario.attack,
        seed=scenario.run.seed,
        max_connections=scenario.network.max_connections,
        trace=trace,
    )


def run_cell(scenario: ScenarioConfig, cell: GridCell) -> dict:
    """Execute one isolated grid cell; plain-data result so cells can run
    in worker processes."""
    sim = build_simulation(scenario)
    sim.run(scenario.run.duration_s)
    summary = sim.metrics.summarize(
        cell.label, cell.block_size_mb, cell.n_malicious,
        cell.keys_per_node, sim.focus_ids())

    rows = []
    classes = [("targeted", sim.targets)] if sim.targets else []
    others = [n for n in sim.honest_ids() if n not in set(sim.targets)]
    classes.append(("honest", others if sim.targets else sim.honest_ids()))
    for name, nodes in classes:
        if not nodes:
            continue
        s = sim.metrics.summarize(cell.label, cell.block_size_mb,
                                  cell.n_malicious, cell.keys_per_node,
                                  nodes)
        empty_frac = sim.metrics.empty_decision_fraction(nodes)
        evictions = sum(sim.nodes[n].validator.pending.evictions
                        for n in nodes)
        rows.append([name] + s.csv_row()
                    + ["" if empty_frac is None else "%.2f"
                       % (100 * empty_frac),
                       str(evictions), str(sim.metrics.bans)])

    targeted_completed = [sim.completed_rounds(n) for n in sim.targets]
    other_completed = [sim.completed_rounds(n) for n in others]
    return {
        "label": cell.label,
        "cell": (cell.block_size_mb, cell.n_malicious, cell.keys_per_node),
        "summary_row": summary.csv_row(),
        "avg_round_time": summary.avg_round_time,
        "pct_received": summary.pct_received,
        "pct_validated": summary.pct_validated,
        "rounds_completed": summary.rounds_completed,
        "mean_step_timeouts": summary.mean_step_timeouts,
        "empty_fraction": sim.metrics.empty_decision_fraction(
            sim.focus_ids()),
        "targeted_completed": targeted_completed,
        "other_completed": other_completed,
        "adversary_verdicts": dict(sim.metrics.adversary_verdicts),
        "cell_csv": write_cell_csv(rows),
        "fork_rounds": sim.fork_rounds(),
    }


def _run_cell_job(args):
    return run_cell(*args)


def run_grid(cfg: ScenarioConfig, out_dir: Path, seed: int,
             jobs: int, scale_honest: int | None,
             duration: float | None) -> list[dict]:
    """Run every cell (possibly in parallel) and write all outputs.

    Each cell's seed derives from the master seed and the cell label
    alone, so a cell's output never depends on which other cells run.
    """
    cells = expand_grid(cfg)
    tasks = []
    for cell in cells:
        scn = cell_scenario(cfg, cell, scale_honest=scale_honest,
                            duration=duration,
                            seed=derive_seed(seed, cell.label))
        tasks.append((scn, cell))

    if jobs > 1 and len(tasks) > 1:
        with multiprocessing.Pool(jobs) as pool:
            results = pool.map(_run_cell_job, tasks)
    else:
        results = [run_cell(*t) for t in tasks]

    out_dir.mkdir(parents=True, exist_ok=True)
    cells_dir = out_dir / "cells"
    cells_dir.mkdir(exist_ok=True)
    for res in results:
        (cells_dir / (res["label"] + ".csv")).write_text(res["cell_csv"])

    summaries = []
    for res, (_, cell) in zip(results, tasks):
        summaries.append(_summary_from_row(cell, res))
    (out_dir / "summary.csv").write_text(write_summary_csv(summaries))
    (out_dir / "summary.txt").write_text(render_summary_text(results))
    return results


def _summary_from_row(cell: GridCell, res: dict):
    from .metrics import ScenarioSummary
    return ScenarioSummary(
        res["label"], cell.block_size_mb, cell.n_malicious,
        cell.keys_per_node, res["avg_round_time"], res["pct_received"],
        res["pct_validated"], res["rounds_completed"],
        res["mean_step_timeouts"],
        empty=res["avg_round_time"] is None)


def render_summary_text(results: list[dict], compare: bool = False) -> str:
    lines = []
    head = "%-26s %10s %8s %8s %7s %9s" % (
        "cell", "round_s", "recv%", "valid%", "rounds", "timeouts")
    if compare:
        head += "   %10s %8s %8s" % ("pub_round", "pub_recv", "pub_valid")
    lines.append(head)
    lines.append("-" * len(head))
    for res in results:
        def f(x, w="%10.2f"):
            return (w % x) if x is not None else " " * int(w[1:-4]) + "--"
        line = "%-26s %s %s %s %7d %s" % (
            res["label"], f(res["avg_round_time"]),
            f(res["pct_received"], "%8.2f"), f(res["pct_validated"], "%8.2f"),
            res["rounds_completed"], f(res["mean_step_timeouts"], "%9.2f"))
        if compare:
            ref = reference.lookup(*res["cell"])
            if ref is None:
                line += "   %10s %8s %8s" % ("--", "--", "--")
            else:
                line += "   %10.2f %8.2f %8.2f" % ref
        lines.append(line)
    if compare:
        lines.append("")
        lines.append("published columns are 500-node runs; deltas are "
                     "expected at other scales")
    return "\n".join(lines) + "\n"


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="algosim",
        description="Consensus-network simulator with a message-flooding "
                    "adversary")
    sub = parser.add_subparsers(dest="command", required=True)
    run_p = sub.add_parser("run", help="run a scenario or grid")
    run_p.add_argument("--config", required=True,
                       help="path to a YAML config, or a bundled name "
                            "(paper-grid, no-attack, attack-heavy)")
    run_p.add_argument("--out", default="out", help="output directory")
    run_p.add_argument("--seed", type=int, default=None,
                       help="master seed (overrides config)")
    run_p.add_argument("--jobs", type=int, default=os.cpu_count() or 1,
                       help="parallel grid cells")
    run_p.add_argument("--scale", choices=["desk", "paper"], default=None,
                       help="override honest-node count (desk=64, paper=500)")
    run_p.add_argument("--duration", type=float, default=None,
                       help="simulated seconds (overrides config)")
    run_p.add_argument("--compare", action="store_true",
                       help="print published numbers next to results")
    args = parser.parse_args(argv)

    try:
        cfg = load_config(args.config)
    except FileNotFoundError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 2
    except ConfigError as exc:
        for p in exc.problems:
            print("config error: %s" % p, file=sys.stderr)
        return 2

    scale = {"desk": DESK_HONEST, "paper": PAPER_HONEST}.get(args.scale) \
        if args.scale else None
    seed = args.seed if args.seed is not None else cfg.run.seed

    try:
        results = run_grid(cfg, Path(args.out), seed, max(1, args.jobs),
                           scale, args.duration)
    except SimulatorBugError as exc:
        print("invariant violation: %s" % exc, file=sys.stderr)
        return 3

    text = render_summary_text(results, compare=args.compare)
    print(text, end="")
    print("outputs written to %s" % args.out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
