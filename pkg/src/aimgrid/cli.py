"""Command line entry point.

    aimgrid run <scenario> [--testbed A|B|C|D] [--seed N] [--duration S] [--out DIR]
    aimgrid compare <report.json> <report.json> ...
    aimgrid export-model <scenario> --round N [--out DIR]
    aimgrid schema

Exit codes: 0 success, 1 invalid input, 2 safety invariant broken mid-run.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from typing import Dict, List, Optional, Sequence

from .casestudy import run_case_study
from .coordination import CoordinationMode, node_vehicles
from .metrics import SUMMARY_FIELDS, compute_report
from .milp import MilpModel, export_lp_text
from .scenario import Scenario, ScenarioError, dump_schema, load_scenario
from .scheduler import build_schedule_model
from .sim import InvariantViolation, Simulation

EXIT_OK, EXIT_INVALID, EXIT_INVARIANT = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """Argument errors exit 1 like other invalid input; 2 is kept for invariant aborts."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def _mode(testbed: str) -> CoordinationMode:
    return CoordinationMode.COORDINATED if testbed == "D" else CoordinationMode.UNCOORDINATED


def _write(path: str, text: str) -> None:
    with open(path, "w") as fh:
        fh.write(text)


def events_csv(events: Dict, topology) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["vehicle", "intersection", "t_access_assigned", "t_access", "t_enter", "t_exit"])
    cols = [events[k].tolist() for k in ("vehicle", "intersection", "t_access_assigned", "t_access",
                                         "t_enter", "t_exit")]
    for v, i, *times in zip(*cols):
        w.writerow([v, i] + ["" if math.isnan(x) else f"{x:.3f}" for x in times])
    return buf.getvalue()


def rounds_csv(rounds) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["round", "time", "vehicles", "nodes", "failures"])
    for r in rounds:
        w.writerow([r.round, f"{r.time:.1f}", r.vehicles, r.nodes, r.failures])
    return buf.getvalue()


# --- run ------------------------------------------------------------------
def run_grid(sc: Scenario, out: str, echo=print) -> dict:
    cfg = sc.sim_config()
    sim = Simulation(cfg)
    res = sim.run()
    meta = {"scenario": sc.name, "fingerprint": sc.fingerprint(), "testbed": sc.testbed,
            "seed": sc.seed, "duration": cfg.duration}
    report = compute_report(res, meta=meta)
    os.makedirs(out, exist_ok=True)
    _write(os.path.join(out, "scenario.yaml"), sc.to_yaml())
    res.store.to_csv(os.path.join(out, "trajectories.csv"))
    _write(os.path.join(out, "events.csv"), events_csv(res.events, cfg.topology))
    report.write(out)
    if res.rounds:
        _write(os.path.join(out, "rounds.csv"), rounds_csv(res.rounds))
    if res.coordinator is not None and res.coordinator.transcript.enabled:
        res.coordinator.transcript.write(os.path.join(out, "transcript.jsonl"))
    s = report.summary()
    echo(f"{sc.name} testbed {sc.testbed} seed {sc.seed}: {s['injected_vehicles']} injected, "
         f"{s['completed_vehicles']} completed, {s['total_stops']} stops, "
         f"travel time {s['avg_travel_time_per_vehicle']:.1f} s, {s['avg_mpg_per_vehicle']:.2f} mpg")
    echo(f"wrote {out}")
    return report.to_dict()


def run_case(sc: Scenario, out: str, echo=print) -> dict:
    params = sc.scheduler_params()
    res = run_case_study(sc.build_topology(), sc.case_vehicles(), params, _mode(sc.testbed),
                         sc.simulation["iterations_per_round"], transcript=sc.simulation["transcript"])
    os.makedirs(out, exist_ok=True)
    _write(os.path.join(out, "scenario.yaml"), sc.to_yaml())
    table = res.table_csv()
    _write(os.path.join(out, "access_times.csv"), table)
    if res.coordinator.transcript.enabled:
        res.coordinator.transcript.write(os.path.join(out, "transcript.jsonl"))
    bad = {it: {i: [v.__dict__ for v in vs] for i, vs in res.violations(it).items() if vs}
           for it in range(len(res.rounds))}
    bad = {k: v for k, v in bad.items() if v}
    echo(table.rstrip())
    echo("all schedules valid" if not bad else f"violations: {bad}")
    echo(f"wrote {out}")
    return {"violations": bad}


def cmd_run(args, echo=print) -> int:
    sc = load_scenario(args.scenario).with_overrides(args.testbed, args.seed, args.duration, args.out)
    out = sc.output_dir()
    if sc.kind == "case_study":
        if args.duration is not None:
            raise ScenarioError(["--duration: not used by a case_study"])
        res = run_case(sc, out, echo)
        return EXIT_OK if not res["violations"] else EXIT_INVARIANT
    run_grid(sc, out, echo)
    return EXIT_OK


# --- compare --------------------------------------------------------------
def compare_reports(docs: Sequence[dict], labels: Optional[Sequence[str]] = None) -> str:
    """Side-by-side summary with ratios against the first report."""
    if len(docs) < 2:
        raise UsageError("compare needs at least two reports")
    prints = {d.get("meta", {}).get("fingerprint") for d in docs}
    if len(prints) != 1 or None in prints:
        raise UsageError("reports come from different scenarios or seeds (fingerprints differ)")
    labels = list(labels or [d["meta"].get("testbed", str(k)) for k, d in enumerate(docs)])
    rows = list(SUMMARY_FIELDS)
    values = [[d["summary"][k] for k in rows] for d in docs]
    center = _center(docs[0])
    if center is not None:
        rows.append(f"mean_queue_I{center}")
        for d, vals in zip(docs, values):
            q = d["queue_mean"][center]
            vals.append(0.5 * (q["O"] + q["X"]))
    head = ["metric"] + labels + [f"{lab}/{labels[0]}" for lab in labels[1:]]
    lines = [head]
    for r, name in enumerate(rows):
        base = values[0][r]
        cells = [name] + [_cell(v[r]) for v in values]
        for v in values[1:]:
            cells.append(f"{v[r] / base:.3f}" if base else ("1.000" if v[r] == base else "inf"))
        lines.append(cells)
    widths = [max(len(str(l[c])) for l in lines) for c in range(len(head))]
    return "\n".join("  ".join(str(c).rjust(w) if k else str(c).ljust(w) for k, (c, w) in
                               enumerate(zip(l, widths))) for l in lines)


def _center(doc: dict) -> Optional[str]:
    idents = sorted(doc.get("queue_mean", {}), key=lambda s: int(s) if s.isdigit() else s)
    return idents[len(idents) // 2] if idents else None


def _cell(v) -> str:
    if isinstance(v, float):
        return f"{v:.3f}"
    return str(v)


def cmd_compare(args, echo=print) -> int:
    docs = []
    for path in args.reports:
        try:
            with open(path) as fh:
                docs.append(json.load(fh))
        except (OSError, ValueError) as exc:
            raise UsageError(f"cannot read report {path}: {exc}") from None
    echo(compare_reports(docs))
    return EXIT_OK


# --- export-model -------------------------------------------------------------
def export_models(sc: Scenario, round_index: int) -> Dict[int, str]:
    """LP text of every node's scheduling model at one control round."""
    params = sc.scheduler_params()
    if sc.kind == "case_study":
        n = sc.simulation["iterations_per_round"]
        if not 0 <= round_index < n:
            raise UsageError(f"--round must be in [0, {n - 1}] for this scenario")
        res = run_case_study(sc.build_topology(), sc.case_vehicles(), params, _mode(sc.testbed),
                             round_index, transcript=False)
        co, now = res.coordinator, 0.0
    else:
        if sc.testbed not in ("C", "D"):
            raise UsageError("export-model needs a MILP testbed (C or D)")
        cfg = sc.sim_config()
        n = int(math.ceil(cfg.duration / cfg.control_period - 1e-9))
        if not 0 <= round_index < n:
            raise UsageError(f"--round must be in [0, {n - 1}] for this scenario")
        sim = Simulation(cfg)
        sim.run(until_round=round_index)
        now = sim.t_stop
        co = sim.coordinator
        co.set_subscribers(sim._subscribers(now))
    out = {}
    for ident, node in sorted(co.nodes.items()):
        vehicles, _ = node_vehicles(node, co.mode, co.mailbox)
        if vehicles:
            model = build_schedule_model(vehicles, params, now).model
        else:
            model = MilpModel(f"intersection_{ident}")
        out[ident] = export_lp_text(model)
    return out


def cmd_export(args, echo=print) -> int:
    sc = load_scenario(args.scenario)
    if args.testbed is not None:
        sc = sc.with_overrides(testbed=args.testbed)
    models = export_models(sc, args.round)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        for ident, text in models.items():
            _write(os.path.join(args.out, f"round{args.round}_I{ident}.lp"), text)
        echo(f"wrote {len(models)} models to {args.out}")
    else:
        for ident, text in models.items():
            echo(text.rstrip())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="aimgrid", description="MILP intersection scheduling on road grids")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    r = sub.add_parser("run", help="run a scenario and write its artifacts")
    r.add_argument("scenario", help="scenario YAML path or bundled name")
    r.add_argument("--testbed", choices=["A", "B", "C", "D"])
    r.add_argument("--seed", type=int)
    r.add_argument("--duration", type=float, help="simulated seconds")
    r.add_argument("--out", help="output directory (default out/<name>)")
    c = sub.add_parser("compare", help="compare reports from the same scenario and seed")
    c.add_argument("reports", nargs="+")
    e = sub.add_parser("export-model", help="write each node's MILP at a control round in LP format")
    e.add_argument("scenario")
    e.add_argument("--round", type=int, required=True)
    e.add_argument("--testbed", choices=["C", "D"])
    e.add_argument("--out", help="directory for .lp files (default: print)")
    sub.add_parser("schema", help="print every scenario key with its default")
    return p


def main(argv: Optional[List[str]] = None, echo=print) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return cmd_run(args, echo)
        if args.command == "compare":
            return cmd_compare(args, echo)
        if args.command == "export-model":
            return cmd_export(args, echo)
        echo(dump_schema().rstrip())
        return EXIT_OK
    except ScenarioError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_INVALID
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except InvariantViolation as exc:
        print(f"invariant violated: {exc}", file=sys.stderr)
        print(json.dumps(exc.details, sort_keys=True, default=str), file=sys.stderr)
        return EXIT_INVARIANT


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
