"""Command-line scenario runner.

    mstte run <scenario> [--out DIR] [--seed N] [--check]
    mstte compare <a> <b>

Exit status: 0 ok, 1 usage, 2 parse error, 3 invariant violation.
"""

from __future__ import annotations

import argparse
import csv
import io
import sys
from dataclasses import dataclass
from pathlib import Path as FsPath

import numpy as np

from mstte import failover, flowsim, mcast, qos
from mstte.aggregate import vlan_map_text
from mstte.netmodel import (
    InvariantViolation,
    NetworkFormatError,
    Topology,
    TrafficMatrix,
    build_grid,
    parse_network,
    uniform_matrix,
)
from mstte.scenario import EmptyScenarioError, Scenario, ScenarioError, load_scenario

EXIT_OK, EXIT_USAGE, EXIT_PARSE, EXIT_INVARIANT = 0, 1, 2, 3

# key columns per CSV schema, identified by the header row
REPORT_KEYS = {
    flowsim.CSV_FIELDS: ("size", "mode"),
    ("failure",) + failover.CSV_FIELDS: ("failure", "flow"),
    mcast.CSV_FIELDS: ("group",),
    qos.CSV_FIELDS: ("host",),
}

POLICING_BURST_DEFAULT = qos.MAX_FRAME_BYTES


class SchemaMismatch(ValueError):
    pass


def load_inputs(sc: Scenario) -> tuple[Topology, TrafficMatrix]:
    if sc.topology[0] == "grid":
        _, side, cap, hosts = sc.topology
        topo = build_grid(side, cap, hosts)
    else:
        topo, _ = _read_network(sc, sc.topology[1])
        if topo is None:
            raise ScenarioError(0, f"{sc.topology[1]}: no topology in file")
    if sc.traffic[0] == "uniform":
        matrix = uniform_matrix(topo, sc.traffic[1])
    else:
        _, matrix = _read_network(sc, sc.traffic[1])
        if matrix is None:
            raise ScenarioError(0, f"{sc.traffic[1]}: no demands in file")
    try:
        matrix.check(topo)
    except KeyError as exc:
        raise ScenarioError(0, f"traffic does not fit topology: {exc.args[0]}") from None
    return topo, matrix


def _read_network(sc: Scenario, name: str):
    path = sc.resolve(name)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ScenarioError(0, f"cannot read {name}: {exc.strerror}") from None
    try:
        return parse_network(text)
    except NetworkFormatError as exc:
        raise ScenarioError(exc.lineno, f"{name}: {exc}") from None


@dataclass
class RunOutput:
    files: dict[str, str]
    summary: list[str]


def run_scenario(sc: Scenario) -> RunOutput:
    """Execute every requested experiment; raises InvariantViolation on
    any failed model property."""
    if sc.stochastic and sc.seed is None:
        raise ScenarioError(0, "a seed is required when failures or multicast loss are present")
    topo, matrix = load_inputs(sc)
    files: dict[str, str] = {}
    summary = [f"switches {len(topo.switches)} links {len(topo.links)} hosts {len(topo.hosts)} demands {len(matrix)}"]
    seeds = np.random.SeedSequence(sc.seed if sc.seed is not None else 0).spawn(2)

    # throughput
    results = {m: flowsim.route(topo, matrix, m) for m in sc.modes}
    rows = [flowsim.ExperimentRow.of(len(topo.switches), r) for r in results.values()]
    files["throughput.csv"] = flowsim.rows_to_csv(rows)
    for r in rows:
        summary.append(
            f"throughput {r.mode}: {_fmt(r.aggregate_mbps)} Mbps, {r.admitted} admitted, "
            f"{r.rejected} rejected, max util {r.max_link_util:.3f}"
        )
    protected = results.get(flowsim.MULTI_BACKUP)
    if protected is None and (sc.failures or flowsim.MULTI_BACKUP in sc.modes):
        protected = flowsim.route(topo, matrix, flowsim.MULTI_BACKUP)
    engineered = protected or results.get(flowsim.MULTI)
    if engineered is not None:
        a = engineered.assignment
        files["paths.txt"] = a.to_text()
        routed = a.paths(include_backup=engineered.mode == flowsim.MULTI_BACKUP, only=engineered.admitted)
        files["vlans.txt"] = vlan_map_text(engineered.aggregation, routed)
        summary.append(f"vlans {len(engineered.aggregation.trees)} ({engineered.mode})")

    # failover
    if sc.failures:
        monitors = sc.monitors or (min(topo.switches),)
        fail_seeds = seeds[0].spawn(len(sc.failures))
        reports = []
        for fail, seq in zip(sc.failures, fail_seeds):
            element = failover.Element.link(*fail.value) if fail.kind == "link" else failover.Element.switch(fail.value[0])
            try:
                element.check(topo)
            except KeyError as exc:
                raise ScenarioError(0, f"{fail}: {exc.args[0]}") from None
            scenario = failover.FailureScenario(
                element,
                at_ms=fail.at_ms,
                detect_ms=sc.detect or (400.0, 500.0),
                hop_ms=1.0 if sc.hoplat is None else sc.hoplat,
                lookup_ms=5.0 if sc.lookup is None else sc.lookup,
                monitors=monitors,
                ramp_up_ms=sc.rampup,
            )
            report = failover.simulate_failover(topo, protected.assignment, protected.aggregation, scenario, seq)
            reports.append(report)
            down = [f.downtime_ms for f in report.recovered]
            summary.append(
                f"failover {element}: {len(report.flows)} affected, {len(report.recovered)} recovered, "
                f"max downtime {_fmt(max(down)) if down else '-'} ms"
            )
        files["failover.csv"] = failover.reports_csv(reports)

    # multicast
    if sc.groups:
        state = mcast.SnoopState({g.gid: g.root for g in sc.groups})
        trees = []
        for g in sc.groups:
            group = mcast.MulticastGroup(g.gid, g.root, frozenset(g.members))
            for h in (g.root, *g.members):
                if h not in topo.hosts:
                    raise ScenarioError(0, f"group {g.gid}: unknown host {h}")
            for h in sorted(group.members):
                state = mcast.process_igmp(state, "join", g.gid, h, topo)
            tree = mcast.build_multicast_tree(topo, group)
            if state.group_links(g.gid) != tree:
                raise InvariantViolation("snoop-soundness", f"group {g.gid} forwarding differs from its route union")
            trees.append((group, tree))
        agg = mcast.aggregate_multicast_trees(topo, trees)
        loss = mcast.BernoulliLoss(sc.loss or 0.0)
        retries = 10 if sc.retries is None else sc.retries
        mc_seeds = seeds[1].spawn(len(trees))
        reports = [
            mcast.simulate_reliable_multicast(
                topo, group, tree, loss, seq, sc.timeout, hop_ms=1.0 if sc.hoplat is None else sc.hoplat, max_retries=retries
            )
            for (group, tree), seq in zip(trees, mc_seeds)
        ]
        for r in reports:
            if r.acks > r.members:
                raise InvariantViolation("ack-conservation", f"group {r.gid}: {r.acks} acks for {r.members} members")
        files["multicast.csv"] = mcast.delivery_csv(reports)
        limit = sc.grouplimit or mcast.DEFAULT_GROUP_LIMIT
        over = mcast.check_group_limits(state, limit)
        summary.append(f"multicast {len(trees)} groups in {len(agg.trees)} vlans, {sum(len(r.failed) for r in reports)} undelivered")
        summary.append(
            f"group limit {limit}: "
            + (", ".join(f"switch {s} has {n}" for s, n in over) if over else "no violations")
        )

    # policing
    if sc.profiles:
        specs = {p.host: p for p in sc.profiles}
        for h in specs:
            if h not in topo.hosts:
                raise ScenarioError(0, f"profile for unknown host {h}")
        offered: dict[int, float] = {}
        for d in matrix:
            offered[d.src] = offered.get(d.src, 0.0) + d.rate
        # unlisted hosts are held to what they already send
        profiles = {
            h: qos.RateProfile(specs[h].rate, specs[h].burst, specs[h].action, base_class=1)
            if h in specs
            else qos.RateProfile(offered[h], POLICING_BURST_DEFAULT)
            for h in offered
        }
        pol = qos.apply_ingress_policing(topo, matrix, profiles)
        policed = flowsim.route(topo, pol.matrix, flowsim.MULTI)
        policed.check()
        qos.serve_overlay(policed, pol)
        files["policing.csv"] = qos.policing_csv(matrix, pol, profiles)
        summary.append(
            f"policing: {_fmt(pol.matrix.total)} of {_fmt(matrix.total)} Mbps conform, "
            f"{_fmt(pol.dropped_mbps)} dropped, {_fmt(sum(pol.carried))} carried at low priority"
        )

    files["summary.txt"] = "\n".join(summary) + "\n"
    return RunOutput(files, summary)


def _fmt(x: float) -> str:
    return f"{x:.3f}"


def _read_rows(text: str, name: str) -> tuple[tuple[str, ...], list[dict[str, str]]]:
    reader = csv.reader(io.StringIO(text))
    try:
        header = tuple(next(reader))
    except StopIteration:
        raise SchemaMismatch(f"{name}: empty report") from None
    rows = [dict(zip(header, r)) for r in reader if r]
    return header, rows


def compare_reports(text_a: str, text_b: str, name_a: str = "a", name_b: str = "b") -> list[str]:
    """Per-row differences between two CSV reports of the same schema."""
    ha, rows_a = _read_rows(text_a, name_a)
    hb, rows_b = _read_rows(text_b, name_b)
    if ha != hb:
        raise SchemaMismatch(f"schemas differ: {','.join(ha)} vs {','.join(hb)}")
    keys = REPORT_KEYS.get(ha, ha[:1])
    index_a = {tuple(r[k] for k in keys): r for r in rows_a}
    index_b = {tuple(r[k] for k in keys): r for r in rows_b}
    out = []
    for key in sorted(index_a.keys() | index_b.keys()):
        label = " ".join(f"{k}={v}" for k, v in zip(keys, key))
        if key not in index_b:
            out.append(f"- {label}")
            continue
        if key not in index_a:
            out.append(f"+ {label}")
            continue
        ra, rb = index_a[key], index_b[key]
        for col in ha:
            if col in keys or ra[col] == rb[col]:
                continue
            try:
                delta = float(rb[col]) - float(ra[col])
                out.append(f"{label} {col}: {ra[col]} -> {rb[col]} ({delta:+g})")
            except ValueError:
                out.append(f"{label} {col}: {ra[col]!r} -> {rb[col]!r}")
    return out


def compare_paths(a: FsPath, b: FsPath) -> list[str]:
    if a.is_dir() != b.is_dir():
        raise SchemaMismatch("cannot compare a directory with a file")
    if not a.is_dir():
        return compare_reports(a.read_text(), b.read_text(), str(a), str(b))
    out = []
    names_a = {p.name for p in a.glob("*.csv")}
    names_b = {p.name for p in b.glob("*.csv")}
    for name in sorted(names_a ^ names_b):
        out.append(f"{'-' if name in names_a else '+'} {name}")
    for name in sorted(names_a & names_b):
        out += [f"{name}: {line}" for line in compare_reports((a / name).read_text(), (b / name).read_text(), name, name)]
    return out


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mstte", description="VLAN multi-tree traffic engineering scenarios")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    run = sub.add_parser("run", help="run a scenario file")
    run.add_argument("scenario")
    run.add_argument("--out", help="output directory (overrides the scenario's output line)")
    run.add_argument("--seed", type=int, help="seed (overrides the scenario's seed line)")
    run.add_argument("--check", action="store_true", help="check invariants only, write nothing")
    cmp_ = sub.add_parser("compare", help="diff two reports or report directories")
    cmp_.add_argument("a")
    cmp_.add_argument("b")
    return parser


def _cmd_run(args) -> int:
    path = FsPath(args.scenario)
    if not path.is_file():
        print(f"mstte: no such scenario file: {path}", file=sys.stderr)
        return EXIT_USAGE
    try:
        sc = load_scenario(path)
    except EmptyScenarioError:
        print(f"mstte: {path} is empty; a scenario needs a topology and a traffic source", file=sys.stderr)
        return EXIT_USAGE
    except ScenarioError as exc:
        print(f"mstte: {path}: {exc}", file=sys.stderr)
        return EXIT_PARSE
    if args.seed is not None:
        sc.seed = args.seed
    try:
        result = run_scenario(sc)
    except ScenarioError as exc:
        print(f"mstte: {path}: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except InvariantViolation as exc:
        print(f"mstte: invariant violated: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except ValueError as exc:
        # model preconditions such as unreachable demands or bad monitors
        print(f"mstte: {path}: {exc}", file=sys.stderr)
        return EXIT_PARSE
    if args.check:
        print("ok: all invariants hold")
        return EXIT_OK
    out = args.out or sc.output
    if out is None:
        sys.stdout.write(result.files["summary.txt"])
        return EXIT_OK
    out_dir = FsPath(out) if args.out or FsPath(out).is_absolute() else sc.resolve(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, text in result.files.items():
        (out_dir / name).write_text(text)
    sys.stdout.write(result.files["summary.txt"])
    return EXIT_OK


def _cmd_compare(args) -> int:
    a, b = FsPath(args.a), FsPath(args.b)
    for p in (a, b):
        if not p.exists():
            print(f"mstte: no such report: {p}", file=sys.stderr)
            return EXIT_USAGE
    try:
        lines = compare_paths(a, b)
    except SchemaMismatch as exc:
        print(f"mstte: {exc}", file=sys.stderr)
        return EXIT_PARSE
    for line in lines:
        print(line)
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "run":
        return _cmd_run(args)
    return _cmd_compare(args)


if __name__ == "__main__":
    sys.exit(main())
