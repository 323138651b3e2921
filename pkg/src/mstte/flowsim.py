"""Flow-level throughput under single-tree and multi-tree switching.

Admission is binary at the full demand rate; only switch-to-switch links
carry capacity.  The single-tree baseline stands in for 802.1d with a
breadth-first tree rooted at the lowest switch id.
"""

from __future__ import annotations

import csv
import io
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from mstte.aggregate import AggregationResult, aggregate_paths
from mstte.netmodel import (
    Arc,
    InvariantViolation,
    Link,
    Path,
    Topology,
    TrafficMatrix,
    build_grid,
    link,
    tree_path,
    uniform_matrix,
)
from mstte.tepath import RATE_TOL, PathAssignment, admission_order, select_paths

SINGLE = "single"
MULTI = "multi"
MULTI_BACKUP = "multi+backup"
MODES = (SINGLE, MULTI, MULTI_BACKUP)

CSV_FIELDS = ("size", "mode", "aggregate_mbps", "admitted", "rejected", "max_link_util")


@dataclass
class ThroughputResult:
    mode: str
    topology: Topology
    matrix: TrafficMatrix
    routes: dict[int, Path]
    rejected: tuple[int, ...]
    loads: dict[Arc, float]
    assignment: PathAssignment | None = None
    aggregation: AggregationResult | None = None
    vlan: dict[int, int] = field(default_factory=dict)

    @property
    def admitted(self) -> tuple[int, ...]:
        return tuple(sorted(self.routes))

    @property
    def aggregate(self) -> float:
        return sum(self.matrix[i].rate for i in self.routes)

    @property
    def utilization(self) -> dict[Arc, float]:
        return {arc: load / self.topology.capacity_of(*arc) for arc, load in self.loads.items()}

    @property
    def max_link_util(self) -> float:
        return max(self.utilization.values(), default=0.0)

    def check(self) -> None:
        for arc, load in self.loads.items():
            cap = self.topology.capacity_of(*arc)
            if load > cap + RATE_TOL * max(1.0, cap):
                raise InvariantViolation("capacity", f"{self.mode}: arc {arc} carries {load} > {cap}")
        if abs(sum(self.matrix[i].rate for i in self.routes) - self.aggregate) > 1e-9:
            raise InvariantViolation("aggregate", "aggregate differs from admitted rates")


def _loads(topology: Topology, matrix: TrafficMatrix, routes: dict[int, Path]) -> dict[Arc, float]:
    loads = {arc: 0.0 for arc in topology.arcs()}
    for i, p in routes.items():
        for arc in p.arcs:
            loads[arc] += matrix[i].rate
    return loads


def default_tree(topology: Topology) -> frozenset[Link]:
    """Breadth-first tree from the lowest switch, neighbours in id order."""
    if not topology.is_connected():
        raise ValueError("topology is disconnected")
    root = min(topology.switches)
    seen = {root}
    edges = set()
    queue = deque([root])
    while queue:
        u = queue.popleft()
        for v in topology.neighbors(u):
            if v not in seen:
                seen.add(v)
                edges.add(link(u, v))
                queue.append(v)
    return frozenset(edges)


def single_tree_route(topology: Topology, matrix: TrafficMatrix) -> ThroughputResult:
    """Route every demand on the default tree, admitting greedily in the
    same order the multi-tree path selection uses."""
    tree = default_tree(topology)
    matrix.check(topology)
    residual = {arc: topology.capacity_of(*arc) for arc in topology.arcs()}
    routes: dict[int, Path] = {}
    rejected = []
    for i in admission_order(topology, matrix):
        d = matrix[i]
        a, b = topology.attachment(d.src), topology.attachment(d.dst)
        if a == b:
            raise ValueError(f"demand {d.src}->{d.dst} does not cross any switch link")
        p = tree_path(tree, a, b)
        if all(residual[arc] + RATE_TOL >= d.rate for arc in p.arcs):
            for arc in p.arcs:
                residual[arc] -= d.rate
            routes[i] = p
        else:
            rejected.append(i)
    result = ThroughputResult(
        SINGLE, topology, matrix, routes, tuple(sorted(rejected)), _loads(topology, matrix, routes)
    )
    result.check()
    return result


def multi_tree_route(topology: Topology, matrix: TrafficMatrix, with_backup: bool = False) -> ThroughputResult:
    """Engineered paths grouped into VLAN trees.

    With ``with_backup`` a demand only counts as admitted when it also holds
    a disjoint backup path, which is placed on a different VLAN.
    """
    assignment = select_paths(topology, matrix, with_backup=with_backup)
    keep = assignment.protected if with_backup else assignment.admitted
    paths = assignment.paths(include_backup=with_backup, only=keep)
    aggregation = aggregate_paths(topology, paths)
    routes = {i: assignment.primary[i] for i in keep}
    vlan = {}
    for i, p in routes.items():
        tree = aggregation.tree_of((i, "primary"))
        if tree.path_between(p.src, p.dst) != p:
            raise InvariantViolation("containment", f"demand {i} primary is not its VLAN {tree.vlan_tag} tree path")
        vlan[i] = tree.vlan_tag
    rejected = tuple(i for i in range(len(matrix)) if i not in routes)
    result = ThroughputResult(
        MULTI_BACKUP if with_backup else MULTI,
        topology,
        matrix,
        routes,
        rejected,
        _loads(topology, matrix, routes),
        assignment=assignment,
        aggregation=aggregation,
        vlan=vlan,
    )
    result.check()
    return result


def route(topology: Topology, matrix: TrafficMatrix, mode: str) -> ThroughputResult:
    if mode == SINGLE:
        return single_tree_route(topology, matrix)
    if mode == MULTI:
        return multi_tree_route(topology, matrix)
    if mode == MULTI_BACKUP:
        return multi_tree_route(topology, matrix, with_backup=True)
    raise ValueError(f"unknown routing mode {mode!r}")


@dataclass(frozen=True)
class ExperimentRow:
    size: int
    mode: str
    aggregate_mbps: float
    admitted: int
    rejected: int
    max_link_util: float

    @classmethod
    def of(cls, size: int, result: ThroughputResult) -> ExperimentRow:
        return cls(size, result.mode, result.aggregate, len(result.admitted), len(result.rejected), result.max_link_util)


def run_grid_experiment(
    sides: Sequence[int] = (4, 5, 6, 7, 8),
    rates: Sequence[float] = (10, 8, 5, 2, 1),
    capacity: float = 100.0,
    modes: Iterable[str] = MODES,
) -> list[ExperimentRow]:
    if len(sides) != len(rates):
        raise ValueError(f"{len(sides)} grid sides but {len(rates)} rates")
    modes = tuple(modes)
    rows = []
    for side, rate in zip(sides, rates):
        topo = build_grid(side, capacity, 1)
        matrix = uniform_matrix(topo, rate)
        for mode in modes:
            rows.append(ExperimentRow.of(side * side, route(topo, matrix, mode)))
    return rows


def rows_to_csv(rows: Iterable[ExperimentRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_FIELDS)
    for r in rows:
        w.writerow([r.size, r.mode, f"{r.aggregate_mbps:.3f}", r.admitted, r.rejected, f"{r.max_link_util:.6f}"])
    return buf.getvalue()


def serve_low_priority(
    topology: Topology,
    loads: dict[Arc, float],
    overlay: Sequence[tuple[float, Path]],
) -> list[float]:
    """Carry best-effort traffic from spare capacity only.

    Each ``(offered, path)`` entry, in order, gets ``min(offered, bottleneck
    residual)`` along its path; residuals shrink as traffic is carried.
    """
    residual = {arc: max(topology.capacity_of(*arc) - load, 0.0) for arc, load in loads.items()}
    carried = []
    for offered, path in overlay:
        amount = min([offered] + [residual[arc] for arc in path.arcs])
        for arc in path.arcs:
            residual[arc] -= amount
        carried.append(amount)
    return carried

