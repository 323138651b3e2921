"""Load-balanced primary paths and link/switch-disjoint backups.

Demands are placed greedily in descending rate order, shorter hop distance
first among equal rates, then input order.  Each one takes the
cheapest path under ``cost(arc) = 1 / (residual + eps)`` among arcs that
still fit its full rate; ties go to the lexicographically smallest node
sequence.  Backups avoid every primary link and interior switch.  Their
load is tracked in a separate pool that steers backup placement but never
blocks admission.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from typing import Callable, Iterable

from mstte.netmodel import (
    BACKUP,
    PRIMARY,
    Arc,
    Demand,
    Link,
    Path,
    RoutedPath,
    Topology,
    TrafficMatrix,
    link,
)

EPS_FRACTION = 1e-6
RATE_TOL = 1e-9


class UnreachableError(ValueError):
    def __init__(self, src: int, dst: int):
        super().__init__(f"host {dst} is unreachable from host {src}")
        self.src = src
        self.dst = dst


def cheapest_path(
    topology: Topology,
    src: int,
    dst: int,
    cost: Callable[[int, int], float | None] | None = None,
    banned_nodes: Iterable[int] = (),
    banned_links: Iterable[Link] = (),
) -> Path | None:
    """Minimum-cost simple path; ``cost`` returning None marks an arc unusable.

    Ties are broken towards the lexicographically smallest node sequence.
    Without ``cost`` every arc costs one hop.
    """
    if src == dst:
        raise ValueError("path endpoints must differ")
    banned = set(banned_nodes)
    blocked = set(banned_links)
    if src in banned or dst in banned:
        return None
    heap: list[tuple[float, tuple[int, ...]]] = [(0.0, (src,))]
    settled: set[int] = set()
    while heap:
        c, nodes = heapq.heappop(heap)
        u = nodes[-1]
        if u in settled:
            continue
        settled.add(u)
        if u == dst:
            return Path(nodes)
        for v in topology.neighbors(u):
            if v in settled or v in banned or link(u, v) in blocked:
                continue
            w = 1.0 if cost is None else cost(u, v)
            if w is None:
                continue
            heapq.heappush(heap, (c + w, nodes + (v,)))
    return None


def select_backup(topology: Topology, primary: Path) -> Path | None:
    """Fewest-hop path sharing only its end switches with ``primary``."""
    primary.check(topology)
    return cheapest_path(
        topology,
        primary.src,
        primary.dst,
        banned_nodes=primary.interior,
        banned_links=primary.edges,
    )


@dataclass
class PathAssignment:
    topology: Topology
    matrix: TrafficMatrix
    primary: dict[int, Path]
    backup: dict[int, Path | None] = field(default_factory=dict)
    rejected: tuple[int, ...] = ()
    order: tuple[int, ...] = ()
    with_backup: bool = False

    @property
    def admitted(self) -> tuple[int, ...]:
        return tuple(sorted(self.primary))

    @property
    def protected(self) -> tuple[int, ...]:
        """Admitted demands that also hold a backup path."""
        return tuple(i for i in self.admitted if self.backup.get(i) is not None)

    @property
    def throughput(self) -> float:
        return sum(self.matrix[i].rate for i in self.primary)

    def paths(self, include_backup: bool = True, only: Iterable[int] | None = None) -> tuple[RoutedPath, ...]:
        keep = self.admitted if only is None else tuple(sorted(only))
        out = []
        for i in keep:
            d = self.matrix[i]
            out.append(RoutedPath(i, d, PRIMARY, self.primary[i]))
            b = self.backup.get(i)
            if include_backup and b is not None:
                out.append(RoutedPath(i, d, BACKUP, b))
        return tuple(out)

    def to_text(self) -> str:
        lines = []
        for i, d in enumerate(self.matrix):
            if i not in self.primary:
                lines.append(f"# rejected {d.src} {d.dst} {_num(d.rate)}")
                continue
            lines.append(f"path {d.src} {d.dst} {_num(d.rate)} {PRIMARY} {self.primary[i]}")
            b = self.backup.get(i)
            if b is not None:
                lines.append(f"path {d.src} {d.dst} {_num(d.rate)} {BACKUP} {b}")
        return "\n".join(lines) + "\n"


def parse_assignment(text: str) -> tuple[RoutedPath, ...]:
    """Read an assignment dump back into routed paths.

    A ``primary`` line opens a new demand; a ``backup`` line attaches to the
    latest primary with the same endpoints and rate.
    """
    out: list[RoutedPath] = []
    latest: dict[Demand, int] = {}
    count = 0
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if parts[0] != "path" or len(parts) != 6 or parts[4] not in (PRIMARY, BACKUP):
            raise ValueError(f"line {lineno}: malformed path line {raw!r}")
        d = Demand(int(parts[1]), int(parts[2]), float(parts[3]))
        if parts[4] == PRIMARY:
            idx = latest[d] = count
            count += 1
        elif d in latest:
            idx = latest[d]
        else:
            raise ValueError(f"line {lineno}: backup without a preceding primary")
        out.append(RoutedPath(idx, d, parts[4], Path.parse(parts[5])))
    return tuple(out)


def _check_routable(topology: Topology, matrix: TrafficMatrix) -> None:
    matrix.check(topology)
    component: dict[int, int] = {}
    for s in sorted(topology.switches):
        if s not in component:
            for n in topology.reachable(s):
                component[n] = s
    for d in matrix:
        a, b = topology.attachment(d.src), topology.attachment(d.dst)
        if a == b:
            raise ValueError(f"demand {d.src}->{d.dst} does not cross any switch link")
        if component[a] != component[b]:
            raise UnreachableError(d.src, d.dst)


def admission_order(topology: Topology, matrix: TrafficMatrix) -> tuple[int, ...]:
    dist: dict[int, dict[int, int]] = {}

    def hops(i: int) -> int:
        a, b = topology.attachment(matrix[i].src), topology.attachment(matrix[i].dst)
        if a not in dist:
            dist[a] = topology.hop_distances(a)
        return dist[a].get(b, len(topology.switches))

    return tuple(sorted(range(len(matrix)), key=lambda i: (-matrix[i].rate, hops(i), i)))


def select_paths(topology: Topology, matrix: TrafficMatrix, with_backup: bool = False) -> PathAssignment:
    _check_routable(topology, matrix)
    residual = {arc: topology.capacity_of(*arc) for arc in topology.arcs()}
    eps = {arc: EPS_FRACTION * topology.capacity_of(*arc) for arc in residual}
    order = admission_order(topology, matrix)
    primary: dict[int, Path] = {}
    rejected = []
    for i in order:
        d = matrix[i]

        def cost(u: int, v: int, rate: float = d.rate) -> float | None:
            r = residual[(u, v)]
            if r + RATE_TOL < rate:
                return None
            return 1.0 / (r + eps[(u, v)])

        path = cheapest_path(topology, topology.attachment(d.src), topology.attachment(d.dst), cost)
        if path is None:
            rejected.append(i)
            continue
        for arc in path.arcs:
            residual[arc] -= d.rate
        primary[i] = path

    backup: dict[int, Path | None] = {}
    if with_backup:
        spare = {arc: topology.capacity_of(*arc) for arc in topology.arcs()}
        for i in order:
            if i not in primary:
                continue
            d, p = matrix[i], primary[i]

            def bcost(u: int, v: int) -> float:
                return 1.0 / (max(spare[(u, v)], 0.0) + eps[(u, v)])

            b = cheapest_path(topology, p.src, p.dst, bcost, banned_nodes=p.interior, banned_links=p.edges)
            backup[i] = b
            if b is not None:
                for arc in b.arcs:
                    spare[arc] -= d.rate
    return PathAssignment(
        topology=topology,
        matrix=matrix,
        primary=primary,
        backup=backup,
        rejected=tuple(sorted(rejected)),
        order=order,
        with_backup=with_backup,
    )


def link_loads(topology: Topology, assignment: PathAssignment, include_backup: bool = False) -> dict[Arc, float]:
    loads = {arc: 0.0 for arc in topology.arcs()}
    for i, p in assignment.primary.items():
        rate = assignment.matrix[i].rate
        for arc in p.arcs:
            loads[arc] += rate
        b = assignment.backup.get(i) if include_backup else None
        if b is not None:
            for arc in b.arcs:
                loads[arc] += rate
    return loads


def _num(x: float) -> str:
    return str(int(x)) if float(x).is_integer() else repr(float(x))

