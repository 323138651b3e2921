"""Topology, path, tree and traffic-matrix data model.

Switches and hosts are dense integers in separate namespaces.  Links are
undirected and stored canonically as ``(low, high)``; loads are accounted
per direction, so the same link shows up as two directed arcs elsewhere.

The text format understood by :func:`parse_network` is line oriented::

    # comment
    switch <id>
    link <a> <b> <capacity_mbps>
    host <id> <switch>
    demand <src_host> <dst_host> <rate_mbps>

Links implicitly declare their end switches.  Unknown directives are
rejected with the offending line number.
"""

from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, NamedTuple

from scipy.cluster.hierarchy import DisjointSet

Link = tuple[int, int]
Arc = tuple[int, int]

MAX_VLAN_TAG = 4094


class NetworkFormatError(ValueError):
    """Bad input text; ``lineno`` 0 means the file as a whole."""

    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}" if lineno else message)
        self.lineno = lineno


class InvariantViolation(AssertionError):
    """A checked model property failed; ``name`` identifies the property."""

    def __init__(self, name: str, detail: str):
        super().__init__(f"{name}: {detail}")
        self.name = name


def link(a: int, b: int) -> Link:
    """Canonical undirected link key."""
    return (a, b) if a < b else (b, a)


class Topology:
    """Switches, capacitated full-duplex links and host attachment points.

    Instances are treated as immutable once built; the ``without_*``
    methods return new topologies.
    """

    def __init__(
        self,
        switches: Iterable[int],
        links: Mapping[Link, float] | Iterable[tuple[int, int, float]],
        hosts: Mapping[int, int] | None = None,
    ):
        self.switches = frozenset(int(s) for s in switches)
        items = links.items() if isinstance(links, Mapping) else (((a, b), c) for a, b, c in links)
        capacity: dict[Link, float] = {}
        for (a, b), cap in items:
            if a == b:
                raise ValueError(f"self-loop link on switch {a}")
            key = link(int(a), int(b))
            if key in capacity:
                raise ValueError(f"parallel link {key[0]}-{key[1]}")
            if not cap > 0:
                raise ValueError(f"link {key[0]}-{key[1]} has non-positive capacity {cap}")
            for s in key:
                if s not in self.switches:
                    raise ValueError(f"link {key[0]}-{key[1]} references unknown switch {s}")
            capacity[key] = float(cap)
        self.capacity: dict[Link, float] = dict(sorted(capacity.items()))
        self.hosts: dict[int, int] = dict(sorted((int(h), int(s)) for h, s in (hosts or {}).items()))
        for h, s in self.hosts.items():
            if s not in self.switches:
                raise ValueError(f"host {h} attaches to unknown switch {s}")
        adj: dict[int, list[int]] = {s: [] for s in self.switches}
        for a, b in self.capacity:
            adj[a].append(b)
            adj[b].append(a)
        self._adj = {s: tuple(sorted(n)) for s, n in adj.items()}

    def __repr__(self) -> str:
        return f"Topology({len(self.switches)} switches, {len(self.capacity)} links, {len(self.hosts)} hosts)"

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Topology):
            return NotImplemented
        return (self.switches, self.capacity, self.hosts) == (other.switches, other.capacity, other.hosts)

    def __hash__(self) -> int:
        return hash((self.switches, tuple(self.capacity.items()), tuple(self.hosts.items())))

    @property
    def links(self) -> tuple[Link, ...]:
        return tuple(self.capacity)

    def arcs(self) -> Iterator[Arc]:
        for a, b in self.capacity:
            yield (a, b)
            yield (b, a)

    def neighbors(self, switch: int) -> tuple[int, ...]:
        return self._adj[switch]

    def degree(self, switch: int) -> int:
        return len(self._adj[switch])

    def has_link(self, a: int, b: int) -> bool:
        return link(a, b) in self.capacity

    def capacity_of(self, a: int, b: int) -> float:
        return self.capacity[link(a, b)]

    def attachment(self, host: int) -> int:
        try:
            return self.hosts[host]
        except KeyError:
            raise KeyError(f"unknown host {host}") from None

    def hosts_on(self, switch: int) -> list[int]:
        return [h for h, s in self.hosts.items() if s == switch]

    def check_link(self, a: int, b: int) -> Link:
        key = link(a, b)
        if key not in self.capacity:
            raise KeyError(f"unknown link {key[0]}-{key[1]}")
        return key

    def reachable(self, start: int) -> set[int]:
        seen = {start}
        queue = deque([start])
        while queue:
            u = queue.popleft()
            for v in self._adj[u]:
                if v not in seen:
                    seen.add(v)
                    queue.append(v)
        return seen

    def hop_distances(self, start: int) -> dict[int, int]:
        dist = {start: 0}
        queue = deque([start])
        while queue:
            u = queue.popleft()
            for v in self._adj[u]:
                if v not in dist:
                    dist[v] = dist[u] + 1
                    queue.append(v)
        return dist

    def is_connected(self) -> bool:
        if not self.switches:
            return True
        return len(self.reachable(min(self.switches))) == len(self.switches)

    def without_link(self, a: int, b: int) -> Topology:
        key = self.check_link(a, b)
        caps = {k: c for k, c in self.capacity.items() if k != key}
        return Topology(self.switches, caps, self.hosts)

    def without_switch(self, switch: int) -> Topology:
        """Drop a switch, its incident links and the hosts attached to it."""
        if switch not in self.switches:
            raise KeyError(f"unknown switch {switch}")
        caps = {k: c for k, c in self.capacity.items() if switch not in k}
        hosts = {h: s for h, s in self.hosts.items() if s != switch}
        return Topology(self.switches - {switch}, caps, hosts)

    def with_capacity(self, capacity: float) -> Topology:
        return Topology(self.switches, {k: capacity for k in self.capacity}, self.hosts)

    def to_text(self) -> str:
        lines = [f"switch {s}" for s in sorted(self.switches)]
        lines += [f"link {a} {b} {_num(c)}" for (a, b), c in self.capacity.items()]
        lines += [f"host {h} {s}" for h, s in self.hosts.items()]
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class Path:
    """A simple switch path with at least one hop."""

    nodes: tuple[int, ...]

    def __post_init__(self):
        nodes = tuple(int(n) for n in self.nodes)
        object.__setattr__(self, "nodes", nodes)
        if len(nodes) < 2:
            raise ValueError(f"path {nodes} needs at least one link")
        if len(set(nodes)) != len(nodes):
            raise ValueError(f"path {format_nodes(nodes)} repeats a switch")

    def __len__(self) -> int:
        return len(self.nodes) - 1

    def __str__(self) -> str:
        return format_nodes(self.nodes)

    @property
    def src(self) -> int:
        return self.nodes[0]

    @property
    def dst(self) -> int:
        return self.nodes[-1]

    @property
    def edges(self) -> tuple[Link, ...]:
        return tuple(link(a, b) for a, b in zip(self.nodes, self.nodes[1:]))

    @property
    def arcs(self) -> tuple[Arc, ...]:
        return tuple(zip(self.nodes, self.nodes[1:]))

    @property
    def interior(self) -> tuple[int, ...]:
        return self.nodes[1:-1]

    def edge_pairs(self) -> tuple[EdgePair, ...]:
        return tuple(EdgePair.of(a, b, c) for a, b, c in zip(self.nodes, self.nodes[1:], self.nodes[2:]))

    def check(self, topology: Topology) -> None:
        for a, b in self.arcs:
            if not topology.has_link(a, b):
                raise ValueError(f"path {self} uses missing link {a}-{b}")

    @classmethod
    def parse(cls, text: str) -> Path:
        return cls(tuple(int(t) for t in text.split("-")))


def format_nodes(nodes: Iterable[int]) -> str:
    return "-".join(str(n) for n in nodes)


@dataclass(frozen=True, order=True)
class EdgePair:
    """Two distinct links sharing exactly one switch (a two-link sub-path)."""

    first: Link
    second: Link
    shared: int

    def __post_init__(self):
        if self.first == self.second:
            raise ValueError("edge pair needs two distinct links")
        common = set(self.first) & set(self.second)
        if common != {self.shared}:
            raise ValueError(f"links {self.first} and {self.second} do not meet at switch {self.shared}")

    @classmethod
    def of(cls, a: int, b: int, c: int) -> EdgePair:
        """Edge pair for the sub-path a-b-c, independent of direction."""
        x, y = sorted((link(a, b), link(b, c)))
        return cls(x, y, b)

    @property
    def links(self) -> tuple[Link, Link]:
        return (self.first, self.second)


class Demand(NamedTuple):
    src: int
    dst: int
    rate: float


@dataclass(frozen=True)
class TrafficMatrix:
    demands: tuple[Demand, ...] = ()

    def __post_init__(self):
        demands = tuple(Demand(int(s), int(d), float(r)) for s, d, r in self.demands)
        object.__setattr__(self, "demands", demands)
        for s, d, r in demands:
            if s == d:
                raise ValueError(f"demand {s}->{d} has identical endpoints")
            if not r > 0:
                raise ValueError(f"demand {s}->{d} has non-positive rate {r}")

    def __len__(self) -> int:
        return len(self.demands)

    def __iter__(self) -> Iterator[Demand]:
        return iter(self.demands)

    def __getitem__(self, i: int) -> Demand:
        return self.demands[i]

    @property
    def total(self) -> float:
        return sum(d.rate for d in self.demands)

    def check(self, topology: Topology) -> None:
        for s, d, _ in self.demands:
            for h in (s, d):
                if h not in topology.hosts:
                    raise ValueError(f"demand {s}->{d} references unknown host {h}")

    def to_text(self) -> str:
        return "".join(f"demand {s} {d} {_num(r)}\n" for s, d, r in self.demands)


PRIMARY = "primary"
BACKUP = "backup"


@dataclass(frozen=True)
class RoutedPath:
    """A path annotated with the demand it carries; members of a path set."""

    demand_index: int
    demand: Demand
    role: str
    path: Path

    def __post_init__(self):
        if self.role not in (PRIMARY, BACKUP):
            raise ValueError(f"unknown path role {self.role!r}")

    @property
    def key(self) -> tuple[int, str]:
        return (self.demand_index, self.role)

    def check(self, topology: Topology) -> None:
        self.path.check(topology)
        src_sw = topology.attachment(self.demand.src)
        dst_sw = topology.attachment(self.demand.dst)
        if (self.path.src, self.path.dst) != (src_sw, dst_sw):
            raise ValueError(
                f"path {self.path} does not join switches {src_sw} and {dst_sw} of demand "
                f"{self.demand.src}->{self.demand.dst}"
            )


PathSet = tuple[RoutedPath, ...]


def check_pathset(topology: Topology, paths: Iterable[RoutedPath]) -> None:
    seen = set()
    for rp in paths:
        rp.check(topology)
        if rp.key in seen:
            raise ValueError(f"duplicate {rp.role} path for demand {rp.demand_index}")
        seen.add(rp.key)


@dataclass(frozen=True)
class VlanTree:
    vlan_tag: int
    edges: frozenset[Link] = field(default_factory=frozenset)

    def __post_init__(self):
        if not 1 <= self.vlan_tag <= MAX_VLAN_TAG:
            raise ValueError(f"VLAN tag {self.vlan_tag} outside 1..{MAX_VLAN_TAG}")
        object.__setattr__(self, "edges", frozenset(link(a, b) for a, b in self.edges))
        if has_cycle(self.edges):
            raise ValueError(f"VLAN {self.vlan_tag} edges contain a cycle")

    def path_between(self, a: int, b: int) -> Path | None:
        return tree_path(self.edges, a, b)


def has_cycle(edges: Iterable[Link]) -> bool:
    ds = DisjointSet()
    for a, b in edges:
        for n in (a, b):
            if n not in ds:
                ds.add(n)
        if ds.connected(a, b):
            return True
        ds.merge(a, b)
    return False


def tree_path(edges: Iterable[Link], a: int, b: int) -> Path | None:
    """Unique path between two switches inside an acyclic edge set."""
    if a == b:
        return None
    adj: dict[int, list[int]] = {}
    for u, v in edges:
        adj.setdefault(u, []).append(v)
        adj.setdefault(v, []).append(u)
    parent = {a: a}
    queue = deque([a])
    while queue:
        u = queue.popleft()
        if u == b:
            break
        for v in adj.get(u, ()):
            if v not in parent:
                parent[v] = u
                queue.append(v)
    if b not in parent:
        return None
    nodes = [b]
    while nodes[-1] != a:
        nodes.append(parent[nodes[-1]])
    return Path(tuple(reversed(nodes)))


def is_spanning_tree(topology: Topology, edges: Iterable[Link]) -> bool:
    edges = {link(a, b) for a, b in edges}
    for a, b in edges:
        topology.check_link(a, b)
    if len(edges) != len(topology.switches) - 1:
        return False
    if has_cycle(edges):
        return False
    # n-1 acyclic edges over n nodes is connected
    return True


def build_grid(side: int, link_capacity: float = 100.0, host_per_switch: int = 1) -> Topology:
    """Square grid of ``side * side`` switches, numbered row-major.

    Host ``i * host_per_switch + k`` attaches to switch ``i``.
    """
    if side < 2:
        raise ValueError(f"grid side must be at least 2, got {side}")
    if not link_capacity > 0:
        raise ValueError(f"link capacity must be positive, got {link_capacity}")
    if host_per_switch < 0:
        raise ValueError("host_per_switch must be non-negative")
    switches = range(side * side)
    links = {}
    for r in range(side):
        for c in range(side):
            s = r * side + c
            if c + 1 < side:
                links[(s, s + 1)] = link_capacity
            if r + 1 < side:
                links[(s, s + side)] = link_capacity
    hosts = {s * host_per_switch + k: s for s in switches for k in range(host_per_switch)}
    return Topology(switches, links, hosts)


def uniform_matrix(topology: Topology, rate: float) -> TrafficMatrix:
    """Every ordered host pair on distinct switches, each at ``rate``."""
    if len(topology.hosts) < 2:
        raise ValueError("uniform traffic needs at least two hosts")
    demands = [
        Demand(a, b, rate)
        for a, b in itertools.permutations(topology.hosts, 2)
        if topology.hosts[a] != topology.hosts[b]
    ]
    return TrafficMatrix(tuple(demands))


def parse_network(text: str) -> tuple[Topology | None, TrafficMatrix | None]:
    """Parse the line format; either part is ``None`` when absent."""
    switches: set[int] = set()
    links: list[tuple[int, int, float]] = []
    hosts: dict[int, int] = {}
    demands: list[Demand] = []
    arity = {"switch": 1, "link": 3, "host": 2, "demand": 3}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        word, *args = line.split()
        if word not in arity:
            raise NetworkFormatError(lineno, f"unknown directive {word!r}")
        if len(args) != arity[word]:
            raise NetworkFormatError(lineno, f"{word} takes {arity[word]} arguments, got {len(args)}")
        try:
            if word == "switch":
                switches.add(int(args[0]))
            elif word == "link":
                a, b = int(args[0]), int(args[1])
                links.append((a, b, float(args[2])))
                switches.update((a, b))
            elif word == "host":
                h = int(args[0])
                if h in hosts:
                    raise NetworkFormatError(lineno, f"host {h} declared twice")
                hosts[h] = int(args[1])
            else:
                demands.append(Demand(int(args[0]), int(args[1]), float(args[2])))
        except NetworkFormatError:
            raise
        except ValueError as exc:
            raise NetworkFormatError(lineno, str(exc)) from None
    topology = None
    if switches or links or hosts:
        try:
            topology = Topology(switches, links, hosts)
        except ValueError as exc:
            raise NetworkFormatError(0, str(exc)) from None
    matrix = None
    if demands:
        try:
            matrix = TrafficMatrix(tuple(demands))
        except ValueError as exc:
            raise NetworkFormatError(0, str(exc)) from None
    return topology, matrix


def _num(x: float) -> str:
    return str(int(x)) if float(x).is_integer() else repr(float(x))
