"""IGMP-snooping link-layer multicast.

Joins travel from the member's switch towards the root's switch along the
route unicast traffic to the root would take.  Each switch on that route
learns a downstream port for the group: the link towards the member, or
the member's own host port at its attachment switch.  Ports are reference
counted so a leave only prunes what no remaining member needs.

Reliability is the positive-ack and timeout scheme: one multicast, then
unicast retransmissions to whoever has not acked when the timer fires.
"""

from __future__ import annotations

import csv
import io
import warnings
from collections import Counter, deque
from dataclasses import dataclass, field
from typing import Hashable, Iterable, Protocol, Sequence

import numpy as np

from mstte.aggregate import AggregationResult, Item, aggregate_items
from mstte.netmodel import EdgePair, Link, Path, Topology, VlanTree, link, tree_path

DEFAULT_GROUP_LIMIT = 500

CSV_FIELDS = ("group", "members", "transmissions", "acks", "retransmissions", "completion_ms", "failed")

Port = tuple[str, int]


class IgmpWarning(UserWarning):
    pass


@dataclass(frozen=True)
class MulticastGroup:
    gid: int
    root: int
    members: frozenset[int]

    def __post_init__(self):
        object.__setattr__(self, "members", frozenset(self.members))
        if not self.members:
            raise ValueError(f"group {self.gid} has no members")


def _route(topology: Topology, root_switch: int, switch: int, routing: VlanTree | None) -> tuple[int, ...]:
    """Switch sequence from the root's switch down to ``switch``."""
    if root_switch == switch:
        return (switch,)
    if routing is not None:
        p = tree_path(routing.edges, root_switch, switch)
    else:
        p = _bfs_path(topology, root_switch, switch)
    if p is None:
        raise ValueError(f"switch {switch} is unreachable from root switch {root_switch}")
    return p.nodes


def _bfs_path(topology: Topology, a: int, b: int) -> Path | None:
    parent = {a: a}
    queue = deque([a])
    while queue:
        u = queue.popleft()
        if u == b:
            break
        for v in topology.neighbors(u):
            if v not in parent:
                parent[v] = u
                queue.append(v)
    if b not in parent:
        return None
    nodes = [b]
    while nodes[-1] != a:
        nodes.append(parent[nodes[-1]])
    return Path(tuple(reversed(nodes)))


@dataclass
class SnoopState:
    """Per-switch multicast forwarding learned from joins and leaves."""

    roots: dict[int, int]
    members: dict[int, set[int]] = field(default_factory=dict)
    refs: Counter = field(default_factory=Counter)
    routes: dict[tuple[int, int], tuple[int, ...]] = field(default_factory=dict)
    stale_leaves: int = 0

    def copy(self) -> SnoopState:
        return SnoopState(
            dict(self.roots),
            {g: set(m) for g, m in self.members.items()},
            Counter(self.refs),
            dict(self.routes),
            self.stale_leaves,
        )

    @property
    def forwarding(self) -> dict[int, dict[int, frozenset[Port]]]:
        table: dict[int, dict[int, set[Port]]] = {}
        for (sw, gid, port), n in self.refs.items():
            if n > 0:
                table.setdefault(sw, {}).setdefault(gid, set()).add(port)
        return {sw: {g: frozenset(p) for g, p in sorted(groups.items())} for sw, groups in sorted(table.items())}

    def group_links(self, gid: int) -> frozenset[Link]:
        return frozenset(
            link(sw, port[1]) for (sw, g, port), n in self.refs.items() if g == gid and n > 0 and port[0] == "link"
        )

    def group_counts(self) -> dict[int, int]:
        return {sw: len(groups) for sw, groups in self.forwarding.items()}

    def same_forwarding(self, other: SnoopState) -> bool:
        return self.forwarding == other.forwarding and self.members == other.members


def process_igmp(
    state: SnoopState,
    message: str,
    gid: int,
    host: int,
    topology: Topology,
    routing: VlanTree | None = None,
) -> SnoopState:
    if message not in ("join", "leave"):
        raise ValueError(f"unknown IGMP message {message!r}")
    if host not in topology.hosts:
        raise KeyError(f"unknown host {host}")
    if gid not in state.roots:
        raise KeyError(f"unknown group {gid}")
    new = state.copy()
    members = new.members.get(gid, set())
    if message == "join":
        if host in members:
            return new
        root_sw = topology.attachment(new.roots[gid])
        nodes = _route(topology, root_sw, topology.attachment(host), routing)
        for port in _ports(nodes, host):
            new.refs[(port[0], gid, port[1])] += 1
        new.routes[(gid, host)] = nodes
        new.members.setdefault(gid, set()).add(host)
        return new
    if host not in members:
        warnings.warn(f"leave from non-member host {host} of group {gid}", IgmpWarning, stacklevel=2)
        new.stale_leaves += 1
        return new
    nodes = new.routes.pop((gid, host))
    for port in _ports(nodes, host):
        key = (port[0], gid, port[1])
        new.refs[key] -= 1
        if new.refs[key] <= 0:
            del new.refs[key]
    members.discard(host)
    if not members:
        del new.members[gid]
    return new


def _ports(nodes: tuple[int, ...], host: int) -> list[tuple[int, Port]]:
    out = [(a, ("link", b)) for a, b in zip(nodes, nodes[1:])]
    out.append((nodes[-1], ("host", host)))
    return out


def build_multicast_tree(topology: Topology, group: MulticastGroup, routing: VlanTree | None = None) -> frozenset[Link]:
    root_sw = topology.attachment(group.root)
    links: set[Link] = set()
    for h in sorted(group.members):
        try:
            nodes = _route(topology, root_sw, topology.attachment(h), routing)
        except ValueError:
            raise ValueError(f"member {h} of group {group.gid} is unreachable from root {group.root}") from None
        links.update(link(a, b) for a, b in zip(nodes, nodes[1:]))
    return frozenset(links)


def root_to_leaf_paths(links: Iterable[Link], root_switch: int) -> list[Path]:
    links = set(links)
    degree: Counter[int] = Counter()
    for a, b in links:
        degree[a] += 1
        degree[b] += 1
    leaves = sorted(n for n, d in degree.items() if d == 1 and n != root_switch)
    return [tree_path(links, root_switch, leaf) for leaf in leaves]


def aggregate_multicast_trees(
    topology: Topology,
    trees: Sequence[tuple[MulticastGroup, Iterable[Link]]],
    complete: bool = True,
) -> AggregationResult:
    """Group multicast trees into VLAN trees; each multicast tree stays whole.

    Edge-pair affinity is taken from the trees' root-to-leaf paths.
    Membership keys are ``("group", gid)``.
    """
    items = []
    for group, links in trees:
        links = frozenset(link(a, b) for a, b in links)
        paths = root_to_leaf_paths(links, topology.attachment(group.root))
        pairs: set[EdgePair] = set()
        for p in paths:
            pairs.update(p.edge_pairs())
        items.append(Item(("group", group.gid), links, frozenset(pairs), (-len(links), tuple(sorted(links)), group.gid)))
    return aggregate_items(topology, items, complete)


def check_group_limits(state: SnoopState, limit: int = DEFAULT_GROUP_LIMIT) -> list[tuple[int, int]]:
    if limit <= 0:
        raise ValueError("group limit must be positive")
    return [(sw, n) for sw, n in sorted(state.group_counts().items()) if n > limit]


class LossModel(Protocol):
    def drops(self, rng: np.random.Generator, attempt: int, elements: Sequence[Hashable]) -> set[Hashable]: ...


@dataclass(frozen=True)
class BernoulliLoss:
    """Independent drops with probability ``p``.

    ``scope="access"`` only drops on receivers' host ports, making receivers
    independent; ``scope="all"`` also drops on switch links, where one loss
    hits every receiver downstream of it.
    """

    p: float
    scope: str = "access"

    def __post_init__(self):
        if not 0 <= self.p < 1:
            raise ValueError(f"loss probability must be in [0, 1), got {self.p}")
        if self.scope not in ("access", "all"):
            raise ValueError(f"unknown loss scope {self.scope!r}")

    def drops(self, rng, attempt, elements):
        if self.p == 0:
            return set()
        pool = [e for e in elements if self.scope == "all" or e[0] == "host"]
        hit = rng.random(len(pool)) < self.p
        return {e for e, h in zip(pool, hit) if h}


@dataclass(frozen=True)
class ScriptedLoss:
    """Drop exactly the listed ``(attempt, element)`` transmissions."""

    dropped: frozenset

    def drops(self, rng, attempt, elements):
        return {e for e in elements if (attempt, e) in self.dropped}


@dataclass
class DeliveryReport:
    gid: int
    members: int
    transmissions: int = 0
    acks: int = 0
    retransmissions: int = 0
    completion_ms: float = 0.0
    failed: tuple[int, ...] = ()
    attempts: dict[int, int] = field(default_factory=dict)


def receiver_elements(topology: Topology, group: MulticastGroup, links: Iterable[Link]) -> dict[int, tuple]:
    """Loss-prone elements each receiver's copy crosses: tree arcs, then its host port."""
    tree = VlanTree(1, frozenset(links))
    root_sw = topology.attachment(group.root)
    out = {}
    for h in sorted(group.members):
        sw = topology.attachment(h)
        arcs: tuple = ()
        if sw != root_sw:
            p = tree.path_between(root_sw, sw)
            if p is None:
                raise ValueError(f"tree does not reach member {h}")
            arcs = tuple(("arc", a) for a in p.arcs)
        out[h] = arcs + (("host", h),)
    return out


def simulate_reliable_multicast(
    topology: Topology,
    group: MulticastGroup,
    tree: Iterable[Link],
    loss_model: LossModel,
    seed: int,
    timeout_ms: float | None = None,
    hop_ms: float = 1.0,
    max_retries: int | None = 10,
) -> DeliveryReport:
    """One multicast, then timed unicast rounds to silent receivers.

    Acks are assumed reliable.  ``max_retries=None`` retries until every
    receiver has the packet.
    """
    rng = np.random.default_rng(seed)
    elems = receiver_elements(topology, group, tree)
    # one hop for the sender's host port plus the path to the receiver's host
    hops = {h: len(e) + 1 for h, e in elems.items()}
    depth = max(hops.values())
    if timeout_ms is None:
        timeout_ms = 2 * depth * hop_ms
    report = DeliveryReport(group.gid, len(group.members))

    def transmit(attempt: int, receivers: list[int]) -> list[int]:
        used = sorted({e for h in receivers for e in elems[h]})
        lost = loss_model.drops(rng, attempt, used)
        return [h for h in receivers if not lost.intersection(elems[h])]

    start = 0.0
    pending = sorted(group.members)
    report.transmissions = 1
    got = transmit(0, pending)
    attempt = 0
    while True:
        for h in got:
            report.acks += 1
            report.attempts[h] = attempt + 1
            report.completion_ms = max(report.completion_ms, start + 2 * hops[h] * hop_ms)
        pending = [h for h in pending if h not in set(got)]
        if not pending:
            break
        if max_retries is not None and attempt >= max_retries:
            break
        attempt += 1
        start += timeout_ms
        report.retransmissions += len(pending)
        report.transmissions += len(pending)
        got = [h for h in pending if transmit(attempt, [h])]
    report.failed = tuple(pending)
    return report


def expected_retransmissions(members: int, p: float) -> tuple[float, float]:
    """Mean and variance of unicast retransmissions per multicast for
    independent per-receiver loss ``p`` and unbounded retries."""
    mean = members * p / (1 - p)
    var = members * p / (1 - p) ** 2
    return mean, var


def delivery_csv(reports: Iterable[DeliveryReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_FIELDS)
    for r in reports:
        w.writerow([r.gid, r.members, r.transmissions, r.acks, r.retransmissions, f"{r.completion_ms:.3f}", " ".join(map(str, r.failed))])
    return buf.getvalue()
