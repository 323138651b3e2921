"""Group selected paths into loop-free trees and bind them to VLAN tags.

The grouping runs longest path first.  Edge pairs (two adjacent links) are
ranked by how many remaining paths contain them.  All paths holding the
top pair are pulled out and each is merged into the first tree whose union
with it stays acyclic; when none fits, the path opens a new tree.  Frequencies
are recounted after every batch.  Single-link paths hold no edge pair and are
placed by the same rule in a final pass.

Primary and backup paths of one demand never share a tree, so a failure on
the primary VLAN leaves the backup VLAN usable.

The greedy pass can miss the minimum tree count.  Inputs with at most
``exact_limit`` items are then regrouped by a branch-and-bound search that
only accepts strictly fewer trees than the greedy found.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Hashable, Iterable, Sequence

from mstte.netmodel import (
    BACKUP,
    MAX_VLAN_TAG,
    PRIMARY,
    EdgePair,
    Link,
    Path,
    RoutedPath,
    Topology,
    VlanTree,
    check_pathset,
    has_cycle,
    link,
)

# called after every merge with (tree index, item key, tree edges)
MergeObserver = Callable[[int, Hashable, frozenset], None]

EXACT_LIMIT = 10


@dataclass(frozen=True)
class Item:
    """One unit to place: a path, or a whole multicast tree."""

    key: Hashable
    edges: frozenset[Link]
    pairs: frozenset[EdgePair]
    sort_key: tuple
    conflict: Hashable | None = None


@dataclass
class AggregationResult:
    trees: tuple[VlanTree, ...]
    unions: tuple[frozenset[Link], ...]
    membership: dict[Hashable, int] = field(default_factory=dict)

    def tree_of(self, key: Hashable) -> VlanTree:
        return self.trees[self.membership[key]]

    def vlan_of(self, key: Hashable) -> int | None:
        i = self.membership.get(key)
        return None if i is None else self.trees[i].vlan_tag


class _Forest:
    """Edge set of one tree under construction, with a union-find over its switches."""

    def __init__(self):
        self.edges: set[Link] = set()
        self.parent: dict[int, int] = {}
        self.conflicts: set[Hashable] = set()

    def find(self, x: int) -> int:
        parent = self.parent
        while parent.get(x, x) != x:
            parent[x] = parent.get(parent[x], parent[x])
            x = parent[x]
        return x

    def fits(self, item: Item) -> bool:
        if item.conflict is not None and item.conflict in self.conflicts:
            return False
        temp: dict[int, int] = {}

        def tfind(x: int) -> int:
            while temp.get(x, x) != x:
                x = temp[x]
            return x

        for a, b in item.edges:
            if (a, b) in self.edges:
                continue
            ra, rb = tfind(self.find(a)), tfind(self.find(b))
            if ra == rb:
                return False
            temp[ra] = rb
        return True

    def copy(self) -> _Forest:
        other = _Forest()
        other.edges = set(self.edges)
        other.parent = dict(self.parent)
        other.conflicts = set(self.conflicts)
        return other

    def merge(self, item: Item) -> None:
        for a, b in item.edges:
            if (a, b) in self.edges:
                continue
            self.edges.add((a, b))
            self.parent[self.find(a)] = self.find(b)
        if item.conflict is not None:
            self.conflicts.add(item.conflict)


def edge_pair_frequencies(paths: Iterable[RoutedPath | Path]) -> list[tuple[EdgePair, int]]:
    counts: Counter[EdgePair] = Counter()
    for p in paths:
        path = p.path if isinstance(p, RoutedPath) else p
        counts.update(set(path.edge_pairs()))
    return sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))


def path_item(rp: RoutedPath) -> Item:
    return Item(
        key=rp.key,
        edges=frozenset(rp.path.edges),
        pairs=frozenset(rp.path.edge_pairs()),
        sort_key=(-len(rp.path), rp.path.nodes, rp.demand_index, rp.role),
        conflict=rp.demand_index,
    )


def group_items(
    items: Sequence[Item],
    observer: MergeObserver | None = None,
    exact_limit: int = EXACT_LIMIT,
) -> tuple[list[frozenset[Link]], dict]:
    """Core grouping loop; returns bare tree unions and item membership."""
    ranked = sorted(items, key=lambda it: it.sort_key)
    remaining: dict[Hashable, Item] = {}
    holders: dict[EdgePair, list[Hashable]] = {}
    counts: Counter[EdgePair] = Counter()
    for it in ranked:
        if it.key in remaining:
            raise ValueError(f"duplicate item {it.key!r}")
        remaining[it.key] = it
        for ep in it.pairs:
            holders.setdefault(ep, []).append(it.key)
        counts.update(it.pairs)

    forests: list[_Forest] = []
    membership: dict[Hashable, int] = {}

    def place(it: Item) -> None:
        for idx, forest in enumerate(forests):
            if forest.fits(it):
                break
        else:
            forests.append(_Forest())
            idx = len(forests) - 1
        forests[idx].merge(it)
        membership[it.key] = idx
        if observer is not None:
            observer(idx, it.key, frozenset(forests[idx].edges))

    while counts and remaining:
        ep = min(counts, key=lambda e: (-counts[e], e))
        for key in holders[ep]:
            it = remaining.pop(key, None)
            if it is None:
                continue
            counts.subtract(it.pairs)
            for gone in [e for e in it.pairs if counts[e] <= 0]:
                del counts[gone]
            place(it)
    for it in list(remaining.values()):
        place(it)

    if len(ranked) <= exact_limit and len(forests) > 1:
        better = _fewest_groups(ranked, len(forests))
        if better is not None:
            forests, membership = [], {}
            for idx, group in enumerate(better):
                forests.append(_Forest())
                for it in group:
                    forests[idx].merge(it)
                    membership[it.key] = idx
                    if observer is not None:
                        observer(idx, it.key, frozenset(forests[idx].edges))
    return [frozenset(f.edges) for f in forests], membership


def _fewest_groups(ranked: Sequence[Item], upper: int) -> list[list[Item]] | None:
    """Branch and bound for a valid grouping with fewer than ``upper`` trees."""
    best: list[list[Item]] | None = None
    bound = upper

    def search(i: int, groups: list[list[Item]], forests: list[_Forest]) -> None:
        nonlocal best, bound
        if len(groups) >= bound:
            return
        if i == len(ranked):
            best = [list(g) for g in groups]
            bound = len(groups)
            return
        it = ranked[i]
        for g, forest in enumerate(forests):
            if forest.fits(it):
                grown = forest.copy()
                grown.merge(it)
                groups[g].append(it)
                search(i + 1, groups, forests[:g] + [grown] + forests[g + 1 :])
                groups[g].pop()
        if len(groups) + 1 < bound:
            fresh = _Forest()
            fresh.merge(it)
            search(i + 1, groups + [[it]], forests + [fresh])

    search(0, [], [])
    return best


def aggregate_paths(
    topology: Topology,
    paths: Iterable[RoutedPath],
    complete: bool = True,
    observer: MergeObserver | None = None,
    exact_limit: int = EXACT_LIMIT,
) -> AggregationResult:
    paths = tuple(paths)
    check_pathset(topology, paths)
    return aggregate_items(topology, [path_item(rp) for rp in paths], complete, observer, exact_limit)


def aggregate_items(
    topology: Topology,
    items: Sequence[Item],
    complete: bool = True,
    observer: MergeObserver | None = None,
    exact_limit: int = EXACT_LIMIT,
) -> AggregationResult:
    unions, membership = group_items(items, observer, exact_limit)
    edge_sets = [complete_tree(topology, u) for u in unions] if complete else unions
    return AggregationResult(tuple(assign_vlans(edge_sets)), tuple(unions), membership)


def complete_tree(topology: Topology, partial: Iterable[Link]) -> frozenset[Link]:
    """Grow an acyclic edge set into a spanning tree, smallest links first."""
    partial = {link(a, b) for a, b in partial}
    for a, b in partial:
        topology.check_link(a, b)
    if has_cycle(partial):
        raise ValueError("partial tree contains a cycle")
    forest = _Forest()
    for e in sorted(partial):
        forest.merge(Item(None, frozenset([e]), frozenset(), ()))
    need = len(topology.switches) - 1
    for e in topology.links:
        if len(forest.edges) == need:
            break
        if e in forest.edges:
            continue
        a, b = e
        if forest.find(a) != forest.find(b):
            forest.edges.add(e)
            forest.parent[forest.find(a)] = forest.find(b)
    if len(forest.edges) != need:
        raise ValueError("topology is disconnected; no spanning tree exists")
    return frozenset(forest.edges)


def assign_vlans(trees: Sequence[Iterable[Link]]) -> list[VlanTree]:
    if len(trees) > MAX_VLAN_TAG:
        raise ValueError(f"{len(trees)} trees exceed the {MAX_VLAN_TAG} usable VLAN tags")
    return [VlanTree(i + 1, frozenset(edges)) for i, edges in enumerate(trees)]


def vlan_map_text(result: AggregationResult, paths: Iterable[RoutedPath]) -> str:
    """``vlan <tag>: <edges>`` lines followed by per-demand tag bindings."""
    lines = []
    for tree in result.trees:
        edges = " ".join(f"{a}-{b}" for a, b in sorted(tree.edges))
        lines.append(f"vlan {tree.vlan_tag}: {edges}".rstrip())
    flows: dict[int, dict[str, object]] = {}
    for rp in paths:
        flows.setdefault(rp.demand_index, {"demand": rp.demand})[rp.role] = result.vlan_of(rp.key)
    for i in sorted(flows):
        f = flows[i]
        d = f["demand"]
        backup = f.get(BACKUP)
        lines.append(f"flow {d.src} {d.dst} primary={f.get(PRIMARY)} backup={'-' if backup is None else backup}")
    return "\n".join(lines) + "\n"


def parse_vlan_map(text: str) -> tuple[dict[int, frozenset[Link]], list[tuple[int, int, int, int | None]]]:
    vlans: dict[int, frozenset[Link]] = {}
    flows = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("vlan "):
            head, _, body = line.partition(":")
            tag = int(head.split()[1])
            vlans[tag] = frozenset(link(*map(int, tok.split("-"))) for tok in body.split())
        elif line.startswith("flow "):
            _, src, dst, prim, back = line.split()
            if not prim.startswith("primary=") or not back.startswith("backup="):
                raise ValueError(f"line {lineno}: malformed flow binding")
            b = back.split("=", 1)[1]
            flows.append((int(src), int(dst), int(prim.split("=", 1)[1]), None if b == "-" else int(b)))
        else:
            raise ValueError(f"line {lineno}: unknown directive in VLAN map")
    return vlans, flows
