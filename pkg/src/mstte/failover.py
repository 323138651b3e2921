"""Status-monitor failover as a small discrete-event simulation.

Chain of events for one failure::

    failure -> detection at each adjacent switch (random delay)
            -> trap reaches a status monitor (hop latency over surviving links)
            -> monitor looks up alternate VLANs (constant cost)
            -> notification reaches each affected sender (hop latency)
            -> sender switches to its backup VLAN (optional ramp-up)

A monitor acts on the first trap it receives.  Every notified monitor
dispatches notifications and a sender switches on the earliest one.
"""

from __future__ import annotations

import csv
import heapq
import io
import itertools
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from mstte.aggregate import AggregationResult
from mstte.netmodel import BACKUP, InvariantViolation, Path, Topology, link
from mstte.tepath import PathAssignment

RECOVERED = "recovered"
UNRECOVERABLE = "unrecoverable"
STALLED = "stalled"

CSV_FIELDS = ("flow", "failure_ms", "detected_ms", "monitor_ms", "sender_ms", "downtime_ms", "outcome")


@dataclass(frozen=True)
class Element:
    """A failed link ``("link", (a, b))`` or switch ``("switch", s)``."""

    kind: str
    value: tuple[int, int] | int

    @classmethod
    def link(cls, a: int, b: int) -> Element:
        return cls("link", link(a, b))

    @classmethod
    def switch(cls, s: int) -> Element:
        return cls("switch", int(s))

    def __str__(self) -> str:
        if self.kind == "link":
            return f"link {self.value[0]}-{self.value[1]}"
        return f"switch {self.value}"

    def check(self, topology: Topology) -> None:
        if self.kind == "link":
            topology.check_link(*self.value)
        elif self.kind == "switch":
            if self.value not in topology.switches:
                raise KeyError(f"unknown switch {self.value}")
        else:
            raise ValueError(f"unknown element kind {self.kind!r}")

    def on(self, path: Path) -> bool:
        if self.kind == "link":
            return self.value in path.edges
        return self.value in path.nodes

    def remove_from(self, topology: Topology) -> Topology:
        if self.kind == "link":
            return topology.without_link(*self.value)
        return topology.without_switch(self.value)

    def detectors(self, topology: Topology) -> tuple[int, ...]:
        if self.kind == "link":
            return tuple(self.value)
        return topology.neighbors(self.value)


@dataclass(frozen=True)
class FailureScenario:
    element: Element
    at_ms: float = 0.0
    detect_ms: tuple[float, float] = (400.0, 500.0)
    hop_ms: float = 1.0
    lookup_ms: float = 5.0
    monitors: tuple[int, ...] = ()
    ramp_up_ms: tuple[float, float] | None = None

    def __post_init__(self):
        lo, hi = self.detect_ms
        if lo > hi or lo < 0:
            raise ValueError(f"bad detection interval [{lo}, {hi}]")
        if not self.monitors:
            raise ValueError("at least one status monitor is required")
        if self.hop_ms < 0 or self.lookup_ms < 0:
            raise ValueError("latencies must be non-negative")
        if self.ramp_up_ms is not None and not 0 <= self.ramp_up_ms[0] <= self.ramp_up_ms[1]:
            raise ValueError(f"bad ramp-up interval {self.ramp_up_ms}")


@dataclass(frozen=True)
class FlowRecovery:
    demand: int
    src: int
    dst: int
    outcome: str
    failure_ms: float
    detected_ms: float | None = None
    monitor_ms: float | None = None
    sender_ms: float | None = None
    downtime_ms: float | None = None
    detector: int | None = None
    monitor: int | None = None
    backup_vlan: int | None = None
    hops_to_monitor: int | None = None
    hops_to_sender: int | None = None
    ramp_ms: float = 0.0

    @property
    def label(self) -> str:
        return f"{self.demand}:{self.src}->{self.dst}"


@dataclass
class RecoveryReport:
    scenario: FailureScenario
    flows: tuple[FlowRecovery, ...] = ()
    events: list[tuple[float, str]] = field(default_factory=list)

    @property
    def recovered(self) -> tuple[FlowRecovery, ...]:
        return tuple(f for f in self.flows if f.outcome == RECOVERED)

    @property
    def failed(self) -> tuple[FlowRecovery, ...]:
        return tuple(f for f in self.flows if f.outcome != RECOVERED)

    def downtime(self, demand: int) -> float | None:
        """Zero for unaffected flows, ``None`` when the flow never recovers."""
        for f in self.flows:
            if f.demand == demand:
                return f.downtime_ms
        return 0.0

    def check(self) -> None:
        sc = self.scenario
        ramp_hi = sc.ramp_up_ms[1] if sc.ramp_up_ms else 0.0
        for f in self.recovered:
            times = (f.failure_ms, f.detected_ms, f.monitor_ms, f.sender_ms)
            if any(b < a for a, b in zip(times, times[1:])):
                raise InvariantViolation("event-order", f"flow {f.label} timestamps {times}")
            bound = (
                sc.detect_ms[1]
                + (f.hops_to_monitor + f.hops_to_sender) * sc.hop_ms
                + sc.lookup_ms
                + ramp_hi
            )
            if f.downtime_ms > bound + 1e-9:
                raise InvariantViolation("downtime-bound", f"flow {f.label} down {f.downtime_ms} > {bound}")

    def rows(self) -> list[list[str]]:
        return [
            [f.label, _ms(f.failure_ms), _ms(f.detected_ms), _ms(f.monitor_ms), _ms(f.sender_ms), _ms(f.downtime_ms), f.outcome]
            for f in self.flows
        ]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_FIELDS)
        w.writerows(self.rows())
        return buf.getvalue()


def reports_csv(reports: Iterable[RecoveryReport]) -> str:
    """Several failures in one table, keyed by the failed element."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("failure",) + CSV_FIELDS)
    for r in reports:
        for row in r.rows():
            w.writerow([str(r.scenario.element)] + row)
    return buf.getvalue()


def _ms(x: float | None) -> str:
    return "" if x is None else f"{x:.3f}"


def affected_flows(assignment: PathAssignment, element: Element) -> list[int]:
    element.check(assignment.topology)
    return [i for i in assignment.admitted if element.on(assignment.primary[i])]


def monitor_reachable(topology: Topology, detecting_switch: int, monitors: Iterable[int]) -> dict[int, bool]:
    reach = topology.reachable(detecting_switch) if detecting_switch in topology.switches else set()
    return {m: m in reach for m in monitors}


def simulate_failover(
    topology: Topology,
    assignment: PathAssignment,
    aggregation: AggregationResult | None,
    scenario: FailureScenario,
    seed: int,
) -> RecoveryReport:
    if seed is None:
        raise ValueError("a seed is required for failover simulation")
    rng = np.random.default_rng(seed)
    element = scenario.element
    affected = affected_flows(assignment, element)
    report = RecoveryReport(scenario)
    if not affected:
        return report

    post = element.remove_from(topology)
    t0 = scenario.at_ms
    lo, hi = scenario.detect_ms
    detectors = [s for s in element.detectors(topology) if s in post.switches]
    delays = rng.uniform(lo, hi, size=len(detectors)) if detectors else []
    ramps = {}
    if scenario.ramp_up_ms is not None:
        draws = rng.uniform(*scenario.ramp_up_ms, size=len(affected))
        ramps = {i: float(r) for i, r in zip(affected, draws)}

    dist_cache: dict[int, dict[int, int]] = {}

    def hops(a: int, b: int) -> int | None:
        if a not in post.switches:
            return None
        if a not in dist_cache:
            dist_cache[a] = post.hop_distances(a)
        return dist_cache[a].get(b)

    seq = itertools.count()
    queue: list[tuple[float, int, str, tuple]] = []

    def push(t: float, kind: str, *payload) -> None:
        heapq.heappush(queue, (t, next(seq), kind, payload))

    push(t0, "fail")
    for det, delay in zip(detectors, delays):
        push(t0 + float(delay), "detect", det)

    # per-flow context: backup usability, sender switch
    flows: dict[int, dict] = {}
    for i in affected:
        d = assignment.matrix[i]
        backup = assignment.backup.get(i)
        vlan = aggregation.vlan_of((i, BACKUP)) if aggregation is not None else None
        provisioned = aggregation is None or vlan is not None
        usable = backup is not None and provisioned and not element.on(backup)
        sender_sw = topology.attachment(d.src)
        flows[i] = {"demand": d, "usable": usable, "vlan": vlan, "sender": sender_sw, "done": None}

    monitor_state: dict[int, tuple[float, int, float, int]] = {}
    while queue:
        t, _, kind, payload = heapq.heappop(queue)
        if kind == "fail":
            report.events.append((t, f"fail {element}"))
        elif kind == "detect":
            (det,) = payload
            report.events.append((t, f"detect switch {det}"))
            for m in scenario.monitors:
                h = hops(det, m)
                if h is not None:
                    push(t + h * scenario.hop_ms, "trap", m, det, t, h)
        elif kind == "trap":
            m, det, t_det, h = payload
            if m in monitor_state:
                continue
            monitor_state[m] = (t, det, t_det, h)
            report.events.append((t, f"trap at monitor {m} from switch {det}"))
            push(t + scenario.lookup_ms, "lookup", m)
        elif kind == "lookup":
            (m,) = payload
            report.events.append((t, f"lookup done at monitor {m}"))
            for i, ctx in flows.items():
                if not ctx["usable"]:
                    continue
                h = hops(m, ctx["sender"])
                if h is not None:
                    push(t + h * scenario.hop_ms, "notify", i, m, h)
        elif kind == "notify":
            i, m, h = payload
            ctx = flows[i]
            if ctx["done"] is not None:
                continue
            ctx["done"] = (t, m, h)
            report.events.append((t, f"sender of flow {i} moves to VLAN {ctx['vlan']}"))

    out = []
    for i in affected:
        ctx = flows[i]
        d = ctx["demand"]
        base = dict(demand=i, src=d.src, dst=d.dst, failure_ms=t0, backup_vlan=ctx["vlan"])
        if not ctx["usable"]:
            out.append(FlowRecovery(outcome=UNRECOVERABLE, **base))
            continue
        if ctx["done"] is None:
            out.append(FlowRecovery(outcome=STALLED, **base))
            continue
        t_send, m, h_send = ctx["done"]
        t_mon, det, t_det, h_mon = monitor_state[m]
        ramp = ramps.get(i, 0.0)
        out.append(
            FlowRecovery(
                outcome=RECOVERED,
                detected_ms=t_det,
                monitor_ms=t_mon,
                sender_ms=t_send,
                downtime_ms=t_send - t0 + ramp,
                detector=det,
                monitor=m,
                hops_to_monitor=h_mon,
                hops_to_sender=h_send,
                ramp_ms=ramp,
                **base,
            )
        )
    report.flows = tuple(out)
    report.check()
    return report


def active_path(assignment: PathAssignment, report: RecoveryReport, demand: int) -> Path | None:
    """Path a demand uses after the failover settles."""
    for f in report.flows:
        if f.demand == demand:
            return assignment.backup.get(demand) if f.outcome == RECOVERED else None
    return assignment.primary.get(demand)

