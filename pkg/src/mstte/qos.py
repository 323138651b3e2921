"""Ingress policing with single-rate two-color token buckets.

Packet level: :class:`TokenBucketPolicer` decides per frame.  Flow level:
:func:`apply_ingress_policing` clips each host's demands to its profile,
scaling them proportionally, and turns remarked excess into a best-effort
overlay that only spare capacity serves.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Mapping

from mstte.flowsim import ThroughputResult, serve_low_priority
from mstte.netmodel import Demand, Topology, TrafficMatrix

MAX_FRAME_BYTES = 1522
DROP = "drop"
REMARK = "remark"

CONFORM = "conform"
EXCEED_DROP = "exceed-drop"
EXCEED_REMARK = "exceed-remark"

CSV_FIELDS = ("host", "profile_mbps", "offered_mbps", "conform_mbps", "excess_mbps", "action", "low_priority_mbps")


@dataclass(frozen=True)
class RateProfile:
    rate_mbps: float
    burst_bytes: float
    action: str = DROP
    base_class: int = 0
    remark_class: int | None = None

    def __post_init__(self):
        if self.rate_mbps <= 0:
            raise ValueError(f"profile rate must be positive, got {self.rate_mbps}")
        if self.burst_bytes < MAX_FRAME_BYTES:
            raise ValueError(f"burst {self.burst_bytes} is below one maximum frame ({MAX_FRAME_BYTES} bytes)")
        if self.action not in (DROP, REMARK):
            raise ValueError(f"unknown excess action {self.action!r}")
        if not 0 <= self.base_class <= 7:
            raise ValueError(f"802.1p class must be in 0..7, got {self.base_class}")
        if self.action == REMARK:
            if self.base_class == 0:
                raise ValueError("remarking needs a base class above 0")
            rc = self.lower_class
            if not 0 <= rc < self.base_class:
                raise ValueError(f"remark class {rc} is not below base class {self.base_class}")

    @property
    def lower_class(self) -> int:
        return self.base_class - 1 if self.remark_class is None else self.remark_class

    @property
    def bytes_per_s(self) -> float:
        return self.rate_mbps * 1e6 / 8


@dataclass(frozen=True)
class Decision:
    verdict: str
    priority: int

    @property
    def conforms(self) -> bool:
        return self.verdict == CONFORM


@dataclass
class TokenBucketPolicer:
    """Bucket starts full.  Exceeding frames consume no tokens."""

    profile: RateProfile
    tokens: float = field(default=None)
    last_s: float = 0.0

    def __post_init__(self):
        if self.tokens is None:
            self.tokens = float(self.profile.burst_bytes)
        if not 0 <= self.tokens <= self.profile.burst_bytes:
            raise ValueError(f"initial tokens {self.tokens} outside [0, {self.profile.burst_bytes}]")

    def police(self, frame_bytes: int, now_s: float) -> Decision:
        if now_s < self.last_s:
            raise ValueError(f"time went backwards: {now_s} < {self.last_s}")
        if not 0 < frame_bytes <= MAX_FRAME_BYTES:
            raise ValueError(f"frame of {frame_bytes} bytes outside 1..{MAX_FRAME_BYTES}")
        p = self.profile
        self.tokens = min(p.burst_bytes, self.tokens + (now_s - self.last_s) * p.bytes_per_s)
        self.last_s = now_s
        if frame_bytes <= self.tokens:
            self.tokens -= frame_bytes
            return Decision(CONFORM, p.base_class)
        if p.action == DROP:
            return Decision(EXCEED_DROP, p.base_class)
        return Decision(EXCEED_REMARK, p.lower_class)


def fluid_conform_rate(profile: RateProfile, offered_mbps: float, duration_s: float) -> float:
    """Conforming rate of a fluid source: the bucket passes at most its
    initial burst plus the refill over the interval."""
    cap = (profile.burst_bytes * 8 / 1e6 + profile.rate_mbps * duration_s) / duration_s
    return min(offered_mbps, cap)


@dataclass
class PolicingResult:
    matrix: TrafficMatrix
    scale: dict[int, float]
    excess: list[tuple[int, float]]
    overlay: list[int]
    policing_switches: tuple[int, ...] = ()
    carried: list[float] = field(default_factory=list)

    @property
    def dropped_mbps(self) -> float:
        return sum(x for i, x in self.excess if i not in self.overlay)


def apply_ingress_policing(
    topology: Topology,
    matrix: TrafficMatrix,
    profiles: Mapping[int, RateProfile],
    all_switches: bool = False,
) -> PolicingResult:
    """Clip each source host's demands to its profile rate.

    A host sending more than its profile has all its demands scaled by
    ``rate / total``.  ``excess`` lists ``(demand index, clipped Mbps)``;
    ``overlay`` holds the indices whose excess was remarked rather than
    dropped.  Only edge switches police unless ``all_switches`` is set; with
    per-host profiles the flow-level clip is the same either way.
    """
    matrix.check(topology)
    sent: dict[int, float] = {}
    for d in matrix:
        sent[d.src] = sent.get(d.src, 0.0) + d.rate
    for h in sent:
        if h not in profiles:
            raise KeyError(f"no rate profile for host {h}")
    scale = {h: min(1.0, profiles[h].rate_mbps / total) for h, total in sent.items()}
    demands, excess, overlay = [], [], []
    for i, d in enumerate(matrix):
        s = scale[d.src]
        demands.append(Demand(d.src, d.dst, d.rate * s))
        if s < 1.0:
            excess.append((i, d.rate * (1 - s)))
            if profiles[d.src].action == REMARK:
                overlay.append(i)
    if all_switches:
        points = tuple(sorted(topology.switches))
    else:
        points = tuple(sorted({topology.attachment(h) for h in sent}))
    return PolicingResult(TrafficMatrix(tuple(demands)), scale, excess, overlay, points)


def serve_overlay(result: ThroughputResult, policing: PolicingResult) -> list[float]:
    """Carry remarked excess of admitted demands on their engineered paths
    from the capacity the admitted traffic leaves spare."""
    excess = dict(policing.excess)
    admitted = [i for i in policing.overlay if i in result.routes]
    entries = [(excess[i], result.routes[i]) for i in admitted]
    carried = dict(zip(admitted, serve_low_priority(result.topology, result.loads, entries)))
    # rejected demands carry nothing, aligned with ``overlay``
    policing.carried = [carried.get(i, 0.0) for i in policing.overlay]
    return policing.carried


def policing_csv(offered: TrafficMatrix, policing: PolicingResult, profiles: Mapping[int, RateProfile]) -> str:
    """Per source host: offered, conforming and excess rates, and how much
    remarked excess the network carried."""
    sent: dict[int, float] = {}
    for d in offered:
        sent[d.src] = sent.get(d.src, 0.0) + d.rate
    excess: dict[int, float] = {}
    for i, x in policing.excess:
        h = offered[i].src
        excess[h] = excess.get(h, 0.0) + x
    low: dict[int, float] = {}
    for i, c in zip(policing.overlay, policing.carried):
        h = offered[i].src
        low[h] = low.get(h, 0.0) + c
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_FIELDS)
    for h in sorted(sent):
        x = excess.get(h, 0.0)
        w.writerow(
            [h, f"{profiles[h].rate_mbps:.3f}", f"{sent[h]:.3f}", f"{sent[h] - x:.3f}", f"{x:.3f}", profiles[h].action, f"{low.get(h, 0.0):.3f}"]
        )
    return buf.getvalue()
