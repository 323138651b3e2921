"""Acceptance criteria 1-8, each printing one PASS/FAIL line with its
measured figures.  Run with ``pytest tests/test_acceptance.py -v``."""

import random
import time
import warnings

import numpy as np
import pytest

from conftest import MONITOR
from mstte import cli
from mstte.aggregate import aggregate_paths
from mstte.failover import Element, FailureScenario, reports_csv, simulate_failover
from mstte.flowsim import MODES, MULTI, SINGLE, route, rows_to_csv, run_grid_experiment
from mstte.mcast import (
    BernoulliLoss,
    IgmpWarning,
    MulticastGroup,
    SnoopState,
    build_multicast_tree,
    check_group_limits,
    delivery_csv,
    expected_retransmissions,
    process_igmp,
    simulate_reliable_multicast,
)
from mstte.netmodel import Topology, build_grid, has_cycle, uniform_matrix
from mstte.qos import MAX_FRAME_BYTES, RateProfile, TokenBucketPolicer, fluid_conform_rate
from mstte.tepath import select_paths
from oracles import lp_max_throughput
from test_aggregate import check_result, exhaustive_min_trees, random_paths
from test_cli import FULL
from test_mcast import recompute

pytestmark = pytest.mark.slow


@pytest.fixture
def verdict(capsys):
    def say(n, ok, detail):
        with capsys.disabled():
            print(f"\nACCEPTANCE {n} {'PASS' if ok else 'FAIL'}: {detail}")
        assert ok, detail

    return say


def test_1_grid_dominance(verdict):
    start = time.perf_counter()
    rows = run_grid_experiment()
    elapsed = time.perf_counter() - start
    by = {(r.size, r.mode): r.aggregate_mbps for r in rows}
    sizes = sorted({r.size for r in rows})
    ratios = {s: by[(s, MULTI)] / by[(s, SINGLE)] for s in sizes}
    dominates = all(by[(s, MULTI)] >= by[(s, SINGLE)] for s in sizes)
    big_ratio = all(ratios[s] >= 2 for s in sizes if s >= 36)
    ok = dominates and big_ratio and elapsed < 60
    detail = ", ".join(f"n={s} x{ratios[s]:.2f}" for s in sizes) + f"; {elapsed:.1f} s"
    verdict(1, ok, detail)


def test_2_lp_bracket(verdict):
    start = time.perf_counter()
    parts, ok = [], True
    for side, rate in ((4, 10), (5, 8)):
        t = build_grid(side, 100)
        m = uniform_matrix(t, rate)
        lp = lp_max_throughput(t, m)
        agg = {mode: route(t, m, mode).aggregate for mode in MODES}
        ok &= all(v <= lp + 1e-6 for v in agg.values())
        ok &= agg[MULTI] >= 0.5 * lp
        parts.append(f"side {side}: LP {lp:.0f}, multi {agg[MULTI]:.0f} ({agg[MULTI] / lp:.0%})")
    elapsed = time.perf_counter() - start
    ok &= elapsed < 300
    verdict(2, ok, "; ".join(parts) + f"; {elapsed:.1f} s")


def test_3_failover_timing(verdict, backup_topology, backup_matrix):
    a = select_paths(backup_topology, backup_matrix, with_backup=True)
    agg = aggregate_paths(backup_topology, a.paths(only=a.protected))
    plain, ramped = [], []
    for seed in range(1000):
        for ramp, sink in ((None, plain), ((300, 400), ramped)):
            sc = FailureScenario(Element.link(3, 6), detect_ms=(400, 500), hop_ms=1, monitors=(MONITOR,), ramp_up_ms=ramp)
            report = simulate_failover(backup_topology, a, agg, sc, seed=seed)
            report.check()
            assert report.flows and all(f.downtime_ms is not None for f in report.flows)
            sink.extend(f.downtime_ms for f in report.flows)
    ok = all(400 < d < 600 for d in plain) and max(plain) < 1000 and max(ramped) < 1000
    verdict(
        3,
        ok,
        f"downtime {min(plain):.1f}-{max(plain):.1f} ms over {len(plain)} runs; "
        f"with ramp-up {min(ramped):.1f}-{max(ramped):.1f} ms",
    )


def test_4_aggregation(verdict):
    failures, compared = [], 0
    for side, seed in ((3, 100), (4, 200)):
        t = build_grid(side)
        rng = random.Random(seed)
        for trial in range(500):
            paths = random_paths(t, rng.randint(1, 6), rng, with_backup=rng.random() < 0.5)
            steps = []
            r = aggregate_paths(t, paths, observer=lambda i, k, e: steps.append(e))
            try:
                check_result(t, paths, r)
                assert not any(has_cycle(e) for e in steps)
                if len(paths) <= 8:
                    compared += 1
                    assert len(r.trees) == exhaustive_min_trees(paths)
            except AssertionError:
                failures.append((side, trial))
    verdict(4, not failures, f"1000 instances, {compared} against the exhaustive minimum, {len(failures)} failures")


def test_5_disjointness(verdict):
    rng = random.Random(5)
    nets = [build_grid(s) for s in (3, 4, 5, 6)]
    for _ in range(30):
        n = rng.randint(4, 9)
        caps = {(i, j): rng.choice([10, 50, 100]) for i in range(n) for j in range(i + 1, n) if rng.random() < 0.5}
        for i in range(n - 1):
            caps.setdefault((i, i + 1), 100)
        nets.append(Topology(range(n), caps, {i: i for i in range(n)}))
    backups = bad = none = 0
    for t in nets:
        a = select_paths(t, uniform_matrix(t, 5), with_backup=True)
        for i, b in a.backup.items():
            if b is None:
                none += 1
                continue
            p = a.primary[i]
            backups += 1
            if set(p.edges) & set(b.edges) or set(p.interior) & set(b.interior) or (b.src, b.dst) != (p.src, p.dst):
                bad += 1
    verdict(5, backups > 0 and bad == 0, f"{backups} backups on {len(nets)} networks ({none} demands without one), {bad} overlapping")


def test_6_multicast(verdict):
    t = build_grid(3)
    rng = random.Random(6)
    roots = {g: rng.choice(sorted(t.hosts)) for g in range(6)}
    s, members = SnoopState(dict(roots)), {g: set() for g in roots}
    mismatches = 0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", IgmpWarning)
        for step in range(10_000):
            g, h, msg = rng.choice(sorted(roots)), rng.choice(sorted(t.hosts)), rng.choice(["join", "leave"])
            s = process_igmp(s, msg, g, h, t)
            (members[g].add if msg == "join" else members[g].discard)(h)
            if step % 50 == 49:
                mismatches += s.forwarding != recompute(t, roots, {k: v for k, v in members.items() if v})

    # 501 groups rooted on switch 0: 0 and 1 carry all, switch 2 only 500
    line = Topology(range(3), {(0, 1): 10, (1, 2): 10}, {0: 0, 1: 1, 2: 2})
    lim = SnoopState({g: 0 for g in range(501)})
    for g in range(501):
        lim = process_igmp(lim, "join", g, 2 if g < 500 else 1, line)
    flagged = check_group_limits(lim)
    limits_ok = flagged == [(0, 501), (1, 501)]

    group = MulticastGroup(1, 0, set(range(1, 9)))
    tree = build_multicast_tree(t, group)
    trials, p = 10_000, 0.01
    retx = np.array(
        [simulate_reliable_multicast(t, group, tree, BernoulliLoss(p), seed=k, max_retries=None).retransmissions for k in range(trials)]
    )
    mean, var = expected_retransmissions(8, p)
    sigma = np.sqrt(var / trials)
    mc_ok = abs(retx.mean() - mean) <= 3 * sigma
    ok = mismatches == 0 and limits_ok and mc_ok
    verdict(
        6,
        ok,
        f"{mismatches} snoop mismatches in 10^4 events; flagged {flagged}; "
        f"retransmissions {retx.mean():.4f} vs {mean:.4f} +- {3 * sigma:.4f}",
    )


def test_7_policer(verdict):
    profile = RateProfile(10, 15000)
    horizon, size, offered = 10.0, 1500, 20.0
    rng = np.random.default_rng(7)
    n = int(offered * 1e6 / 8 / size * horizon * 1.2)
    times = np.cumsum(rng.exponential(size * 8 / (offered * 1e6), n))
    pol = TokenBucketPolicer(profile)
    passed = sum(size for x in times[times < horizon] if pol.police(size, float(x)).conforms)
    measured = passed * 8 / 1e6 / horizon
    fluid = fluid_conform_rate(profile, offered, horizon)
    rate_ok = abs(measured - fluid) <= 0.02 * fluid

    events = 1_000_000
    gaps = rng.exponential(1e-4, events)
    sizes = rng.integers(64, MAX_FRAME_BYTES + 1, events)
    rates = rng.choice([1.0, 10.0, 100.0], 10)
    violations, now, idx = 0, 0.0, 0
    for rate in rates:
        prof = RateProfile(float(rate), 20000)
        pol = TokenBucketPolicer(prof)
        start, conformed = now, 0
        for gap, sz in zip(gaps[idx : idx + events // 10].tolist(), sizes[idx : idx + events // 10].tolist()):
            now += gap
            if pol.police(sz, now).conforms:
                conformed += sz
            if not 0 <= pol.tokens <= prof.burst_bytes or conformed > prof.burst_bytes + prof.bytes_per_s * (now - start) + 1e-6:
                violations += 1
        idx += events // 10
    verdict(7, rate_ok and violations == 0, f"conform {measured:.3f} vs fluid {fluid:.3f} Mbps; {violations} bound violations in 10^6 frames")


def test_8_determinism(verdict, tmp_path, backup_topology, backup_matrix):
    csvs = []
    for run in range(2):
        out = tmp_path / f"r{run}"
        scen = tmp_path / "s.txt"
        scen.write_text(FULL)
        assert cli.main(["run", str(scen), "--out", str(out)]) == 0
        files = {p.name: p.read_bytes() for p in sorted(out.iterdir())}
        a = select_paths(backup_topology, backup_matrix, with_backup=True)
        agg = aggregate_paths(backup_topology, a.paths(only=a.protected))
        sc = FailureScenario(Element.link(3, 6), monitors=(MONITOR,), ramp_up_ms=(300, 400))
        files["failover"] = reports_csv([simulate_failover(backup_topology, a, agg, sc, seed=s) for s in range(20)]).encode()
        g = MulticastGroup(1, 0, set(range(1, 9)))
        t = build_grid(3)
        tree = build_multicast_tree(t, g)
        files["mcast"] = delivery_csv(
            [simulate_reliable_multicast(t, g, tree, BernoulliLoss(0.1, "all"), seed=s) for s in range(20)]
        ).encode()
        files["grid"] = rows_to_csv(run_grid_experiment([4, 5], [10, 8])).encode()
        csvs.append(files)
    same = csvs[0] == csvs[1]
    verdict(8, same, f"{len(csvs[0])} outputs compared byte for byte")
