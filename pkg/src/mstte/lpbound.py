"""Fractional multicommodity flow bounds, solved with HiGHS through scipy.

Commodities are aggregated per source switch: flow leaving one source can
always be decomposed into paths towards each of its sinks, so this is exact
for the fractional problem and far smaller than one commodity per demand.
"""

from __future__ import annotations

import numpy as np
from scipy.optimize import linprog
from scipy.sparse import coo_matrix

from mstte.netmodel import Topology, TrafficMatrix


def _layout(topology: Topology, matrix: TrafficMatrix):
    matrix.check(topology)
    for d in matrix:
        if topology.attachment(d.src) == topology.attachment(d.dst):
            raise ValueError(f"demand {d.src}->{d.dst} does not cross any switch link")
    arcs = list(topology.arcs())
    sources = sorted({topology.attachment(d.src) for d in matrix})
    nodes = sorted(topology.switches)
    node_pos = {n: i for i, n in enumerate(nodes)}
    return arcs, sources, nodes, node_pos


def _conservation(topology, matrix, arcs, sources, nodes, node_pos, n_extra, demand_col):
    """Rows: (source, node != source) balance = inflow of that source's demands."""
    rows, cols, vals = [], [], []
    rhs = []
    row_of: dict[tuple[int, int], int] = {}
    for si, s in enumerate(sources):
        for n in nodes:
            if n == s:
                continue
            row_of[(s, n)] = len(rhs)
            rhs.append(0.0)
    src_pos = {s: i for i, s in enumerate(sources)}
    n_arcs = len(arcs)
    for s in sources:
        base = src_pos[s] * n_arcs
        for ai, (u, v) in enumerate(arcs):
            if (s, v) in row_of:
                rows.append(row_of[(s, v)])
                cols.append(base + ai)
                vals.append(1.0)
            if (s, u) in row_of:
                rows.append(row_of[(s, u)])
                cols.append(base + ai)
                vals.append(-1.0)
    for di, d in enumerate(matrix):
        s, t = topology.attachment(d.src), topology.attachment(d.dst)
        col, coef = demand_col(di, d)
        if col is None:
            rhs[row_of[(s, t)]] += coef
        else:
            rows.append(row_of[(s, t)])
            cols.append(col)
            vals.append(-coef)
    n_vars = len(sources) * n_arcs + n_extra
    a = coo_matrix((vals, (rows, cols)), shape=(len(rhs), n_vars)).tocsr()
    return a, np.array(rhs)


def _capacity_rows(topology, arcs, sources, n_vars, scale_col=None):
    rows, cols, vals = [], [], []
    n_arcs = len(arcs)
    for ai in range(n_arcs):
        for si in range(len(sources)):
            rows.append(ai)
            cols.append(si * n_arcs + ai)
            vals.append(1.0)
        if scale_col is not None:
            rows.append(ai)
            cols.append(scale_col)
            vals.append(-topology.capacity_of(*arcs[ai]))
    a = coo_matrix((vals, (rows, cols)), shape=(n_arcs, n_vars)).tocsr()
    if scale_col is None:
        b = np.array([topology.capacity_of(*arc) for arc in arcs])
    else:
        b = np.zeros(n_arcs)
    return a, b


def max_throughput(topology: Topology, matrix: TrafficMatrix) -> float:
    """Largest total rate routable when every demand may be split and partially served."""
    if not len(matrix):
        return 0.0
    arcs, sources, nodes, node_pos = _layout(topology, matrix)
    n_flow = len(sources) * len(arcs)
    n_vars = n_flow + len(matrix)
    a_eq, b_eq = _conservation(
        topology, matrix, arcs, sources, nodes, node_pos, len(matrix), lambda di, d: (n_flow + di, 1.0)
    )
    a_ub, b_ub = _capacity_rows(topology, arcs, sources, n_vars)
    c = np.zeros(n_vars)
    c[n_flow:] = -1.0
    bounds = [(0, None)] * n_flow + [(0, d.rate) for d in matrix]
    res = linprog(c, A_ub=a_ub, b_ub=b_ub, A_eq=a_eq, b_eq=b_eq, bounds=bounds, method="highs")
    if res.status != 0:
        raise RuntimeError(f"throughput LP failed: {res.message}")
    return float(-res.fun)


def min_max_utilization(topology: Topology, matrix: TrafficMatrix) -> float:
    """Smallest achievable max(load / capacity) routing every demand in full."""
    if not len(matrix):
        return 0.0
    arcs, sources, nodes, node_pos = _layout(topology, matrix)
    n_flow = len(sources) * len(arcs)
    n_vars = n_flow + 1
    a_eq, b_eq = _conservation(topology, matrix, arcs, sources, nodes, node_pos, 1, lambda di, d: (None, d.rate))
    a_ub, b_ub = _capacity_rows(topology, arcs, sources, n_vars, scale_col=n_flow)
    c = np.zeros(n_vars)
    c[n_flow] = 1.0
    res = linprog(c, A_ub=a_ub, b_ub=b_ub, A_eq=a_eq, b_eq=b_eq, bounds=[(0, None)] * n_vars, method="highs")
    if res.status != 0:
        raise RuntimeError(f"congestion LP failed: {res.message}")
    return float(res.fun)
