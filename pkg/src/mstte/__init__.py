"""Traffic engineering and flow-level simulation for VLAN-based multi-spanning-tree Ethernet."""

from mstte.netmodel import (
    Demand,
    EdgePair,
    Path,
    RoutedPath,
    Topology,
    TrafficMatrix,
    VlanTree,
    build_grid,
    is_spanning_tree,
    uniform_matrix,
)

__version__ = "0.1.0"

__all__ = [
    "Demand",
    "EdgePair",
    "Path",
    "RoutedPath",
    "Topology",
    "TrafficMatrix",
    "VlanTree",
    "build_grid",
    "is_spanning_tree",
    "uniform_matrix",
]
