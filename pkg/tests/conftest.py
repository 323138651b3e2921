import pytest
from hypothesis import settings

from mstte import Demand, Topology, TrafficMatrix

settings.register_profile("default", deadline=None, max_examples=100)
settings.load_profile("default")

# Two disjoint routes between switches 0 and 9: 0-3-6-7-9 over 1000 Mbps
# links and 0-1-4-5-9 over 100 Mbps links, plus a stub of side links that
# never offers a third disjoint route.  Host A (0) sits on switch 0 and
# host B (1) on switch 9; the status monitor is switch 2.
BACKUP_LINKS = {
    (0, 1): 100, (1, 4): 100, (4, 5): 100, (5, 9): 100,
    (0, 3): 1000, (3, 6): 1000, (6, 7): 1000, (7, 9): 1000,
    (1, 2): 100, (2, 3): 100, (5, 8): 100, (7, 8): 100,
}
HOST_A, HOST_B = 0, 1
MONITOR = 2


@pytest.fixture
def backup_topology():
    return Topology(range(10), BACKUP_LINKS, {HOST_A: 0, HOST_B: 9})


@pytest.fixture
def backup_matrix():
    return TrafficMatrix((Demand(HOST_A, HOST_B, 10),))


def line_topology(n, cap=100):
    return Topology(range(n), {(i, i + 1): cap for i in range(n - 1)}, {i: i for i in range(n)})


def ring_topology(n, cap=100):
    links = {(i, (i + 1) % n): cap for i in range(n)}
    return Topology(range(n), links, {i: i for i in range(n)})
