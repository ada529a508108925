import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from tegnn import netmodel, teprog


def make_instance(topology, pairs_with_paths, seed=0):
    """Hand-build a TEInstance from (SDPair, path list) tuples."""
    pairs = tuple(p for p, _ in pairs_with_paths)
    paths = tuple(tuple(tuple(path) for path in group) for _, group in pairs_with_paths)
    return netmodel.TEInstance(topology, pairs, paths, seed)


@pytest.fixture
def single_path_instance():
    """One pair, one direct link: d=1000, C=5000."""
    topo = netmodel.NetworkTopology(
        2, ((0, 1, 5000.0),), netmodel.Provenance.make("file", name="unit")
    )
    return make_instance(topo, [(netmodel.SDPair(0, 1, 1000.0), [[0]])])


@pytest.fixture
def capacity_bound_instance():
    """One pair, one direct link: d=1000, C=500 (capacity binds)."""
    topo = netmodel.NetworkTopology(
        2, ((0, 1, 500.0),), netmodel.Provenance.make("file", name="unit")
    )
    return make_instance(topo, [(netmodel.SDPair(0, 1, 1000.0), [[0]])])


@pytest.fixture
def two_path_instance():
    """One SD pair with two candidate paths over three on-path links
    (a direct link plus a two-hop detour); link 4 and 5 stay off-path."""
    topo = netmodel.NetworkTopology(
        4,
        (
            (0, 3, 3000.0),  # l0: direct
            (0, 1, 2500.0),  # l1
            (1, 3, 2000.0),  # l2
            (1, 2, 1500.0),  # l3 off-path
            (2, 1, 1500.0),  # l4 off-path
            (3, 2, 1800.0),  # l5 off-path
        ),
        netmodel.Provenance.make("file", name="unit"),
    )
    return make_instance(
        topo, [(netmodel.SDPair(0, 3, 1000.0), [[0], [1, 2]])]
    )


def random_desk_instance(trial, nodes=None, q=None, pairs=10, k=4, demand=(1000.0, 5000.0)):
    """Deterministic ER instance in the desk-scale regime."""
    nodes = nodes if nodes is not None else [20, 30][trial % 2]
    q = q if q is not None else [0.3, 0.5][(trial // 2) % 2]
    topo = netmodel.generate_erdos_renyi(nodes, q, seed=31000 + trial)
    return netmodel.sample_instance(topo, pairs, demand, k=k, seed=32000 + trial)


def random_small_instance(trial, max_paths=6):
    """Deterministic small instance with at most max_paths path variables."""
    rng = np.random.default_rng(41000 + trial)
    for attempt in range(30):
        n = int(rng.integers(5, 9))
        q = float(rng.uniform(0.35, 0.7))
        num_pairs = int(rng.integers(1, 4))
        k = int(rng.integers(1, 4))
        if num_pairs * k > max_paths:
            continue
        topo = netmodel.generate_erdos_renyi(n, q, seed=42000 + 31 * trial + attempt)
        try:
            return netmodel.sample_instance(
                topo, num_pairs, (1000.0, 5000.0), k=k, seed=43000 + 31 * trial + attempt
            )
        except netmodel.GenerationError:
            continue
    raise RuntimeError("could not build a small test instance")


def random_solution(lp, trial, scale=2.0):
    """Nonnegative random vector in the LP's column space."""
    rng = np.random.default_rng(51000 + trial)
    return rng.uniform(0.0, scale, size=lp.num_cols)
