import numpy as np
import pytest

from tegnn import netmodel
from tegnn.netmodel import (
    GenerationError,
    NetworkTopology,
    Provenance,
    SDPair,
    TopologyError,
    TopologyParseError,
    generate_erdos_renyi,
    generate_waxman,
    instance_from_dict,
    instance_to_dict,
    load_topology_file,
    sample_instance,
    yen_k_shortest_paths,
)

from conftest import random_desk_instance
from oracles import all_simple_paths


class TestTopologyInvariants:
    def test_rejects_self_loop(self):
        with pytest.raises(TopologyError, match="self-loop"):
            NetworkTopology(3, ((0, 0, 10.0),), Provenance.make("file", name="x"))

    def test_rejects_duplicate_ordered_pair(self):
        with pytest.raises(TopologyError, match="duplicate"):
            NetworkTopology(
                3, ((0, 1, 10.0), (0, 1, 20.0)), Provenance.make("file", name="x")
            )

    def test_rejects_nonpositive_capacity(self):
        with pytest.raises(TopologyError, match="capacity"):
            NetworkTopology(2, ((0, 1, 0.0),), Provenance.make("file", name="x"))

    def test_rejects_out_of_range_endpoint(self):
        with pytest.raises(TopologyError, match="out of range"):
            NetworkTopology(2, ((0, 2, 5.0),), Provenance.make("file", name="x"))


class TestErdosRenyi:
    def test_complete_when_q_is_one(self):
        topo = generate_erdos_renyi(2, 1.0, seed=3)
        assert topo.num_links == 2

    def test_parameter_validation(self):
        with pytest.raises(ValueError):
            generate_erdos_renyi(1, 0.5, seed=0)
        with pytest.raises(ValueError):
            generate_erdos_renyi(5, 0.0, seed=0)
        with pytest.raises(ValueError):
            generate_erdos_renyi(5, 1.5, seed=0)

    def test_link_count_matches_binomial_statistics(self):
        # mean over 100 seeds vs binomial mean 20*19*0.3 = 114, 4 sigma band
        counts = [generate_erdos_renyi(20, 0.3, seed=s).num_links for s in range(100)]
        expected = 20 * 19 * 0.3
        sigma_mean = np.sqrt(20 * 19 * 0.3 * 0.7 / 100)
        assert abs(np.mean(counts) - expected) < 4 * sigma_mean

    def test_dense_hundred_node_scale(self):
        # n=100, q=0.8 sits at the ~7.9e3 link scale
        count = generate_erdos_renyi(100, 0.8, seed=11).num_links
        expected = 100 * 99 * 0.8
        sigma = np.sqrt(100 * 99 * 0.8 * 0.2)
        assert abs(count - expected) < 4 * sigma
        assert 7000 < count < 8500

    def test_deterministic_per_seed(self):
        a = generate_erdos_renyi(15, 0.4, seed=9)
        b = generate_erdos_renyi(15, 0.4, seed=9)
        assert a == b
        assert a != generate_erdos_renyi(15, 0.4, seed=10)

    def test_capacities_in_range(self):
        topo = generate_erdos_renyi(10, 0.5, seed=1, capacity_range=(10.0, 20.0))
        caps = topo.capacities()
        assert np.all((caps >= 10.0) & (caps <= 20.0))


class TestWaxman:
    def test_two_node_acceptance_rate(self):
        # with n=2 the single pairwise distance equals maxdist, so the link
        # probability is exactly alpha * exp(-1/beta) = exp(-1)
        total = sum(generate_waxman(2, 1.0, 1.0, seed=s).num_links for s in range(10_000))
        rate = total / 20_000
        p = np.exp(-1.0)
        sigma = np.sqrt(p * (1 - p) / 20_000)
        assert abs(rate - p) < 4 * sigma

    def test_rejects_degenerate_parameters(self):
        with pytest.raises(ValueError):
            generate_waxman(2, 0.0, 0.5, seed=0)
        with pytest.raises(ValueError):
            generate_waxman(2, 0.5, 0.0, seed=0)
        with pytest.raises(ValueError):
            generate_waxman(1, 0.5, 0.5, seed=0)

    def test_deterministic_per_seed(self):
        assert generate_waxman(30, 0.3, 0.4, seed=7) == generate_waxman(30, 0.3, 0.4, seed=7)

    def test_default_connection_parameters_stay_sparse(self):
        # alpha=0.1 keeps the link count in the hundreds for n=200
        topo = generate_waxman(200, 0.1, 0.2, seed=5)
        assert 100 < topo.num_links < 2000


class TestTopologyFile:
    def test_b4_shaped_fixture(self):
        topo = load_topology_file("recipes/topologies/b4_like.topo")
        assert topo.num_nodes == 12
        assert topo.num_links == 38
        assert topo.provenance.kind == "file"

    def test_ulink_expands_to_both_directions(self, tmp_path):
        f = tmp_path / "t.topo"
        f.write_text("nodes 2\nulink 0 1 7.5\n")
        topo = load_topology_file(f)
        assert set((s, d) for s, d, _c in topo.links) == {(0, 1), (1, 0)}
        assert all(c == 7.5 for _s, _d, c in topo.links)

    def test_empty_file_is_a_parse_error(self, tmp_path):
        f = tmp_path / "empty.topo"
        f.write_text("")
        with pytest.raises(TopologyParseError, match="nodes"):
            load_topology_file(f)

    def test_zero_capacity_is_a_validation_error(self, tmp_path):
        f = tmp_path / "zero.topo"
        f.write_text("nodes 2\nlink 0 1 0\n")
        with pytest.raises(TopologyError, match="capacity"):
            load_topology_file(f)

    def test_malformed_line_reports_line_number(self, tmp_path):
        f = tmp_path / "bad.topo"
        f.write_text("nodes 2\nlink 0 one 5\n")
        with pytest.raises(TopologyParseError, match="line 2"):
            load_topology_file(f)

    def test_duplicate_link_is_a_validation_error(self, tmp_path):
        f = tmp_path / "dup.topo"
        f.write_text("nodes 2\nlink 0 1 5\nlink 0 1 6\n")
        with pytest.raises(TopologyError, match="duplicate"):
            load_topology_file(f)

    def test_comments_and_blank_lines_ignored(self, tmp_path):
        f = tmp_path / "c.topo"
        f.write_text("# header\nnodes 3\n\nlink 0 1 5 # directed\nlink 1 2 6\n")
        assert load_topology_file(f).num_links == 2


class TestYen:
    def test_single_link_graph(self):
        topo = NetworkTopology(2, ((0, 1, 5.0),), Provenance.make("file", name="x"))
        assert yen_k_shortest_paths(topo, 0, 1, 3) == [[0]]

    def test_two_path_example(self, two_path_instance):
        topo = two_path_instance.topology
        assert yen_k_shortest_paths(topo, 0, 3, 2) == [[0], [1, 2]]

    def test_no_path_gives_empty_list(self):
        topo = NetworkTopology(3, ((0, 1, 5.0),), Provenance.make("file", name="x"))
        assert yen_k_shortest_paths(topo, 0, 2, 4) == []

    def test_validation(self):
        topo = NetworkTopology(2, ((0, 1, 5.0),), Provenance.make("file", name="x"))
        with pytest.raises(ValueError):
            yen_k_shortest_paths(topo, 0, 0, 1)
        with pytest.raises(ValueError):
            yen_k_shortest_paths(topo, 0, 1, 0)

    @pytest.mark.parametrize("trial", range(40))
    def test_matches_exhaustive_enumeration_prefix(self, trial):
        # on graphs with <= 8 nodes the output must equal the first k entries
        # of the (length, lexicographic) sorted list of all simple paths
        rng = np.random.default_rng(60_000 + trial)
        n = int(rng.integers(3, 9))
        q = float(rng.uniform(0.25, 0.8))
        topo = generate_erdos_renyi(n, q, seed=61_000 + trial)
        s, t = 0, n - 1
        k = int(rng.integers(1, 6))
        expected = [list(p) for p in all_simple_paths(topo, s, t)[:k]]
        assert yen_k_shortest_paths(topo, s, t, k) == expected


class TestSampleInstance:
    def test_single_pair_single_path(self):
        topo = NetworkTopology(2, ((0, 1, 5.0), (1, 0, 5.0)), Provenance.make("file", name="x"))
        inst = sample_instance(topo, 1, (1.0, 2.0), k=1, seed=4)
        assert len(inst.pairs) == 1 and inst.num_paths == 1

    def test_matches_desk_recipe_shape(self):
        inst = random_desk_instance(0)
        assert len(inst.pairs) == 10
        assert all(1 <= len(g) <= 4 for g in inst.paths)
        assert all(1000 <= p.demand <= 5000 for p in inst.pairs)

    def test_seed_repeat_is_bit_identical(self):
        topo = generate_erdos_renyi(20, 0.4, seed=1)
        a = sample_instance(topo, 10, (1000.0, 5000.0), k=4, seed=2)
        b = sample_instance(topo, 10, (1000.0, 5000.0), k=4, seed=2)
        assert a == b

    def test_disconnected_topology_fails_loudly(self):
        # two isolated components: only 4 ordered pairs are connected, so
        # asking for 5 exhausts the supply
        links = ((0, 1, 5.0), (1, 0, 5.0), (2, 3, 5.0), (3, 2, 5.0))
        topo = NetworkTopology(4, links, Provenance.make("file", name="x"))
        with pytest.raises(GenerationError, match="connected"):
            sample_instance(topo, 5, (1.0, 2.0), k=2, seed=0)

    def test_retry_budget_exhaustion_fails_loudly(self):
        # a 60-node graph with a single linked pair: almost every draw is
        # disconnected, blowing the retry budget before finding 2 pairs
        links = ((0, 1, 5.0), (1, 0, 5.0))
        topo = NetworkTopology(60, links, Provenance.make("file", name="x"))
        with pytest.raises(GenerationError, match="disconnected"):
            sample_instance(topo, 2, (1.0, 2.0), k=2, seed=0)

    def test_pair_budget_validation(self):
        topo = NetworkTopology(2, ((0, 1, 5.0),), Provenance.make("file", name="x"))
        with pytest.raises(ValueError):
            sample_instance(topo, 3, (1.0, 2.0), k=1, seed=0)

    @pytest.mark.parametrize("trial", range(50))
    def test_generated_instances_satisfy_type_invariants(self, trial):
        # TEInstance.__post_init__ enforces contiguity, simplicity, endpoint
        # match, uniqueness; surviving construction is the assertion
        inst = random_desk_instance(trial)
        assert inst.num_paths >= len(inst.pairs)


class TestSerialization:
    def test_instance_round_trip(self):
        inst = random_desk_instance(3)
        data = instance_to_dict(inst, "abc123")
        back = instance_from_dict(data)
        assert back == inst
        assert data["recipe"] == "abc123"
