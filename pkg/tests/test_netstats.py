import math

import networkx as nx
import numpy as np
import pytest

from mpnet.core_graph import Graph, MultiProfileNetwork, project_to_accounts
from mpnet.errors import DegenerateError, MpnetError
from mpnet.ingest import sample_discrete_power_law
from mpnet.netstats import (age_sex_pyramid, clustering_coefficient, degree_ccdf,
                            fit_power_law, gini_coefficient, household_size_distribution,
                            join_date_histogram, largest_component, path_statistics,
                            stats_report, triangle_count)

import oracles
from fixtures import random_network


def _graph(n, edges):
    return Graph.from_edge_array(n, np.array(edges, dtype=np.int64).reshape(-1, 2))


class TestGini:
    def test_equal(self):
        assert gini_coefficient([3, 3, 3]) == 0.0

    def test_concentrated(self):
        assert gini_coefficient([0, 0, 0, 4]) == pytest.approx(0.75)

    @pytest.mark.parametrize("seed", range(5))
    def test_mean_difference_form(self, seed):
        x = np.random.default_rng(seed).integers(0, 50, 40)
        naive = sum(abs(a - b) for a in x for b in x) / (2 * len(x) ** 2 * x.mean())
        assert gini_coefficient(x) == pytest.approx(naive, abs=1e-12)

    def test_all_zero(self):
        with pytest.raises(DegenerateError):
            gini_coefficient([0, 0])


class TestClustering:
    def test_triangle(self):
        assert clustering_coefficient(_graph(3, [(0, 1), (1, 2), (0, 2)])) == 1.0

    def test_star(self):
        g = _graph(4, [(0, 1), (0, 2), (0, 3)])
        assert clustering_coefficient(g) == 0.0

    def test_no_wedges(self):
        with pytest.raises(DegenerateError):
            clustering_coefficient(_graph(2, [(0, 1)]))

    @pytest.mark.parametrize("seed", range(15))
    def test_matches_networkx(self, seed):
        g = random_network(seed).graph
        ng = oracles.to_networkx(g)
        assert triangle_count(g) == sum(nx.triangles(ng).values()) // 3
        if any(d > 1 for _, d in ng.degree()):
            assert clustering_coefficient(g) == pytest.approx(nx.transitivity(ng), abs=1e-12)


class TestComponentsAndPaths:
    def test_path_graph(self):
        g = _graph(5, [(0, 1), (1, 2), (2, 3), (3, 4)])
        ps = path_statistics(g)
        assert ps.diameter == 4 and ps.mean_path_length == pytest.approx(2.0)

    def test_lcc_tie_break(self):
        frac, nodes = largest_component(_graph(4, [(2, 3), (0, 1)]))
        assert frac == 0.5 and nodes.tolist() == [0, 1]

    def test_isolated_only(self):
        ps = path_statistics(_graph(3, []))
        assert ps.diameter == 0

    @pytest.mark.parametrize("seed", range(15))
    def test_matches_networkx(self, seed):
        net = random_network(seed)
        for g in (net.graph, project_to_accounts(net)):
            frac, diam, mean = oracles.lcc_and_paths(g)
            assert largest_component(g)[0] == pytest.approx(frac)
            ps = path_statistics(g)
            assert ps.diameter == diam
            assert ps.mean_path_length == pytest.approx(mean, abs=1e-12)

    def test_bitset_bfs_beyond_one_word(self):
        ng = nx.connected_watts_strogatz_graph(300, 4, 0.1, seed=1)
        g = _graph(300, list(ng.edges()))
        ps = path_statistics(g)
        assert ps.diameter == nx.diameter(ng)
        assert ps.mean_path_length == pytest.approx(nx.average_shortest_path_length(ng))

    def test_sampled_needs_seed(self):
        with pytest.raises(MpnetError):
            path_statistics(_graph(3, [(0, 1)]), mode="sampled")

    def test_sampled_is_seeded_and_thread_independent(self):
        ng = nx.connected_watts_strogatz_graph(500, 4, 0.1, seed=2)
        g = _graph(500, list(ng.edges()))
        a = path_statistics(g, "sampled", k_sources=100, seed=4)
        b = path_statistics(g, "sampled", k_sources=100, seed=4, threads=3)
        assert a == b and not a.exact and a.sources == 100
        assert a.diameter <= nx.diameter(ng)


class TestPowerLaw:
    def test_recovers_exponent(self):
        x = sample_discrete_power_law(np.random.default_rng(1), 3.0, 20_000)
        fit = fit_power_law(x)
        assert abs(fit.gamma - 3.0) < 0.1
        assert fit.n_tail >= 50

    def test_likelihood_is_maximised(self):
        x = sample_discrete_power_law(np.random.default_rng(2), 2.7, 5000)
        fit = fit_power_law(x, d_min=2)
        tail = x[x >= 2]

        def loglik(g):
            # normalisation summed directly, plus the integral remainder
            ks = np.arange(2, 200_001, dtype=float)
            z = np.sum(ks ** -g) + 200_000.5 ** (1 - g) / (g - 1)
            return -g * np.log(tail).sum() - len(tail) * math.log(z)

        for delta in (-0.01, 0.01):
            assert loglik(fit.gamma) > loglik(fit.gamma + delta)

    def test_approx_method(self):
        x = sample_discrete_power_law(np.random.default_rng(3), 2.5, 20_000)
        fit = fit_power_law(x, method="approx", d_min=5)
        tail = x[x >= 5]
        assert fit.gamma == pytest.approx(1 + len(tail) / np.log(tail / 4.5).sum())

    def test_degenerate(self):
        with pytest.raises(DegenerateError, match="no tail"):
            fit_power_law([3] * 100)
        with pytest.raises(DegenerateError, match="no tail"):
            fit_power_law([1, 2, 3])


class TestSeries:
    def test_ccdf(self):
        assert degree_ccdf([1, 1, 2, 4]) == [(1, 1.0), (2, 0.5), (4, 0.25)]

    def test_household_sizes(self):
        net = MultiProfileNetwork.build([0, 0, 1, 2, 2, 2], [])
        assert household_size_distribution(net) == [(1, 1), (2, 1), (3, 1)]

    def test_join_histogram_and_pyramid(self, small_synth):
        hist = join_date_histogram(small_synth)
        assert sum(c for _, c in hist) == small_synth.n_profiles
        pyr = age_sex_pyramid(small_synth)
        assert set(pyr["by_sex"]) == {"female", "male"}
        assert all(a >= 0 for pts in pyr["by_sex"].values() for a, _ in pts)


class TestReport:
    def test_both_levels(self, small_synth):
        p = stats_report(small_synth, "profile")
        a = stats_report(small_synth, "account")
        assert p.node_count == small_synth.n_profiles
        assert a.node_count == small_synth.n_accounts
        assert p.household_sizes is not None and a.household_sizes is None
        assert p.path_exact and 0 < p.clustering < 1

    def test_degenerate_parts_become_nulls(self):
        net = MultiProfileNetwork.build([0, 1], [(0, 1)])
        rep = stats_report(net)
        assert rep.clustering is None and "clustering" in rep.nulls
        assert rep.power_law is None

    def test_empty(self):
        with pytest.raises(DegenerateError):
            stats_report(MultiProfileNetwork.build([], []))
