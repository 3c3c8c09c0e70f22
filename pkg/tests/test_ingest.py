import numpy as np
import pytest

from mpnet.core_graph import MultiProfileNetwork
from mpnet.errors import MpnetError, ParseError, ValidationError
from mpnet.ingest import (DatasetBundle, LoadReport, SynthConfig, generate_synthetic,
                          geocode_locations, load_network, sample_discrete_power_law,
                          write_network)
from mpnet.netstats import fit_power_law

from fixtures import RECOVERY, random_network

HEADER = "id\taccount\trace\tsex\tcoloration\tweight\tweight_range\tbirth_date\tjoin_date\tlat\tlon\n"


def _write(tmp_path, profiles, edges):
    p = tmp_path / "profiles.tsv"
    e = tmp_path / "edges.tsv"
    p.write_text(profiles)
    e.write_text(edges)
    return DatasetBundle(str(p), str(e), "toy")


class TestLoad:
    def test_basic(self, tmp_path):
        b = _write(tmp_path,
                   HEADER
                   + "p1\tA\tsyrian\tf\t\t120.5\t\t2008-01-02\t2009-03-04\t52.5\t13.4\n"
                   + "p2\tA\t\tm\t\t\t\t\t2009-03-05\t\t\n"
                   + "p3\tB\tsyrian\t\t\t\t\t\t2010-01-01\t\t\n",
                   "% konect header\np1 p3\np3\tp1\np2 p2\n")
        rep = LoadReport()
        net = load_network(b, rep)
        assert net.n_profiles == 3 and net.n_accounts == 2 and net.edge_count == 1
        assert net.account_of.tolist() == [0, 0, 1]
        assert rep.self_loops_dropped == 1 and rep.duplicates_dropped == 1
        assert rep.missing["race"] == 1 and rep.missing["location"] == 2
        assert net.profile(0).location == (52.5, 13.4)
        assert net.profile(1).birth_date is None

    def test_unknown_id_reports_line(self, tmp_path):
        b = _write(tmp_path, HEADER + "1\ta\t\t\t\t\t\t\t2009-01-01\t\t\n", "1 1\n1 7\n")
        with pytest.raises(ParseError, match=r"edges.tsv:2: unknown profile id '7'"):
            load_network(b)

    def test_missing_column(self, tmp_path):
        b = _write(tmp_path, "id\taccount\n1\ta\n", "")
        with pytest.raises(ParseError, match="missing column"):
            load_network(b)

    def test_duplicate_id(self, tmp_path):
        row = "1\ta\t\t\t\t\t\t\t2009-01-01\t\t\n"
        with pytest.raises(ParseError, match="duplicate"):
            load_network(_write(tmp_path, HEADER + row + row, ""))

    def test_bad_date(self, tmp_path):
        b = _write(tmp_path, HEADER + "1\ta\t\t\t\t\t\t\t2009-13-01\t\t\n", "")
        with pytest.raises(ParseError, match=":2:"):
            load_network(b)

    def test_missing_join_date(self, tmp_path):
        b = _write(tmp_path, HEADER + "1\ta\t\t\t\t\t\t\t\t\t\n", "")
        with pytest.raises(ParseError, match="join_date"):
            load_network(b)

    def test_forbidden_intra_edges(self, tmp_path):
        rows = "1\ta\t\t\t\t\t\t\t2009-01-01\t\t\n2\ta\t\t\t\t\t\t\t2009-01-01\t\t\n"
        b = _write(tmp_path, HEADER + rows, "1 2\n")
        b.allows_intra_household_edges = False
        with pytest.raises(ValidationError):
            load_network(b)

    def test_missing_file(self, tmp_path):
        with pytest.raises(MpnetError, match="no such file"):
            load_network(DatasetBundle(str(tmp_path / "x"), str(tmp_path / "y")))


class TestRoundTrip:
    @pytest.mark.parametrize("seed", range(5))
    def test_random(self, tmp_path, seed):
        net = random_network(seed)
        p, e = tmp_path / "p.tsv", tmp_path / "e.tsv"
        write_network(net, str(p), str(e))
        back = load_network(DatasetBundle(str(p), str(e)))
        assert back == net

    def test_synthetic(self, tmp_path, small_synth):
        p, e = tmp_path / "p.tsv", tmp_path / "e.tsv"
        write_network(small_synth, str(p), str(e))
        assert load_network(DatasetBundle(str(p), str(e))) == small_synth


class TestGenerator:
    def test_deterministic(self):
        a = generate_synthetic(SynthConfig(n_accounts=300, seed=5))
        b = generate_synthetic(SynthConfig(n_accounts=300, seed=5))
        c = generate_synthetic(SynthConfig(n_accounts=300, seed=6))
        assert a == b
        assert a != c

    def test_no_intra_edges_by_default(self, small_synth):
        e = small_synth.graph.edge_array()
        acct = small_synth.account_of
        assert not np.any(acct[e[:, 0]] == acct[e[:, 1]])
        assert not small_synth.allows_intra_household_edges

    def test_intra_edges_when_requested(self):
        net = generate_synthetic(SynthConfig(n_accounts=500, household_exponent=2.2,
                                             intra_household_edge_prob=1.0, seed=1))
        e = net.graph.edge_array()
        assert np.any(net.account_of[e[:, 0]] == net.account_of[e[:, 1]])

    def test_mean_degree(self):
        net = generate_synthetic(SynthConfig(n_accounts=3000, household_exponent=3.0, seed=2))
        assert abs(2 * net.edge_count / net.n_profiles - 8.0) < 0.5

    def test_households_share_location(self, small_synth):
        t = small_synth.meta
        indptr, members = small_synth.households()
        for i in range(small_synth.n_accounts):
            m = members[indptr[i]:indptr[i + 1]]
            assert len(set(zip(t.lat[m].tolist(), t.lon[m].tolist()))) <= 1 or \
                np.all(np.isnan(t.lat[m]))

    @pytest.mark.parametrize("bad", [dict(n_accounts=0), dict(degree_exponent=2.0),
                                     dict(metadata_model={"colour": 0.1}),
                                     dict(location_coverage=1.5)])
    def test_validation(self, bad):
        with pytest.raises(ValidationError):
            generate_synthetic(SynthConfig(**bad))

    def test_household_sizes_follow_target_law(self):
        from mpnet.ingest import discrete_power_law_pmf
        net = generate_synthetic(SynthConfig(**RECOVERY))
        sizes = net.household_sizes()
        support, pmf = discrete_power_law_pmf(RECOVERY["household_exponent"], 1, 10_000)
        model_cdf = np.cumsum(pmf)
        emp_cdf = np.searchsorted(np.sort(sizes), support, side="right") / len(sizes)
        assert np.abs(emp_cdf - model_cdf).max() < 0.02

    def test_power_law_sampler_recovers_exponent(self):
        x = sample_discrete_power_law(np.random.default_rng(0), 2.5, 50_000)
        assert abs(fit_power_law(x, d_min=1).gamma - 2.5) < 0.03


class TestGeocodeStub:
    def test_stub_and_empty_string(self):
        from mpnet.core_graph import ProfileTable
        meta = ProfileTable(3, join_date=[733000] * 3, location_text=["X", "", "X"])
        net = MultiProfileNetwork.build([0, 1, 2], [], meta)
        res = geocode_locations(net, {"X": (0.0, 0.0)}.get)
        t = res.network.meta
        assert net.meta.location_text[1] is None
        assert t.has_location().tolist() == [True, False, True]
        assert (t.lat[0], t.lon[0]) == (0.0, 0.0)
        assert res.queries == 1 and res.cache_hits == 1


class TestGeocode:
    def _net(self):
        net = random_network(2)
        from mpnet.core_graph import ProfileTable
        cols = {c: net.meta.column(c) for c in ProfileTable.columns}
        n = net.n_profiles
        cols["lat"] = np.full(n, np.nan)
        cols["lon"] = np.full(n, np.nan)
        cols["location_text"] = ["Berlin" if i % 2 else "Atlantis" for i in range(n)]
        return net.with_meta(ProfileTable(n, **cols))

    def test_cache_and_failures(self):
        calls = []

        def provider(text):
            calls.append(text)
            if text == "Atlantis":
                raise RuntimeError("not found")
            return (52.52, 13.40)

        net = self._net()
        res = geocode_locations(net, provider)
        assert sorted(calls) == ["Atlantis", "Berlin"]
        assert res.queries == 2 and res.cache_hits == net.n_profiles - 2
        assert res.failures == {"Atlantis": "not found"}
        assert res.resolved == net.n_profiles // 2
        assert res.network.meta.has_location().sum() == res.resolved
