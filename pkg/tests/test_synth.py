import json
from pathlib import Path

import numpy as np
import pytest

from causalews import synth as S
from causalews.data import bin_observations, build_samples

GOLDEN = Path(__file__).parent / "golden"


@pytest.fixture(scope="module")
def system():
    return S.generate_system(10, 2, 3, 0.1, seed=7)


class TestGenerateSystem:
    def test_golden_adjacency_frozen(self, system):
        gold = json.loads((GOLDEN / "system_n10_m2_l3_seed7.json").read_text())
        v2v = [[int(l), int(i), int(k)] for l, i, k in zip(*np.where(system.v2v_edges))]
        v2o = [[int(l), int(i), int(j)] for l, i, j in zip(*np.where(system.v2o_edges))]
        assert v2v == gold["v2v_edges"]
        assert v2o == gold["v2o_edges"]
        assert system.spurious_correlates == gold["spurious"]

    def test_density_zero_keeps_only_forced_edges(self):
        sys0 = S.generate_system(6, 2, 2, 0.0, seed=3, ensure_spurious=False)
        assert not sys0.v2v_edges.any()
        # forced outcome parents only
        assert all(len(p) == 2 for p in sys0.outcome_parent_sets())

    def test_every_outcome_has_two_parents(self, system):
        assert all(len(p) >= 2 for p in system.outcome_parent_sets())

    def test_stationary_trajectory_bounded(self, system):
        from causalews.rng import SeededRng

        values, _, _ = S._simulate_raw(system, 10_000, SeededRng(99), None)
        assert np.abs(values).max() < 1e3

    def test_edge_count_near_density(self):
        sys_big = S.generate_system(20, 2, 3, 0.1, seed=5, ensure_spurious=False)
        expected = 0.1 * 3 * 20 * 20
        assert abs(int(sys_big.v2v_edges.sum()) - expected) < 4 * np.sqrt(expected)

    def test_density_out_of_range_rejected(self):
        with pytest.raises(ValueError):
            S.generate_system(5, 1, 2, 1.0, seed=1)

    def test_spurious_correlate_is_non_ancestor_child_of_parent(self, system):
        (z,) = system.spurious_correlates
        assert z in system.non_ancestors()
        parents0 = system.outcome_parent_sets()[0]
        assert any(system.v2v_edges[:, x, z].any() for x in parents0)


class TestSimulateCohort:
    def test_zero_missing_rate_fully_observed(self, system):
        recs = S.simulate_cohort(system, 2, 50, missing_rate=0.0, seed=1)
        assert all(len(r.observations) == 50 * system.n_dyn for r in recs)

    def test_identical_seeds_identical_cohorts(self, system):
        a = S.simulate_cohort(system, 3, 40, missing_rate=0.1, seed=11)
        b = S.simulate_cohort(system, 3, 40, missing_rate=0.1, seed=11)
        for ra, rb in zip(a, b):
            assert ra.observations == rb.observations
            assert ra.outcome_events == rb.outcome_events
            assert ra.age == rb.age

    def test_missing_rate_roughly_respected(self, system):
        recs = S.simulate_cohort(system, 4, 200, missing_rate=0.3, seed=2)
        n_cells = 4 * 200 * system.n_dyn
        observed = sum(len(r.observations) for r in recs)
        assert abs(observed / n_cells - 0.7) < 0.02

    def test_all_bins_determinable(self, system):
        recs = S.simulate_cohort(system, 1, 60, seed=4)
        series = bin_observations(recs[0], system.catalog())
        assert (series.labels != -1).all()
        assert len(build_samples(series)) == 60

    def test_intervention_validation_rejects_parents(self, system):
        parent = sorted(system.outcome_parent_sets()[0])[0]
        env = S.EnvironmentSpec([S.Intervention(parent, "shift", 2.0)])
        with pytest.raises(S.InvalidIntervention):
            S.simulate_cohort(system, 1, 10, env=env, seed=1)

    def test_shift_on_non_ancestor_leaves_outcome_rate(self, system):
        z = system.non_ancestors()[0]
        env = S.EnvironmentSpec([S.Intervention(z, "shift", 2.0)])
        base = S.simulate_cohort(system, 20, 500, seed=6)
        shifted = S.simulate_cohort(system, 20, 500, env=env, seed=6)
        windows = 20 * 500
        rate_base = sum(len(r.outcome_events) for r in base) / windows
        rate_shift = sum(len(r.outcome_events) for r in shifted) / windows
        assert abs(rate_base - rate_shift) < 0.02

    def test_shifted_variable_actually_moves(self, system):
        z = system.non_ancestors()[0]
        env = S.EnvironmentSpec([S.Intervention(z, "shift", 2.0)])
        base = S.simulate_cohort(system, 3, 200, seed=8)
        shifted = S.simulate_cohort(system, 3, 200, env=env, seed=8)

        def mean_of(recs, var):
            vals = [v for r in recs for _, i, v in r.observations if i == var]
            return np.mean(vals)

        delta = mean_of(shifted, z) - mean_of(base, z)
        assert delta > 1.0 * system.stationary_std[z]


class TestExport:
    def test_round_trip(self, system, tmp_path):
        path = tmp_path / "ground_truth.json"
        S.export_ground_truth(system, path, n_chunks=14)
        t_v2o, t_v2v = S.load_ground_truth(path, 14, system.catalog())
        e_v2o, e_v2v = system.truth_chunk_arrays(14)
        np.testing.assert_array_equal(t_v2o, e_v2o)
        np.testing.assert_array_equal(t_v2v, e_v2v)

    def test_truth_lives_in_most_recent_chunk(self, system):
        t_v2o, t_v2v = system.truth_chunk_arrays(14)
        assert not t_v2o[1:].any() and not t_v2v[1:].any()
        assert t_v2o[0].sum() == system.summary_v2o().sum()

    def test_outcome_rows_have_no_out_edges(self, system, tmp_path):
        path = tmp_path / "ground_truth.json"
        S.export_ground_truth(system, path)
        doc = json.loads(path.read_text())
        outcome_names = set(system.catalog().outcomes)
        for graph in (doc["v2o"], doc["v2v"]):
            assert all(e["src"] not in outcome_names for e in graph["edges"])
