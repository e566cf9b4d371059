import numpy as np
import pytest

from causalews import graph as G
from causalews import tensor as T
from causalews.data import Variable, VariableCatalog
from causalews.params import ParamStore
from causalews.rng import SeededRng


def catalog(n=4, m=2):
    return VariableCatalog(
        dynamic=tuple(Variable(f"var_{i}") for i in range(n)),
        static=(Variable("age"), Variable("gender"), Variable("ethnicity")),
        outcomes=tuple(f"outcome_{j}" for j in range(m)),
    )


class TestCumulativeProbs:
    def test_zero_factor_gives_half(self):
        q = np.ones((3, 2, 2))
        q[0] = 0.0
        p = G.cumulative_probs(T.constant(q)).numpy()
        np.testing.assert_allclose(p[0], 0.5, atol=1e-9)

    def test_closed_form_two_chunks(self):
        q = np.zeros((2, 1, 1))
        q[0] = -4.0
        q[1] = 1.5
        p = G.cumulative_probs(T.constant(q)).numpy()
        assert p[0, 0, 0] == pytest.approx(1 / (1 + np.exp(4.0)), abs=1e-6)
        assert p[1, 0, 0] == pytest.approx(1 / (1 + np.exp(6.0)), abs=1e-6)

    def test_all_ones_constant_in_lag(self):
        p = G.cumulative_probs(T.constant(np.ones((14, 3, 2)))).numpy()
        np.testing.assert_allclose(p, 1 / (1 + np.exp(-1.0)), atol=1e-5)

    def test_lag_monotone_decay_for_off_edges(self):
        # q[0] < 0 with q[w>=1] > 1 must be strictly decreasing in chunk
        q = np.full((6, 2, 2), 1.2)
        q[0] = -0.8
        p = G.cumulative_probs(T.constant(q)).numpy()
        assert np.all(np.diff(p, axis=0) < 0)

    def test_probabilities_clamped(self):
        q = np.full((4, 1, 1), 50.0)
        p = G.cumulative_probs(T.constant(q)).numpy()
        assert np.all(p <= 1 - G.PROB_FLOOR + 1e-12) and np.all(p >= G.PROB_FLOOR - 1e-12)

    def test_gradient_matches_finite_differences(self):
        rng = SeededRng(31)

        def f(q):
            p = G.cumulative_probs(T.reshape(q, (3, 2, 2)))
            return G.regularizer_value(p)

        err = T.gradient_check(f, rng.normal((12,)), eps=1e-6)
        assert err < 1e-4


class TestRelaxedSampling:
    def test_symmetric_draw_at_half(self):
        # equal gumbel noise cancels: s = sigma(logit(0.5)/tau) = 0.5
        p = T.constant(np.full((1, 1), 0.5))
        one_minus = T.add_scalar(T.mul_scalar(p, -1.0), 1.0)
        logit = T.sub(T.log(p), T.log(one_minus)).numpy()
        assert abs(logit[0, 0]) < 1e-12

    def test_hard_rounding_matches_bernoulli_rate(self):
        rng = SeededRng(32)
        for target in (0.1, 0.5, 0.9):
            p = T.constant(np.full((10_000,), target))
            s = G.sample_relaxed(p, temperature=0.1, rng=rng.child(f"t{target}")).numpy()
            assert abs(np.round(s).mean() - target) < 0.02

    def test_low_temperature_is_nearly_binary(self):
        rng = SeededRng(33)
        p = T.constant(np.full((10_000,), 0.95))
        s = G.sample_relaxed(p, temperature=0.01, rng=rng).numpy()
        frac_binary = np.mean(np.abs(s - np.round(s)) < 1e-3)
        assert frac_binary >= 0.99

    def test_temperature_must_be_positive(self):
        with pytest.raises(ValueError):
            G.sample_relaxed(T.constant(np.full((2,), 0.5)), 0.0, SeededRng(1))


class TestHardSampling:
    def test_extreme_probabilities(self):
        rng = SeededRng(34)
        ones = G.hard_sample(np.full((50, 50), 1 - 1e-6), rng.child("hi"))
        assert ones.all()
        zeros = G.hard_sample(np.full((50, 50), 1e-6), rng.child("lo"))
        assert not zeros.any()

    def test_frequency_matches_probability(self):
        rng = SeededRng(35)
        p = 0.37
        draws = G.hard_sample(np.full((10_000,), p), rng)
        assert abs(draws.mean() - p) < 0.02


class TestRegularizer:
    def test_value_on_constant_half(self):
        p = T.constant(np.full((14, 4, 2), 0.5))
        assert G.regularizer_value(p).item() == pytest.approx(56.0)

    def test_floor_clamped_value(self):
        q = np.full((14, 4, 2), -60.0)
        q[1:] = 1.0
        p = G.cumulative_probs(T.constant(q))
        assert G.regularizer_value(p).item() == pytest.approx(14 * 4 * 2 * G.PROB_FLOOR, rel=0.6)


class TestBinarizeSummarize:
    def test_single_chunk_edge_appears_in_summary(self):
        probs = np.zeros((14, 3, 2)) + 0.01
        probs[3, 1, 0] = 0.9
        v2o = G.binarize(probs, 0.5)
        v2v = G.binarize(np.zeros((14, 3, 3)) + 0.01, 0.5)
        summary = G.summarize(v2o, v2v, catalog(3, 2))
        assert summary.adjacency[1, 3]  # var_1 -> outcome_0
        assert summary.scores[1, 3] == pytest.approx(0.9)

    def test_threshold_one_gives_empty_graph(self):
        probs = G.cumulative_probs(T.constant(np.full((4, 3, 3), 30.0))).numpy()
        bwg = G.binarize(probs, threshold=1.0)
        assert not bwg.adjacency.any()

    def test_outcome_rows_have_no_out_edges(self):
        rng = SeededRng(36)
        v2o = G.binarize(rng.uniform((4, 3, 2)), 0.5)
        v2v = G.binarize(rng.uniform((4, 3, 3)), 0.5)
        summary = G.summarize(v2o, v2v, catalog(3, 2))
        assert not summary.adjacency[3:].any()

    def test_parent_counts_collapse_chunks(self):
        probs = np.zeros((3, 4, 1))
        probs[0, 1, 0] = probs[2, 1, 0] = 0.9  # same pair, two chunks
        probs[1, 2, 0] = 0.8
        bwg = G.binarize(probs, 0.5)
        assert bwg.parent_counts()[0] == 2


class TestDescendants:
    def _summary(self, edges, n=3, m=1):
        cat = catalog(n, m)
        adj = np.zeros((n + m, n + m), dtype=bool)
        for s, d in edges:
            adj[s, d] = True
        return G.SummaryGraph(
            names=[v.name for v in cat.dynamic] + list(cat.outcomes),
            n_dyn=n,
            adjacency=adj,
            scores=adj.astype(float),
        )

    def test_chain(self):
        s = self._summary([(0, 1), (1, 2)])
        assert s.descendants(0) == {1, 2}

    def test_two_cycle_includes_self(self):
        s = self._summary([(0, 1), (1, 0)])
        assert s.descendants(0) == {0, 1}

    def test_outcome_has_no_descendants(self):
        s = self._summary([(0, 3)])
        assert s.descendants(3) == set()

    def test_unknown_node_raises(self):
        s = self._summary([])
        with pytest.raises(KeyError):
            s.descendants("not_a_node")

    def test_ancestors_inverse_of_descendants(self):
        s = self._summary([(0, 1), (1, 2), (2, 3)])
        assert s.ancestors(3) == {0, 1, 2}


class TestGraphJson:
    def test_round_trip(self):
        rng = SeededRng(37)
        cat = catalog(3, 2)
        probs = rng.uniform((4, 3, 2))
        bwg = G.binarize(probs, 0.5)
        doc = G.graph_document(bwg.adjacency, bwg.probs, cat, "v2o", 0.5, chunk_bins=4)
        back = G.parse_graph_document(doc, cat)
        np.testing.assert_array_equal(back.adjacency, bwg.adjacency)
        np.testing.assert_allclose(
            np.where(back.adjacency, back.probs, 0.0),
            np.where(bwg.adjacency, bwg.probs, 0.0),
        )

    def test_node_kinds(self):
        cat = catalog(2, 1)
        doc = G.graph_document(np.zeros((2, 2, 1), dtype=bool), np.zeros((2, 2, 1)), cat, "v2o", 0.5)
        kinds = {n["id"]: n["kind"] for n in doc["nodes"]}
        assert kinds["var_0"] == "variable"
        assert kinds["outcome_0"] == "outcome"


class TestChunkExpansion:
    def test_chunk_zero_is_most_recent(self):
        idx = G.chunk_of_bins(24, 12)
        assert idx[-1] == 0 and idx[0] == 1

    def test_expand_matrix_routes_masks(self):
        e = G.chunk_expand_matrix(24, 2, 12)
        mask = np.array([[1.0, 0.0], [0.0, 1.0]])  # chunk 0 keeps var 0 only
        expanded = e @ mask
        assert expanded[23, 0] == 1.0 and expanded[23, 1] == 0.0
        assert expanded[0, 0] == 0.0 and expanded[0, 1] == 1.0

    def test_window_must_fit_chunks(self):
        with pytest.raises(ValueError):
            G.chunk_expand_matrix(36, 2, 12)


def test_init_graph_params_gentle_decay():
    store = ParamStore()
    gp = G.init_graph_params(store, n_chunks=14, n_dyn=5, n_outcomes=2, n_static=3)
    probs = G.compute_probs(gp)
    assert probs.v2o[0, 0, 0] == pytest.approx(0.3, abs=1e-6)
    assert np.all(np.diff(probs.v2o[:, 0, 0]) < 0)  # decaying over lag chunks
    assert probs.static[0, 0] == pytest.approx(0.3, abs=1e-6)
