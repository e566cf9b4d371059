import numpy as np
import pytest

from causalews import cde as C
from causalews.jsonio import dumps_canonical
from causalews.rng import SeededRng

from conftest import STATIC_SLICES, build_store, tiny_config, toy_batch


def set_edges(store, cfg, v2o_pairs, v2v_pairs, static_on=False):
    """Pin hard graph edges: chunk 0 carries exactly the given pairs."""
    q_v2o = store.get("graph/q_v2o").data
    q_v2v = store.get("graph/q_v2v").data
    q_stat = store.get("graph/q_static").data
    q_v2o[...] = -4.0
    q_v2o[1:] = 1.0  # keep later chunks off (negative product grows)
    q_v2v[...] = -4.0
    q_v2v[1:] = 1.0
    q_stat[...] = 4.0 if static_on else -4.0
    for i, j in v2o_pairs:
        q_v2o[0, i, j] = 4.0
    for i, k in v2v_pairs:
        q_v2v[0, i, k] = 4.0


def deployed_fixture(seed=0, v2o_pairs=((0, 0), (1, 0), (1, 1), (2, 1)), v2v_pairs=((0, 2), (2, 3))):
    cfg = tiny_config()  # 4 vars, 2 outcomes
    store = build_store(cfg, seed=seed)
    set_edges(store, cfg, v2o_pairs, v2v_pairs)
    from causalews.data import Variable, VariableCatalog

    catalog = VariableCatalog(
        dynamic=tuple(Variable(f"var_{i}") for i in range(cfg.n_dyn)),
        static=(Variable("age"), Variable("gender"), Variable("ethnicity")),
        outcomes=tuple(f"outcome_{j}" for j in range(cfg.n_outcomes)),
    )
    deployed = C.make_deployed(store, cfg, catalog, STATIC_SLICES)
    batch = toy_batch(cfg, n=3, seed=seed + 1)
    return deployed, batch


class TestCdeFull:
    def test_identity_perturbation_zero_delta(self):
        deployed, batch = deployed_fixture()
        v, m, s = batch.values[0], batch.missing[0], batch.statics[0]
        t = int(np.where(~m[:, 1])[0][-1])
        q = C.CdeQuery(variable=1, time_bin=t, value=float(v[t, 1]))
        res = C.cde_full(deployed, v, m, s, q)
        np.testing.assert_array_equal(res.delta_risks, 0.0)
        np.testing.assert_array_equal(res.delta_variables, 0.0)

    def test_outcome_perturbation_rejected(self):
        deployed, batch = deployed_fixture()
        with pytest.raises(ValueError, match="outcomes are not inputs"):
            C.cde_full(
                deployed, batch.values[0], batch.missing[0], batch.statics[0],
                C.CdeQuery(variable=deployed.cfg.n_dyn + 1, time_bin=0),
            )

    def test_linear_stub_matches_analytic(self):
        # a model that is literally f(x) = sum(w * x): delta must be w[t,i]*(x-x')
        cfg = tiny_config()
        rng = SeededRng(3)
        w = rng.normal((cfg.t_window, cfg.n_dyn))

        class LinearStub:
            def predict_risks(self, vals, miss, statics, masks, smasks):
                out = np.stack([(vals[0] * masks[j]* w).sum() for j in range(cfg.n_outcomes)])
                return out[None]

            def predict_next_values(self, vals, miss, statics, masks):
                return np.zeros((1, cfg.n_dyn))

        deployed, batch = deployed_fixture()
        stub = C.DeployedModel(
            npm=LinearStub(),
            cfg=cfg,
            catalog=deployed.catalog,
            out_masks=np.ones((cfg.n_outcomes, cfg.t_window, cfg.n_dyn)),
            out_static=deployed.out_static,
            var_masks=deployed.var_masks,
            v2o=deployed.v2o,
            v2v=deployed.v2v,
            summary=deployed.summary,
        )
        v, m, s = batch.values[0].copy(), batch.missing[0].copy(), batch.statics[0]
        m[:] = False
        t, i = 7, 2
        q = C.CdeQuery(variable=i, time_bin=t, value=float(v[t, i]) - 1.5)
        res = C.cde_full(stub, v, m, s, q)
        np.testing.assert_allclose(res.delta_risks, w[t, i] * 1.5, atol=1e-12)

    def test_missing_cell_perturbation_marks_measured(self):
        # perturbing a missing cell is the counterfactual "had it been
        # measured": the presence channel flips, so parents can respond
        deployed, batch = deployed_fixture(seed=5)
        v, m, s = batch.values[0], batch.missing[0].copy(), batch.statics[0]
        t = deployed.cfg.t_window - 1
        m[t, 1] = True
        res = C.cde_full(deployed, v, m, s, C.CdeQuery(variable=1, time_bin=t, rule="to_mean"))
        assert np.isfinite(res.delta_risks).all()
        # the sign check against the generating system runs on a trained
        # model in the acceptance suite


class TestCdeFast:
    def test_agreement_with_full_over_random_queries(self):
        deployed, batch = deployed_fixture(seed=7)
        rng = SeededRng(8)
        cfg = deployed.cfg
        v, m, s = batch.values[1], batch.missing[1], batch.statics[1]
        cache = C.build_cache(deployed, v, m, s)
        for _ in range(30):
            q = C.CdeQuery(
                variable=int(rng.integers(0, cfg.n_dyn)),
                time_bin=int(rng.integers(0, cfg.t_window)),
                rule=("to_mean", "plus_sigma", "minus_sigma")[int(rng.integers(0, 3))],
            )
            fast = C.cde_fast(deployed, cache, v, m, q)
            full = C.cde_full(deployed, v, m, s, q)
            np.testing.assert_allclose(fast.delta_risks, full.delta_risks, atol=1e-9)
            np.testing.assert_allclose(fast.delta_variables, full.delta_variables, atol=1e-9)
            np.testing.assert_allclose(fast.risks_after, full.risks_after, atol=1e-9)

    def test_non_parent_outcome_delta_exactly_zero(self):
        deployed, batch = deployed_fixture()  # var 0 parents outcome 0 only
        v, m, s = batch.values[0], batch.missing[0], batch.statics[0]
        cache = C.build_cache(deployed, v, m, s)
        q = C.CdeQuery(variable=0, time_bin=deployed.cfg.t_window - 1, rule="plus_sigma")
        res = C.cde_fast(deployed, cache, v, m, q)
        assert res.delta_risks[1] == 0.0  # var 0 is not a parent of outcome 1
        assert res.fast_units == deployed.cfg.n_outcomes + 1

    def test_unit_accounting_inequality_and_equality_condition(self):
        deployed, batch = deployed_fixture()
        v, m, s = batch.values[0], batch.missing[0], batch.statics[0]
        cache = C.build_cache(deployed, v, m, s)
        m_count = deployed.cfg.n_outcomes
        for i in range(deployed.cfg.n_dyn):
            res = C.cde_fast(deployed, cache, v, m, C.CdeQuery(variable=i, time_bin=23))
            assert res.fast_units <= res.full_units
            all_outcomes_descend = deployed.outcome_parents()[i].all()
            assert (res.fast_units == res.full_units) == bool(all_outcomes_descend)
        # var 1 parents both outcomes in the fixture: equality case exists
        res = C.cde_fast(deployed, cache, v, m, C.CdeQuery(variable=1, time_bin=23))
        assert res.fast_units == res.full_units == 2 * m_count

    def test_stale_cache_rejected(self):
        deployed, batch = deployed_fixture()
        v, m, s = batch.values[0], batch.missing[0], batch.statics[0]
        cache = C.build_cache(deployed, v, m, s)
        other = batch.values[1]
        with pytest.raises(C.StaleCache):
            C.cde_fast(deployed, cache, other, batch.missing[1], C.CdeQuery(variable=0, time_bin=0))


class TestBudget:
    def test_paper_scale_fixture(self):
        full, fast = C.cde_budget(39, 6, [18, 17, 23, 22, 27, 25])
        assert full == 240
        assert fast == 138

    def test_requires_one_count_per_outcome(self):
        with pytest.raises(ValueError):
            C.cde_budget(5, 2, [1])


class TestEffectMatrix:
    def test_childless_variable_row(self):
        # var 3 has no children and no outcome edges in this fixture
        deployed, batch = deployed_fixture(v2o_pairs=((0, 0), (1, 1)), v2v_pairs=((0, 2),))
        v, m, s = batch.values[0], batch.missing[0], batch.statics[0]
        em = C.variable_cde_matrix(deployed, v, m, s)
        np.testing.assert_array_equal(em.matrix[3], 0.0)
        # var 0 only touches var 2 and outcome 0
        row = em.matrix[0]
        assert row[2] != 0.0 or row[deployed.cfg.n_dyn + 0] != 0.0
        assert row[1] == 0.0 and row[3] == 0.0 and row[deployed.cfg.n_dyn + 1] == 0.0

    def test_matrix_budget_counts(self):
        deployed, batch = deployed_fixture()
        v, m, s = batch.values[0], batch.missing[0], batch.statics[0]
        em = C.variable_cde_matrix(deployed, v, m, s)
        n, mm = deployed.cfg.n_dyn, deployed.cfg.n_outcomes
        assert em.full_units == (n + 1) * mm
        assert em.fast_units == mm + int(deployed.outcome_parents().sum())
        assert em.fast_units <= em.full_units

    def test_accelerated_equals_naive(self):
        deployed, batch = deployed_fixture(seed=11)
        v, m, s = batch.values[2], batch.missing[2], batch.statics[2]
        fast = C.variable_cde_matrix(deployed, v, m, s, accelerate=True)
        slow = C.variable_cde_matrix(deployed, v, m, s, accelerate=False)
        np.testing.assert_allclose(fast.matrix, slow.matrix, atol=1e-9)
        assert fast.full_units == slow.full_units
        assert fast.fast_units == slow.fast_units

    def test_duplicated_variable_columns_produce_identical_rows(self):
        # vars 0 and 1 wired identically (same input rows, same edges), and
        # the sample carries identical columns for them
        cfg = tiny_config()
        store = build_store(cfg, seed=13)
        set_edges(store, cfg, v2o_pairs=((0, 0), (1, 0)), v2v_pairs=((0, 2), (1, 2)))
        w = store.get("model/in_proj_w").data
        n = cfg.n_dyn
        w[1] = w[0]  # value channel
        w[n + 1] = w[n]  # presence channel
        rec = store.get("model/recent_w").data  # rows indexed (bin, channel)
        for b in range(cfg.chunk_bins):
            rec[b * 2 * n + 1] = rec[b * 2 * n + 0]
            rec[b * 2 * n + n + 1] = rec[b * 2 * n + n]
        from causalews.data import Variable, VariableCatalog

        catalog = VariableCatalog(
            dynamic=tuple(Variable(f"var_{i}") for i in range(n)),
            static=(Variable("age"), Variable("gender"), Variable("ethnicity")),
            outcomes=tuple(f"outcome_{j}" for j in range(cfg.n_outcomes)),
        )
        deployed = C.make_deployed(store, cfg, catalog, STATIC_SLICES)
        batch = toy_batch(cfg, n=1, seed=14)
        v = batch.values[0].copy()
        m = batch.missing[0].copy()
        v[:, 1] = v[:, 0]
        m[:, 1] = m[:, 0]
        em = C.variable_cde_matrix(deployed, v, m, batch.statics[0])
        np.testing.assert_allclose(em.matrix[0, 2:], em.matrix[1, 2:], atol=1e-9)


class TestPathways:
    def _chain_fixture(self):
        # var_0 -> var_2 -> outcome_0, and nothing else
        deployed, batch = deployed_fixture(v2o_pairs=((2, 0),), v2v_pairs=((0, 2),))
        v, m, s = batch.values[0], batch.missing[0], batch.statics[0]
        em = C.variable_cde_matrix(deployed, v, m, s)
        return deployed, v, m, em

    def test_chain_edges_and_path(self):
        deployed, v, m, em = self._chain_fixture()
        pw = C.build_pathways(em, deployed, v, m, outcome=0)
        assert sorted(pw.node_ids()) == ["outcome_0", "var_0", "var_2"]
        assert {(e.src, e.dst) for e in pw.edges} == {("var_0", "var_2"), ("var_2", "outcome_0")}
        assert pw.enumerate_paths("var_0") == [["var_0", "var_2", "outcome_0"]]

    def test_node_at_mean_has_zero_magnitude(self):
        deployed, v, m, em = self._chain_fixture()
        v = v.copy()
        t = C.most_recent_observed_bins(m)[0]
        v[t, 0] = 0.0  # exactly at the training mean in normalized units
        pw = C.build_pathways(em, deployed, v, m, outcome=0)
        node = {n.id: n for n in pw.nodes}["var_0"]
        assert node.magnitude == 0.0

    def test_outcome_with_no_ancestors_empty_graph(self):
        deployed, batch = deployed_fixture(v2o_pairs=((0, 0),), v2v_pairs=())
        v, m, s = batch.values[0], batch.missing[0], batch.statics[0]
        em = C.variable_cde_matrix(deployed, v, m, s)
        pw = C.build_pathways(em, deployed, v, m, outcome=1)
        assert pw.node_ids() == ["outcome_1"]
        assert pw.edges == []
        doc = C.export_viz(pw)
        assert doc["edges"] == [] and len(doc["nodes"]) == 1

    def test_export_parse_round_trip(self):
        deployed, v, m, em = self._chain_fixture()
        pw = C.build_pathways(em, deployed, v, m, outcome=0, sample_ref="sample-7")
        doc = C.export_viz(pw)
        back = C.parse_viz(doc)
        assert dumps_canonical(C.export_viz(back)) == dumps_canonical(doc)

    def test_polarity_matches_sign_of_deviation(self):
        deployed, v, m, em = self._chain_fixture()
        v = v.copy()
        t = C.most_recent_observed_bins(m)[0]
        v[t, 0] = 2.5
        pw = C.build_pathways(em, deployed, v, m, outcome=0)
        assert {n.id: n for n in pw.nodes}["var_0"].polarity == "above"
        v[t, 0] = -2.5
        pw = C.build_pathways(em, deployed, v, m, outcome=0)
        assert {n.id: n for n in pw.nodes}["var_0"].polarity == "below"
        edge_signs = {e.sign for e in pw.edges}
        assert edge_signs <= {"+", "-"}
