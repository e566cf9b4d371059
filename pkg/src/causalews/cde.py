"""Controlled direct effects: perturb one cell, read off outcome and
downstream-variable deltas, via a naive full-reinference path and an
accelerated causally-decoupled path.

Unit accounting is denominated in per-outcome inferences (one masked encoder
pass plus that outcome's decoder head). A single naive query performs two
complete passes (2M units); the accelerated path pays M once for the cached
baseline and then only re-infers outcomes whose parent sets contain the
perturbed variable, so fast <= full with equality exactly when every outcome
descends from it. Variable-head work is symmetric between the two paths and
is not counted.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import VariableCatalog
from .graph import BinaryWindowGraph, SummaryGraph
from .model import EncoderState, ModelConfig, NumpyModel

PERTURBATION_RULES = ("to_mean", "plus_sigma", "minus_sigma")


class StaleCache(RuntimeError):
    """Cache was built for a different (params, sample) pair."""


@dataclass(frozen=True)
class CdeQuery:
    variable: int
    time_bin: int
    value: float | None = None  # normalized units; None = use rule
    rule: str = "to_mean"

    def resolve_value(self, current: float, observed: bool) -> float:
        if self.value is not None:
            return float(self.value)
        if self.rule == "to_mean":
            return 0.0
        base = current if observed else 0.0
        if self.rule == "plus_sigma":
            return base + 1.0
        if self.rule == "minus_sigma":
            return base - 1.0
        raise ValueError(f"unknown perturbation rule {self.rule!r}")


@dataclass
class CdeResult:
    query: CdeQuery
    risks_before: np.ndarray  # (M,)
    risks_after: np.ndarray  # (M,)
    delta_risks: np.ndarray  # (M,) original - perturbed
    delta_variables: np.ndarray  # (N,) next-bin prediction shifts, direct children only
    full_units: int
    fast_units: int


@dataclass
class DeployedModel:
    """Frozen model plus its thresholded graphs and per-target masks."""

    npm: NumpyModel
    cfg: ModelConfig
    catalog: VariableCatalog
    out_masks: np.ndarray  # (M, T, N)
    out_static: np.ndarray  # (M, S_enc)
    var_masks: np.ndarray  # (N, T, N)
    v2o: BinaryWindowGraph
    v2v: BinaryWindowGraph
    summary: SummaryGraph

    def outcome_parents(self) -> np.ndarray:
        return self.v2o.pair_adjacency()  # (N, M)

    def variable_children(self) -> np.ndarray:
        return self.v2v.pair_adjacency()  # (N, N)


@dataclass
class ActivationCache:
    """Per-target encoder states for one sample under one deployed model."""

    key: tuple
    outcome_states: list[EncoderState]
    variable_states: list[EncoderState]
    risks: np.ndarray  # (M,)
    next_preds: np.ndarray  # (N,)


def _sample_key(deployed: DeployedModel, values: np.ndarray, missing: np.ndarray) -> tuple:
    return (
        id(deployed.npm),
        hash(values.tobytes()),
        hash(missing.tobytes()),
    )


def build_cache(
    deployed: DeployedModel, values: np.ndarray, missing: np.ndarray, statics: np.ndarray
) -> ActivationCache:
    """One cached masked encoder pass per outcome and per variable target."""
    npm, cfg = deployed.npm, deployed.cfg
    m, n = cfg.n_outcomes, cfg.n_dyn
    outcome_states = []
    risks = np.zeros(m)
    for j in range(m):
        x = npm.masked_input(values, missing, deployed.out_masks[j])
        state = npm.encode_cached(x, statics * deployed.out_static[j])
        outcome_states.append(state)
        risks[j] = _sigmoid(npm.outcome_logit(state.latent, j))
    variable_states = []
    next_preds = np.zeros(n)
    for i in range(n):
        x = npm.masked_input(values, missing, deployed.var_masks[i])
        state = npm.encode_cached(x, statics)
        variable_states.append(state)
        next_preds[i] = npm.variable_pred(state.latent, i)
    return ActivationCache(
        key=_sample_key(deployed, values, missing),
        outcome_states=outcome_states,
        variable_states=variable_states,
        risks=risks,
        next_preds=next_preds,
    )


def _sigmoid(z: float) -> float:
    return float(1.0 / (1.0 + np.exp(-z)))


def _validate_query(cfg: ModelConfig, query: CdeQuery) -> None:
    if not (0 <= query.variable < cfg.n_dyn):
        raise ValueError(
            f"perturbation target must be a dynamic variable index in [0, {cfg.n_dyn}), "
            f"got {query.variable} (outcomes are not inputs)"
        )
    if not (0 <= query.time_bin < cfg.t_window):
        raise ValueError(f"time bin {query.time_bin} outside window of {cfg.t_window}")


def _perturbed_arrays(values, missing, query: CdeQuery):
    i, t = query.variable, query.time_bin
    observed = not bool(missing[t, i])
    new_value = query.resolve_value(float(values[t, i]), observed)
    vals = values.copy()
    miss = missing.copy()
    vals[t, i] = new_value
    miss[t, i] = False  # the counterfactual cell is measured
    return vals, miss


def cde_full(
    deployed: DeployedModel,
    values: np.ndarray,
    missing: np.ndarray,
    statics: np.ndarray,
    query: CdeQuery,
) -> CdeResult:
    """Two complete forward passes: original and perturbed."""
    npm, cfg = deployed.npm, deployed.cfg
    _validate_query(cfg, query)
    m, n = cfg.n_outcomes, cfg.n_dyn

    def complete_pass(vals, miss):
        risks = npm.predict_risks(
            vals[None], miss[None], statics[None], deployed.out_masks, deployed.out_static
        )[0]
        nxt = npm.predict_next_values(vals[None], miss[None], statics[None], deployed.var_masks)[0]
        return risks, nxt

    risks_before, next_before = complete_pass(values, missing)
    vals_p, miss_p = _perturbed_arrays(values, missing, query)
    risks_after, next_after = complete_pass(vals_p, miss_p)
    children = deployed.variable_children()[query.variable]
    delta_vars = np.where(children, next_before - next_after, 0.0)
    return CdeResult(
        query=query,
        risks_before=risks_before,
        risks_after=risks_after,
        delta_risks=risks_before - risks_after,
        delta_variables=delta_vars,
        full_units=2 * m,
        fast_units=0,
    )


def cde_fast(
    deployed: DeployedModel,
    cache: ActivationCache,
    values: np.ndarray,
    missing: np.ndarray,
    query: CdeQuery,
) -> CdeResult:
    """Causally-decoupled path: update only the perturbed bin's attention
    work and the decoder heads that can actually move."""
    npm, cfg = deployed.npm, deployed.cfg
    _validate_query(cfg, query)
    if cache.key != _sample_key(deployed, values, missing):
        raise StaleCache("activation cache does not match this (model, sample) pair")
    m, n = cfg.n_outcomes, cfg.n_dyn
    i, t = query.variable, query.time_bin
    vals_p, miss_p = _perturbed_arrays(values, missing, query)

    parents = deployed.outcome_parents()  # (N, M)
    affected_out = np.where(parents[i])[0]
    children = np.where(deployed.variable_children()[i])[0]

    risks_after = cache.risks.copy()
    for j in affected_out:
        mask_row = deployed.out_masks[j][t]
        row = np.concatenate([vals_p[t] * mask_row, (~miss_p[t]).astype(np.float64) * mask_row])
        latent = npm.perturbed_latent(cache.outcome_states[j], t, row)
        risks_after[j] = _sigmoid(npm.outcome_logit(latent, j))

    delta_vars = np.zeros(n)
    for k in children:
        mask_row = deployed.var_masks[k][t]
        row = np.concatenate([vals_p[t] * mask_row, (~miss_p[t]).astype(np.float64) * mask_row])
        latent = npm.perturbed_latent(cache.variable_states[k], t, row)
        delta_vars[k] = cache.next_preds[k] - npm.variable_pred(latent, k)

    return CdeResult(
        query=query,
        risks_before=cache.risks.copy(),
        risks_after=risks_after,
        delta_risks=cache.risks - risks_after,
        delta_variables=delta_vars,
        full_units=2 * m,
        fast_units=m + len(affected_out),
    )


def cde_budget(n_inputs: int, n_outcomes: int, parent_counts) -> tuple[int, int]:
    """Inference budgets for a full effect matrix: naive (n_inputs+1)*M
    complete per-outcome inferences versus M + sum of parent counts."""
    parent_counts = list(parent_counts)
    if len(parent_counts) != n_outcomes:
        raise ValueError("one parent count per outcome required")
    return (n_inputs + 1) * n_outcomes, n_outcomes + int(sum(parent_counts))


@dataclass
class EffectMatrix:
    """Per-variable perturbation effects on variables (columns 0..N-1) and
    outcomes (columns N..N+M-1); zero wherever the graphs carry no edge."""

    matrix: np.ndarray  # (N, N+M)
    perturbed_bins: np.ndarray  # (N,)
    rule: str
    full_units: int
    fast_units: int
    accelerated: bool
    wall_clock_s: float = 0.0


def most_recent_observed_bins(missing: np.ndarray) -> np.ndarray:
    t_len, n = missing.shape
    bins = np.full(n, t_len - 1, dtype=np.int64)
    for i in range(n):
        observed = np.where(~missing[:, i])[0]
        if len(observed):
            bins[i] = observed[-1]
    return bins


def variable_cde_matrix(
    deployed: DeployedModel,
    values: np.ndarray,
    missing: np.ndarray,
    statics: np.ndarray,
    rule: str = "to_mean",
    accelerate: bool = True,
    cache: ActivationCache | None = None,
) -> EffectMatrix:
    """Perturb every variable at its most recent observed bin and collect
    effects on descendants and outcomes."""
    import time

    if rule not in PERTURBATION_RULES:
        raise ValueError(f"unknown rule {rule!r}, expected one of {PERTURBATION_RULES}")
    cfg = deployed.cfg
    n, m = cfg.n_dyn, cfg.n_outcomes
    bins = most_recent_observed_bins(missing)
    matrix = np.zeros((n, n + m))
    parents = deployed.outcome_parents()

    started = time.perf_counter()
    if accelerate:
        if cache is None:
            cache = build_cache(deployed, values, missing, statics)
        full_units = m  # shared baseline
        fast_units = m
        for i in range(n):
            q = CdeQuery(variable=i, time_bin=int(bins[i]), rule=rule)
            res = cde_fast(deployed, cache, values, missing, q)
            matrix[i, :n] = res.delta_variables
            matrix[i, n:] = res.delta_risks
            full_units += m
            fast_units += int(parents[i].sum())
    else:
        npm = deployed.npm
        risks_before = npm.predict_risks(
            values[None], missing[None], statics[None], deployed.out_masks, deployed.out_static
        )[0]
        next_before = npm.predict_next_values(
            values[None], missing[None], statics[None], deployed.var_masks
        )[0]
        full_units = m
        fast_units = m
        for i in range(n):
            q = CdeQuery(variable=i, time_bin=int(bins[i]), rule=rule)
            vals_p, miss_p = _perturbed_arrays(values, missing, q)
            risks_after = npm.predict_risks(
                vals_p[None], miss_p[None], statics[None], deployed.out_masks, deployed.out_static
            )[0]
            next_after = npm.predict_next_values(
                vals_p[None], miss_p[None], statics[None], deployed.var_masks
            )[0]
            children = deployed.variable_children()[i]
            matrix[i, :n] = np.where(children, next_before - next_after, 0.0)
            matrix[i, n:] = risks_before - risks_after
            full_units += m
            fast_units += int(parents[i].sum())
    elapsed = time.perf_counter() - started
    return EffectMatrix(
        matrix=matrix,
        perturbed_bins=bins,
        rule=rule,
        full_units=full_units,
        fast_units=fast_units,
        accelerated=accelerate,
        wall_clock_s=elapsed,
    )


# ---------------------------------------------------------------------------
# pathway construction


@dataclass
class PathwayNode:
    id: str
    kind: str  # variable | outcome
    polarity: str  # above | below
    magnitude: float


@dataclass
class PathwayEdge:
    src: str
    dst: str
    cde_value: float
    sign: str  # + | -


@dataclass
class PathwayGraph:
    outcome: str
    sample_ref: str
    nodes: list[PathwayNode] = field(default_factory=list)
    edges: list[PathwayEdge] = field(default_factory=list)

    def node_ids(self) -> list[str]:
        return [n.id for n in self.nodes]

    def enumerate_paths(self, source: str, limit: int = 1000) -> list[list[str]]:
        """All simple directed paths source -> outcome."""
        succ: dict[str, list[str]] = {}
        for e in self.edges:
            succ.setdefault(e.src, []).append(e.dst)
        paths: list[list[str]] = []

        def walk(node, trail):
            if len(paths) >= limit:
                return
            if node == self.outcome:
                paths.append(trail)
                return
            for nxt in succ.get(node, []):
                if nxt not in trail:
                    walk(nxt, trail + [nxt])

        walk(source, [source])
        return paths


def build_pathways(
    effects: EffectMatrix,
    deployed: DeployedModel,
    values: np.ndarray,
    missing: np.ndarray,
    outcome: int,
    sample_ref: str = "",
) -> PathwayGraph:
    """Ancestor subgraph of one outcome with z-score deviations on nodes and
    perturbation effects on edges."""
    cfg = deployed.cfg
    n = cfg.n_dyn
    summary = deployed.summary
    outcome_node = n + outcome
    anc = sorted(a for a in summary.ancestors(outcome_node) if a < n)
    names = summary.names
    bins = most_recent_observed_bins(missing)

    graph = PathwayGraph(outcome=names[outcome_node], sample_ref=sample_ref)
    for a in anc:
        observed_any = not missing[:, a].all()
        z = float(values[bins[a], a]) if observed_any else 0.0
        graph.nodes.append(
            PathwayNode(
                id=names[a],
                kind="variable",
                polarity="above" if z >= 0 else "below",
                magnitude=abs(z),
            )
        )
    graph.nodes.append(
        PathwayNode(id=names[outcome_node], kind="outcome", polarity="above", magnitude=0.0)
    )

    keep = set(anc)
    for src in anc:
        for dst in np.where(summary.adjacency[src])[0]:
            if dst in keep:
                value = float(effects.matrix[src, dst])
            elif int(dst) == outcome_node:
                value = float(effects.matrix[src, n + outcome])
            else:
                continue
            graph.edges.append(
                PathwayEdge(
                    src=names[src],
                    dst=names[int(dst)],
                    cde_value=value,
                    sign="+" if value >= 0 else "-",
                )
            )
    graph.edges.sort(key=lambda e: (e.src, e.dst))
    return graph


def export_viz(pathway: PathwayGraph) -> dict:
    """Pathway JSON document (graph JSON plus deviations and CDE weights)."""
    return {
        "nodes": [
            {
                "id": node.id,
                "kind": node.kind,
                "deviation": {"polarity": node.polarity, "magnitude": node.magnitude},
            }
            for node in pathway.nodes
        ],
        "edges": [
            {
                "src": e.src,
                "dst": e.dst,
                "cde": {"value": e.cde_value, "sign": e.sign},
            }
            for e in pathway.edges
        ],
        "meta": {"outcome": pathway.outcome, "sample_ref": pathway.sample_ref},
    }


def parse_viz(doc: dict) -> PathwayGraph:
    graph = PathwayGraph(outcome=doc["meta"]["outcome"], sample_ref=doc["meta"]["sample_ref"])
    for nd in doc["nodes"]:
        graph.nodes.append(
            PathwayNode(
                id=nd["id"],
                kind=nd["kind"],
                polarity=nd["deviation"]["polarity"],
                magnitude=nd["deviation"]["magnitude"],
            )
        )
    for e in doc["edges"]:
        graph.edges.append(
            PathwayEdge(src=e["src"], dst=e["dst"], cde_value=e["cde"]["value"], sign=e["cde"]["sign"])
        )
    return graph


def make_deployed(store, cfg: ModelConfig, catalog: VariableCatalog, static_slices, threshold: float = 0.5) -> DeployedModel:
    """Bundle a trained store into a frozen deployed model with hard graphs."""
    from .graph import summarize
    from .training import deployed_masks

    npm = NumpyModel(store, cfg)
    out_masks, out_static, var_masks, v2o, v2v = deployed_masks(store, cfg, static_slices, threshold)
    summary = summarize(v2o, v2v, catalog)
    return DeployedModel(
        npm=npm,
        cfg=cfg,
        catalog=catalog,
        out_masks=out_masks,
        out_static=out_static,
        var_masks=var_masks,
        v2o=v2o,
        v2v=v2v,
        summary=summary,
    )
