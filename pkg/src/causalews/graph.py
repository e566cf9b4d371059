"""Causal probability matrices over lag chunks: parameterization, sampling,
regularization, discretization, and summary-graph queries.

Edge probabilities follow the cumulative parameterization
``p[w] = sigma(q[0] * ... * q[w])`` over lag chunks (chunk 0 covers the most
recent bins), which lets the regularizer discourage long-lag dependencies.
Relaxed edge draws use the per-edge binary-concrete transform so each edge
keeps independent Bernoulli semantics while staying differentiable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .data import VariableCatalog
from .params import ParamStore
from .rng import SeededRng

PROB_FLOOR = 1e-6


def chunk_of_bins(t_window: int, chunk_bins: int) -> np.ndarray:
    """Chunk index of each window bin; chunk 0 is the most recent bins."""
    return (t_window - 1 - np.arange(t_window)) // chunk_bins


def chunk_expand_matrix(t_window: int, n_chunks: int, chunk_bins: int) -> np.ndarray:
    """(T, W) one-hot rows mapping each bin to its lag chunk."""
    idx = chunk_of_bins(t_window, chunk_bins)
    if idx.max() >= n_chunks:
        raise ValueError(
            f"window of {t_window} bins needs {idx.max() + 1} chunks, have {n_chunks}"
        )
    e = np.zeros((t_window, n_chunks))
    e[np.arange(t_window), idx] = 1.0
    return e


@dataclass
class GraphParams:
    """Learnable pre-sigmoid factors for both graphs plus static edges."""

    q_v2o: T.Tensor  # (W, N, M)
    q_v2v: T.Tensor  # (W, N, N)
    q_static: T.Tensor  # (S, M), single chunk: statics carry no lag structure

    @property
    def n_chunks(self) -> int:
        return self.q_v2o.shape[0]


def init_graph_params(
    store: ParamStore,
    n_chunks: int,
    n_dyn: int,
    n_outcomes: int,
    n_static: int,
    p_init: float = 0.3,
    lag_growth: float = 1.05,
) -> GraphParams:
    """Register graph parameters: chunk 0 starts at logit(p_init), later
    chunks multiply by ``lag_growth`` for a gentle initial lag decay."""
    q0 = float(np.log(p_init / (1.0 - p_init)))

    def build(shape):
        q = np.full(shape, lag_growth)
        q[0] = q0
        return q

    return GraphParams(
        q_v2o=store.create("graph/q_v2o", build((n_chunks, n_dyn, n_outcomes))),
        q_v2v=store.create("graph/q_v2v", build((n_chunks, n_dyn, n_dyn))),
        q_static=store.create("graph/q_static", np.full((n_static, n_outcomes), q0)),
    )


def cumulative_probs(q: T.Tensor) -> T.Tensor:
    """p[w] = squashed sigma of the running product of q over chunks 0..w.

    The squash maps into [PROB_FLOOR, 1 - PROB_FLOOR] smoothly (affine on the
    sigmoid output) so the concrete transform never sees log(0) and gradients
    never die at the clamp.
    """
    w_total = q.shape[0]
    acc = T.index_axis(q, 0, 0)
    rows = [acc]
    for w in range(1, w_total):
        acc = T.mul(acc, T.index_axis(q, 0, w))
        rows.append(acc)
    stacked = T.concat([T.reshape(r, (1,) + r.shape) for r in rows], 0)
    s = T.sigmoid(stacked)
    return T.add_scalar(T.mul_scalar(s, 1.0 - 2.0 * PROB_FLOOR), PROB_FLOOR)


def static_probs(q_static: T.Tensor) -> T.Tensor:
    s = T.sigmoid(q_static)
    return T.add_scalar(T.mul_scalar(s, 1.0 - 2.0 * PROB_FLOOR), PROB_FLOOR)


@dataclass
class CausalProbMatrix:
    """Evaluated edge probabilities (plain arrays, no gradient tracking)."""

    v2o: np.ndarray  # (W, N, M)
    v2v: np.ndarray  # (W, N, N)
    static: np.ndarray  # (S, M)


def compute_probs(params: GraphParams) -> CausalProbMatrix:
    return CausalProbMatrix(
        v2o=cumulative_probs(T.constant(params.q_v2o.data)).numpy(),
        v2v=cumulative_probs(T.constant(params.q_v2v.data)).numpy(),
        static=static_probs(T.constant(params.q_static.data)).numpy(),
    )


def sample_relaxed(p: T.Tensor, temperature: float, rng: SeededRng) -> T.Tensor:
    """Binary-concrete draw per edge: sigma((logit p + g1 - g0) / temperature)."""
    if temperature <= 0:
        raise ValueError(f"temperature must be positive, got {temperature}")
    g = rng.gumbel((2,) + tuple(p.shape))
    noise = T.constant(g[1] - g[0])
    one_minus = T.add_scalar(T.mul_scalar(p, -1.0), 1.0)
    logit = T.sub(T.log(p), T.log(one_minus))
    return T.sigmoid(T.mul_scalar(T.add(logit, noise), 1.0 / temperature))


def hard_sample(probs: np.ndarray, rng: SeededRng) -> np.ndarray:
    """Exact Bernoulli draws per edge (used in the network-optimization step)."""
    return rng.bernoulli(probs)


def regularizer_value(p: T.Tensor) -> T.Tensor:
    """Sum of edge probabilities: the relaxed parent-count penalty."""
    return T.sum_reduce(p)


@dataclass
class BinaryWindowGraph:
    """Thresholded (or sampled) chunk-level adjacency with retained probabilities."""

    adjacency: np.ndarray  # (W, N, C) bool
    probs: np.ndarray  # (W, N, C)
    threshold: float | None = None

    @property
    def n_chunks(self) -> int:
        return self.adjacency.shape[0]

    def pair_adjacency(self) -> np.ndarray:
        return self.adjacency.any(axis=0)

    def pair_scores(self) -> np.ndarray:
        return self.probs.max(axis=0)

    def parent_counts(self) -> np.ndarray:
        """Distinct causal sources per target (collapsed over chunks)."""
        return self.pair_adjacency().sum(axis=0)


def binarize(probs: np.ndarray, threshold: float = 0.5) -> BinaryWindowGraph:
    probs = np.asarray(probs, dtype=np.float64)
    return BinaryWindowGraph(adjacency=probs >= threshold, probs=probs, threshold=threshold)


@dataclass
class SummaryGraph:
    """Lag-collapsed graph over dynamic variables plus outcome nodes."""

    names: list[str]
    n_dyn: int
    adjacency: np.ndarray  # (N+M, N+M) bool; outcome rows are all false
    scores: np.ndarray  # (N+M, N+M) float

    def node_id(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError as e:
            raise KeyError(f"unknown node {name!r}") from e

    def descendants(self, node: int | str) -> set[int]:
        """Nodes reachable by directed paths; excludes the start unless it
        sits on a cycle. Safe on cyclic summaries."""
        start = self.node_id(node) if isinstance(node, str) else int(node)
        if not (0 <= start < len(self.names)):
            raise KeyError(f"unknown node index {start}")
        seen: set[int] = set()
        frontier = list(np.where(self.adjacency[start])[0])
        while frontier:
            k = int(frontier.pop())
            if k in seen:
                continue
            seen.add(k)
            frontier.extend(int(x) for x in np.where(self.adjacency[k])[0])
        return seen

    def ancestors(self, node: int | str) -> set[int]:
        target = self.node_id(node) if isinstance(node, str) else int(node)
        if not (0 <= target < len(self.names)):
            raise KeyError(f"unknown node index {target}")
        seen: set[int] = set()
        frontier = list(np.where(self.adjacency[:, target])[0])
        while frontier:
            k = int(frontier.pop())
            if k in seen:
                continue
            seen.add(k)
            frontier.extend(int(x) for x in np.where(self.adjacency[:, k])[0])
        return seen


def summarize(v2o: BinaryWindowGraph, v2v: BinaryWindowGraph, catalog: VariableCatalog) -> SummaryGraph:
    """Compose both window graphs into one summary over variables + outcomes."""
    n, m = catalog.n_dyn, catalog.n_outcomes
    size = n + m
    adj = np.zeros((size, size), dtype=bool)
    scores = np.zeros((size, size))
    adj[:n, :n] = v2v.pair_adjacency()
    scores[:n, :n] = np.where(adj[:n, :n], v2v.pair_scores(), 0.0)
    adj[:n, n:] = v2o.pair_adjacency()
    scores[:n, n:] = np.where(adj[:n, n:], v2o.pair_scores(), 0.0)
    names = [v.name for v in catalog.dynamic] + list(catalog.outcomes)
    return SummaryGraph(names=names, n_dyn=n, adjacency=adj, scores=scores)


# ---------------------------------------------------------------------------
# JSON interchange


def graph_document(
    adjacency: np.ndarray,
    probs: np.ndarray,
    catalog: VariableCatalog,
    kind: str,
    threshold: float | None,
    chunk_bins: int = 12,
) -> dict:
    """Graph JSON: nodes, chunk-level edges with probabilities, and meta.

    ``kind`` is "v2o" (targets are outcomes) or "v2v" (targets are variables).
    Chunk 0 is the most recent lag chunk.
    """
    n = catalog.n_dyn
    var_names = [v.name for v in catalog.dynamic]
    nodes = [{"id": name, "kind": "variable"} for name in var_names]
    if kind == "v2o":
        targets = list(catalog.outcomes)
        nodes += [{"id": name, "kind": "outcome"} for name in targets]
    elif kind == "v2v":
        targets = var_names
    else:
        raise ValueError(f"unknown graph kind {kind!r}")
    edges = []
    for w, i, c in zip(*np.where(adjacency)):
        edges.append(
            {
                "src": var_names[i],
                "dst": targets[c],
                "chunk": int(w),
                "probability": float(probs[w, i, c]),
            }
        )
    edges.sort(key=lambda e: (e["src"], e["dst"], e["chunk"]))
    return {
        "nodes": nodes,
        "edges": edges,
        "meta": {
            "kind": kind,
            "threshold": threshold,
            "W": int(adjacency.shape[0]),
            "chunk_bins": chunk_bins,
            "chunk_order": "0 = most recent",
        },
    }


def parse_graph_document(doc: dict, catalog: VariableCatalog) -> BinaryWindowGraph:
    kind = doc["meta"]["kind"]
    w_total = doc["meta"]["W"]
    n = catalog.n_dyn
    c = catalog.n_outcomes if kind == "v2o" else n
    var_idx = catalog.dynamic_index()
    tgt_idx = catalog.outcome_index() if kind == "v2o" else var_idx
    adjacency = np.zeros((w_total, n, c), dtype=bool)
    probs = np.zeros((w_total, n, c))
    for e in doc["edges"]:
        adjacency[e["chunk"], var_idx[e["src"]], tgt_idx[e["dst"]]] = True
        probs[e["chunk"], var_idx[e["src"]], tgt_idx[e["dst"]]] = e["probability"]
    return BinaryWindowGraph(adjacency=adjacency, probs=probs, threshold=doc["meta"]["threshold"])
