"""Synthetic cohorts from a known lagged structural causal model.

The generator is the verification oracle for discovery, effect attribution,
and intervention-robustness tests: variables evolve by lagged linear/tanh
structural equations, outcomes fire through a logistic link over their causal
parents, and interventional environments replace structural equations without
touching any outcome's own equation. Everything is reproducible from a seed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from pathlib import Path

import numpy as np

from .data import BIN_HOURS, HORIZON_BINS, PatientRecord, Variable, VariableCatalog
from .rng import SeededRng

LINK_LINEAR = 0
LINK_TANH = 1

_BASE_ADMIT = datetime(2012, 1, 1, tzinfo=timezone.utc)


class InvalidIntervention(ValueError):
    """Intervention targets a direct causal parent of an outcome."""


@dataclass(frozen=True)
class Intervention:
    variable: int
    kind: str  # shift | scale | clamp
    magnitude: float


@dataclass
class EnvironmentSpec:
    interventions: list[Intervention] = field(default_factory=list)

    def validate(self, system: "GroundTruthSystem") -> None:
        parents = system.outcome_parent_sets()
        all_parents = set().union(*parents) if parents else set()
        for iv in self.interventions:
            if iv.variable in all_parents:
                raise InvalidIntervention(
                    f"variable {iv.variable} is a direct causal parent of an outcome"
                )
            if iv.kind not in ("shift", "scale", "clamp"):
                raise ValueError(f"unknown intervention kind {iv.kind!r}")


@dataclass
class GroundTruthSystem:
    n_dyn: int
    n_outcomes: int
    max_lag: int
    v2v_edges: np.ndarray  # (L, N, N) bool, [lag-1, source, target]
    v2v_weights: np.ndarray  # (L, N, N)
    v2v_links: np.ndarray  # (L, N, N) int, 0 linear / 1 tanh
    v2o_edges: np.ndarray  # (L, N, M) bool
    v2o_weights: np.ndarray  # (L, N, M)
    v2o_links: np.ndarray  # (L, N, M) int
    noise_std: np.ndarray  # (N,)
    outcome_bias: np.ndarray  # (M,)
    stationary_std: np.ndarray  # (N,) measured on a calibration run
    seed: int = 0
    spurious_correlates: list[int] = field(default_factory=list)

    def catalog(self) -> VariableCatalog:
        return VariableCatalog(
            dynamic=tuple(Variable(f"var_{i:02d}", f"V{i:02d}") for i in range(self.n_dyn)),
            static=(Variable("age", "Age", "years"), Variable("gender"), Variable("ethnicity")),
            outcomes=tuple(f"outcome_{j}" for j in range(self.n_outcomes)),
        )

    def outcome_parent_sets(self) -> list[set[int]]:
        return [set(np.where(self.v2o_edges[:, :, j].any(axis=0))[0]) for j in range(self.n_outcomes)]

    def summary_v2v(self) -> np.ndarray:
        return self.v2v_edges.any(axis=0)

    def summary_v2o(self) -> np.ndarray:
        return self.v2o_edges.any(axis=0)

    def outcome_ancestors(self) -> set[int]:
        """Variables with a directed path (through V2V) into any outcome."""
        adj = self.summary_v2v()
        direct = set(np.where(self.summary_v2o().any(axis=1))[0])
        anc = set(direct)
        frontier = set(direct)
        while frontier:
            nxt = set()
            for k in frontier:
                for i in np.where(adj[:, k])[0]:
                    if i not in anc:
                        anc.add(int(i))
                        nxt.add(int(i))
            frontier = nxt
        return anc

    def non_ancestors(self) -> list[int]:
        anc = self.outcome_ancestors()
        return [i for i in range(self.n_dyn) if i not in anc]

    def truth_chunk_arrays(self, n_chunks: int) -> tuple[np.ndarray, np.ndarray]:
        """Ground-truth edge booleans on the (chunk, source, target) grid used
        by discovery, chunk 0 covering the most recent bins.

        A lag-(l+1) dependence reaches the prediction point through window
        lags < l+1, all inside chunk 0 whenever max_lag <= chunk width.
        """
        t_v2o = np.zeros((n_chunks, self.n_dyn, self.n_outcomes), dtype=bool)
        t_v2v = np.zeros((n_chunks, self.n_dyn, self.n_dyn), dtype=bool)
        t_v2o[0] = self.summary_v2o()
        t_v2v[0] = self.summary_v2v()
        return t_v2o, t_v2v


def _companion_spectral_radius(weights: np.ndarray) -> float:
    """Spectral radius of the companion matrix of |weights| (tanh-safe bound)."""
    L, n, _ = weights.shape
    comp = np.zeros((n * L, n * L))
    for lag in range(L):
        comp[:n, lag * n : (lag + 1) * n] = np.abs(weights[lag]).T  # target rows
    if L > 1:
        comp[n:, :-n] = np.eye(n * (L - 1))
    return float(np.max(np.abs(np.linalg.eigvals(comp))))


def _apply_link(values: np.ndarray, links: np.ndarray) -> np.ndarray:
    return np.where(links == LINK_TANH, np.tanh(values), values)


def _step(system: GroundTruthSystem, history: np.ndarray, noise: np.ndarray) -> np.ndarray:
    """One structural-equation step; history[-lag] supplies lagged sources."""
    x = noise * system.noise_std
    for lag in range(system.max_lag):
        src = history[-(lag + 1)]  # (N,)
        contrib = _apply_link(src[:, None], system.v2v_links[lag]) * system.v2v_weights[lag]
        x = x + np.where(system.v2v_edges[lag], contrib, 0.0).sum(axis=0)
    return x


def _outcome_logits(system: GroundTruthSystem, history: np.ndarray) -> np.ndarray:
    z = system.outcome_bias.copy()
    for lag in range(system.max_lag):
        src = history[-(lag + 1)]
        contrib = _apply_link(src[:, None], system.v2o_links[lag]) * system.v2o_weights[lag]
        z = z + np.where(system.v2o_edges[lag], contrib, 0.0).sum(axis=0)
    return z


def _simulate_raw(system, n_bins, rng, env: EnvironmentSpec | None, burn_in: int = 40):
    """Latent trajectory plus per-bin outcome-event draws."""
    n = system.n_dyn
    total = burn_in + n_bins
    traj = np.zeros((total + system.max_lag, n))
    noise = rng.normal((total, n))
    for t in range(total):
        row = _step(system, traj[t : t + system.max_lag], noise[t])
        if env is not None:
            for iv in env.interventions:
                s = system.stationary_std[iv.variable]
                if iv.kind == "shift":
                    row[iv.variable] += iv.magnitude * s
                elif iv.kind == "scale":
                    row[iv.variable] *= iv.magnitude
                elif iv.kind == "clamp":
                    lim = iv.magnitude * s
                    row[iv.variable] = np.clip(row[iv.variable], -lim, lim)
        traj[t + system.max_lag] = row
    values = traj[system.max_lag + burn_in :]
    # outcome events: one Bernoulli draw per (bin, outcome)
    risks = np.zeros((n_bins, system.n_outcomes))
    for t in range(n_bins):
        hist = traj[burn_in + t : burn_in + t + system.max_lag]
        risks[t] = 1.0 / (1.0 + np.exp(-_outcome_logits(system, hist)))
    events = rng.uniform((n_bins, system.n_outcomes)) < risks
    return values, events, risks


def generate_system(
    n_dyn: int,
    n_outcomes: int,
    max_lag: int,
    density: float,
    seed: int,
    ensure_spurious: bool = True,
    target_event_rate: float = 0.04,
    max_retries: int = 50,
) -> GroundTruthSystem:
    """Random stationary lagged SCM with outcomes hanging off >=2 parents each.

    ``ensure_spurious`` guarantees at least one variable that is correlated
    with outcome drivers (it is a child of a causal parent) yet has no
    directed path into any outcome, so interventions on it are valid and
    informative for robustness experiments.
    """
    if not (0.0 <= density < 1.0):
        raise ValueError(f"density must be in [0, 1), got {density}")
    rng = SeededRng(seed, ("system",))
    L, n, m = max_lag, n_dyn, n_outcomes

    v2v_edges = rng.uniform((L, n, n)) < density
    signs = np.where(rng.uniform((L, n, n)) < 0.5, -1.0, 1.0)
    v2v_weights = np.where(v2v_edges, signs * rng.uniform((L, n, n), 0.4, 0.9), 0.0)
    v2v_links = (rng.uniform((L, n, n)) < 0.3).astype(np.int64)

    v2o_edges = rng.uniform((L, n, m)) < density
    o_signs = np.where(rng.uniform((L, n, m)) < 0.5, -1.0, 1.0)
    v2o_weights = np.where(v2o_edges, o_signs * rng.uniform((L, n, m), 1.5, 2.5), 0.0)
    v2o_links = (rng.uniform((L, n, m)) < 0.3).astype(np.int64)

    # every outcome needs at least two causal parents
    for j in range(m):
        have = set(np.where(v2o_edges[:, :, j].any(axis=0))[0])
        need = max(0, 2 - len(have))
        pool = [i for i in range(n) if i not in have]
        order = rng.permutation(len(pool))
        for k in range(need):
            i = pool[int(order[k])]
            lag = int(rng.integers(0, L))
            v2o_edges[lag, i, j] = True
            sign = -1.0 if rng.uniform() < 0.5 else 1.0
            v2o_weights[lag, i, j] = sign * rng.uniform(None, 1.5, 2.5)

    noise_std = rng.uniform((n,), 0.3, 0.6)

    system = GroundTruthSystem(
        n_dyn=n,
        n_outcomes=m,
        max_lag=L,
        v2v_edges=v2v_edges,
        v2v_weights=v2v_weights,
        v2v_links=v2v_links,
        v2o_edges=v2o_edges,
        v2o_weights=v2o_weights,
        v2o_links=v2o_links,
        noise_std=noise_std,
        outcome_bias=np.zeros(m),
        stationary_std=np.ones(n),
        seed=seed,
    )

    if ensure_spurious:
        candidates = system.non_ancestors()
        if not candidates:
            # cut the cheapest variable loose so a valid target exists
            out_degree = system.summary_v2v().sum(axis=1) + system.summary_v2o().sum(axis=1)
            z = int(np.argmin(out_degree))
            v2v_edges[:, z, :] = False
            v2v_weights[:, z, :] = 0.0
            v2o_edges[:, z, :] = False
            v2o_weights[:, z, :] = 0.0
            candidates = system.non_ancestors()
        z = candidates[0]
        parents0 = sorted(system.outcome_parent_sets()[0])
        x = parents0[0]
        v2v_edges[0, x, z] = True
        v2v_weights[0, x, z] = 0.9
        v2v_links[0, x, z] = LINK_LINEAR
        system.spurious_correlates = [z]

    # pull the linearized companion toward a target spectral radius: stable
    # but strongly coupled, so dynamics carry discoverable signal
    target_rho = 0.9
    for _ in range(max_retries):
        rho = _companion_spectral_radius(system.v2v_weights)
        if abs(rho - target_rho) < 0.02 or rho == 0.0:
            break
        system.v2v_weights *= (target_rho / rho) ** (1.0 / L)
    if _companion_spectral_radius(system.v2v_weights) >= 0.95:
        raise RuntimeError("could not stabilize system within retry budget")

    # calibrate outcome bias to the target per-bin event rate, then measure
    # the stationary spread used for intervention magnitudes
    cal_rng = SeededRng(seed, ("system", "calibration"))
    values, _, _ = _simulate_raw(system, 4000, cal_rng, None)
    system.stationary_std = np.maximum(values.std(axis=0), 1e-6)
    for j in range(m):
        logits = np.zeros(4000 - L)
        for t in range(L, 4000):
            hist = values[t - L : t]
            logits[t - L] = _outcome_logits(system, hist)[j]
        lo, hi = -30.0, 30.0
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            rate = np.mean(1.0 / (1.0 + np.exp(-(logits + mid))))
            if rate > target_event_rate:
                hi = mid
            else:
                lo = mid
        system.outcome_bias[j] = 0.5 * (lo + hi)
    return system


def simulate_cohort(
    system: GroundTruthSystem,
    n_patients: int,
    bins_per_patient: int,
    env: EnvironmentSpec | None = None,
    missing_rate: float = 0.0,
    seed: int = 0,
) -> list[PatientRecord]:
    """Sample patient records from the system, optionally intervened.

    Missingness is MCAR at ``missing_rate`` (a per-variable vector is also
    accepted). Determinability covers the stay plus one horizon so every bin
    is labelable.
    """
    if env is not None:
        env.validate(system)
    rate = np.asarray(missing_rate, dtype=np.float64)
    if np.any(rate < 0.0) or np.any(rate >= 1.0):
        raise ValueError("missing_rate must be in [0, 1)")
    root = SeededRng(seed, ("cohort",))
    meta_rng = root.child("statics")
    ages = meta_rng.integers(40, 91, (n_patients,))
    genders = np.where(meta_rng.uniform((n_patients,)) < 0.5, "F", "M")
    eth_pool = ("group_a", "group_b", "group_c")
    eths = [eth_pool[int(k)] for k in meta_rng.integers(0, len(eth_pool), (n_patients,))]

    records = []
    n = system.n_dyn
    for p in range(n_patients):
        prng = root.child(f"patient_{p}")
        values, events, _ = _simulate_raw(system, bins_per_patient, prng, env)
        observed = prng.uniform((bins_per_patient, n)) >= rate
        admit = _BASE_ADMIT + timedelta(days=3 * p)
        obs = []
        ts_offset = timedelta(hours=1.0)
        for t, i in zip(*np.where(observed)):
            ts = admit + timedelta(hours=BIN_HOURS * int(t)) + ts_offset
            obs.append((ts, int(i), float(values[t, i])))
        ev = []
        for t, j in zip(*np.where(events)):
            ts = admit + timedelta(hours=BIN_HOURS * int(t)) + ts_offset
            ev.append((ts, int(j)))
        end = admit + timedelta(hours=BIN_HOURS * (bins_per_patient + HORIZON_BINS))
        det = {j: [(admit, end)] for j in range(system.n_outcomes)}
        records.append(
            PatientRecord(
                patient_id=f"p{p:05d}",
                admission_id="a1",
                admit_time=admit,
                age=float(ages[p]),
                gender=str(genders[p]),
                ethnicity=eths[p],
                observations=obs,
                outcome_events=ev,
                determinability=det,
            )
        )
    return records


def export_ground_truth(system: GroundTruthSystem, path: str | Path, n_chunks: int = 14) -> None:
    """Write true adjacency in the discovered-graph JSON layout for scoring."""
    from .graph import graph_document  # local import to avoid a cycle

    catalog = system.catalog()
    t_v2o, t_v2v = system.truth_chunk_arrays(n_chunks)
    doc = {
        "v2o": graph_document(t_v2o, t_v2o.astype(np.float64), catalog, kind="v2o", threshold=0.5),
        "v2v": graph_document(t_v2v, t_v2v.astype(np.float64), catalog, kind="v2v", threshold=0.5),
        "meta": {
            "seed": system.seed,
            "max_lag": system.max_lag,
            "spurious_correlates": system.spurious_correlates,
        },
    }
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True))


def load_ground_truth(path: str | Path, n_chunks: int, catalog: VariableCatalog):
    """Read exported truth back into (chunk, source, target) boolean arrays."""
    doc = json.loads(Path(path).read_text())
    n, m = catalog.n_dyn, catalog.n_outcomes
    var_idx = catalog.dynamic_index()
    out_idx = catalog.outcome_index()
    t_v2o = np.zeros((n_chunks, n, m), dtype=bool)
    t_v2v = np.zeros((n_chunks, n, n), dtype=bool)
    for e in doc["v2o"]["edges"]:
        t_v2o[e["chunk"], var_idx[e["src"]], out_idx[e["dst"]]] = True
    for e in doc["v2v"]["edges"]:
        t_v2v[e["chunk"], var_idx[e["src"]], var_idx[e["dst"]]] = True
    return t_v2o, t_v2v
