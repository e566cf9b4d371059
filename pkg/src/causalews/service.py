"""HTTP service: summary graph, sample windows, risks, and what-if queries.

The checkpoint is loaded once at startup; requests never mutate model or
data state, so handling is safely concurrent over the frozen snapshot.
Responses are canonical JSON so they compare byte-for-byte with CLI output.
A checkpoint file that changes on disk after startup yields 409 on what-if
(restart to reload)."""

from __future__ import annotations

import json
import threading
from pathlib import Path

import numpy as np
from fastapi import FastAPI, Request, Response
from fastapi.middleware.cors import CORSMiddleware

from .cde import CdeQuery, build_cache, build_pathways, cde_fast, export_viz, make_deployed, variable_cde_matrix
from .data import normalize_unapply
from .jsonio import dumps_canonical
from .manifest import sha256_file
from .model import ModelConfig
from .params import ParamStore


def _canonical(obj, status_code: int = 200) -> Response:
    return Response(
        content=dumps_canonical(obj) + "\n",
        media_type="application/json",
        status_code=status_code,
    )


def _error(status: int, message: str) -> Response:
    return _canonical({"error": message}, status_code=status)


class ServiceState:
    def __init__(self, checkpoint: Path, data_dir: Path, split_name: str):
        from .cli import load_cache

        self.checkpoint_path = Path(checkpoint)
        self.checkpoint_digest = sha256_file(self.checkpoint_path)
        store = ParamStore.deserialize(self.checkpoint_path)
        cfg = ModelConfig.from_dict(
            json.loads((self.checkpoint_path.parent / "model_config.json").read_text())
        )
        catalog, stats, meta, splits, static_slices = load_cache(Path(data_dir))
        if split_name not in splits:
            raise ValueError(f"split {split_name!r} not in cache (have {sorted(splits)})")
        self.cfg = cfg
        self.catalog = catalog
        self.stats = stats
        self.samples = splits[split_name]
        self.split_name = split_name
        self.deployed = make_deployed(store, cfg, catalog, static_slices)
        self.var_index = catalog.dynamic_index()
        self._caches: dict[int, object] = {}
        self._lock = threading.Lock()

    def cache_for(self, idx: int):
        with self._lock:
            cached = self._caches.get(idx)
        if cached is not None:
            return cached
        built = build_cache(
            self.deployed,
            self.samples.values[idx],
            self.samples.missing[idx],
            self.samples.statics[idx],
        )
        with self._lock:
            return self._caches.setdefault(idx, built)

    def stale(self) -> bool:
        try:
            return sha256_file(self.checkpoint_path) != self.checkpoint_digest
        except FileNotFoundError:
            return True

    def summary_document(self) -> dict:
        summary = self.deployed.summary
        names = summary.names
        nodes = [
            {"id": name, "kind": "outcome" if i >= summary.n_dyn else "variable"}
            for i, name in enumerate(names)
        ]
        edges = []
        for src, dst in zip(*np.where(summary.adjacency)):
            if dst >= summary.n_dyn:
                chunk = int(np.argmax(self.deployed.v2o.probs[:, src, dst - summary.n_dyn]))
            else:
                chunk = int(np.argmax(self.deployed.v2v.probs[:, src, dst]))
            edges.append(
                {
                    "src": names[int(src)],
                    "dst": names[int(dst)],
                    "chunk": chunk,
                    "probability": float(summary.scores[src, dst]),
                }
            )
        edges.sort(key=lambda e: (e["src"], e["dst"]))
        return {
            "nodes": nodes,
            "edges": edges,
            "meta": {
                "kind": "summary",
                "threshold": self.deployed.v2o.threshold,
                "W": self.cfg.n_chunks,
                "chunk_bins": self.cfg.chunk_bins,
                "chunk_order": "0 = most recent",
            },
        }

    def sample_document(self, idx: int) -> dict:
        values = self.samples.values[idx]
        missing = self.samples.missing[idx]
        raw = normalize_unapply(values, self.stats)
        labels = {
            name: int(self.samples.labels[idx, j]) for j, name in enumerate(self.catalog.outcomes)
        }
        last_obs = {}
        for i, var in enumerate(self.catalog.dynamic):
            observed = np.where(~missing[:, i])[0]
            if len(observed):
                t = int(observed[-1])
                last_obs[var.name] = {
                    "bin": t,
                    "value": float(raw[t, i]),
                    "deviation": float(values[t, i]),
                }
            else:
                last_obs[var.name] = None
        return {
            "id": idx,
            "split": self.split_name,
            "patient_id": self.samples.patient_ids[idx],
            "t_end": int(self.samples.t_ends[idx]),
            "window_bins": self.cfg.t_window,
            "variables": [v.name for v in self.catalog.dynamic],
            "values": [[float(x) for x in row] for row in values],
            "missing": [[bool(x) for x in row] for row in missing],
            "labels": labels,
            "most_recent": last_obs,
        }

    def risks_document(self, idx: int) -> dict:
        cache = self.cache_for(idx)
        return {
            "id": idx,
            "risks": {name: float(cache.risks[j]) for j, name in enumerate(self.catalog.outcomes)},
        }


def create_app(checkpoint, data_dir, split_name: str = "test-id", ui_dir=None) -> FastAPI:
    state = ServiceState(Path(checkpoint), Path(data_dir), split_name)
    app = FastAPI(title="causalews", docs_url=None, redoc_url=None)
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )
    app.state.service = state

    @app.get("/api/graph")
    def get_graph():
        return _canonical(state.summary_document())

    @app.get("/api/samples/{idx}")
    def get_sample(idx: int):
        if not (0 <= idx < len(state.samples)):
            return _error(404, f"unknown sample {idx}")
        return _canonical(state.sample_document(idx))

    @app.get("/api/samples/{idx}/risks")
    def get_risks(idx: int):
        if not (0 <= idx < len(state.samples)):
            return _error(404, f"unknown sample {idx}")
        return _canonical(state.risks_document(idx))

    @app.post("/api/whatif")
    async def whatif(request: Request):
        if state.stale():
            return _error(409, "checkpoint changed on disk; restart the service to reload")
        try:
            body = await request.json()
        except json.JSONDecodeError:
            return _error(422, "body must be JSON")
        if not isinstance(body, dict) or "sample" not in body:
            return _error(422, "body must carry a 'sample' index")
        idx = body["sample"]
        if not isinstance(idx, int) or not (0 <= idx < len(state.samples)):
            return _error(404, f"unknown sample {idx!r}")
        outcome = body.get("outcome", 0)
        if isinstance(outcome, str):
            if outcome not in state.catalog.outcomes:
                return _error(422, f"unknown outcome {outcome!r}")
            outcome = state.catalog.outcomes.index(outcome)
        if not (isinstance(outcome, int) and 0 <= outcome < state.catalog.n_outcomes):
            return _error(422, f"outcome {outcome!r} out of range")
        raw_perturbations = body.get("perturbations", [])
        if not isinstance(raw_perturbations, list):
            return _error(422, "perturbations must be a list")
        cfg = state.cfg
        queries: list[CdeQuery] = []
        for p in raw_perturbations:
            if not isinstance(p, dict):
                return _error(422, "each perturbation must be an object")
            var = p.get("variable")
            if isinstance(var, str):
                if var not in state.var_index:
                    return _error(422, f"unknown variable {var!r}")
                var = state.var_index[var]
            if not (isinstance(var, int) and 0 <= var < cfg.n_dyn):
                return _error(422, f"variable {p.get('variable')!r} out of range")
            time_bin = p.get("bin", cfg.t_window - 1)
            if not (isinstance(time_bin, int) and 0 <= time_bin < cfg.t_window):
                return _error(422, f"bin {time_bin!r} outside the {cfg.t_window}-bin window")
            value = p.get("value")
            rule = p.get("rule", "to_mean")
            if value is None and rule not in ("to_mean", "plus_sigma", "minus_sigma"):
                return _error(422, f"unknown rule {rule!r}")
            if value is not None and not isinstance(value, (int, float)):
                return _error(422, "perturbation value must be numeric")
            queries.append(CdeQuery(variable=var, time_bin=time_bin, value=value, rule=rule))

        values = state.samples.values[idx]
        missing = state.samples.missing[idx]
        statics = state.samples.statics[idx]
        cache = state.cache_for(idx)
        outcome_names = state.catalog.outcomes
        var_names = [v.name for v in state.catalog.dynamic]

        cde_entries = []
        for q in queries:
            res = cde_fast(state.deployed, cache, values, missing, q)
            cde_entries.append(
                {
                    "variable": var_names[q.variable],
                    "bin": q.time_bin,
                    "value": res.query.resolve_value(
                        float(values[q.time_bin, q.variable]), not bool(missing[q.time_bin, q.variable])
                    ),
                    "delta_risks": {n: float(res.delta_risks[j]) for j, n in enumerate(outcome_names)},
                }
            )
        risks_before = {n: float(cache.risks[j]) for j, n in enumerate(outcome_names)}
        if queries:
            vals_p = values.copy()
            miss_p = missing.copy()
            for q in queries:
                observed = not bool(missing[q.time_bin, q.variable])
                vals_p[q.time_bin, q.variable] = q.resolve_value(
                    float(values[q.time_bin, q.variable]), observed
                )
                miss_p[q.time_bin, q.variable] = False
            if len(queries) == 1:
                risks_after_arr = cde_fast(state.deployed, cache, values, missing, queries[0]).risks_after
            else:
                risks_after_arr = state.deployed.npm.predict_risks(
                    vals_p[None], miss_p[None], statics[None],
                    state.deployed.out_masks, state.deployed.out_static,
                )[0]
            risks_after = {n: float(risks_after_arr[j]) for j, n in enumerate(outcome_names)}
        else:
            risks_after = dict(risks_before)

        effects = variable_cde_matrix(state.deployed, values, missing, statics, rule="to_mean", cache=cache)
        pathway = build_pathways(
            effects, state.deployed, values, missing, outcome,
            sample_ref=f"{state.split_name}:{idx}",
        )
        return _canonical(
            {
                "sample": idx,
                "outcome": outcome_names[outcome],
                "risks_before": risks_before,
                "risks_after": risks_after,
                "cde": cde_entries,
                "pathway": export_viz(pathway),
            }
        )

    if ui_dir is not None and Path(ui_dir).exists():
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=str(ui_dir), html=True), name="ui")
    return app
