"""Benchmark grid runner (regimes x rates x windows x methods) and its report."""

from __future__ import annotations

import csv
import io
import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .baselines import knn_spatial, sensor_mean, tikh_graph
from .data import (DEFAULT_BLOCK_LEN, Mask, MissingnessSpec, Regime, WindowPlan, as_mask_bits,
                   build_adjacency, derive_seed, generate_mask)
from .discovery import DiscoveryConfig
from .pipeline import impute
from .refinement import HCRNConfig
from .solver import TikhonovConfig, estimate_propensity

METHODS = ("mshl", "mshl_linear", "tikh_graph", "knn_spatial", "sensor_mean")
DEFAULT_METHODS = ("mshl", "tikh_graph", "sensor_mean")
_REGIME_KEY = {Regime.CELL: 0, Regime.BLOCK: 1, Regime.KRIGING: 2}


def mae_heldout(X_hat, X_true, mask):
    """Mean absolute error over held-out cells (``mask == False``) where the truth is finite."""
    bits = as_mask_bits(mask)
    X_hat = np.asarray(X_hat, dtype=float)
    X_true = np.asarray(X_true, dtype=float)
    if X_hat.shape != bits.shape or X_true.shape != bits.shape:
        raise ValueError(f"shape mismatch: {X_hat.shape}, {X_true.shape}, mask {bits.shape}")
    held = ~bits & np.isfinite(X_true)
    if not held.any():
        raise ValueError("no held-out cells to evaluate")
    return float(np.mean(np.abs(X_hat[held] - X_true[held])))


@dataclass
class GridRecord:
    dataset: str
    regime: str
    p: float
    window: int
    method: str
    mask_hash: str
    mae: float | None = None
    runtime: float | None = None
    status: str = "ok"
    error: str | None = None
    diagnostics: dict | None = None


@dataclass
class EvalReport:
    records: list = field(default_factory=list)
    config: dict = field(default_factory=dict)

    def aggregates(self):
        """Mean and spread of MAE over windows, per (dataset, regime, p, method)."""
        groups = {}
        for r in self.records:
            if r.status == "ok":
                groups.setdefault((r.dataset, r.regime, r.p, r.method), []).append(r.mae)
        out = []
        for (ds, reg, p, meth), vals in sorted(groups.items()):
            v = np.asarray(vals)
            out.append({"dataset": ds, "regime": reg, "p": p, "method": meth,
                        "mae_mean": float(v.mean()), "windows": int(v.size),
                        "windows_spread": float(v.std()), "seed_std": 0.0})
        return out

    def to_dict(self, include_runtime=False):
        recs = []
        for r in self.records:
            d = asdict(r)
            if not include_runtime:
                d.pop("runtime")
            recs.append(d)
        return {"config": self.config, "records": recs, "aggregates": self.aggregates()}

    def to_json(self, include_runtime=False):
        return json.dumps(_jsonable(self.to_dict(include_runtime)), indent=2, sort_keys=True)

    def to_csv(self, include_runtime=False):
        cols = ["dataset", "regime", "p", "window", "method", "mask_hash", "mae", "status", "error"]
        if include_runtime:
            cols.insert(7, "runtime")
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(cols)
        for r in self.records:
            d = asdict(r)
            w.writerow(["" if d[c] is None else (repr(d[c]) if isinstance(d[c], float) else d[c])
                        for c in cols])
        return buf.getvalue()


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, float) and not np.isfinite(obj):
        return None
    return obj


def mask_seed(window_seed, regime, p):
    return derive_seed(window_seed, _REGIME_KEY[Regime(regime)], int(round(p * 1_000_000)))


def _run_method(method, Y, bits, regime, A, distances, tik, disc, hcrn):
    if method == "sensor_mean":
        return sensor_mean(Y, bits), None
    if method == "knn_spatial":
        return knn_spatial(Y, bits, distances, k=5), None
    if method == "tikh_graph":
        prop = estimate_propensity(bits, regime, tik.pi_floor)
        return tikh_graph(Y, bits, prop, A, tik), None
    if method in ("mshl", "mshl_linear"):
        res = impute(Y, bits, A, tik, disc, hcrn, regime=regime,
                     linear_only=method == "mshl_linear")
        return res.X_full, res.diagnostics
    raise ValueError(f"unknown method {method!r}")


def _run_cell(task):
    (dataset, regime, p, w, sl, wseed, Y_all, truth_all, A, distances, methods,
     tik, disc, hcrn, block_len) = task
    Y = Y_all[:, sl]
    truth = truth_all[:, sl]
    n, T = Y.shape
    spec = MissingnessSpec(regime, p, block_len, mask_seed(wseed, regime, p))
    mask = generate_mask(n, T, spec)
    bits = mask.bits & np.isfinite(Y)
    digest = Mask(bits, spec).digest()
    Yz = np.where(bits, Y, 0.0)
    out = []
    for method in methods:
        rec = GridRecord(dataset, Regime(regime).value, float(p), w, method, digest)
        t0 = time.perf_counter()
        try:
            X_hat, diag = _run_method(method, Yz, bits, regime, A, distances, tik, disc, hcrn)
            rec.mae = mae_heldout(X_hat, truth, bits)
            rec.diagnostics = diag
        except Exception as exc:   # a failed method must not stop the grid
            rec.status, rec.error = "failed", f"{type(exc).__name__}: {exc}"
        rec.runtime = time.perf_counter() - t0
        out.append(rec)
    return out


def run_grid(data, distances, regimes, rates, plan, methods=DEFAULT_METHODS, truth=None,
             adjacency=None, tikhonov=None, discovery=None, hcrn=None, dataset="data",
             block_len=DEFAULT_BLOCK_LEN, jobs=1):
    """Evaluate every method on one shared mask per (regime, rate, window).

    Parameters
    ----------
    data : (N, T_total) array
        Observed series; NaN entries count as never observed.
    distances : (N, N) array
        Pairwise sensor distances (used by ``knn_spatial`` and, when
        ``adjacency`` is not given, to build the Gaussian-kernel adjacency).
    plan : WindowPlan
        Windows and their seeds; each window's mask seed is derived from its
        window seed, the regime and the rate.
    truth : array, optional
        Ground truth to score against; defaults to ``data`` itself, so only
        held-out cells whose original value is finite are scored.
    jobs : int
        Grid cells run on this many threads; record order is unaffected.
    """
    data = np.asarray(data, dtype=float)
    truth = data if truth is None else np.asarray(truth, dtype=float)
    if truth.shape != data.shape:
        raise ValueError("truth and data shapes differ")
    distances = np.asarray(distances, dtype=float)
    A = build_adjacency(distances) if adjacency is None else np.asarray(adjacency, dtype=float)
    for m in methods:
        if m not in METHODS:
            raise ValueError(f"unknown method {m!r}; choose from {METHODS}")
    tik = tikhonov or TikhonovConfig()
    disc = discovery or DiscoveryConfig()
    hcrn = hcrn or HCRNConfig()
    if not isinstance(plan, WindowPlan):
        plan = WindowPlan.from_dict(plan)

    tasks = []
    for regime in regimes:
        for p in rates:
            for w, (sl, wseed) in enumerate(zip(plan.slices(), plan.seeds)):
                tasks.append((dataset, Regime(regime), float(p), w, sl, wseed, data, truth, A,
                              distances, tuple(methods), tik, disc, hcrn, block_len))
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_cell, tasks))
    else:
        results = [_run_cell(t) for t in tasks]

    config = {"dataset": dataset, "regimes": [Regime(r).value for r in regimes],
              "rates": [float(p) for p in rates], "methods": list(methods),
              "plan": plan.to_dict(), "block_len": block_len, "tikhonov": tik.to_dict(),
              "discovery": disc.to_dict(), "hcrn": hcrn.to_dict()}
    return EvalReport([r for cell in results for r in cell], config)
