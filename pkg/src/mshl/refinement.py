"""Hypergraph-conditioned residual corrector.

A two-layer ReLU network maps features built from a cell's hyperedge
co-members (never the cell's own sensor) to the linear-stage residual. It is
trained with a Huber loss on observed cells and applied to held-out cells
through a hard gate: cells with no observed co-member at their timestep get
no correction.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .data import as_mask_bits, make_rng
from .operators import Hypergraph

N_GLOBAL = 3


@dataclass(frozen=True)
class HCRNConfig:
    hidden: int = 32
    edges_per_sensor: int = 8
    comembers_per_edge: int = 4
    epochs: int = 30
    batch_size: int = 256
    learning_rate: float = 1e-2
    weight_decay: float = 1e-4
    huber_delta: float = 1.0
    gain: float = 1.0
    seed: int = 0
    val_fraction: float = 0.1

    def __post_init__(self):
        if self.huber_delta <= 0:
            raise ValueError("huber_delta must be positive")
        if min(self.hidden, self.edges_per_sensor, self.comembers_per_edge,
               self.batch_size) < 1 or self.epochs < 0:
            raise ValueError("sizes must be positive")

    @property
    def n_slots(self):
        return self.edges_per_sensor * self.comembers_per_edge

    @property
    def n_features(self):
        return 2 * self.n_slots + N_GLOBAL

    def to_dict(self):
        return asdict(self)


def huber(a, delta=1.0):
    a = np.abs(np.asarray(a, dtype=float))
    out = np.where(a <= delta, 0.5 * a * a, delta * (a - 0.5 * delta))
    return out if out.ndim else float(out)


def neighborhood(i, hypergraph, edges_per_sensor=8, comembers_per_edge=4):
    """Co-member slots of sensor ``i``: ``E * K`` sensor indices, ``-1`` for padding.

    Edges containing ``i`` are ranked by weight, then larger scale, then
    lexicographic members; within an edge co-members are taken in ascending index.
    """
    mine = [e for e in hypergraph if i in e.members]
    mine.sort(key=lambda e: (-e.weight, -e.size, e.members))
    slots = np.full(edges_per_sensor * comembers_per_edge, -1, dtype=np.intp)
    for r, e in enumerate(mine[:edges_per_sensor]):
        co = [j for j in e.members if j != i][:comembers_per_edge]
        base = r * comembers_per_edge
        slots[base:base + len(co)] = co
    return slots


@dataclass(frozen=True, eq=False)
class Neighborhoods:
    """Slot table for every sensor plus the distinct co-members behind it."""

    slots: np.ndarray        # (N, E*K), -1 = padding
    unique: np.ndarray       # (N, U), -1 = padding

    @classmethod
    def build(cls, hypergraph, cfg):
        n = hypergraph.n_sensors
        slots = np.stack([neighborhood(i, hypergraph, cfg.edges_per_sensor,
                                       cfg.comembers_per_edge) for i in range(n)]) \
            if n else np.zeros((0, cfg.n_slots), dtype=np.intp)
        uniq = [sorted(set(row[row >= 0].tolist())) for row in slots]
        width = max([len(u) for u in uniq] + [1])
        unique = np.full((n, width), -1, dtype=np.intp)
        for i, u in enumerate(uniq):
            unique[i, :len(u)] = u
        return cls(slots, unique)


def features_for_cells(rows, cols, R_lin, mask, nbhd):
    """Feature matrix for cells ``(rows[k], cols[k])``; shape ``(n_cells, 2*E*K + 3)``.

    Slot pairs are ``(R_jt * M_jt, M_jt)``; padding slots are ``(0, 0)``. The
    three trailing features are the mean residual over distinct observed
    co-members, their count, and the fraction of all sensors observed at ``t``.
    """
    bits = as_mask_bits(mask)
    R = np.where(bits, R_lin, 0.0)
    rows = np.asarray(rows, dtype=np.intp)
    cols = np.asarray(cols, dtype=np.intp)
    n_cells = rows.size
    n_sensors = bits.shape[0]

    idx = nbhd.slots[rows]                               # (n, S)
    valid = idx >= 0
    safe = np.where(valid, idx, 0)
    t = cols[:, None]
    m = valid & bits[safe, t]
    v = np.where(m, R[safe, t], 0.0)

    uidx = nbhd.unique[rows]
    uvalid = uidx >= 0
    usafe = np.where(uvalid, uidx, 0)
    um = uvalid & bits[usafe, t]
    count = um.sum(axis=1).astype(float)
    total = np.where(um, R[usafe, t], 0.0).sum(axis=1)
    mean = np.divide(total, count, out=np.zeros(n_cells), where=count > 0)
    rate = bits.sum(axis=0)[cols] / float(n_sensors)

    F = np.empty((n_cells, 2 * idx.shape[1] + N_GLOBAL))
    F[:, 0:2 * idx.shape[1]:2] = v
    F[:, 1:2 * idx.shape[1]:2] = m
    F[:, -3] = mean
    F[:, -2] = count
    F[:, -1] = rate
    return F


def build_features(i, t, R_lin, mask, hypergraph, cfg=None):
    cfg = cfg or HCRNConfig()
    nbhd = Neighborhoods.build(hypergraph, cfg)
    return features_for_cells([i], [t], R_lin, mask, nbhd)[0]


def has_observed_comember(rows, cols, mask, nbhd):
    bits = as_mask_bits(mask)
    uidx = nbhd.unique[np.asarray(rows, dtype=np.intp)]
    ok = uidx >= 0
    return (ok & bits[np.where(ok, uidx, 0), np.asarray(cols)[:, None]]).any(axis=1)


@dataclass
class CorrectorModel:
    W1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: float
    config: HCRNConfig = field(default_factory=HCRNConfig)
    deferred: bool = False
    history: dict = field(default_factory=dict)

    @classmethod
    def zeros(cls, cfg, deferred=False):
        return cls(np.zeros((cfg.hidden, cfg.n_features)), np.zeros(cfg.hidden),
                   np.zeros(cfg.hidden), 0.0, cfg, deferred)

    def predict(self, F):
        h = np.maximum(F @ self.W1.T + self.b1, 0.0)
        return h @ self.w2 + self.b2

    def layout(self):
        K = self.config.comembers_per_edge
        slots = [{"slot": k, "edge_rank": k // K, "comember_rank": k % K,
                  "value_col": 2 * k, "indicator_col": 2 * k + 1}
                 for k in range(self.config.n_slots)]
        return {"slots": slots, "globals": ["mean_observed_comember_residual",
                                            "n_observed_comembers", "observation_rate"]}

    def to_dict(self):
        return {"W1": self.W1.tolist(), "b1": self.b1.tolist(), "w2": self.w2.tolist(),
                "b2": float(self.b2), "layout": self.layout(),
                "config": self.config.to_dict(), "deferred": self.deferred}

    def to_json(self):
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d):
        cfg = HCRNConfig(**d["config"])
        return cls(np.asarray(d["W1"], dtype=float).reshape(cfg.hidden, cfg.n_features),
                   np.asarray(d["b1"], dtype=float), np.asarray(d["w2"], dtype=float),
                   float(d["b2"]), cfg, bool(d.get("deferred", False)))

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def _huber_risk(model, F, r, delta):
    return float(np.mean(huber(model.predict(F) - r, delta))) if len(r) else 0.0


def training_cells(mask, nbhd):
    """Observed cells with at least one observed co-member, in time-major order."""
    bits = as_mask_bits(mask)
    tt, ii = np.nonzero(bits.T)
    keep = has_observed_comember(ii, tt, bits, nbhd)
    return ii[keep], tt[keep]


def train_corrector(R_lin, mask, hypergraph, cfg=None):
    """Fit the corrector by Adam on the Huber risk with L2 weight decay.

    The last ``val_fraction`` of training cells (by time) is held out and only
    used to report validation risk next to the zero model's. Returns the zero
    model, flagged ``deferred``, when no cell qualifies for training.
    """
    cfg = cfg or HCRNConfig()
    bits = as_mask_bits(mask)
    nbhd = Neighborhoods.build(hypergraph, cfg)
    rows, cols = training_cells(bits, nbhd)
    if rows.size == 0:
        return CorrectorModel.zeros(cfg, deferred=True)

    F = features_for_cells(rows, cols, R_lin, bits, nbhd)
    r = np.asarray(R_lin, dtype=float)[rows, cols]
    n_val = int(round(cfg.val_fraction * rows.size))
    n_tr = rows.size - n_val
    if n_tr == 0:
        n_tr, n_val = rows.size, 0
    F_tr, r_tr, F_val, r_val = F[:n_tr], r[:n_tr], F[n_tr:], r[n_tr:]

    init = make_rng(cfg.seed, "init")
    n_feat, H = cfg.n_features, cfg.hidden
    params = [init.normal(0.0, np.sqrt(2.0 / n_feat), (H, n_feat)), np.zeros(H),
              init.normal(0.0, np.sqrt(2.0 / H), H), np.zeros(1)]
    m = [np.zeros_like(p) for p in params]
    v = [np.zeros_like(p) for p in params]
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    lr, wd, delta = cfg.learning_rate, cfg.weight_decay, cfg.huber_delta
    shuffle = make_rng(cfg.seed, "shuffle")
    step = 0
    losses = []
    for _ in range(cfg.epochs):
        order = shuffle.permutation(n_tr)
        epoch_loss = 0.0
        for start in range(0, n_tr, cfg.batch_size):
            b = order[start:start + cfg.batch_size]
            X, y = F_tr[b], r_tr[b]
            W1, b1, w2, b2 = params
            pre = X @ W1.T + b1
            h = np.maximum(pre, 0.0)
            err = h @ w2 + b2[0] - y
            epoch_loss += float(np.sum(huber(err, delta)))
            g_out = np.clip(err, -delta, delta) / len(b)
            g_w2 = h.T @ g_out
            g_b2 = np.array([g_out.sum()])
            g_pre = np.outer(g_out, w2) * (pre > 0)
            g_W1 = g_pre.T @ X
            g_b1 = g_pre.sum(axis=0)
            grads = [g_W1, g_b1, g_w2, g_b2]
            step += 1
            for k, (p, g) in enumerate(zip(params, grads)):
                g = g + 2.0 * wd * p
                m[k] = beta1 * m[k] + (1 - beta1) * g
                v[k] = beta2 * v[k] + (1 - beta2) * g * g
                mhat = m[k] / (1 - beta1 ** step)
                vhat = v[k] / (1 - beta2 ** step)
                p -= lr * mhat / (np.sqrt(vhat) + eps)
        losses.append(epoch_loss / n_tr)

    model = CorrectorModel(params[0], params[1], params[2], float(params[3][0]), cfg)
    zero = CorrectorModel.zeros(cfg)
    model.history = {
        "n_train": int(n_tr), "n_val": int(n_val), "epoch_loss": losses,
        "train_risk": _huber_risk(model, F_tr, r_tr, delta),
        "train_risk_zero": _huber_risk(zero, F_tr, r_tr, delta),
        "val_risk": _huber_risk(model, F_val, r_val, delta),
        "val_risk_zero": _huber_risk(zero, F_val, r_val, delta),
        "mean_feature_sq_norm": float(np.mean(np.sum(F * F, axis=1))),
    }
    if not all(np.all(np.isfinite(p)) for p in params):
        raise FloatingPointError("corrector training diverged")
    return model


def apply_corrector(X_lin, R_lin, mask, hypergraph, model, cfg=None):
    """Add the gated correction ``gain * g(phi)`` on held-out cells only."""
    cfg = cfg or model.config
    bits = as_mask_bits(mask)
    X_full = np.array(X_lin, dtype=float, copy=True)
    if cfg.gain == 0 or model.deferred:
        return X_full
    nbhd = Neighborhoods.build(hypergraph, cfg)
    ii, tt = np.nonzero(~bits)
    if ii.size == 0:
        return X_full
    gate = has_observed_comember(ii, tt, bits, nbhd)
    ii, tt = ii[gate], tt[gate]
    if ii.size:
        F = features_for_cells(ii, tt, R_lin, bits, nbhd)
        X_full[ii, tt] += cfg.gain * model.predict(F)
    return X_full
