"""Graph, hyperedge and temporal Laplacians, and the matrix-free normal operator."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from math import comb

import numpy as np


def scale_weight(s):
    """Per-scale weight ``1 / binom(s, 2)`` that equalises per-pair energy across sizes."""
    if s < 2:
        raise ValueError(f"hyperedge size must be >= 2, got {s}")
    return 1.0 / comb(s, 2)


@dataclass(frozen=True)
class Hyperedge:
    members: tuple[int, ...]
    weight: float = 1.0

    def __post_init__(self):
        members = tuple(sorted(int(m) for m in self.members))
        if len(members) < 2:
            raise ValueError(f"hyperedge needs at least 2 members, got {members}")
        if len(set(members)) != len(members):
            raise ValueError(f"duplicate members in hyperedge {members}")
        if members[0] < 0:
            raise ValueError(f"negative sensor index in {members}")
        if not 0.0 < self.weight <= 1.0:
            raise ValueError(f"hyperedge weight must lie in (0, 1], got {self.weight}")
        object.__setattr__(self, "members", members)

    @property
    def size(self):
        return len(self.members)


@dataclass(frozen=True)
class Hypergraph:
    """Multi-scale hypergraph: ``edges[s]`` holds the size-``s`` hyperedges."""

    n_sensors: int
    edges: dict[int, tuple[Hyperedge, ...]] = field(default_factory=dict)
    max_per_scale: int | None = None

    def __post_init__(self):
        clean = {}
        for s, es in sorted(self.edges.items()):
            es = tuple(es)
            seen = set()
            for e in es:
                if e.size != s:
                    raise ValueError(f"edge {e.members} listed under scale {s}")
                if e.members[-1] >= self.n_sensors:
                    raise ValueError(f"edge {e.members} out of range for N={self.n_sensors}")
                if e.members in seen:
                    raise ValueError(f"duplicate edge {e.members} at scale {s}")
                seen.add(e.members)
            if self.max_per_scale is not None and len(es) > self.max_per_scale:
                raise ValueError(f"scale {s} has {len(es)} edges > cap {self.max_per_scale}")
            if es:
                clean[int(s)] = es
        object.__setattr__(self, "edges", clean)

    @classmethod
    def from_edges(cls, n_sensors, edges, max_per_scale=None):
        by_scale = {}
        for e in edges:
            by_scale.setdefault(e.size, []).append(e)
        return cls(n_sensors, {s: tuple(v) for s, v in by_scale.items()}, max_per_scale)

    def __iter__(self):
        for s in sorted(self.edges):
            yield from self.edges[s]

    def __len__(self):
        return sum(len(v) for v in self.edges.values())

    @property
    def scales(self):
        return sorted(self.edges)

    def member_sets(self):
        return {e.members for e in self}

    def to_dict(self):
        return {"n_sensors": self.n_sensors,
                "scales": [{"s": s, "edges": [{"members": list(e.members), "weight": e.weight}
                                              for e in self.edges[s]]}
                           for s in self.scales]}

    @classmethod
    def from_dict(cls, d, n_sensors=None):
        n = d.get("n_sensors", n_sensors)
        if n is None:
            raise ValueError("hypergraph JSON lacks n_sensors and none was supplied")
        edges = {int(block["s"]): tuple(Hyperedge(tuple(e["members"]), float(e["weight"]))
                                        for e in block["edges"])
                 for block in d.get("scales", [])}
        return cls(int(n), edges)

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_json(cls, text, n_sensors=None):
        return cls.from_dict(json.loads(text), n_sensors)


def graph_laplacian(A):
    A = np.asarray(A, dtype=float)
    return np.diag(A.sum(axis=1)) - A


def edge_laplacian(edge, n_sensors):
    """Dense ``N x N`` embedding of ``|e| I_e - 1_e 1_e^T``."""
    members = edge.members if isinstance(edge, Hyperedge) else tuple(sorted(edge))
    s = len(members)
    L = np.zeros((n_sensors, n_sensors))
    idx = np.asarray(members)
    L[np.ix_(idx, idx)] = -1.0
    L[idx, idx] = s - 1.0
    return L


def multiscale_laplacian(H):
    """Dense ``sum_s w_s sum_e w_e L_e``."""
    L = np.zeros((H.n_sensors, H.n_sensors))
    for e in H:
        L += scale_weight(e.size) * e.weight * edge_laplacian(e, H.n_sensors)
    return L


def temporal_laplacian(n_steps):
    """Dense first-difference Laplacian (tridiagonal ``1, 2, ..., 2, 1`` / ``-1``)."""
    L = 2.0 * np.eye(n_steps) - np.eye(n_steps, k=1) - np.eye(n_steps, k=-1)
    L[0, 0] = L[-1, -1] = 1.0
    if n_steps == 1:
        L[0, 0] = 0.0
    return L


def apply_temporal(X):
    """``X @ L_T`` for the first-difference Laplacian, in O(NT)."""
    d = np.diff(X, axis=1)
    out = np.zeros_like(X)
    out[:, :-1] -= d
    out[:, 1:] += d
    return out


class TemporalOperator:
    """First-difference Laplacian on ``n_steps`` samples, applied from the right."""

    def __init__(self, n_steps):
        self.n_steps = int(n_steps)

    def apply(self, X):
        return apply_temporal(X)

    def dense(self):
        return temporal_laplacian(self.n_steps)


class SpatialOperator:
    """``L_G + lambda_H * L_H`` with the hypergraph part kept as an edge list.

    Edges of one size are applied together: for members ``e`` the product
    ``L_e X`` is ``s X_e - sum_{j in e} X_j`` on the rows of ``e``.
    """

    def __init__(self, A, hypergraph=None, lambda_h=0.0):
        self.L_G = graph_laplacian(A)
        self.n_sensors = self.L_G.shape[0]
        self.hypergraph = hypergraph if hypergraph is not None else Hypergraph(self.n_sensors)
        if self.hypergraph.n_sensors != self.n_sensors:
            raise ValueError("hypergraph and adjacency disagree on the sensor count")
        self.lambda_h = float(lambda_h)
        self._groups = []
        for s in self.hypergraph.scales:
            es = self.hypergraph.edges[s]
            idx = np.array([e.members for e in es], dtype=np.intp)
            coef = np.array([scale_weight(s) * e.weight for e in es])
            self._groups.append((s, idx, coef))

    def apply_hypergraph(self, X):
        out = np.zeros_like(X)
        for s, idx, coef in self._groups:
            block = X[idx]                                   # (m, s, T)
            contrib = s * block - block.sum(axis=1, keepdims=True)
            contrib *= coef[:, None, None]
            np.add.at(out, idx.ravel(), contrib.reshape(-1, X.shape[1]))
        return out

    def apply(self, X):
        out = self.L_G @ X
        if self.lambda_h and self._groups:
            out += self.lambda_h * self.apply_hypergraph(X)
        return out

    def dense(self):
        return self.L_G + self.lambda_h * multiscale_laplacian(self.hypergraph)


def apply_normal_operator(X, weights, spatial, temporal, lambda_s, lambda_t, mu):
    """``W*X + lambda_s L_S X + lambda_t X L_T + mu X`` without forming the NT x NT matrix."""
    X = np.asarray(X, dtype=float)
    if X.shape != np.shape(weights):
        raise ValueError(f"shape mismatch: X {X.shape} vs weights {np.shape(weights)}")
    if X.shape[0] != spatial.n_sensors or X.shape[1] != temporal.n_steps:
        raise ValueError(f"shape mismatch: X {X.shape} vs operators "
                         f"({spatial.n_sensors}, {temporal.n_steps})")
    out = weights * X + mu * X
    if lambda_s:
        out += lambda_s * spatial.apply(X)
    if lambda_t:
        out += lambda_t * temporal.apply(X)
    return out


def quadratic_form(X, L):
    """``<X, L X>_F`` for a dense symmetric ``L``."""
    return float(np.sum(X * (L @ X)))


def dirichlet_energy(X, edge, normalized=False):
    """Hyperedge energy ``<X, L_e X>_F``, optionally times ``1 / binom(s, 2)``.

    Evaluated as the sum of squared pairwise row differences inside the edge,
    which equals ``s * sum_i ||X_i||^2 - ||sum_i X_i||^2`` and is exactly zero
    on group-constant rows.
    """
    members = edge.members if isinstance(edge, Hyperedge) else tuple(sorted(edge))
    rows = np.asarray(X, dtype=float)[list(members)]
    s = len(members)
    energy = 0.0
    for a in range(s - 1):
        diff = rows[a + 1:] - rows[a]
        energy += float(np.sum(diff * diff))
    return scale_weight(s) * energy if normalized else energy


def within_group_variance(X, edge):
    """Within-edge row variance summed over time, divided by the edge size.

    This is the variance convention of the stated Dirichlet identity; the
    direct energy equals ``s**2`` times this value.
    """
    members = edge.members if isinstance(edge, Hyperedge) else tuple(sorted(edge))
    rows = np.asarray(X, dtype=float)[list(members)]
    return float(np.sum((rows - rows.mean(axis=0)) ** 2)) / len(members)
