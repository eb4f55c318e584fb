"""Planted-hyperedge generator for recovery and risk experiments.

Members of each planted edge follow ``beta_i * u_t`` plus idiosyncratic noise;
every other sensor carries a background signal that is smooth along a ring of
sensors and in time. The adjacency is a short-range ring, optionally
augmented with the planted groups so that topology can propose them.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .data import make_rng
from .operators import Hyperedge, Hypergraph, graph_laplacian


@dataclass(frozen=True)
class FactorProcess:
    kind: str = "ar1"            # "ar1" or "sinusoid"
    phi: float = 0.9
    sigma_u: float = 1.0
    period: float = 288.0

    def __post_init__(self):
        if self.kind not in ("ar1", "sinusoid"):
            raise ValueError(f"unknown factor process {self.kind!r}")
        if self.kind == "ar1" and not -1 < self.phi < 1:
            raise ValueError("AR(1) coefficient must lie in (-1, 1)")
        if self.sigma_u <= 0:
            raise ValueError("sigma_u must be positive")


@dataclass(frozen=True)
class PlantedEdge:
    members: tuple[int, ...]
    beta_range: tuple[float, float] = (0.5, 1.5)


@dataclass(frozen=True)
class SyntheticSpec:
    n_sensors: int = 60
    n_steps: int = 576
    planted: tuple[PlantedEdge, ...] = ()
    factor: FactorProcess = field(default_factory=FactorProcess)
    background: float = 1.0
    background_time_corr: float = 0.98
    background_spatial: float = 2.0
    idiosyncratic: float = 0.1
    noise: float = 0.3
    offset: float = 0.0
    topology_aligned: bool = False
    ring_reach: int = 2
    seed: int = 0

    def __post_init__(self):
        if self.n_sensors < 2 or self.n_steps < 2:
            raise ValueError("need at least 2 sensors and 2 steps")
        if self.noise < 0 or self.idiosyncratic < 0 or self.background < 0:
            raise ValueError("noise levels must be nonnegative")
        object.__setattr__(self, "planted", tuple(
            p if isinstance(p, PlantedEdge) else PlantedEdge(tuple(p)) for p in self.planted))
        for p in self.planted:
            if len(p.members) < 2 or min(p.members) < 0 or max(p.members) >= self.n_sensors:
                raise ValueError(f"planted edge {p.members} invalid for N={self.n_sensors}")
            if len(set(p.members)) != len(p.members):
                raise ValueError(f"planted edge {p.members} has duplicate members")

    def to_dict(self):
        d = asdict(self)
        d["planted"] = [{"members": list(p.members), "beta_range": list(p.beta_range)}
                        for p in self.planted]
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        unknown = set(d) - {f for f in cls.__dataclass_fields__}
        if unknown:
            raise ValueError(f"unknown SyntheticSpec keys: {sorted(unknown)}")
        if "planted" in d:
            d["planted"] = tuple(PlantedEdge(tuple(p["members"]),
                                             tuple(p.get("beta_range", (0.5, 1.5))))
                                 for p in d["planted"])
        if "factor" in d and isinstance(d["factor"], dict):
            d["factor"] = FactorProcess(**d["factor"])
        return cls(**d)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True, eq=False)
class SyntheticData:
    X: np.ndarray
    adjacency: np.ndarray
    distances: np.ndarray
    hypergraph: Hypergraph
    factors: np.ndarray
    betas: dict
    diagnostics: dict = field(default_factory=dict)


def ring_distances(n):
    i = np.arange(n)
    d = np.abs(i[:, None] - i[None, :])
    return np.minimum(d, n - d).astype(float)


def ring_adjacency(n, reach=2):
    """Gaussian weights ``exp(-d^2 / 2)`` for ring distance ``1 <= d <= reach``."""
    d = ring_distances(n)
    A = np.where((d >= 1) & (d <= reach), np.exp(-d ** 2 / 2.0), 0.0)
    return A


def factor_series(process, n_steps, rng):
    if process.kind == "ar1":
        u = np.empty(n_steps)
        u[0] = rng.normal(0.0, process.sigma_u / np.sqrt(1 - process.phi ** 2))
        shocks = rng.normal(0.0, process.sigma_u, n_steps)
        for t in range(1, n_steps):
            u[t] = process.phi * u[t - 1] + shocks[t]
        return u
    phase = rng.uniform(0, 2 * np.pi)
    t = np.arange(n_steps)
    return process.sigma_u * np.sqrt(2.0) * np.sin(2 * np.pi * t / process.period + phase)


def smooth_background(n, T, time_corr, spatial, rng, reach=2):
    """Unit-variance noise, AR(1)-filtered in time and graph-smoothed on the ring."""
    z = rng.normal(0.0, 1.0, (n, T))
    out = np.empty_like(z)
    out[:, 0] = z[:, 0]
    c = np.sqrt(1 - time_corr ** 2)
    for t in range(1, T):
        out[:, t] = time_corr * out[:, t - 1] + c * z[:, t]
    if spatial > 0:
        L = graph_laplacian(ring_adjacency(n, reach))
        out = np.linalg.solve(np.eye(n) + spatial * L, out)
    sd = out.std()
    return out / sd if sd > 0 else out


def generate_planted(spec):
    """Latent matrix, adjacency, distances and ground-truth hypergraph for ``spec``."""
    rng = make_rng(spec.seed, "synthetic")
    n, T = spec.n_sensors, spec.n_steps
    X = spec.background * smooth_background(n, T, spec.background_time_corr,
                                            spec.background_spatial, rng, spec.ring_reach)
    member_of = np.zeros(n, dtype=bool)
    for p in spec.planted:
        member_of[list(p.members)] = True
    X[member_of] = 0.0

    factors = np.zeros((len(spec.planted), T))
    betas = {}
    for k, p in enumerate(spec.planted):
        u = factor_series(spec.factor, T, rng)
        factors[k] = u
        lo, hi = p.beta_range
        b = rng.uniform(lo, hi, len(p.members))
        for i, beta in zip(p.members, b):
            X[i] += beta * u
            betas.setdefault(int(i), []).append(float(beta))
    if spec.idiosyncratic > 0 and member_of.any():
        X[member_of] += spec.idiosyncratic * rng.normal(0.0, 1.0, (int(member_of.sum()), T))
    X += spec.offset

    A = ring_adjacency(n, spec.ring_reach)
    if spec.topology_aligned:
        for p in spec.planted:
            idx = np.asarray(p.members)
            A[np.ix_(idx, idx)] = np.maximum(A[np.ix_(idx, idx)], 1.0)
        np.fill_diagonal(A, 0.0)

    edges = {}
    for p in spec.planted:
        e = Hyperedge(tuple(p.members), 1.0)
        edges.setdefault(e.size, {})[e.members] = e
    H = Hypergraph(n, {s: tuple(v.values()) for s, v in edges.items()})
    diag = {"loo_r2": {",".join(map(str, p.members)): loo_r2(X, p.members)
                       for p in spec.planted}}
    return SyntheticData(X, A, ring_distances(n), H, factors, betas, diag)


def loo_r2(X, members):
    """Mean R^2 of regressing each member on the mean of the others (slope and intercept)."""
    rows = np.asarray(X, dtype=float)[list(members)]
    out = []
    for k in range(len(members)):
        y = rows[k]
        z = np.delete(rows, k, axis=0).mean(axis=0)
        zc, yc = z - z.mean(), y - y.mean()
        syy = float(yc @ yc)
        if syy == 0:
            out.append(1.0)
            continue
        szz = float(zc @ zc)
        fit = (zc @ yc) / szz * zc if szz > 0 else np.zeros_like(yc)
        out.append(1.0 - float(np.sum((yc - fit) ** 2)) / syy)
    return float(np.mean(out))


def add_noise(X, sigma, seed):
    """``X`` plus i.i.d. Gaussian noise of standard deviation ``sigma``."""
    X = np.asarray(X, dtype=float)
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    if sigma == 0:
        return X.copy()
    return X + sigma * make_rng(seed, "noise").normal(0.0, 1.0, X.shape)


def scattered_groups(n_sensors, sizes, seed, min_gap=3):
    """Disjoint member sets whose members are pairwise at least ``min_gap`` apart on the ring."""
    rng = make_rng(seed, "groups")
    d = ring_distances(n_sensors)
    for _ in range(1000):
        free = list(rng.permutation(n_sensors))
        groups, used = [], []
        ok = True
        for s in sizes:
            g = []
            for c in list(free):
                if all(d[c, j] >= min_gap for j in g):
                    g.append(int(c))
                    if len(g) == s:
                        break
            if len(g) < s:
                ok = False
                break
            used.extend(g)
            free = [c for c in free if c not in g]
            groups.append(tuple(sorted(g)))
        if ok:
            return groups
    raise ValueError("could not place scattered groups; lower min_gap or sizes")


def contiguous_groups(n_sensors, sizes, gap=1):
    """Disjoint runs of consecutive ring sensors, separated by ``gap`` sensors."""
    groups, start = [], 0
    for s in sizes:
        if start + s > n_sensors:
            raise ValueError("not enough sensors for contiguous groups")
        groups.append(tuple(range(start, start + s)))
        start += s + gap
    return groups
