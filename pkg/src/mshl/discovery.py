"""Hypergraph discovery from the residuals of a pairwise pre-fit.

The stage runs: pairwise Tikhonov pre-fit, residual correlations, candidate
generation from topology and from residual coupling, the two structural
scores, per-scale thresholds with a complexity penalty, and sigmoid-weighted
acceptance capped at ``j_max`` edges per scale.
"""

from __future__ import annotations

import enum
import math
from dataclasses import asdict, dataclass, field
from itertools import combinations

import numpy as np

from .data import as_mask_bits
from .operators import Hyperedge, Hypergraph, SpatialOperator
from .solver import TikhonovConfig, solve_tikhonov

EPS = 1e-12


class CalibrationError(ValueError):
    """No defined off-diagonal residual correlation to calibrate against."""


class Source(str, enum.Enum):
    TOPOLOGY = "topology"
    RESIDUAL = "residual"
    BOTH = "both"


@dataclass(frozen=True)
class DiscoveryConfig:
    s_max: int = 5
    scales: tuple[int, ...] = (2, 3, 4, 5)
    tau_floor: float = 0.30
    quantile: float = 0.95
    j_max: int = 20
    c_rho: float = 1.0
    c_sigma: float = 1.0
    use_topology: bool = True
    use_residual: bool = True
    denominator: str = "per_sensor"   # or "joint": energies over the joint set

    def __post_init__(self):
        if self.denominator not in ("per_sensor", "joint"):
            raise ValueError(f"unknown correlation denominator {self.denominator!r}")
        scales = tuple(sorted(set(int(s) for s in self.scales)))
        object.__setattr__(self, "scales", scales)
        if not scales:
            raise ValueError("scales must be nonempty")
        if scales[0] < 2 or scales[-1] > self.s_max:
            raise ValueError(f"scales {scales} must lie in [2, s_max={self.s_max}]")
        if not 0 <= self.tau_floor < 1:
            raise ValueError("tau_floor must lie in [0, 1)")
        if not 0 < self.quantile < 1:
            raise ValueError("quantile must lie in (0, 1)")
        if self.j_max < 1:
            raise ValueError("j_max must be >= 1")

    def to_dict(self):
        d = asdict(self)
        d["scales"] = list(self.scales)
        return d


@dataclass(frozen=True, eq=False)
class ResidualCorrelation:
    """Residual correlation matrix; undefined entries are NaN and ``defined`` is False."""

    C: np.ndarray
    defined: np.ndarray
    counts: np.ndarray

    def offdiag_abs(self):
        iu = np.triu_indices(self.C.shape[0], k=1)
        ok = self.defined[iu]
        return np.abs(self.C[iu][ok])


@dataclass
class ScoredCandidate:
    members: tuple[int, ...]
    source: Source
    psi: float = math.nan
    phi: float = math.nan
    margin: float = -math.inf
    accepted: bool = False
    weight: float = 0.0

    @property
    def scale(self):
        return len(self.members)


@dataclass
class DiscoveryResult:
    hypergraph: Hypergraph
    X_pw: np.ndarray
    R_pw: np.ndarray
    correlation: ResidualCorrelation
    candidates: list[ScoredCandidate]
    diagnostics: dict = field(default_factory=dict)


def prefit(Y_obs, mask, propensity, A, cfg=None, temporal=None):
    """Pairwise-only Tikhonov fit and its residual on observed cells."""
    cfg = cfg or TikhonovConfig()
    bits = as_mask_bits(mask)
    sol = solve_tikhonov(Y_obs, bits, propensity, SpatialOperator(A), temporal, cfg)
    R = np.where(bits, np.where(bits, Y_obs, 0.0) - sol.X, 0.0)
    return sol, R


def residual_correlation(R, mask, denominator="per_sensor"):
    """Pairwise residual correlation with joint-time numerator and per-sensor denominators.

    ``C_ij = sum_{t in O_ij} R_it R_jt / sqrt(sum_{t in O_i} R_it^2 * sum_{t in O_j} R_jt^2)``.
    Entries with fewer than two joint observations, or a zero-energy row, are
    undefined. The diagonal is set to 1.

    Under MAR the per-sensor form shrinks toward ``pi * corr``. Passing
    ``denominator="joint"`` restricts both energies to ``O_ij`` as well, which
    gives the ordinary uncentred correlation over the joint set.
    """
    bits = as_mask_bits(mask)
    Rm = np.where(bits, R, 0.0)
    Mf = bits.astype(float)
    counts = (Mf @ Mf.T).astype(np.int64)
    num = Rm @ Rm.T
    if denominator == "joint":
        sq = Rm * Rm
        e_i = sq @ Mf.T                  # e_i[i, j] = sum over O_ij of R_it^2
        e_j = e_i.T
    elif denominator == "per_sensor":
        energy = np.sum(Rm * Rm, axis=1)
        e_i, e_j = energy[:, None], energy[None, :]
    else:
        raise ValueError(f"unknown correlation denominator {denominator!r}")
    denom = np.sqrt(e_i * e_j)
    defined = (counts >= 2) & (e_i > EPS) & (e_j > EPS)
    with np.errstate(invalid="ignore", divide="ignore"):
        C = np.where(defined, num / np.where(defined, denom, 1.0), np.nan)
    np.clip(C, -1.0, 1.0, out=C)
    np.fill_diagonal(C, 1.0)
    np.fill_diagonal(defined, True)
    return ResidualCorrelation(C, defined, counts)


def calibrate_tau_c(corr, tau_floor=0.30, q=0.95):
    """``max(tau_floor, q-quantile of |C_ij|)`` over defined off-diagonal pairs."""
    vals = corr.offdiag_abs() if isinstance(corr, ResidualCorrelation) else np.asarray(corr)
    if vals.size == 0:
        raise CalibrationError("no defined off-diagonal residual correlations")
    return max(tau_floor, float(np.quantile(vals, q, method="linear")))


def _top_k(values, k):
    """Indices of the ``k`` largest values; ties go to the lower index."""
    order = np.lexsort((np.arange(values.size), -values))
    return order[:k]


def candidates_topology(A, scales):
    """``{i} + top-(s-1) adjacency neighbours`` for every anchor and scale.

    Anchors with fewer than ``s - 1`` positive-weight neighbours emit nothing
    at that scale. Output is ordered by (scale, anchor) with set duplicates dropped.
    """
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    out, seen = [], set()
    for s in sorted(scales):
        for i in range(n):
            row = A[i].copy()
            row[i] = -np.inf
            if np.count_nonzero(row > 0) < s - 1:
                continue
            members = tuple(sorted([i, *map(int, _top_k(row, s - 1))]))
            if members not in seen:
                seen.add(members)
                out.append(members)
    return out


def candidates_residual(corr, tau_c, scales):
    """``{i} + top-(s-1) |C_i.|`` for anchors with at least ``s - 1`` neighbours above ``tau_c``."""
    C = corr.C if isinstance(corr, ResidualCorrelation) else np.asarray(corr)
    defined = corr.defined if isinstance(corr, ResidualCorrelation) else np.isfinite(C)
    n = C.shape[0]
    absC = np.where(defined, np.abs(np.nan_to_num(C)), -np.inf)
    np.fill_diagonal(absC, -np.inf)
    out, seen = [], set()
    for s in sorted(scales):
        for i in range(n):
            row = absC[i]
            if np.count_nonzero(row > tau_c) < s - 1:
                continue
            members = tuple(sorted([i, *map(int, _top_k(row, s - 1))]))
            if members not in seen:
                seen.add(members)
                out.append(members)
    return out


def score_psi(members, corr):
    """Mean ``|C_ij|`` over pairs of the edge, NaN if any pair is undefined."""
    C = corr.C if isinstance(corr, ResidualCorrelation) else np.asarray(corr)
    pairs = list(combinations(members, 2))
    vals = [C[i, j] for i, j in pairs]
    if isinstance(corr, ResidualCorrelation):
        if not all(corr.defined[i, j] for i, j in pairs):
            return math.nan
    if any(not np.isfinite(v) for v in vals):
        return math.nan
    return float(np.mean(np.abs(vals)))


def score_phi(members, R, mask):
    """Leave-one-out improvement from predicting each member by its co-members.

    On the times where every member is observed, each member's residual is
    regressed (one slope, both sides centred) on the mean residual of the
    other members. Prediction errors are leave-one-time-out (PRESS), so pure
    noise scores slightly below zero. The score is the member-averaged
    relative improvement over the member's own variance, clipped to [-1, 1];
    NaN when fewer than ``s + 2`` joint times exist or a predictor is constant.
    """
    bits = as_mask_bits(mask)
    members = list(members)
    s = len(members)
    joint = bits[members].all(axis=0)
    n = int(joint.sum())
    if n < s + 2:
        return math.nan
    block = np.asarray(R, dtype=float)[members][:, joint]
    total = block.sum(axis=0)
    gains = []
    for a in range(s):
        y = block[a] - block[a].mean()
        x = (total - block[a]) / (s - 1)
        x = x - x.mean()
        sxx = float(x @ x)
        if sxx <= EPS:
            return math.nan
        beta = float(x @ y) / sxx
        lev = x * x / sxx
        press = (y - beta * x) / np.maximum(1.0 - lev, EPS)
        mse0 = float(y @ y) / n
        mse_loo = float(press @ press) / n
        gains.append((mse0 - mse_loo) / max(mse0, EPS))
    return float(np.clip(np.mean(gains), -1.0, 1.0))


def per_scale_penalty(s, sigma2, n_sensors, n_steps, pi, s_max, c_rho=1.0):
    """``(s - 2) c_rho sigma2 log(N S_max T) / (pi^2 T)``."""
    return (s - 2) * c_rho * sigma2 * math.log(n_sensors * s_max * n_steps) / (pi * pi * n_steps)


def thresholds(s, tau_c, sigma2, n_sensors, n_steps, pi, cfg):
    rho = per_scale_penalty(s, sigma2, n_sensors, n_steps, pi, cfg.s_max, cfg.c_rho)
    tau_psi = tau_c + rho
    tau_phi = cfg.c_sigma * sigma2 * math.sqrt(math.log(n_sensors) / (pi * n_steps)) + rho
    return tau_psi, tau_phi, rho


def shrinkage_scales(s, sigma2, n_sensors, n_steps, pi, n_candidates):
    """Standardisation scales for the two score margins, from their concentration rates."""
    c = max(n_candidates, 2)
    d_psi = math.sqrt(math.comb(s, 2) * math.log(n_sensors ** 2 * c) / (pi * pi * n_steps))
    d_phi = sigma2 * math.sqrt(math.log(c) / (pi ** s * n_steps))
    return d_psi, d_phi


def _sigmoid(x):
    return 1.0 / (1.0 + math.exp(-x)) if x >= 0 else math.exp(x) / (1.0 + math.exp(x))


def select_hyperedges(candidates, tau_c, sigma2, n_sensors, n_steps, pi, cfg):
    """Accept candidates whose Psi or Phi score strictly exceeds its per-scale threshold.

    Mutates ``candidates`` in place (margin, accepted, weight) and returns the
    hypergraph of the ``j_max`` largest-margin accepted edges per scale, plus
    the per-scale thresholds used.
    """
    per_scale = {}
    n_cand = len(candidates)
    for s in cfg.scales:
        tau_psi, tau_phi, rho = thresholds(s, tau_c, sigma2, n_sensors, n_steps, pi, cfg)
        d_psi, d_phi = shrinkage_scales(s, sigma2, n_sensors, n_steps, pi, n_cand)
        per_scale[s] = {"tau_psi": tau_psi, "tau_phi": tau_phi, "penalty": rho,
                        "scale_psi": d_psi, "scale_phi": d_phi}
    kept = {}
    for cand in candidates:
        th = per_scale.get(cand.scale)
        if th is None:
            continue
        margins = []
        if np.isfinite(cand.psi):
            margins.append((cand.psi - th["tau_psi"]) / max(th["scale_psi"], EPS))
        if np.isfinite(cand.phi):
            margins.append((cand.phi - th["tau_phi"]) / max(th["scale_phi"], EPS))
        cand.margin = max(margins) if margins else -math.inf
        cand.accepted = (np.isfinite(cand.psi) and cand.psi > th["tau_psi"]) or \
                        (np.isfinite(cand.phi) and cand.phi > th["tau_phi"])
        cand.weight = 0.0
        if cand.accepted:
            kept.setdefault(cand.scale, []).append(cand)
    edges = {}
    for s, group in kept.items():
        group.sort(key=lambda c: (-c.margin, c.members))
        for c in group[cfg.j_max:]:
            c.accepted = False
        chosen = group[:cfg.j_max]
        for c in chosen:
            c.weight = _sigmoid(c.margin)
        edges[s] = tuple(Hyperedge(c.members, c.weight) for c in chosen)
    return Hypergraph(n_sensors, edges, cfg.j_max), per_scale


def discover(Y_obs, mask, propensity, A, tikhonov=None, cfg=None, temporal=None):
    """Run the full discovery stage and return the hypergraph with diagnostics."""
    tikhonov = tikhonov or TikhonovConfig()
    cfg = cfg or DiscoveryConfig()
    bits = as_mask_bits(mask)
    n, T = bits.shape
    sol, R = prefit(Y_obs, bits, propensity, A, tikhonov, temporal)
    corr = residual_correlation(R, bits, cfg.denominator)
    observed = R[bits]
    sigma2 = float(np.var(observed)) if observed.size else 0.0
    pi = float(propensity.rate)

    diagnostics = {"prefit": sol.diagnostics(), "sigma2": sigma2, "pi": pi,
                   "n_defined_pairs": int(corr.offdiag_abs().size)}
    try:
        tau_c = calibrate_tau_c(corr, cfg.tau_floor, cfg.quantile)
        calibrated = True
    except CalibrationError:
        tau_c = cfg.tau_floor
        calibrated = False
    diagnostics["tau_c"] = tau_c
    diagnostics["calibration_failed"] = not calibrated

    top = candidates_topology(A, cfg.scales) if cfg.use_topology else []
    res = candidates_residual(corr, tau_c, cfg.scales) if (cfg.use_residual and calibrated) else []
    res_set = set(res)
    top_set = set(top)
    merged = sorted(top_set | res_set, key=lambda m: (len(m), m))
    candidates = []
    for members in merged:
        src = Source.BOTH if (members in top_set and members in res_set) else \
            (Source.TOPOLOGY if members in top_set else Source.RESIDUAL)
        candidates.append(ScoredCandidate(members, src,
                                          psi=score_psi(members, corr),
                                          phi=score_phi(members, R, bits)))

    H, per_scale = select_hyperedges(candidates, tau_c, sigma2, n, T, pi, cfg)

    for s in cfg.scales:
        cs = [c for c in candidates if c.scale == s]
        acc = [c for c in cs if c.accepted]
        per_scale[s].update({
            "candidates": len(cs),
            "accepted": len(acc),
            "source_counts": {src.value: sum(c.source is src for c in cs) for src in Source},
            "accepted_source_counts": {src.value: sum(c.source is src for c in acc)
                                       for src in Source},
            "psi_undefined": sum(not np.isfinite(c.psi) for c in cs),
            "phi_undefined": sum(not np.isfinite(c.phi) for c in cs),
        })
    diagnostics["per_scale"] = {str(s): v for s, v in per_scale.items()}
    diagnostics["n_edges"] = len(H)
    return DiscoveryResult(H, sol.X, R, corr, candidates, diagnostics)


def fit_linear(Y_obs, mask, propensity, A, hypergraph, cfg=None, temporal=None, x0=None):
    """Tikhonov fit with spatial operator ``L_G + lambda_H L_H(hypergraph)``."""
    cfg = cfg or TikhonovConfig()
    spatial = SpatialOperator(A, hypergraph, cfg.lambda_h)
    return solve_tikhonov(Y_obs, mask, propensity, spatial, temporal, cfg, x0=x0)
