"""IPW-Tikhonov estimator solved by conjugate gradient on the implicit operator."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .data import Mask, Regime, as_mask_bits
from .operators import SpatialOperator, TemporalOperator, apply_normal_operator


class NumericalBreakdown(ArithmeticError):
    """Raised when a solver iterate becomes non-finite."""

    def __init__(self, message, iteration):
        super().__init__(f"{message} (iteration {iteration})")
        self.iteration = iteration


class DegeneratePropensity(ValueError):
    pass


@dataclass(frozen=True)
class TikhonovConfig:
    lambda_s: float = 1.0
    lambda_t: float = 20.0
    mu: float = 0.02
    lambda_h: float = 2.0
    pi_floor: float = 0.05
    cg_max_iters: int = 100
    cg_rel_tol: float = 1e-8

    def __post_init__(self):
        for name in ("lambda_s", "lambda_t", "lambda_h"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if self.mu <= 0:
            raise ValueError("mu must be strictly positive")
        if not 0 < self.pi_floor <= 1:
            raise ValueError("pi_floor must lie in (0, 1]")
        if self.cg_max_iters < 1:
            raise ValueError("cg_max_iters must be >= 1")

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True, eq=False)
class PropensityModel:
    """Per-cell observation probabilities plus the scalar rate used by thresholds."""

    pi: np.ndarray
    rate: float


def estimate_propensity(mask, regime=None, pi_floor=0.05):
    """Constant propensity equal to the observed fraction, clipped below at ``pi_floor``.

    Under sensor kriging the rate is computed over rows that carry any
    observation; fully held-out rows receive ``pi_floor``.
    """
    bits = as_mask_bits(mask)
    if regime is None and isinstance(mask, Mask) and mask.spec is not None:
        regime = mask.spec.regime
    if not bits.any():
        raise DegeneratePropensity("mask has no observed cells")
    if regime is not None and Regime(regime) is Regime.KRIGING:
        rows = bits.any(axis=1)
        rate = max(float(bits[rows].mean()), pi_floor)
        pi = np.full(bits.shape, pi_floor)
        pi[rows] = rate
    else:
        rate = max(float(bits.mean()), pi_floor)
        pi = np.full(bits.shape, rate)
    return PropensityModel(pi, rate)


def ipw_weights(mask, propensity):
    pi = propensity.pi if isinstance(propensity, PropensityModel) else np.asarray(propensity)
    return as_mask_bits(mask) / pi


def ipw_loss(X, Y_obs, mask, propensity):
    """``0.5 * sum (M / pi) (X - Y)^2``; values of ``Y_obs`` off the mask are ignored."""
    bits = as_mask_bits(mask)
    W = ipw_weights(bits, propensity)
    diff = np.where(bits, np.asarray(X, dtype=float) - np.where(bits, Y_obs, 0.0), 0.0)
    return 0.5 * float(np.sum(W * diff * diff))


def tikhonov_objective(X, Y_obs, mask, propensity, spatial, cfg):
    """Value of the penalised IPW objective at ``X`` (spatial operator already mixed)."""
    X = np.asarray(X, dtype=float)
    val = ipw_loss(X, Y_obs, mask, propensity)
    val += 0.5 * cfg.lambda_s * float(np.sum(X * spatial.apply(X)))
    val += 0.5 * cfg.lambda_t * float(np.sum(np.diff(X, axis=1) ** 2))
    val += 0.5 * cfg.mu * float(np.sum(X * X))
    return val


@dataclass(frozen=True, eq=False)
class TikhonovSolution:
    X: np.ndarray
    iterations: int
    rel_residual: float
    converged: bool

    def diagnostics(self):
        return {"iterations": self.iterations, "rel_residual": self.rel_residual,
                "converged": self.converged}


def conjugate_gradient(apply, b, max_iters, rel_tol, x0=None, callback=None):
    """Plain CG for an SPD operator given as a callable on arrays shaped like ``b``.

    Stops when ``||b - A x|| <= rel_tol * ||b||`` or after ``max_iters`` steps.
    Returns ``(x, iterations, relative residual)``.
    """
    b_norm = float(np.linalg.norm(b))
    if b_norm == 0.0:
        return np.zeros_like(b), 0, 0.0
    if x0 is None:
        x = np.zeros_like(b)
        r = b.copy()
    else:
        x = np.array(x0, dtype=float)
        r = b - apply(x)
    p = r.copy()
    rr = float(np.sum(r * r))
    it = 0
    rel = np.sqrt(rr) / b_norm
    while rel > rel_tol and it < max_iters:
        Ap = apply(p)
        pAp = float(np.sum(p * Ap))
        if not np.isfinite(pAp) or pAp <= 0.0:
            raise NumericalBreakdown("conjugate gradient lost positive curvature", it)
        alpha = rr / pAp
        x += alpha * p
        r -= alpha * Ap
        rr_new = float(np.sum(r * r))
        if not np.isfinite(rr_new):
            raise NumericalBreakdown("non-finite residual in conjugate gradient", it)
        p = r + (rr_new / rr) * p
        rr = rr_new
        it += 1
        rel = np.sqrt(rr) / b_norm
        if callback is not None:
            callback(x, it)
    return x, it, rel


def solve_tikhonov(Y_obs, mask, propensity, spatial, temporal=None, cfg=None,
                   x0=None, callback=None):
    """Solve ``W*X + lambda_S L_S X + lambda_T X L_T + mu X = W*Y`` by CG.

    ``spatial`` is the full spatial operator (graph part plus any hypergraph
    part already scaled by ``lambda_H``). Values of ``Y_obs`` at unobserved
    cells are never read.
    """
    cfg = cfg or TikhonovConfig()
    bits = as_mask_bits(mask)
    Y = np.where(bits, Y_obs, 0.0)
    if not np.all(np.isfinite(Y)):
        raise ValueError("Y_obs must be finite on observed cells")
    if temporal is None:
        temporal = TemporalOperator(Y.shape[1])
    W = ipw_weights(bits, propensity)
    b = W * Y

    def apply(X):
        return apply_normal_operator(X, W, spatial, temporal, cfg.lambda_s, cfg.lambda_t, cfg.mu)

    X, it, rel = conjugate_gradient(apply, b, cfg.cg_max_iters, cfg.cg_rel_tol,
                                    x0=x0, callback=callback)
    return TikhonovSolution(X, it, float(rel), bool(rel <= cfg.cg_rel_tol))


def graph_only_operator(A):
    return SpatialOperator(A, None, 0.0)
