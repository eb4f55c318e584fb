"""Two-stage imputer: hypergraph discovery plus linear fit, then the residual corrector."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import as_mask_bits
from .discovery import DiscoveryConfig, discover, fit_linear, prefit
from .operators import Hypergraph, TemporalOperator
from .refinement import CorrectorModel, HCRNConfig, apply_corrector, train_corrector
from .solver import TikhonovConfig, estimate_propensity


@dataclass(eq=False)
class ImputationResult:
    X_full: np.ndarray
    X_lin: np.ndarray
    X_pw: np.ndarray
    hypergraph: Hypergraph
    model: CorrectorModel
    diagnostics: dict = field(default_factory=dict)


def impute(Y_obs, mask, A, tikhonov=None, discovery=None, hcrn=None, regime=None,
           linear_only=False, hypergraph=None):
    """Impute every cell of ``Y_obs`` that ``mask`` marks as missing.

    Parameters
    ----------
    Y_obs : (N, T) array
        Observations; entries under ``mask == False`` are never read.
    mask : Mask or bool array
        True where observed.
    A : (N, N) array
        Sensor adjacency.
    regime : Regime, optional
        Only used to pick the propensity estimator (kriging vs the rest).
    linear_only : bool
        Skip the corrector; ``X_full`` then equals ``X_lin``.
    hypergraph : Hypergraph, optional
        Use this structure instead of running discovery.
    """
    tikhonov = tikhonov or TikhonovConfig()
    discovery = discovery or DiscoveryConfig()
    hcrn = hcrn or HCRNConfig()
    bits = as_mask_bits(mask)
    Y = np.where(bits, np.nan_to_num(np.asarray(Y_obs, dtype=float)), 0.0)
    prop = estimate_propensity(mask if regime is None else bits, regime, tikhonov.pi_floor)
    temporal = TemporalOperator(bits.shape[1])

    if hypergraph is None:
        disc = discover(Y, bits, prop, A, tikhonov, discovery, temporal)
        H, X_pw, diag = disc.hypergraph, disc.X_pw, dict(disc.diagnostics)
    else:
        H = hypergraph
        sol, _ = prefit(Y, bits, prop, A, tikhonov, temporal)
        X_pw, diag = sol.X, {"prefit": sol.diagnostics(), "hypergraph": "supplied"}

    lin = fit_linear(Y, bits, prop, A, H, tikhonov, temporal)
    X_lin = lin.X
    R_lin = np.where(bits, Y - X_lin, 0.0)
    diag["linear"] = lin.diagnostics()
    diag["propensity"] = prop.rate

    if linear_only:
        model = CorrectorModel.zeros(hcrn, deferred=True)
        X_full = X_lin.copy()
        diag["corrector"] = "disabled"
    else:
        model = train_corrector(R_lin, bits, H, hcrn)
        X_full = apply_corrector(X_lin, R_lin, bits, H, model, hcrn)
        diag["corrector"] = {"deferred": model.deferred, **model.history}
    if not np.all(np.isfinite(X_full)):
        raise FloatingPointError("imputation produced non-finite values")
    return ImputationResult(X_full, X_lin, X_pw, H, model, diag)
