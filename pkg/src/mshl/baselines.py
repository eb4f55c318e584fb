"""Reference imputers sharing the evaluation protocol."""

from __future__ import annotations

import numpy as np

from .data import as_mask_bits
from .discovery import prefit
from .solver import TikhonovConfig

EPS = 1e-12


def sensor_mean(Y_obs, mask):
    """Each row's observed mean on its missing cells; the global mean for empty rows."""
    bits = as_mask_bits(mask)
    Y = np.where(bits, Y_obs, 0.0)
    if not bits.any():
        raise ValueError("sensor_mean needs at least one observed cell")
    counts = bits.sum(axis=1)
    global_mean = Y.sum() / bits.sum()
    row_mean = np.divide(Y.sum(axis=1), counts, out=np.full(bits.shape[0], global_mean),
                         where=counts > 0)
    return np.where(bits, Y, row_mean[:, None])


def knn_spatial(Y_obs, mask, distances, k=5):
    """Inverse-distance weighted mean of the ``k`` nearest sensors observed at the same time.

    Nearness is raw distance, ties broken by sensor index; weights are
    ``1 / max(d, eps)``. Cells with no observed sensor at their time fall back
    to :func:`sensor_mean`.
    """
    bits = as_mask_bits(mask)
    Y = np.where(bits, Y_obs, 0.0)
    D = np.asarray(distances, dtype=float)
    n, T = bits.shape
    if k < 1:
        raise ValueError("k must be >= 1")
    fallback = sensor_mean(Y, bits)
    out = Y.copy()
    for i in range(n):
        miss_t = np.nonzero(~bits[i])[0]
        if miss_t.size == 0:
            continue
        others = np.array([j for j in range(n) if j != i], dtype=np.intp)
        order = others[np.lexsort((others, D[i, others]))]
        w = 1.0 / np.maximum(D[i, order], EPS)
        obs = bits[order][:, miss_t]                     # (n-1, m)
        # rank of each observed neighbour among the observed ones at that time
        rank = np.cumsum(obs, axis=0)
        use = obs & (rank <= k)
        wsum = (w[:, None] * use).sum(axis=0)
        vsum = (w[:, None] * use * Y[order][:, miss_t]).sum(axis=0)
        vals = np.divide(vsum, wsum, out=fallback[i, miss_t].copy(), where=wsum > 0)
        out[i, miss_t] = vals
    return out


def tikh_graph(Y_obs, mask, propensity, A, cfg=None):
    """Pairwise-only Tikhonov estimate (no hypergraph, no corrector)."""
    sol, _ = prefit(Y_obs, mask, propensity, A, cfg or TikhonovConfig())
    return sol.X
