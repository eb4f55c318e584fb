import numpy as np
import pytest

from mshl.baselines import knn_spatial, sensor_mean, tikh_graph
from mshl.data import MissingnessSpec, generate_mask, make_rng
from mshl.discovery import fit_linear, prefit
from mshl.operators import Hypergraph
from mshl.pipeline import impute
from mshl.refinement import HCRNConfig
from mshl.solver import TikhonovConfig, estimate_propensity
from mshl.synthetic import ring_distances
from mshl.verify import planted_instance


def test_sensor_mean_examples():
    Y = np.array([[2.0, 0.0, 4.0], [9.0, 9.0, 9.0], [0.0, 0.0, 0.0]])
    bits = np.array([[1, 0, 1], [1, 1, 1], [0, 0, 0]], bool)
    out = sensor_mean(Y, bits)
    assert out[0, 1] == 3.0
    assert np.all(out[2] == (2 + 4 + 27) / 5)
    full = np.ones((2, 2), bool)
    np.testing.assert_array_equal(sensor_mean(Y[:2, :2], full), Y[:2, :2])


def test_knn_examples():
    D = np.array([[0, 1, 1, 5], [1, 0, 2, 5], [1, 2, 0, 5], [5, 5, 5, 0.0]])
    Y = np.array([[0.0, 0.0], [1.0, 7.0], [3.0, 0.0], [4.0, 0.0]])
    bits = np.array([[0, 0], [1, 1], [1, 0], [0, 0]], bool)
    out = knn_spatial(Y, bits, D, k=2)
    assert out[0, 0] == pytest.approx(2.0)      # equidistant 1 and 3
    assert out[0, 1] == pytest.approx(7.0)      # single observed neighbour
    bits2 = np.array([[0, 1], [0, 1], [0, 1], [0, 1]], bool)
    Y2 = np.array([[0, 1.0], [0, 2.0], [0, 3.0], [0, 4.0]])
    out2 = knn_spatial(Y2, bits2, D)
    np.testing.assert_allclose(out2[:, 0], [1.0, 2.0, 3.0, 4.0])   # sensor-mean fallback


def test_knn_uniform_distances_gives_cross_sensor_mean():
    rng = make_rng(0)
    n, T = 8, 30
    Y = rng.normal(size=(n, T))
    bits = rng.random((n, T)) < 0.6
    D = np.ones((n, n)) - np.eye(n)
    out = knn_spatial(Y, bits, D, k=n - 1)
    for i, t in zip(*np.nonzero(~bits)):
        obs = bits[:, t]
        if obs.any():
            assert out[i, t] == pytest.approx(Y[obs, t].mean(), rel=1e-12)


def test_tikh_graph_equals_prefit_and_empty_hypergraph_fit():
    data, Y = planted_instance(0, (3,), T=200)
    m = generate_mask(60, 200, MissingnessSpec("cell", 0.3, seed=0))
    prop = estimate_propensity(m)
    X = tikh_graph(Y, m, prop, data.adjacency)
    np.testing.assert_array_equal(X, prefit(Y, m, prop, data.adjacency)[0].X)
    np.testing.assert_array_equal(X, fit_linear(Y, m, prop, data.adjacency, Hypergraph(60)).X)


def test_tikh_graph_equals_mshl_under_total_kriging_without_hyperedge_term():
    data, Y = planted_instance(1, (3, 4), aligned=True, T=200)
    m = generate_mask(60, 200, MissingnessSpec("kriging", 0.4, seed=1))
    cfg = TikhonovConfig(lambda_h=0.0)
    res = impute(np.where(m.bits, Y, np.nan), m, data.adjacency, tikhonov=cfg,
                 hcrn=HCRNConfig(epochs=2), regime="kriging")
    ref = tikh_graph(Y, m, estimate_propensity(m, "kriging"), data.adjacency, cfg)
    np.testing.assert_array_equal(res.X_full, ref)


@pytest.mark.parametrize("regime", ["cell", "block", "kriging"])
def test_baselines_keep_observed_and_are_finite(regime):
    data, Y = planted_instance(2, (3,), T=120)
    m = generate_mask(60, 120, MissingnessSpec(regime, 0.4, seed=2))
    Yo = np.where(m.bits, Y, np.nan)
    outs = [sensor_mean(Yo, m), knn_spatial(Yo, m, ring_distances(60))]
    for X in outs:
        assert np.all(np.isfinite(X))
        np.testing.assert_array_equal(X[m.bits], Y[m.bits])
