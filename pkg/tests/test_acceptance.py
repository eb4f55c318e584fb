"""Acceptance criteria, each run at its stated tolerance and runtime limit.

Every criterion records one PASS/FAIL line, printed in the terminal summary
(and directly when pytest runs with ``-s``).
"""

import time

import numpy as np
import pytest

from mshl.discovery import DiscoveryConfig
from mshl.verify import verify_theorems

from conftest import ACCEPTANCE_LINES


def report(number, name, passed, detail):
    line = f"criterion {number}: {'PASS' if passed else 'FAIL'} {name} ({detail})"
    ACCEPTANCE_LINES.append(line)
    print(line)


def run_check(number, name, limit, detail, **options):
    t0 = time.perf_counter()
    (res,) = verify_theorems([name], **{name: options})
    elapsed = time.perf_counter() - t0
    in_time = elapsed < limit
    report(number, name, res.passed and in_time,
           f"{detail(res.measured)}; {elapsed:.1f}s of {limit:g}s")
    return res, elapsed


def test_01_scale_invariance():
    res, t = run_check(1, "scale_invariance", 1.0, lambda m: "one-hot energies " + ", ".join(
        f"s={s}: {m[s]['one_hot_normalized']:.15f}" for s in ("3", "4", "5")))
    for s in (3, 4, 5):
        assert abs(res.measured[str(s)]["one_hot_normalized"] - 2 / s) <= 1e-12
        assert res.measured[str(s)]["constant_normalized"] == 0.0
    assert res.passed and t < 1.0


def test_02_representation_separation():
    res, t = run_check(2, "representation_separation", 1.0,
                       lambda m: f"max errors {m['max_boundary_error']:.1e}, "
                                 f"{m['max_leakage_error']:.1e}")
    assert res.tolerances["relative"] == 1e-10
    assert res.passed and t < 1.0


def test_03_dense_oracle():
    res, t = run_check(3, "dense_oracle", 10.0,
                       lambda m: f"max relative error {m['max_relative_error']:.1e} "
                                 f"over {m['instances']} instances")
    assert res.measured["instances"] == 20 and res.measured["max_relative_error"] <= 1e-8
    assert res.passed and t < 10.0


def test_04_ipw_unbiased():
    res, t = run_check(4, "ipw_unbiased", 30.0,
                       lambda m: f"z = {m['z_score']:.2f} over {m['n_masks']} masks")
    assert res.measured["n_masks"] == 10_000 and abs(res.measured["z_score"]) <= 3.0
    assert res.passed and t < 30.0


def test_05_affine_mse():
    res, t = run_check(5, "affine_mse", 120.0, lambda m: f"R^2 = {m['r2']:.7f}")
    assert res.measured["sigma2"] == [0.25, 0.5, 1.0, 2.0, 4.0]
    assert res.measured["r2"] >= 0.999
    assert res.passed and t < 120.0


def _freq_text(m):
    f = m["frequencies"]
    return "; ".join(f"pi={pi}: residual {v['residual']:.2f}, phi {v['phi']:.2f}"
                     for pi, v in f.items())


def test_06_recovery_separation():
    # expected to fail with the default per-sensor correlation denominator
    res, t = run_check(6, "recovery_separation", 600.0, _freq_text)
    assert res.measured["seeds"] == 20
    assert res.passed and t < 600.0


def test_06b_recovery_separation_joint_denominator_info():
    # not a criterion: the joint-set correlation variant at a shorter window
    t0 = time.perf_counter()
    (res,) = verify_theorems(["recovery_separation"], recovery_separation={
        "T": 288, "discovery": DiscoveryConfig(denominator="joint")})
    elapsed = time.perf_counter() - t0
    line = (f"info 6b: {'separates' if res.passed else 'no separation'} with joint "
            f"denominator at T=288 ({_freq_text(res.measured)}; {elapsed:.1f}s)")
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert res.passed


def test_07_lepski_gap():
    res, t = run_check(7, "lepski_gap", 600.0, lambda m: ", ".join(
        f"s*={s}: gap {v['relative_gap']:.3f}" for s, v in m.items()))
    for v in res.measured.values():
        assert v["relative_gap"] <= 0.25
    assert res.passed and t < 600.0


def test_08_deferment():
    res, t = run_check(8, "deferment", 60.0,
                       lambda m: f"max |X_full - X_lin| on held-out rows = "
                                 f"{m['max_abs_correction']}")
    assert res.measured["max_abs_correction"] == 0.0
    assert res.passed and t < 60.0


def test_09_safety():
    res, t = run_check(9, "safety", 300.0,
                       lambda m: f"MAE ratio {m['ratio']:.3f}, worst seed "
                                 f"{m['max_seed_ratio']:.3f}")
    assert res.measured["ratio"] <= 1.05
    assert res.passed and t < 300.0


def test_10_improvement():
    res, t = run_check(10, "improvement", 900.0,
                       lambda m: f"MSHL/Tikh-graph {m['ratio']:.3f}, ordering "
                                 f"{'holds' if m['ordering_holds'] else 'fails'}")
    assert res.measured["ratio"] <= 0.95
    assert res.passed and t < 900.0
    # ordering MSHL <= Tikh-graph <= sensor_mean on mean MAE
    assert res.measured["ordering_holds"]


def test_11_protocol_fidelity():
    res, t = run_check(11, "protocol_fidelity", 120.0,
                       lambda m: f"byte-identical {m['byte_identical']}, shared hashes "
                                 f"{m['shared_mask_hash']}, {m['records']} records")
    assert res.passed and t < 120.0


def test_12_observation_only():
    res, t = run_check(12, "observation_only", 120.0,
                       lambda m: f"{m['identical_trials']}/{m['trials']} fuzz trials identical")
    assert res.measured["trials"] == 10
    assert res.passed and t < 120.0


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q", "-s"]))
