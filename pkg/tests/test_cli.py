import json
import subprocess
import sys

import numpy as np
import pytest

from mshl.cli import main
from mshl.data import load_matrix_csv
from mshl.discovery import fit_linear
from mshl.operators import Hypergraph
from mshl.solver import estimate_propensity


def write_config(path, cfg):
    path.write_text(json.dumps(cfg))
    return str(path)


SMALL = {"synthetic": {"n_sensors": 24, "n_steps": 96,
                       "planted": [{"members": [1, 6, 12]}, {"members": [3, 9, 15, 20]}]},
         "missingness": {"regime": "cell", "p": 0.3},
         "hcrn": {"epochs": 2}}


@pytest.fixture
def synth_dir(tmp_path):
    cfg = write_config(tmp_path / "cfg.json", SMALL)
    out = tmp_path / "syn"
    assert main(["synth", "--config", cfg, "--seed", "3", "--out-dir", str(out)]) == 0
    return tmp_path, out, cfg


def test_synth_outputs(synth_dir):
    _, out, _ = synth_dir
    for name in ("truth.csv", "observed.csv", "adjacency.csv", "distances.csv",
                 "hypergraph.json", "mask.csv", "config.json",
                 "synthetic_diagnostics.json"):
        assert (out / name).exists(), name
    H = Hypergraph.from_json((out / "hypergraph.json").read_text(), n_sensors=24)
    assert H.member_sets() == {(1, 6, 12), (3, 9, 15, 20)}
    assert json.loads((out / "config.json").read_text())["seed"] == 3


def test_synth_no_planted_gives_empty_hypergraph(tmp_path):
    cfg = write_config(tmp_path / "c.json", {"synthetic": {"n_sensors": 8, "n_steps": 20}})
    assert main(["synth", "--config", cfg, "--out-dir", str(tmp_path)]) == 0
    H = Hypergraph.from_json((tmp_path / "hypergraph.json").read_text(), n_sensors=8)
    assert len(H) == 0


def test_impute_writes_four_files(synth_dir):
    tmp, syn, cfg = synth_dir
    out = tmp / "imp"
    rc = main(["impute", "--config", cfg, "--data", str(syn / "observed.csv"),
               "--mask", str(syn / "mask.csv"), "--adjacency", str(syn / "adjacency.csv"),
               "--out-dir", str(out)])
    assert rc == 0
    for name in ("imputed.csv", "hypergraph.json", "model.json", "diagnostics.json"):
        assert (out / name).exists()
    X = load_matrix_csv(out / "imputed.csv")
    assert X.shape == (24, 96) and np.all(np.isfinite(X))
    diag = json.loads((out / "diagnostics.json").read_text())
    assert diag["config"]["hcrn"]["epochs"] == 2 and "mask_hash" in diag


def test_impute_linear_only_equals_linear_fit(synth_dir):
    tmp, syn, cfg = synth_dir
    out = tmp / "lin"
    rc = main(["impute", "--config", cfg, "--data", str(syn / "observed.csv"),
               "--mask", str(syn / "mask.csv"), "--adjacency", str(syn / "adjacency.csv"),
               "--linear-only", "--out-dir", str(out)])
    assert rc == 0
    X = load_matrix_csv(out / "imputed.csv")
    Y = load_matrix_csv(syn / "observed.csv")
    A = load_matrix_csv(syn / "adjacency.csv")
    bits = load_matrix_csv(syn / "mask.csv").astype(bool)
    H = Hypergraph.from_json((out / "hypergraph.json").read_text(), n_sensors=24)
    ref = fit_linear(np.where(bits, Y, 0), bits, estimate_propensity(bits), A, H).X
    np.testing.assert_array_equal(X, ref)
    assert json.loads((out / "model.json").read_text())["deferred"]


def test_discover_outputs(synth_dir):
    tmp, syn, cfg = synth_dir
    out = tmp / "disc"
    rc = main(["discover", "--config", cfg, "--data", str(syn / "observed.csv"),
               "--mask", str(syn / "mask.csv"), "--distances", str(syn / "distances.csv"),
               "--out-dir", str(out)])
    assert rc == 0
    diag = json.loads((out / "discovery_diagnostics.json").read_text())
    assert set(diag["per_scale"]) == {"2", "3", "4", "5"}
    Hypergraph.from_json((out / "hypergraph.json").read_text(), n_sensors=24)


def test_benchmark_single_cell(synth_dir):
    tmp, syn, _ = synth_dir
    cfg = write_config(tmp / "b.json", {"grid": {"regimes": ["block"], "rates": [0.2],
                                                 "window_len": 96},
                                        "hcrn": {"epochs": 2}})
    outs = []
    for k in range(2):
        out = tmp / f"bench{k}"
        rc = main(["benchmark", "--config", cfg, "--data", str(syn / "observed.csv"),
                   "--truth", str(syn / "truth.csv"), "--distances", str(syn / "distances.csv"),
                   "--adjacency", str(syn / "adjacency.csv"), "--out-dir", str(out)])
        assert rc == 0
        outs.append((out / "report.json").read_bytes())
    rep = json.loads(outs[0])
    assert len(rep["records"]) == 3
    assert len({r["mask_hash"] for r in rep["records"]}) == 1
    assert outs[0] == outs[1]


def test_verify_scale_invariance(tmp_path, capsys):
    assert main(["verify", "--suite", "scale_invariance", "--out-dir", str(tmp_path)]) == 0
    res = json.loads((tmp_path / "verify.json").read_text())["results"]
    assert len(res) == 1 and res[0]["check"] == "scale_invariance" and res[0]["passed"]
    assert (tmp_path / "verify_scale_invariance.csv").exists()
    assert "PASS scale_invariance" in capsys.readouterr().out


def test_bad_config_key_exits_one_and_names_key(tmp_path, capsys):
    cfg = write_config(tmp_path / "bad.json", {"tikhonov": {"lambda_x": 1}})
    assert main(["synth", "--config", cfg, "--out-dir", str(tmp_path)]) == 1
    assert "tikhonov.lambda_x" in capsys.readouterr().err
    cfg = write_config(tmp_path / "bad2.json", {"colour": 1})
    assert main(["synth", "--config", cfg, "--out-dir", str(tmp_path)]) == 1
    assert "colour" in capsys.readouterr().err


def test_unknown_check_and_missing_data_exit_one(tmp_path):
    assert main(["verify", "--suite", "nope", "--out-dir", str(tmp_path)]) == 1
    assert main(["impute", "--out-dir", str(tmp_path)]) == 1


def test_malformed_csv_exits_one(tmp_path, capsys):
    (tmp_path / "y.csv").write_text("1,2\n3,x\n")
    (tmp_path / "a.csv").write_text("0,1\n1,0\n")
    rc = main(["impute", "--data", str(tmp_path / "y.csv"), "--adjacency",
               str(tmp_path / "a.csv"), "--out-dir", str(tmp_path)])
    assert rc == 1 and "row 1" in capsys.readouterr().err


def test_module_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "mshl", "verify", "--suite", "scale_invariance",
                        "--out-dir", str(tmp_path)], capture_output=True, text=True)
    assert r.returncode == 0, r.stderr
