"""Command-line entry point: synth, discover, impute, benchmark, verify.

Exit status is 0 on success, 1 on invalid input or configuration, 2 on a
numerical failure, and 3 when ``verify`` ran but a check did not pass.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from .data import (DEFAULT_BLOCK_LEN, DEFAULT_WINDOW_LEN, DataError, Layout, Mask,
                   MissingnessSpec, Regime, build_adjacency, check_adjacency, generate_mask,
                   load_matrix_csv, plan_windows, save_matrix_csv)
from .discovery import DiscoveryConfig, discover
from .evaluation import DEFAULT_METHODS, _jsonable, run_grid
from .operators import Hypergraph
from .pipeline import impute
from .refinement import HCRNConfig
from .solver import NumericalBreakdown, TikhonovConfig, estimate_propensity
from .synthetic import SyntheticSpec, add_noise, generate_planted
from .verify import ALL_CHECKS, THEOREM_CHECKS, verify_theorems

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL, EXIT_CHECK_FAILED = 0, 1, 2, 3


class ConfigError(ValueError):
    pass


GRID_DEFAULTS = {"regimes": ["cell", "block", "kriging"], "rates": [0.2, 0.5, 0.8],
                 "methods": list(DEFAULT_METHODS), "window_len": DEFAULT_WINDOW_LEN,
                 "dataset": "data"}
IO_KEYS = {"data", "distances", "adjacency", "mask", "truth", "hypergraph", "layout"}
SECTIONS = {"tikhonov", "discovery", "hcrn", "missingness", "grid", "synthetic", "io", "seed",
            "jobs", "verify"}


def _dataclass_from(cls, section, values):
    names = {f.name for f in dataclasses.fields(cls)}
    for key in values:
        if key not in names:
            raise ConfigError(f"unknown config key '{section}.{key}'")
    try:
        return cls(**{k: tuple(v) if isinstance(v, list) else v for k, v in values.items()})
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid '{section}' section: {exc}") from exc


def _check_keys(section, values, allowed):
    if not isinstance(values, dict):
        raise ConfigError(f"config section '{section}' must be an object")
    for key in values:
        if key not in allowed:
            raise ConfigError(f"unknown config key '{section}.{key}'")


def load_config(path):
    if path is None:
        return {}
    try:
        cfg = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    for key in cfg:
        if key not in SECTIONS:
            raise ConfigError(f"unknown config key '{key}'")
    return cfg


class RunConfig:
    """Resolved configuration: flags > config file > defaults."""

    def __init__(self, raw, args):
        self.raw = raw
        seed = args.seed if args.seed is not None else raw.get("seed", 0)
        self.seed = int(seed)
        self.jobs = int(args.jobs if args.jobs is not None else raw.get("jobs", 1))
        self.tikhonov = _dataclass_from(TikhonovConfig, "tikhonov", raw.get("tikhonov", {}))
        self.discovery = _dataclass_from(DiscoveryConfig, "discovery", raw.get("discovery", {}))
        hcrn = dict(raw.get("hcrn", {}))
        hcrn.setdefault("seed", self.seed)
        self.hcrn = _dataclass_from(HCRNConfig, "hcrn", hcrn)

        miss = dict(raw.get("missingness", {}))
        _check_keys("missingness", miss, {"regime", "p", "block_len", "seed"})
        self.missingness = miss
        grid = dict(raw.get("grid", {}))
        _check_keys("grid", grid, set(GRID_DEFAULTS))
        self.grid = {**GRID_DEFAULTS, **grid}
        io = dict(raw.get("io", {}))
        _check_keys("io", io, IO_KEYS)
        self.io = io
        verify = dict(raw.get("verify", {}))
        _check_keys("verify", verify, {"suite", "options"})
        self.verify = verify
        syn = dict(raw.get("synthetic", {}))
        syn.setdefault("seed", self.seed)
        if args.seed is not None:
            syn["seed"] = self.seed
        try:
            self.synthetic = SyntheticSpec.from_dict(syn)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid 'synthetic' section: {exc}") from exc

    def missingness_spec(self, regime=None, p=None):
        m = self.missingness
        regime = regime or m.get("regime")
        p = p if p is not None else m.get("p")
        if regime is None or p is None:
            return None
        try:
            return MissingnessSpec(regime, float(p), int(m.get("block_len", DEFAULT_BLOCK_LEN)),
                                   int(m.get("seed", self.seed)))
        except ValueError as exc:
            raise ConfigError(f"invalid 'missingness' section: {exc}") from exc

    def echo(self):
        return {"seed": self.seed, "jobs": self.jobs, "tikhonov": self.tikhonov.to_dict(),
                "discovery": self.discovery.to_dict(), "hcrn": self.hcrn.to_dict(),
                "missingness": self.missingness, "grid": self.grid, "io": self.io,
                "synthetic": self.synthetic.to_dict(), "verify": self.verify}


def _write_json(path, obj):
    path.write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")


def _path(args, cfg, key):
    value = getattr(args, key, None) or cfg.io.get(key)
    return Path(value) if value else None


def _layout(args, cfg):
    return Layout(getattr(args, "layout", None) or cfg.io.get("layout", "rows"))


def _load_graph(args, cfg, n):
    adj, dist = _path(args, cfg, "adjacency"), _path(args, cfg, "distances")
    if adj is not None:
        A = check_adjacency(load_matrix_csv(adj))
    elif dist is not None:
        A = build_adjacency(load_matrix_csv(dist))
    else:
        raise ConfigError("an adjacency or distance matrix is required")
    if A.shape[0] != n:
        raise DataError(f"graph has {A.shape[0]} sensors but data has {n}")
    return A


def _load_observations(args, cfg, regime=None):
    """Data matrix and mask.

    An explicit mask file wins; otherwise a mask is drawn from the
    ``missingness`` section when one is configured. NaN cells are never observed.
    """
    data_path = _path(args, cfg, "data")
    if data_path is None:
        raise ConfigError("a data matrix is required (--data)")
    Y = load_matrix_csv(data_path, _layout(args, cfg))
    bits = np.isfinite(Y)
    mask_path = _path(args, cfg, "mask")
    if mask_path is not None:
        M = load_matrix_csv(mask_path, _layout(args, cfg))
        if M.shape != Y.shape:
            raise DataError(f"mask shape {M.shape} differs from data shape {Y.shape}")
        if not np.all(np.isin(M, (0.0, 1.0))):
            raise DataError("mask entries must be 0 or 1")
        bits &= M.astype(bool)
    spec = cfg.missingness_spec()
    if spec is not None:
        regime = spec.regime
        if mask_path is None:
            bits &= generate_mask(*Y.shape, spec).bits
    return Y, Mask(bits, spec), regime


def cmd_synth(args, cfg, out):
    spec = cfg.synthetic
    data = generate_planted(spec)
    Y = add_noise(data.X, spec.noise, spec.seed)
    save_matrix_csv(out / "truth.csv", data.X)
    save_matrix_csv(out / "observed.csv", Y)
    save_matrix_csv(out / "adjacency.csv", data.adjacency)
    save_matrix_csv(out / "distances.csv", data.distances)
    (out / "hypergraph.json").write_text(data.hypergraph.to_json() + "\n")
    _write_json(out / "synthetic_diagnostics.json", data.diagnostics)
    mspec = cfg.missingness_spec()
    if mspec is not None:
        save_matrix_csv(out / "mask.csv", generate_mask(*Y.shape, mspec).bits.astype(int),
                        fmt="%d")
    _write_json(out / "config.json", cfg.echo())
    return EXIT_OK


def cmd_discover(args, cfg, out):
    Y, mask, regime = _load_observations(args, cfg)
    A = _load_graph(args, cfg, Y.shape[0])
    prop = estimate_propensity(mask.bits, regime, cfg.tikhonov.pi_floor)
    res = discover(np.where(mask.bits, Y, 0.0), mask.bits, prop, A, cfg.tikhonov, cfg.discovery)
    (out / "hypergraph.json").write_text(res.hypergraph.to_json() + "\n")
    _write_json(out / "discovery_diagnostics.json",
                {"config": cfg.echo(), "mask_hash": mask.digest(), **res.diagnostics})
    return EXIT_OK


def cmd_impute(args, cfg, out):
    Y, mask, regime = _load_observations(args, cfg)
    A = _load_graph(args, cfg, Y.shape[0])
    H = None
    hpath = _path(args, cfg, "hypergraph")
    if hpath is not None:
        H = Hypergraph.from_json(hpath.read_text(), n_sensors=Y.shape[0])
    res = impute(np.where(mask.bits, Y, 0.0), mask.bits, A, cfg.tikhonov, cfg.discovery,
                 cfg.hcrn, regime=regime, linear_only=args.linear_only, hypergraph=H)
    save_matrix_csv(out / "imputed.csv", res.X_full, fmt="%.17g")
    (out / "hypergraph.json").write_text(res.hypergraph.to_json() + "\n")
    (out / "model.json").write_text(res.model.to_json() + "\n")
    _write_json(out / "diagnostics.json", {"config": cfg.echo(), "mask_hash": mask.digest(),
                                           "linear_only": bool(args.linear_only),
                                           **res.diagnostics})
    return EXIT_OK


def cmd_benchmark(args, cfg, out):
    data_path = _path(args, cfg, "data")
    if data_path is None:
        raise ConfigError("a data matrix is required (--data)")
    Y = load_matrix_csv(data_path, _layout(args, cfg))
    dist = _path(args, cfg, "distances")
    if dist is None:
        raise ConfigError("benchmark needs a distance matrix (--distances)")
    D = load_matrix_csv(dist)
    adj = _path(args, cfg, "adjacency")
    A = check_adjacency(load_matrix_csv(adj)) if adj is not None else None
    truth_path = _path(args, cfg, "truth")
    truth = load_matrix_csv(truth_path, _layout(args, cfg)) if truth_path is not None else None
    g = cfg.grid
    window = min(int(g["window_len"]), Y.shape[1])
    plan = plan_windows(Y.shape[1], window, cfg.seed)
    try:
        regimes = [Regime(r) for r in g["regimes"]]
    except ValueError as exc:
        raise ConfigError(f"invalid 'grid.regimes': {exc}") from exc
    report = run_grid(Y, D, regimes, [float(p) for p in g["rates"]], plan,
                      methods=tuple(g["methods"]), truth=truth, adjacency=A,
                      tikhonov=cfg.tikhonov, discovery=cfg.discovery, hcrn=cfg.hcrn,
                      dataset=g["dataset"],
                      block_len=int(cfg.missingness.get("block_len", DEFAULT_BLOCK_LEN)),
                      jobs=cfg.jobs)
    report.config["run"] = cfg.echo()
    (out / "report.json").write_text(report.to_json(include_runtime=args.runtime) + "\n")
    (out / "report.csv").write_text(report.to_csv(include_runtime=args.runtime))
    return EXIT_OK


def cmd_verify(args, cfg, out):
    suite = args.suite or cfg.verify.get("suite") or list(THEOREM_CHECKS)
    if isinstance(suite, str):
        suite = [suite]
    names = [s for item in suite for s in item.split(",") if s]
    for name in names:
        if name not in ALL_CHECKS:
            raise ConfigError(f"unknown check '{name}'; choose from {', '.join(ALL_CHECKS)}")
    results = verify_theorems(names, **cfg.verify.get("options", {}))
    for r in results:
        (out / f"verify_{r.check}.csv").write_text(r.rows_csv())
        print(f"{'PASS' if r.passed else 'FAIL'} {r.check}")
    _write_json(out / "verify.json", {"config": cfg.echo(),
                                      "results": [r.to_dict() for r in results]})
    return EXIT_OK if all(r.passed for r in results) else EXIT_CHECK_FAILED


COMMANDS = {"synth": cmd_synth, "discover": cmd_discover, "impute": cmd_impute,
            "benchmark": cmd_benchmark, "verify": cmd_verify}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--seed", type=int, help="base seed (overrides config)")
    common.add_argument("--jobs", type=int, help="worker threads for grid cells")
    common.add_argument("--out-dir", default=".", help="directory for outputs")

    data = argparse.ArgumentParser(add_help=False)
    data.add_argument("--data", help="observations CSV")
    data.add_argument("--layout", choices=[l.value for l in Layout],
                      help="'rows': one sensor per row; 'columns': one sensor per column")
    data.add_argument("--adjacency", help="adjacency CSV")
    data.add_argument("--distances", help="distance CSV (Gaussian-kernel adjacency)")

    parser = argparse.ArgumentParser(prog="mshl", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("synth", parents=[common], help="generate planted synthetic data")
    p = sub.add_parser("discover", parents=[common, data], help="learn the hypergraph")
    p.add_argument("--mask", help="0/1 CSV, 1 = observed")
    p = sub.add_parser("impute", parents=[common, data], help="impute missing cells")
    p.add_argument("--mask", help="0/1 CSV, 1 = observed")
    p.add_argument("--hypergraph", help="use this hypergraph JSON instead of discovering one")
    p.add_argument("--linear-only", action="store_true", help="skip the residual corrector")
    p = sub.add_parser("benchmark", parents=[common, data], help="run the evaluation grid")
    p.add_argument("--truth", help="ground-truth CSV to score against")
    p.add_argument("--runtime", action="store_true", help="include wall-clock times in reports")
    p = sub.add_parser("verify", parents=[common], help="run theorem checks")
    p.add_argument("--suite", action="append", help="check name(s), comma separated")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = RunConfig(load_config(args.config), args)
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](args, cfg, out)
    except (ConfigError, DataError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (NumericalBreakdown, FloatingPointError, ArithmeticError,
            np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
