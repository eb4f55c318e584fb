"""Sensor-by-time matrices, observation masks and window plans.

Matrices are plain ``numpy`` arrays of shape ``(n_sensors, n_steps)``; the
helpers here validate them, ingest them from CSV and draw the three
missingness regimes used throughout the package.
"""

from __future__ import annotations

import csv
import enum
import hashlib
import json
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

DEFAULT_BLOCK_LEN = 6
DEFAULT_WINDOW_LEN = 2016


class DataError(ValueError):
    """Malformed input data (CSV contents, shapes, degenerate distances)."""


class Regime(str, enum.Enum):
    CELL = "cell"
    BLOCK = "block"
    KRIGING = "kriging"


class Layout(str, enum.Enum):
    SENSORS_AS_ROWS = "rows"
    SENSORS_AS_COLUMNS = "columns"


def make_rng(seed, stream=None):
    """Counter-based (Philox) generator for ``seed``, optionally on a named substream.

    Substreams are keyed by a CRC32 of the stream name so that e.g. the mask,
    initialisation and shuffling streams of one run never share state.
    """
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF]
    if stream is not None:
        entropy.append(zlib.crc32(stream.encode()))
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


def derive_seed(base_seed, *keys):
    """Stable 63-bit seed derived from ``base_seed`` and integer ``keys``."""
    ss = np.random.SeedSequence([int(base_seed) & 0xFFFFFFFFFFFFFFFF, *map(int, keys)])
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


def as_matrix(values, name="matrix"):
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise DataError(f"{name} must be a non-empty 2-D array, got shape {arr.shape}")
    return arr


@dataclass(frozen=True)
class MissingnessSpec:
    regime: Regime
    p: float
    block_len: int = DEFAULT_BLOCK_LEN
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "regime", Regime(self.regime))
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"missing rate p must lie in [0, 1], got {self.p}")
        if self.block_len < 1:
            raise ValueError(f"block_len must be >= 1, got {self.block_len}")

    def to_dict(self):
        return {"regime": self.regime.value, "p": float(self.p),
                "block_len": int(self.block_len), "seed": int(self.seed)}

    @classmethod
    def from_dict(cls, d):
        unknown = set(d) - {"regime", "p", "block_len", "seed"}
        if unknown:
            raise ValueError(f"unknown MissingnessSpec keys: {sorted(unknown)}")
        return cls(regime=d["regime"], p=float(d["p"]),
                   block_len=int(d.get("block_len", DEFAULT_BLOCK_LEN)),
                   seed=int(d.get("seed", 0)))

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True, eq=False)
class Mask:
    """Binary observation indicator (True = observed) and the spec that drew it."""

    bits: np.ndarray
    spec: MissingnessSpec | None = None

    def __post_init__(self):
        bits = np.asarray(self.bits)
        if bits.ndim != 2:
            raise DataError(f"mask must be 2-D, got shape {bits.shape}")
        if bits.dtype != bool:
            if not np.isin(bits, (0, 1)).all():
                raise DataError("mask entries must be 0 or 1")
            bits = bits.astype(bool)
        bits = bits.copy()
        bits.setflags(write=False)
        object.__setattr__(self, "bits", bits)

    @property
    def shape(self):
        return self.bits.shape

    @property
    def missing_fraction(self):
        return 1.0 - float(self.bits.mean())

    def __array__(self, dtype=None, copy=None):
        return self.bits if dtype is None else self.bits.astype(dtype)

    def digest(self):
        """SHA-256 of shape and packed bits; identical masks hash identically."""
        h = hashlib.sha256()
        h.update(np.asarray(self.bits.shape, dtype=np.int64).tobytes())
        h.update(np.packbits(self.bits, axis=None).tobytes())
        return h.hexdigest()


def as_mask_bits(mask):
    bits = mask.bits if isinstance(mask, Mask) else np.asarray(mask)
    if bits.dtype != bool:
        bits = bits.astype(bool)
    return bits


def generate_mask(n_sensors, n_steps, spec):
    """Draw an observation mask for one of the three missingness regimes.

    The draw is a pure function of ``(n_sensors, n_steps, spec)``.

    Block-MAR places a block origin at every time ``t`` with probability
    ``q = 1 - (1 - p) ** (1 / B)``. Origins range over ``[-B + 1, T - 1]`` and
    blocks are clipped to the window, so every cell is covered by exactly ``B``
    candidate origins and its marginal missing probability is exactly ``p``.
    """
    if n_sensors < 1 or n_steps < 1:
        raise ValueError("mask dimensions must be positive")
    rng = make_rng(spec.seed, "mask")
    p = spec.p
    if spec.regime is Regime.CELL:
        missing = rng.random((n_sensors, n_steps)) < p
    elif spec.regime is Regime.KRIGING:
        dropped = rng.random(n_sensors) < p
        missing = np.repeat(dropped[:, None], n_steps, axis=1)
    else:
        B = spec.block_len
        q = 1.0 - (1.0 - p) ** (1.0 / B) if p < 1.0 else 1.0
        origins = rng.random((n_sensors, n_steps + B - 1)) < q
        # cell t is missing iff some origin in (t - B, t] fired; origins are offset by B - 1
        csum = np.concatenate([np.zeros((n_sensors, 1), dtype=np.int64),
                               np.cumsum(origins, axis=1)], axis=1)
        missing = (csum[:, B:] - csum[:, :-B]) > 0
    return Mask(~missing, spec)


def _parse_float(cell, row, col):
    try:
        return float(cell)
    except ValueError:
        raise DataError(f"non-numeric cell {cell!r} at row {row}, column {col}") from None


def _looks_like_header(cells):
    for c in cells:
        try:
            float(c)
        except ValueError:
            return True
    return False


def load_matrix_csv(path, layout=Layout.SENSORS_AS_ROWS):
    """Read a rectangular numeric CSV into an ``(n_sensors, n_steps)`` array.

    A single header row is skipped if any of its cells fails to parse as a
    number. Empty cells and ``nan`` are read as NaN (missing). ``layout``
    states the file's orientation explicitly; nothing is inferred.
    """
    layout = Layout(layout)
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if not rows:
        raise DataError(f"{path}: empty file")
    start = 1 if _looks_like_header(rows[0]) else 0
    body = rows[start:]
    if not body:
        raise DataError(f"{path}: no data rows")
    width = len(body[0])
    values = np.empty((len(body), width))
    for r, cells in enumerate(body, start=start):
        if len(cells) != width:
            raise DataError(f"{path}: row {r} has {len(cells)} cells, expected {width}")
        for c, cell in enumerate(cells):
            cell = cell.strip()
            values[r - start, c] = np.nan if cell == "" else _parse_float(cell, r, c)
    if layout is Layout.SENSORS_AS_COLUMNS:
        values = values.T.copy()
    return values


def save_matrix_csv(path, values, fmt="%.10g"):
    np.savetxt(path, np.asarray(values), delimiter=",", fmt=fmt)


def build_adjacency(distances):
    """Gaussian-kernel adjacency with bandwidth equal to the median off-diagonal distance."""
    d = np.asarray(distances, dtype=float)
    if d.ndim != 2 or d.shape[0] != d.shape[1]:
        raise DataError(f"distance matrix must be square, got shape {d.shape}")
    if not np.all(np.isfinite(d)) or np.any(d < 0):
        raise DataError("distances must be finite and nonnegative")
    if not np.allclose(d, d.T):
        raise DataError("distance matrix must be symmetric")
    n = d.shape[0]
    off = d[~np.eye(n, dtype=bool)]
    h = float(np.median(off)) if off.size else 0.0
    if h <= 0.0:
        raise DataError("degenerate bandwidth: median off-diagonal distance is zero")
    A = np.exp(-(d ** 2) / (2.0 * h * h))
    np.fill_diagonal(A, 0.0)
    return A


def check_adjacency(A):
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DataError(f"adjacency must be square, got shape {A.shape}")
    if np.any(A < 0) or not np.allclose(A, A.T) or np.any(np.diag(A) != 0):
        raise DataError("adjacency must be symmetric, nonnegative, with zero diagonal")
    return A


@dataclass(frozen=True)
class WindowPlan:
    window_len: int
    starts: tuple[int, ...]
    seeds: tuple[int, ...] = field(default=())

    def __len__(self):
        return len(self.starts)

    def slices(self):
        return [slice(s, s + self.window_len) for s in self.starts]

    def to_dict(self):
        return {"window_len": self.window_len, "starts": list(self.starts),
                "seeds": list(self.seeds)}

    @classmethod
    def from_dict(cls, d):
        return cls(int(d["window_len"]), tuple(map(int, d["starts"])),
                   tuple(map(int, d["seeds"])))


def plan_windows(n_steps_total, window_len=DEFAULT_WINDOW_LEN, base_seed=0):
    """Consecutive non-overlapping windows, each with its own derived seed."""
    if window_len < 1:
        raise ValueError("window_len must be positive")
    if window_len > n_steps_total:
        raise ValueError(f"window_len {window_len} exceeds series length {n_steps_total}")
    count = n_steps_total // window_len
    starts = tuple(k * window_len for k in range(count))
    seeds = tuple(derive_seed(base_seed, k) for k in range(count))
    return WindowPlan(window_len, starts, seeds)
