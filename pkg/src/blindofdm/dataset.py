"""Training and testing sets for blind channel estimation.

A sample pairs the received subcarrier vector (normalized, real-stacked, with
a constant bias slot) with the frequency-domain channel matrix that produced
it. Every sample index owns an independent random stream derived from
``(seed, stream, index)``, so any subset can be regenerated on its own and
results do not depend on chunking.
"""

import csv
import json
import struct
from dataclasses import asdict, dataclass, field

import numpy as np

from . import _kernels
from ._util import config_hash, derive_rng, fmt_float
from .channel import BemVarianceTable, bem_variances, time_to_freq
from .ofdm import OfdmConfig, noise_variance, ofdm_modulate_with_cp, post_dft_receive

BIAS = 1.0 / np.sqrt(2.0)
TEST_SNR_GRID_DB = (-10.0, 0.0, 10.0, 20.0, 30.0, 40.0)

TRAIN_STREAM = 1
TEST_STREAM = 2
SPLIT_STREAM = 3
SWEEP_STREAM = 100

MAGIC = b"BOFDMDS\x01"
FORMAT_VERSION = 1
_CHUNK = 256


def input_dim(n: int) -> int:
    return 2 * n + 1


def label_dim(n: int) -> int:
    return 2 * n * n


@dataclass
class LabeledSample:
    x: np.ndarray
    label: np.ndarray
    snr_db: float
    symbol_index: int


@dataclass
class DatasetSpec:
    n_train: int = 5000
    n_test: int = 1000
    snr_range_db: tuple = (-10.0, 40.0)
    train_val_split: float = 0.75
    seed: int = 0
    snr_test_grid: tuple = TEST_SNR_GRID_DB
    snr_convention: str = "literal"

    def __post_init__(self):
        if self.n_train < 1 or self.n_test < 1:
            raise ValueError("sample counts must be >= 1")
        if not 0.0 < self.train_val_split < 1.0:
            raise ValueError(f"train_val_split must lie in (0, 1), got {self.train_val_split}")
        lo, hi = self.snr_range_db
        if not lo < hi:
            raise ValueError(f"empty SNR range {self.snr_range_db}")
        if len(self.snr_test_grid) < 1:
            raise ValueError("snr_test_grid must not be empty")
        self.snr_range_db = (float(lo), float(hi))
        self.snr_test_grid = tuple(float(s) for s in self.snr_test_grid)


@dataclass
class SampleSet:
    """Column-oriented batch of samples: ``x`` is ``(S, 2N+1)``, ``label`` is
    ``(S, 2N^2)``."""

    x: np.ndarray
    label: np.ndarray
    snr_db: np.ndarray
    symbol_index: np.ndarray
    config_hash: str = ""
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return self.x.shape[0]

    def __getitem__(self, k):
        if isinstance(k, (int, np.integer)):
            return LabeledSample(self.x[k], self.label[k], float(self.snr_db[k]), int(self.symbol_index[k]))
        return SampleSet(
            self.x[k], self.label[k], self.snr_db[k], self.symbol_index[k], self.config_hash, dict(self.meta)
        )

    def __iter__(self):
        for k in range(len(self)):
            yield self[k]

    @property
    def num_subcarriers(self) -> int:
        return (self.x.shape[1] - 1) // 2

    def by_snr(self) -> dict:
        """Split into one subset per distinct SNR value, in ascending order."""
        return {float(s): self[self.snr_db == s] for s in np.unique(self.snr_db)}


def stack_label(h_freq: np.ndarray) -> np.ndarray:
    """Column-major vectorization of ``[Re H, Im H]``; works on ``(..., N, N)``."""
    h_freq = np.asarray(h_freq)
    n = h_freq.shape[-1]
    pair = np.concatenate([h_freq.real, h_freq.imag], axis=-1)
    # column-major vec of each trailing N x 2N block = row-major of its transpose
    return np.swapaxes(pair, -1, -2).reshape(h_freq.shape[:-2] + (2 * n * n,))


def unstack_label(y: np.ndarray) -> np.ndarray:
    """Inverse of :func:`stack_label`."""
    y = np.asarray(y)
    n = int(round(np.sqrt(y.shape[-1] / 2)))
    if 2 * n * n != y.shape[-1]:
        raise ValueError(f"label length {y.shape[-1]} is not 2*N^2")
    lead = y.shape[:-1]
    re = np.swapaxes(y[..., : n * n].reshape(lead + (n, n)), -1, -2)
    im = np.swapaxes(y[..., n * n :].reshape(lead + (n, n)), -1, -2)
    return re + 1j * im


def normalize_reception(y_freq: np.ndarray) -> np.ndarray:
    """Real-stack received vectors so the signal part has energy 1/2 and append the bias."""
    y_freq = np.asarray(y_freq)
    energy = np.sum(y_freq.real**2 + y_freq.imag**2, axis=-1, keepdims=True)
    if np.any(energy == 0):
        raise ValueError("received vector is identically zero; normalization undefined")
    scale = 1.0 / np.sqrt(2.0 * energy)
    bias = np.full(y_freq.shape[:-1] + (1,), BIAS)
    return np.concatenate([scale * y_freq.real, scale * y_freq.imag, bias], axis=-1)


def build_sample(y_freq, h_freq, snr_db, symbol_index: int = 0) -> LabeledSample:
    y_freq = np.asarray(y_freq)
    h_freq = np.asarray(h_freq)
    n = y_freq.shape[-1]
    if y_freq.ndim != 1 or h_freq.shape != (n, n):
        raise ValueError(f"expected a length-N vector and an N x N matrix, got {y_freq.shape}, {h_freq.shape}")
    return LabeledSample(normalize_reception(y_freq), stack_label(h_freq), float(snr_db), int(symbol_index))


def _draw(cfg, table, seed, stream, indices):
    """Per-index random draws; the uniform SNR variate is drawn even when the
    caller fixes the SNR so that the other draws do not shift."""
    q1, order = table.variances.shape
    n, nb = cfg.num_subcarriers, cfg.block_len
    std = np.sqrt(table.variances / 2.0)
    s = len(indices)
    coeffs = np.empty((s, q1, order), dtype=np.complex128)
    bits = np.empty((s, n, 2), dtype=np.int64)
    g_noise = np.empty((s, nb, 2))
    snr_u = np.empty(s)
    for k, i in enumerate(indices):
        rng = derive_rng(seed, stream, i)
        g = rng.standard_normal((q1, order, 2))
        coeffs[k] = std * (g[..., 0] + 1j * g[..., 1])
        bits[k] = rng.integers(0, 2, size=(n, 2))
        snr_u[k] = rng.random()
        g_noise[k] = rng.standard_normal((nb, 2))
    return coeffs, bits, g_noise, snr_u


def simulate_chunk(cfg, table, seed, stream, indices, snr_db=None, snr_range=(-10.0, 40.0), convention="literal"):
    """Simulate receptions for the given sample indices.

    Returns ``(y_freq, h_freq, snr_db)`` with shapes ``(S, N)``, ``(S, N, N)``
    and ``(S,)``.
    """
    indices = np.asarray(indices, dtype=np.int64)
    coeffs, bits, g_noise, snr_u = _draw(cfg, table, seed, stream, indices)
    if snr_db is None:
        lo, hi = snr_range
        snr = lo + (hi - lo) * snr_u
    else:
        snr = np.broadcast_to(np.asarray(snr_db, dtype=float), indices.shape).copy()

    symbols = ((1.0 - 2.0 * bits[..., 0]) + 1j * (1.0 - 2.0 * bits[..., 1])) / np.sqrt(2.0)
    taps = _kernels.bem_taps(coeffs, indices, cfg.block_len, -cfg.cp_len, cfg.block_len)
    s_cp = ofdm_modulate_with_cp(symbols, cfg)
    y_clean = _kernels.ltv_convolve(s_cp, taps)

    h_time = _kernels.pseudo_circulant(taps[:, cfg.cp_len :, :])
    h_freq = time_to_freq(h_time)
    signal_energy = np.sum(np.abs(np.einsum("snk,sk->sn", h_freq, symbols)) ** 2, axis=-1)
    var = noise_variance(signal_energy, snr, cfg.num_subcarriers, convention)
    noise = np.sqrt(var / 2.0)[:, None] * (g_noise[..., 0] + 1j * g_noise[..., 1])
    y_freq = post_dft_receive(y_clean + noise, cfg)
    return y_freq, h_freq, snr


def _simulate_set(cfg, seed, stream, indices, snr_db, snr_range, convention, dtype, table=None):
    table = bem_variances(cfg) if table is None else table
    n = cfg.num_subcarriers
    s = len(indices)
    x = np.empty((s, input_dim(n)), dtype=dtype)
    y = np.empty((s, label_dim(n)), dtype=dtype)
    snr_all = np.empty(s)
    snr_db = None if snr_db is None else np.broadcast_to(np.asarray(snr_db, dtype=float), (s,))
    for a in range(0, s, _CHUNK):
        b = min(a + _CHUNK, s)
        y_freq, h_freq, snr = simulate_chunk(
            cfg, table, seed, stream, indices[a:b],
            None if snr_db is None else snr_db[a:b], snr_range, convention,
        )
        x[a:b] = normalize_reception(y_freq)
        y[a:b] = stack_label(h_freq)
        snr_all[a:b] = snr
    return SampleSet(x, y, snr_all, np.asarray(indices, dtype=np.int64), config_hash(cfg.to_dict()))


def generate(spec: DatasetSpec, cfg: OfdmConfig, table: BemVarianceTable = None, dtype=np.float64):
    """Training set with SNRs uniform in ``spec.snr_range_db`` and a test set
    whose SNRs cycle through ``spec.snr_test_grid``."""
    train = _simulate_set(
        cfg, spec.seed, TRAIN_STREAM, np.arange(spec.n_train), None,
        spec.snr_range_db, spec.snr_convention, dtype, table,
    )
    grid = np.asarray(spec.snr_test_grid)
    test_snr = grid[np.arange(spec.n_test) % len(grid)]
    test = _simulate_set(
        cfg, spec.seed, TEST_STREAM, np.arange(spec.n_test), test_snr,
        spec.snr_range_db, spec.snr_convention, dtype, table,
    )
    for part in (train, test):
        part.meta = {"spec": asdict(spec), "ofdm": cfg.to_dict()}
    return train, test


def generate_fixed_snr(cfg: OfdmConfig, snr_db: float, count: int, seed: int, stream: int,
                       convention="literal", dtype=np.float64, table=None) -> SampleSet:
    """``count`` fresh test samples at a single SNR."""
    return _simulate_set(
        cfg, seed, stream, np.arange(count), float(snr_db), (-10.0, 40.0), convention, dtype, table
    )


def split_train_val(samples: SampleSet, fraction: float, seed: int):
    """Seeded shuffle, then the first ``fraction`` of samples train and the rest validate."""
    if not 0.0 < fraction < 1.0:
        raise ValueError("fraction must lie in (0, 1)")
    perm = derive_rng(seed, SPLIT_STREAM).permutation(len(samples))
    cut = int(round(fraction * len(samples)))
    cut = min(max(cut, 1), len(samples) - 1) if len(samples) > 1 else 1
    return samples[np.sort(perm[:cut])], samples[np.sort(perm[cut:])]


def min_pairwise_distance(x: np.ndarray) -> float:
    """Smallest Euclidean distance between distinct rows of ``x``."""
    x = np.asarray(x, dtype=float)
    sq = np.sum(x * x, axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * x @ x.T
    np.fill_diagonal(d2, np.inf)
    return float(np.sqrt(max(d2.min(), 0.0)))


# --------------------------------------------------------------------------
# on-disk container
#
#   magic     8 bytes  b"BOFDMDS\x01"
#   hlen      uint32 little-endian, length of the JSON header in bytes
#   header    UTF-8 JSON: format_version, config_hash, num_subcarriers,
#             input_dim, label_dim, count, float ("<f8" or "<f4"), meta
#   records   `count` packed little-endian records:
#               config_hash  16 bytes ASCII
#               index        int64
#               snr_db       float64
#               x            input_dim floats
#               label       label_dim floats


def record_dtype(n: int, float_code: str = "<f8") -> np.dtype:
    return np.dtype([
        ("config_hash", "S16"),
        ("index", "<i8"),
        ("snr_db", "<f8"),
        ("x", float_code, (input_dim(n),)),
        ("label", float_code, (label_dim(n),)),
    ])


def save_dataset(path, samples: SampleSet, float_code: str = None):
    if float_code is None:
        float_code = "<f4" if samples.x.dtype == np.float32 else "<f8"
    if float_code not in ("<f8", "<f4"):
        raise ValueError("float_code must be '<f8' or '<f4'")
    n = samples.num_subcarriers
    header = {
        "format_version": FORMAT_VERSION,
        "config_hash": samples.config_hash,
        "num_subcarriers": n,
        "input_dim": input_dim(n),
        "label_dim": label_dim(n),
        "count": len(samples),
        "float": float_code,
        "meta": samples.meta,
    }
    blob = json.dumps(header, sort_keys=True).encode()
    rec = np.zeros(len(samples), dtype=record_dtype(n, float_code))
    rec["config_hash"] = samples.config_hash.encode()[:16]
    rec["index"] = samples.symbol_index
    rec["snr_db"] = samples.snr_db
    rec["x"] = samples.x
    rec["label"] = samples.label
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        fh.write(rec.tobytes())


def load_dataset(path) -> SampleSet:
    with open(path, "rb") as fh:
        if fh.read(len(MAGIC)) != MAGIC:
            raise ValueError(f"{path}: not a dataset file")
        (hlen,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(hlen).decode())
        if header["format_version"] != FORMAT_VERSION:
            raise ValueError(f"unsupported dataset format {header['format_version']}")
        dt = record_dtype(header["num_subcarriers"], header["float"])
        rec = np.frombuffer(fh.read(), dtype=dt)
    if rec.shape[0] != header["count"]:
        raise ValueError(f"{path}: expected {header['count']} records, found {rec.shape[0]}")
    native = np.float32 if header["float"] == "<f4" else np.float64
    return SampleSet(
        rec["x"].astype(native),
        rec["label"].astype(native),
        rec["snr_db"].astype(float),
        rec["index"].astype(np.int64),
        header["config_hash"],
        header.get("meta", {}),
    )


def export_csv(path, samples: SampleSet):
    n = samples.num_subcarriers
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(
            ["config_hash", "index", "snr_db"]
            + [f"x{k}" for k in range(input_dim(n))]
            + [f"y{k}" for k in range(label_dim(n))]
        )
        for k in range(len(samples)):
            w.writerow(
                [samples.config_hash, int(samples.symbol_index[k]), fmt_float(samples.snr_db[k])]
                + [fmt_float(v) for v in samples.x[k]]
                + [fmt_float(v) for v in samples.label[k]]
            )
