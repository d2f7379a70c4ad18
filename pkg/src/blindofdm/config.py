"""Experiment configuration stored as INI text.

Sections and keys (every key optional, defaults in parentheses)::

    [ofdm]
    carrier_freq_hz      (3.55e9)
    bandwidth_hz         (10.24e6)
    num_subcarriers      (32)
    cp_len               (10)
    max_delay_spread_s   (500e-9)
    max_velocity_mps     (44.444...; 160 km/h)
    light_speed_mps      (3e8)

    [dataset]
    n_train              (5000)
    n_test               (1000)   test samples per SNR point in a sweep
    snr_min_db           (-10)
    snr_max_db           (40)
    train_val_split      (0.75)
    snr_convention       (literal)   literal | normalized
    dtype                (auto)      float64 | float32 | auto (float32 when N >= 128)

    [train]
    optimizer            (adam)      adam | sgd_momentum
    learning_rate        (1e-3)
    momentum             (0.9)
    batch_size           (50)
    max_epochs           (10)
    early_stop_patience  (5)
    lr_reduce_factor     (0.1)
    lr_reduce_patience   (5)

    [net]
    num_hidden           (1)
    width                (auto)      integer, or auto = min(2 N^2, 2048)
    preset               (all)       all | hidden_only

    [experiment]
    seed                 (0)
    snr_test_grid        (-10, 0, 10, 20, 30, 40)

    [theory]
    label_trials         (10000)
    mc_trials            (100000)
    gordon_trials        (500)
    sqrt_tuples          (100000)

Input and label dimensions are always derived from ``num_subcarriers``;
supplying them is an error.
"""

import configparser
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from ._util import config_hash
from .dataset import TEST_SNR_GRID_DB, DatasetSpec, input_dim, label_dim
from .nn import PRESETS, TrainConfig
from .ofdm import ConfigError, OfdmConfig

MAX_AUTO_WIDTH = 2048
_DERIVED_KEYS = {"input_dim", "label_dim", "block_len", "channel_order", "bem_order",
                 "sample_period", "subcarrier_spacing", "useful_duration", "max_doppler_hz"}


@dataclass
class NetConfig:
    num_hidden: int = 1
    width: int = 0  # 0 means auto
    preset: str = "all"

    def __post_init__(self):
        if self.num_hidden < 0:
            raise ConfigError("num_hidden must be >= 0")
        if self.width < 0:
            raise ConfigError("width must be >= 0 (0 selects the automatic width)")
        if self.preset not in PRESETS:
            raise ConfigError(f"unknown preset {self.preset!r}; expected one of {PRESETS}")


@dataclass
class TheoryConfig:
    label_trials: int = 10_000
    mc_trials: int = 100_000
    gordon_trials: int = 500
    sqrt_tuples: int = 100_000


@dataclass
class ExperimentConfig:
    ofdm: OfdmConfig = field(default_factory=OfdmConfig)
    dataset: DatasetSpec = field(default_factory=DatasetSpec)
    train: TrainConfig = field(default_factory=TrainConfig)
    net: NetConfig = field(default_factory=NetConfig)
    theory: TheoryConfig = field(default_factory=TheoryConfig)
    dtype: str = "auto"
    seed: int = 0

    def __post_init__(self):
        if self.dtype not in ("auto", "float32", "float64"):
            raise ConfigError(f"dtype must be auto, float32 or float64, got {self.dtype!r}")
        self.dataset.seed = self.seed
        self.train.seed = self.seed

    @property
    def snr_test_grid(self):
        return self.dataset.snr_test_grid

    @property
    def input_dim(self) -> int:
        return input_dim(self.ofdm.num_subcarriers)

    @property
    def label_dim(self) -> int:
        return label_dim(self.ofdm.num_subcarriers)

    @property
    def width(self) -> int:
        if self.net.width:
            return self.net.width
        return min(self.label_dim, MAX_AUTO_WIDTH)

    @property
    def float_dtype(self):
        if self.dtype == "auto":
            return np.float32 if self.ofdm.num_subcarriers >= 128 else np.float64
        return np.dtype(self.dtype).type

    def with_seed(self, seed: int) -> "ExperimentConfig":
        return replace_section(self, seed=int(seed))

    def to_dict(self) -> dict:
        return {
            "ofdm": self.ofdm.to_dict(),
            "dataset": asdict(self.dataset),
            "train": asdict(self.train),
            "net": asdict(self.net),
            "theory": asdict(self.theory),
            "dtype": self.dtype,
            "seed": self.seed,
        }

    def hash(self) -> str:
        return config_hash(self.to_dict())


def replace_section(cfg: ExperimentConfig, **changes) -> ExperimentConfig:
    """Copy of ``cfg`` with whole sections or scalar fields replaced."""
    d = dict(ofdm=cfg.ofdm, dataset=DatasetSpec(**asdict(cfg.dataset)), train=TrainConfig(**asdict(cfg.train)),
             net=NetConfig(**asdict(cfg.net)), theory=TheoryConfig(**asdict(cfg.theory)),
             dtype=cfg.dtype, seed=cfg.seed)
    d.update(changes)
    return ExperimentConfig(**d)


def _cast(cls, section: str, raw: dict, renames=None) -> dict:
    types = {f.name: f.type for f in fields(cls)}
    out = {}
    for key, text in raw.items():
        name = (renames or {}).get(key, key)
        if key in _DERIVED_KEYS:
            raise ConfigError(f"[{section}] {key} is derived and cannot be set")
        if name not in types:
            raise ConfigError(f"[{section}] unknown key {key!r}")
        kind = types[name]
        try:
            if kind in (int, "int"):
                out[name] = int(text)
            elif kind in (float, "float"):
                out[name] = float(text)
            else:
                out[name] = text.strip()
        except ValueError as exc:
            raise ConfigError(f"[{section}] {key}: {exc}") from None
    return out


def _grid(text: str) -> tuple:
    try:
        return tuple(float(v) for v in text.replace(";", ",").split(",") if v.strip())
    except ValueError as exc:
        raise ConfigError(f"snr_test_grid: {exc}") from None


def parse_config(text: str) -> ExperimentConfig:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    parser.read_string(text)
    known = {"ofdm", "dataset", "train", "net", "experiment", "theory"}
    for sec in parser.sections():
        if sec not in known:
            raise ConfigError(f"unknown section [{sec}]")
    sec = lambda name: dict(parser[name]) if parser.has_section(name) else {}  # noqa: E731

    ofdm = OfdmConfig(**_cast(OfdmConfig, "ofdm", sec("ofdm")))

    ds_raw = sec("dataset")
    dtype = ds_raw.pop("dtype", "auto").strip()
    snr_lo = float(ds_raw.pop("snr_min_db", -10.0))
    snr_hi = float(ds_raw.pop("snr_max_db", 40.0))
    exp_raw = sec("experiment")
    grid = _grid(exp_raw.pop("snr_test_grid")) if "snr_test_grid" in exp_raw else TEST_SNR_GRID_DB
    seed = int(exp_raw.pop("seed", 0))
    if exp_raw:
        raise ConfigError(f"[experiment] unknown keys {sorted(exp_raw)}")
    try:
        dataset = DatasetSpec(snr_range_db=(snr_lo, snr_hi), snr_test_grid=grid,
                              **_cast(DatasetSpec, "dataset", ds_raw))
    except ValueError as exc:
        raise ConfigError(f"[dataset] {exc}") from None

    net_raw = sec("net")
    if net_raw.get("width", "").strip().lower() == "auto":
        net_raw["width"] = "0"
    net = NetConfig(**_cast(NetConfig, "net", net_raw))
    try:
        train = TrainConfig(**_cast(TrainConfig, "train", sec("train")))
    except ValueError as exc:
        raise ConfigError(f"[train] {exc}") from None
    theory = TheoryConfig(**_cast(TheoryConfig, "theory", sec("theory")))
    return ExperimentConfig(ofdm, dataset, train, net, theory, dtype, seed)


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        return parse_config(fh.read())


def dump_config(cfg: ExperimentConfig) -> str:
    """INI text that :func:`parse_config` maps back to an equal config."""
    o = cfg.ofdm
    lines = ["[ofdm]"]
    lines += [f"{k} = {v!r}" for k, v in o.to_dict().items()]
    d = cfg.dataset
    lines += ["", "[dataset]", f"n_train = {d.n_train}", f"n_test = {d.n_test}",
              f"snr_min_db = {d.snr_range_db[0]!r}", f"snr_max_db = {d.snr_range_db[1]!r}",
              f"train_val_split = {d.train_val_split!r}", f"snr_convention = {d.snr_convention}",
              f"dtype = {cfg.dtype}"]
    t = asdict(cfg.train)
    t.pop("seed")
    lines += ["", "[train]"] + [f"{k} = {v!r}" if not isinstance(v, str) else f"{k} = {v}" for k, v in t.items()]
    n = cfg.net
    lines += ["", "[net]", f"num_hidden = {n.num_hidden}", f"width = {n.width or 'auto'}", f"preset = {n.preset}"]
    lines += ["", "[experiment]", f"seed = {cfg.seed}",
              "snr_test_grid = " + ", ".join(repr(s) for s in d.snr_test_grid)]
    lines += ["", "[theory]"] + [f"{k} = {v}" for k, v in asdict(cfg.theory).items()]
    return "\n".join(lines) + "\n"
