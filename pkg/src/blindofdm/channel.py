"""Doubly selective channel generation with a complex-exponential basis
expansion (CE-BEM).

Each OFDM symbol gets ``(Q+1) * L`` independent complex Gaussian coefficients.
The gain of lag ``l`` at sample ``n`` of symbol ``i`` is

    h_i[n, l] = sum_q c_i[q, l] * exp(2j*pi*(q - Q/2)*(i*Nb + n)/Nb)

with ``Nb`` the block length (subcarriers plus cyclic prefix). Coefficient
variances follow an exponential delay profile times a Jakes Doppler spectrum
sampled on ``q * f_max / (Q+1)``, normalized to unit total power.
"""

import csv
import json
from dataclasses import dataclass

import numpy as np

from . import _kernels
from ._util import config_hash, fmt_float
from .ofdm import OfdmConfig

REALIZATION_FORMAT_VERSION = 1


def scattering_profiles(cfg: OfdmConfig):
    """Return ``(delay_profile, doppler_profile)`` as vectorized callables.

    The delay profile is ``exp(-tau / ((L-1) T_s))`` for ``tau >= 0``; the
    Doppler profile is ``1 / (pi * sqrt(f_max^2 - nu^2))`` inside
    ``|nu| < f_max`` and zero outside.
    """
    order = cfg.channel_order
    if order < 2:
        raise ValueError(f"exponential delay profile needs channel_order >= 2, got {order}")
    f_max = cfg.max_doppler_hz
    if not f_max > 0:
        raise ValueError("Doppler profile needs a positive maximum Doppler shift")
    scale = (order - 1) * cfg.sample_period

    def delay_profile(tau):
        tau = np.asarray(tau, dtype=float)
        return np.where(tau >= 0, np.exp(-np.maximum(tau, 0.0) / scale), 0.0)

    def doppler_profile(nu):
        nu = np.asarray(nu, dtype=float)
        inside = np.abs(nu) < f_max
        safe = np.where(inside, f_max**2 - nu**2, 1.0)
        return np.where(inside, 1.0 / (np.pi * np.sqrt(safe)), 0.0)

    return delay_profile, doppler_profile


@dataclass(frozen=True)
class BemVarianceTable:
    """Coefficient variances indexed ``[q, l]``; rows are basis functions,
    columns are lags. The table must sum to one."""

    variances: np.ndarray
    normalization: float = 1.0

    def __post_init__(self):
        table = np.array(self.variances, dtype=float, ndmin=2)
        if table.ndim != 2:
            raise ValueError("variance table must be two dimensional")
        if np.any(table < 0) or not np.all(np.isfinite(table)):
            raise ValueError("variances must be finite and nonnegative")
        total = table.sum()
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"variance table must sum to 1, sums to {total!r}")
        table.setflags(write=False)
        object.__setattr__(self, "variances", table)

    @property
    def bem_order(self) -> int:
        return self.variances.shape[0] - 1

    @property
    def channel_order(self) -> int:
        return self.variances.shape[1]

    def lag_power(self) -> np.ndarray:
        """Expected power of each lag, summed over basis functions."""
        return self.variances.sum(axis=0)


def bem_variances(cfg: OfdmConfig) -> BemVarianceTable:
    delay_profile, doppler_profile = scattering_profiles(cfg)
    q_order, order = cfg.bem_order, cfg.channel_order
    lags = np.arange(order) * cfg.sample_period
    freqs = np.arange(q_order + 1) * cfg.max_doppler_hz / (q_order + 1)
    raw = np.outer(doppler_profile(freqs), delay_profile(lags))
    norm = 1.0 / raw.sum()
    table = raw * norm
    # absorb the last few ulps of rounding so the sum is 1 to machine precision
    table /= table.sum()
    return BemVarianceTable(table, float(norm))


@dataclass
class CeBemRealization:
    """BEM coefficients for a batch of OFDM symbols.

    ``coeffs`` has shape ``(S, Q+1, L)`` and ``symbol_index`` shape ``(S,)``.
    """

    coeffs: np.ndarray
    symbol_index: np.ndarray
    num_subcarriers: int
    cp_len: int
    config_hash: str = ""

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=np.complex128)
        if self.coeffs.ndim == 2:
            self.coeffs = self.coeffs[None]
        self.symbol_index = np.atleast_1d(np.asarray(self.symbol_index, dtype=np.int64))
        if self.coeffs.ndim != 3 or self.coeffs.shape[0] != self.symbol_index.shape[0]:
            raise ValueError(
                f"coeffs {self.coeffs.shape} and symbol_index {self.symbol_index.shape} disagree"
            )

    def __len__(self):
        return self.coeffs.shape[0]

    @property
    def bem_order(self) -> int:
        return self.coeffs.shape[1] - 1

    @property
    def channel_order(self) -> int:
        return self.coeffs.shape[2]

    @property
    def block_len(self) -> int:
        return self.num_subcarriers + self.cp_len


@dataclass
class ChannelMatrices:
    """Time-domain pseudo-circulant and frequency-domain coupling matrices,
    each of shape ``(S, N, N)``."""

    time: np.ndarray
    freq: np.ndarray


def sample_bem(cfg: OfdmConfig, table: BemVarianceTable, symbol_index, rng) -> CeBemRealization:
    """Draw independent coefficients for each entry of ``symbol_index``."""
    idx = np.atleast_1d(np.asarray(symbol_index, dtype=np.int64))
    if table.channel_order - 1 > cfg.cp_len:
        raise ValueError("variance table has more lags than the cyclic prefix can absorb")
    std = np.sqrt(table.variances / 2.0)
    g = rng.standard_normal((idx.shape[0],) + table.variances.shape + (2,))
    coeffs = std * (g[..., 0] + 1j * g[..., 1])
    return CeBemRealization(
        coeffs, idx, cfg.num_subcarriers, cfg.cp_len, config_hash(cfg.to_dict())
    )


def basis_vector(symbol_index: int, n: int, bem_order: int, block_len: int) -> np.ndarray:
    """Complex exponential basis values at sample ``n`` of a symbol, one per ``q``."""
    k2 = 2 * np.arange(bem_order + 1, dtype=np.int64) - bem_order
    t = int(symbol_index) * block_len + int(n)
    return np.exp(1j * np.pi * np.mod(k2 * t, 2 * block_len) / block_len)


def channel_taps(realization: CeBemRealization, n: int, lag: int, sym: int = 0) -> complex:
    """Gain of ``lag`` at sample ``n`` (``-N_cp <= n < N``) of batch entry ``sym``.

    Lags outside the channel support have zero gain.
    """
    if not -realization.cp_len <= n < realization.num_subcarriers:
        raise ValueError(f"sample index {n} outside [-{realization.cp_len}, {realization.num_subcarriers})")
    if lag < 0 or lag >= realization.channel_order:
        return 0j
    b = basis_vector(
        realization.symbol_index[sym], n, realization.bem_order, realization.block_len
    )
    return complex(b @ realization.coeffs[sym, :, lag])


def tap_table(realization: CeBemRealization, include_cp: bool = True) -> np.ndarray:
    """All tap gains, shape ``(S, n_samples, L)``.

    With ``include_cp`` the rows cover ``-N_cp <= n < N`` (aligned with a
    CP-extended block); otherwise only ``0 <= n < N``.
    """
    start = -realization.cp_len if include_cp else 0
    length = realization.block_len if include_cp else realization.num_subcarriers
    return _kernels.bem_taps(
        realization.coeffs, realization.symbol_index, realization.block_len, start, length
    )


def time_to_freq(h_time: np.ndarray) -> np.ndarray:
    """Unitary similarity ``F H F^H`` over the last two axes."""
    return np.fft.fft(np.fft.ifft(h_time, axis=-1, norm="ortho"), axis=-2, norm="ortho")


def freq_to_time(h_freq: np.ndarray) -> np.ndarray:
    """Inverse of :func:`time_to_freq`, ``F^H H F``."""
    return np.fft.ifft(np.fft.fft(h_freq, axis=-1, norm="ortho"), axis=-2, norm="ortho")


def build_matrices(realization: CeBemRealization) -> ChannelMatrices:
    taps = tap_table(realization, include_cp=False)
    h_time = _kernels.pseudo_circulant(taps)
    return ChannelMatrices(h_time, time_to_freq(h_time))


def save_realization(path, realization: CeBemRealization):
    """Write coefficients and metadata to an ``.npz`` archive."""
    header = {
        "format_version": REALIZATION_FORMAT_VERSION,
        "num_subcarriers": int(realization.num_subcarriers),
        "cp_len": int(realization.cp_len),
        "config_hash": realization.config_hash,
    }
    with open(path, "wb") as fh:
        np.savez(
            fh,
            header=np.array(json.dumps(header)),
            coeffs=realization.coeffs,
            symbol_index=realization.symbol_index,
        )


def load_realization(path) -> CeBemRealization:
    with np.load(path, allow_pickle=False) as data:
        header = json.loads(str(data["header"]))
        if header.get("format_version") != REALIZATION_FORMAT_VERSION:
            raise ValueError(f"unsupported realization format {header.get('format_version')}")
        return CeBemRealization(
            data["coeffs"],
            data["symbol_index"],
            header["num_subcarriers"],
            header["cp_len"],
            header["config_hash"],
        )


def export_realization_csv(path, realization: CeBemRealization):
    """One row per coefficient: symbol_index, q, lag, real, imag, config_hash."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["symbol_index", "q", "lag", "real", "imag", "config_hash"])
        for s, i in enumerate(realization.symbol_index):
            for q in range(realization.bem_order + 1):
                for lag in range(realization.channel_order):
                    c = realization.coeffs[s, q, lag]
                    w.writerow([int(i), q, lag, fmt_float(c.real), fmt_float(c.imag), realization.config_hash])
