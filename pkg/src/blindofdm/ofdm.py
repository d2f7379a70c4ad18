"""OFDM transceiver chain: constellation mapping, DFT, cyclic prefix and the
time-varying channel filter."""

import math
from dataclasses import asdict, dataclass

import numpy as np

from . import _kernels

SNR_CONVENTIONS = ("literal", "normalized")


class ConfigError(ValueError):
    """Raised when a physical configuration is inconsistent."""


@dataclass(frozen=True)
class OfdmConfig:
    """Physical layer parameters and the quantities derived from them.

    Only the physical inputs are stored; everything else is a derived property
    so that it can never drift out of sync with the inputs.
    """

    carrier_freq_hz: float = 3.55e9
    bandwidth_hz: float = 10.24e6
    num_subcarriers: int = 32
    cp_len: int = 10
    max_delay_spread_s: float = 500e-9
    max_velocity_mps: float = 160.0 / 3.6
    light_speed_mps: float = 3e8

    def __post_init__(self):
        self.validate()

    @property
    def subcarrier_spacing(self) -> float:
        return self.bandwidth_hz / self.num_subcarriers

    @property
    def useful_duration(self) -> float:
        return 1.0 / self.subcarrier_spacing

    @property
    def sample_period(self) -> float:
        return self.useful_duration / self.num_subcarriers

    @property
    def block_len(self) -> int:
        return self.num_subcarriers + self.cp_len

    @property
    def max_doppler_hz(self) -> float:
        return self.carrier_freq_hz * self.max_velocity_mps / self.light_speed_mps

    @property
    def channel_order(self) -> int:
        # round first so that delay spreads landing exactly on a sample
        # boundary are not pushed up by floating point noise
        return int(math.ceil(round(self.max_delay_spread_s / self.sample_period, 9)))

    @property
    def bem_order(self) -> int:
        prod = self.max_doppler_hz * self.block_len * self.sample_period
        return 2 * int(math.ceil(round(prod, 12)))

    def validate(self):
        if int(self.num_subcarriers) != self.num_subcarriers or self.num_subcarriers < 1:
            raise ConfigError(f"num_subcarriers must be a positive integer, got {self.num_subcarriers}")
        if int(self.cp_len) != self.cp_len or self.cp_len < 0:
            raise ConfigError(f"cp_len must be a nonnegative integer, got {self.cp_len}")
        if self.cp_len > self.num_subcarriers:
            raise ConfigError(f"cp_len={self.cp_len} exceeds the block of {self.num_subcarriers} samples it copies from")
        for name in ("carrier_freq_hz", "bandwidth_hz", "max_delay_spread_s", "light_speed_mps"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if self.max_velocity_mps < 0:
            raise ConfigError("max_velocity_mps must be nonnegative")
        if self.cp_len < self.channel_order - 1:
            raise ConfigError(
                f"cyclic prefix too short: cp_len={self.cp_len} < channel_order-1="
                f"{self.channel_order - 1}; inter-symbol interference would not be absorbed"
            )
        spread = 2.0 * self.max_doppler_hz * self.max_delay_spread_s
        if not spread < 1.0:
            raise ConfigError(f"channel is not underspread: 2*f_max*tau_max = {spread:.6g} >= 1")

    def derived(self) -> dict:
        """Return every derived quantity keyed by name."""
        return {
            "subcarrier_spacing_hz": self.subcarrier_spacing,
            "useful_duration_s": self.useful_duration,
            "sample_period_s": self.sample_period,
            "channel_order": self.channel_order,
            "bem_order": self.bem_order,
            "block_len": self.block_len,
            "max_doppler_hz": self.max_doppler_hz,
        }

    def to_dict(self) -> dict:
        return asdict(self)


def _check_len(vec, expected, what):
    vec = np.asarray(vec)
    if vec.ndim < 1 or vec.shape[-1] != expected:
        raise ValueError(f"{what}: expected trailing length {expected}, got shape {vec.shape}")
    return vec


def dft_matrix(n: int) -> np.ndarray:
    """Unitary DFT matrix with entries ``exp(-2j*pi*k*l/n)/sqrt(n)``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    k = np.arange(n)
    # reduce the exponent modulo n in integers to keep the phases exact
    return np.exp(-2j * np.pi * (np.outer(k, k) % n) / n) / np.sqrt(n)


def qpsk_symbols(n: int, rng: np.random.Generator, size=None) -> np.ndarray:
    """Draw unit-modulus QPSK symbols uniformly over the four points.

    ``size`` adds leading batch dimensions; the result has shape ``(*size, n)``.
    """
    shape = (n,) if size is None else tuple(np.atleast_1d(size)) + (n,)
    bits = rng.integers(0, 2, size=shape + (2,))
    signs = 1.0 - 2.0 * bits
    return (signs[..., 0] + 1j * signs[..., 1]) / np.sqrt(2.0)


def ofdm_modulate_with_cp(d: np.ndarray, cfg: OfdmConfig) -> np.ndarray:
    """Inverse DFT of the subcarrier symbols with the cyclic prefix prepended.

    Works on the last axis, so a batch of symbols ``(S, N)`` maps to ``(S, N + N_cp)``.
    """
    d = _check_len(d, cfg.num_subcarriers, "ofdm_modulate_with_cp")
    body = np.fft.ifft(d, axis=-1, norm="ortho")
    if cfg.cp_len == 0:
        return body
    return np.concatenate([body[..., -cfg.cp_len :], body], axis=-1)


def remove_cp(y: np.ndarray, cfg: OfdmConfig) -> np.ndarray:
    y = _check_len(y, cfg.block_len, "remove_cp")
    return y[..., cfg.cp_len :]


def complex_noise(shape, noise_var, rng: np.random.Generator) -> np.ndarray:
    """Circularly symmetric Gaussian noise with per-entry variance ``noise_var``.

    ``noise_var`` may be a scalar or broadcast against the leading dimensions
    of ``shape``.
    """
    noise_var = np.asarray(noise_var, dtype=float)
    if np.any(noise_var < 0):
        raise ValueError("noise variance must be nonnegative")
    scale = np.sqrt(noise_var / 2.0)
    if scale.ndim:
        scale = scale.reshape(scale.shape + (1,) * (len(shape) - scale.ndim))
    g = rng.standard_normal(tuple(shape) + (2,))
    return scale * (g[..., 0] + 1j * g[..., 1])


def channel_filter(s_cp: np.ndarray, taps: np.ndarray, noise_var=0.0, rng=None) -> np.ndarray:
    """Pass a CP-extended block through a time-varying multipath channel.

    Parameters
    ----------
    s_cp : complex ndarray, shape (Nb,) or (S, Nb)
        Transmitted samples, first entry at time ``-N_cp``.
    taps : complex ndarray, shape (Nb, L) or (S, Nb, L)
        ``taps[.., n, l]`` is the gain of lag ``l`` at the same time index as
        ``s_cp[.., n]``.
    noise_var : float or array of shape (S,)
        Variance of the additive complex Gaussian noise.
    rng : numpy Generator, optional
        Required when any ``noise_var`` is positive.

    Samples before the start of the block are taken as zero.
    """
    s_cp = np.asarray(s_cp)
    taps = np.asarray(taps)
    single = s_cp.ndim == 1
    if single:
        s_cp = s_cp[None]
        taps = taps[None]
    if taps.ndim != 3 or taps.shape[:2] != s_cp.shape:
        raise ValueError(f"taps shape {taps.shape} does not match signal {s_cp.shape}")
    noise_var = np.asarray(noise_var, dtype=float)
    if np.any(noise_var < 0):
        raise ValueError("noise variance must be nonnegative")
    y = _kernels.ltv_convolve(s_cp, taps)
    if np.any(noise_var > 0):
        if rng is None:
            raise ValueError("rng is required when noise_var > 0")
        y = y + complex_noise(y.shape, np.broadcast_to(noise_var, y.shape[:1]), rng)
    return y[0] if single else y


def post_dft_receive(y: np.ndarray, cfg: OfdmConfig) -> np.ndarray:
    """Strip the cyclic prefix and apply the unitary N-point DFT."""
    return np.fft.fft(remove_cp(y, cfg), axis=-1, norm="ortho")


def noise_variance(signal_energy, snr_db, num_subcarriers: int, convention: str = "literal"):
    """Map an SNR in dB to a per-sample noise variance.

    ``literal`` treats the SNR as ``signal_energy / noise_var``; ``normalized``
    compares the symbol energy with the total noise energy across all
    subcarriers, ``signal_energy / (N * noise_var)``.
    """
    lin = 10.0 ** (np.asarray(snr_db, dtype=float) / 10.0)
    energy = np.asarray(signal_energy, dtype=float)
    if convention == "literal":
        return energy / lin
    if convention == "normalized":
        return energy / (num_subcarriers * lin)
    raise ValueError(f"unknown SNR convention {convention!r}; expected one of {SNR_CONVENTIONS}")
