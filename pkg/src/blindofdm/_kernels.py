"""Per-symbol channel synthesis kernels.

Each kernel has a numba ``@njit`` implementation and a pure-numpy one. The
active backend is chosen once at import time:

* ``BLINDOFDM_NUMBA=0`` (or numba missing) selects the numpy path,
* anything else selects numba.

:func:`set_backend` switches at runtime (used by tests and the benchmark).
Both paths must agree to floating point round-off; ``tests/test_kernels.py``
pins that.
"""

import logging
import os

import numpy as np

logger = logging.getLogger(__name__)

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False


def _flag_enabled(value):
    return value.strip().lower() not in ("0", "false", "no", "off", "")


_use_numba = HAVE_NUMBA and _flag_enabled(os.environ.get("BLINDOFDM_NUMBA", "1"))


def backend():
    return "numba" if _use_numba else "numpy"


def set_backend(name):
    """Select ``"numba"`` or ``"numpy"``; returns the previous backend name."""
    global _use_numba
    prev = backend()
    if name == "numba":
        if not HAVE_NUMBA:
            raise RuntimeError("numba is not importable")
        _use_numba = True
    elif name == "numpy":
        _use_numba = False
    else:
        raise ValueError(f"unknown backend {name!r}")
    return prev


# --------------------------------------------------------------------------
# numpy implementations


def _np_bem_taps(coeffs, symbol_index, block_len, n_start, n_len):
    n_sym, n_basis, _ = coeffs.shape
    q_order = n_basis - 1
    # exp(j*pi*k2*t/Nb) with k2 = 2q - Q is periodic in k2*t mod 2Nb; reduce
    # in integers so large symbol indices keep full phase precision
    k2 = 2 * np.arange(n_basis, dtype=np.int64) - q_order
    t = symbol_index.astype(np.int64)[:, None] * block_len + np.arange(
        n_start, n_start + n_len, dtype=np.int64
    )
    arg = np.mod(t[:, :, None] * k2[None, None, :], 2 * block_len)
    basis = np.exp(1j * np.pi * arg / block_len)
    return np.einsum("snq,sql->snl", basis, coeffs)


def _np_pseudo_circulant(taps):
    n_sym, n_sub, n_lag = taps.shape
    out = np.zeros((n_sym, n_sub, n_sub), dtype=np.complex128)
    rows = np.arange(n_sub)
    for lag in range(min(n_lag, n_sub)):
        out[:, rows, (rows - lag) % n_sub] = taps[:, :, lag]
    return out


def _np_ltv_convolve(signal, taps):
    n_sym, n_len, n_lag = taps.shape
    out = np.zeros((n_sym, n_len), dtype=np.complex128)
    for lag in range(min(n_lag, n_len)):
        out[:, lag:] += taps[:, lag:, lag] * signal[:, : n_len - lag]
    return out


# --------------------------------------------------------------------------
# numba implementations

if HAVE_NUMBA:

    @numba.njit(cache=True)
    def _nb_bem_taps(coeffs, symbol_index, block_len, n_start, n_len):
        n_sym, n_basis, n_lag = coeffs.shape
        q_order = n_basis - 1
        out = np.zeros((n_sym, n_len, n_lag), dtype=np.complex128)
        two_nb = 2 * block_len
        for s in range(n_sym):
            base = symbol_index[s] * block_len
            for n in range(n_len):
                t = base + n_start + n
                for q in range(n_basis):
                    k2 = 2 * q - q_order
                    arg = (t * k2) % two_nb
                    ph = np.pi * arg / block_len
                    b = complex(np.cos(ph), np.sin(ph))
                    for lag in range(n_lag):
                        out[s, n, lag] += b * coeffs[s, q, lag]
        return out

    @numba.njit(cache=True)
    def _nb_pseudo_circulant(taps):
        n_sym, n_sub, n_lag = taps.shape
        out = np.zeros((n_sym, n_sub, n_sub), dtype=np.complex128)
        n_eff = min(n_lag, n_sub)
        for s in range(n_sym):
            for n in range(n_sub):
                for lag in range(n_eff):
                    out[s, n, (n - lag) % n_sub] = taps[s, n, lag]
        return out

    @numba.njit(cache=True)
    def _nb_ltv_convolve(signal, taps):
        n_sym, n_len, n_lag = taps.shape
        out = np.zeros((n_sym, n_len), dtype=np.complex128)
        for s in range(n_sym):
            for n in range(n_len):
                acc = 0j
                for lag in range(min(n_lag, n + 1)):
                    acc += taps[s, n, lag] * signal[s, n - lag]
                out[s, n] = acc
        return out


# --------------------------------------------------------------------------
# dispatch


def bem_taps(coeffs, symbol_index, block_len, n_start, n_len):
    """Evaluate CE-BEM taps for a batch of symbols.

    Parameters
    ----------
    coeffs : complex ndarray, shape (S, Q+1, L)
        BEM coefficients ``h_q[i; l]`` of each symbol.
    symbol_index : int ndarray, shape (S,)
        OFDM symbol index ``i`` of each row.
    block_len : int
        Block length ``N + N_cp``.
    n_start, n_len : int
        Evaluate sample offsets ``n_start <= n < n_start + n_len`` within the
        symbol.

    Returns
    -------
    complex ndarray, shape (S, n_len, L)
        ``h^i[n; l] = sum_q h_q[i; l] exp(j 2 pi (q - Q/2)(i*block_len + n) / block_len)``.
    """
    coeffs = np.ascontiguousarray(coeffs, dtype=np.complex128)
    symbol_index = np.ascontiguousarray(symbol_index, dtype=np.int64)
    if _use_numba:
        return _nb_bem_taps(coeffs, symbol_index, int(block_len), int(n_start), int(n_len))
    return _np_bem_taps(coeffs, symbol_index, int(block_len), int(n_start), int(n_len))


def pseudo_circulant(taps):
    """Assemble ``H[s, n, k] = taps[s, n, (n - k) mod N]`` (zero outside the lag support)."""
    taps = np.ascontiguousarray(taps, dtype=np.complex128)
    if _use_numba:
        return _nb_pseudo_circulant(taps)
    return _np_pseudo_circulant(taps)


def ltv_convolve(signal, taps):
    """Linear time-varying convolution ``y[n] = sum_l taps[n, l] * signal[n - l]``.

    Samples before the start of ``signal`` are taken as zero.
    """
    signal = np.ascontiguousarray(signal, dtype=np.complex128)
    taps = np.ascontiguousarray(taps, dtype=np.complex128)
    if signal.shape != taps.shape[:2]:
        raise ValueError(f"signal shape {signal.shape} does not match taps {taps.shape}")
    if _use_numba:
        return _nb_ltv_convolve(signal, taps)
    return _np_ltv_convolve(signal, taps)
