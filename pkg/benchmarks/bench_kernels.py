"""Compare the numba and numpy kernel backends on dataset-sized batches.

    python benchmarks/bench_kernels.py [--batch 1000] [--repeat 5]

Prints the best-of-``repeat`` time per kernel and backend, the speedup, and
the maximum absolute difference between the two backends.
"""

import argparse
import time

import numpy as np

from blindofdm import _kernels
from blindofdm.channel import bem_variances, sample_bem
from blindofdm.dataset import simulate_chunk
from blindofdm.ofdm import OfdmConfig, ofdm_modulate_with_cp, qpsk_symbols


def best_time(func, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = func()
        best = min(best, time.perf_counter() - t0)
    return best, out


def cases(n, batch):
    cfg = OfdmConfig(num_subcarriers=n)
    table = bem_variances(cfg)
    rng = np.random.default_rng(0)
    real = sample_bem(cfg, table, np.arange(batch), rng)
    taps = _kernels.bem_taps(real.coeffs, real.symbol_index, cfg.block_len, -cfg.cp_len, cfg.block_len)
    body = np.ascontiguousarray(taps[:, cfg.cp_len :])
    signal = ofdm_modulate_with_cp(qpsk_symbols(n, rng, size=batch), cfg)
    idx = np.arange(batch)
    return {
        "bem_taps": lambda: _kernels.bem_taps(real.coeffs, real.symbol_index, cfg.block_len, -cfg.cp_len,
                                              cfg.block_len),
        "pseudo_circulant": lambda: _kernels.pseudo_circulant(body),
        "ltv_convolve": lambda: _kernels.ltv_convolve(signal, taps),
        "simulate_chunk": lambda: simulate_chunk(cfg, table, 0, 1, idx)[0],
    }


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--batch", type=int, default=1000)
    p.add_argument("--repeat", type=int, default=5)
    p.add_argument("--sizes", type=int, nargs="+", default=[32, 64, 128])
    args = p.parse_args(argv)
    if not _kernels.HAVE_NUMBA:
        raise SystemExit("numba is not importable; nothing to compare")

    print(f"{'N':>4} {'kernel':<17} {'numpy s':>10} {'numba s':>10} {'speedup':>8} {'max diff':>10}")
    prev = _kernels.backend()
    try:
        for n in args.sizes:
            for name, func in cases(n, args.batch).items():
                _kernels.set_backend("numba")
                func()  # compile outside the timed region
                t_nb, out_nb = best_time(func, args.repeat)
                _kernels.set_backend("numpy")
                t_np, out_np = best_time(func, args.repeat)
                diff = float(np.max(np.abs(out_nb - out_np)))
                print(f"{n:>4} {name:<17} {t_np:>10.4f} {t_nb:>10.4f} {t_np / t_nb:>8.2f} {diff:>10.2e}")
    finally:
        _kernels.set_backend(prev)


if __name__ == "__main__":
    main()
