"""Blind channel estimation with a trained network and testing-error metrics."""

import csv
from dataclasses import dataclass

import numpy as np

from ._util import fmt_float
from .channel import freq_to_time
from .dataset import SampleSet, unstack_label
from .nn import ReluNetwork, forward, predict

RESULT_COLUMNS = ("N", "K", "m", "preset", "snr_db", "mse", "n_test", "seed")


@dataclass
class ChannelEstimate:
    h_est: np.ndarray
    sample_index: int = -1
    squared_error: float = float("nan")


def estimate(net: ReluNetwork, x, label=None, sample_index: int = -1) -> ChannelEstimate:
    """Run the network on one input and reshape its output into a complex
    ``N x N`` matrix. With ``label`` the squared error to the label is stored."""
    out, _ = forward(net, np.asarray(x))
    return estimate_from_output(out, label, sample_index)


def estimate_from_output(out, label=None, sample_index: int = -1) -> ChannelEstimate:
    out = np.asarray(out, dtype=float)
    n = int(round(np.sqrt(out.shape[-1] / 2)))
    if out.ndim != 1 or 2 * n * n != out.shape[0]:
        raise ValueError(f"network output of length {out.shape[-1]} is not 2*N^2")
    err = float("nan")
    if label is not None:
        e = out - np.asarray(label, dtype=float)
        err = float(e @ e)
    return ChannelEstimate(unstack_label(out), sample_index, err)


def testing_mse(net: ReluNetwork, test: SampleSet, batch_size: int = 1024) -> float:
    """Sum of squared label errors divided by ``2 * n_test * N^2``."""
    if len(test) == 0:
        raise ValueError("empty test set")
    out = predict(net, test.x, batch_size)
    return vector_mse(out, test.label)


def vector_mse(outputs, labels) -> float:
    outputs = np.asarray(outputs, dtype=float)
    labels = np.asarray(labels, dtype=float)
    if outputs.shape != labels.shape:
        raise ValueError(f"shape mismatch {outputs.shape} vs {labels.shape}")
    # row-wise partial sums then a fixed-order reduction keep the result
    # independent of batching
    e = outputs - labels
    per_sample = np.einsum("ij,ij->i", e, e)
    return float(np.sum(per_sample)) / labels.shape[1] / labels.shape[0]


def matrix_mse(estimates, truths) -> float:
    """Same quantity from complex ``N x N`` matrices: mean of ``||H_hat - H||_F^2 / (2 N^2)``."""
    estimates = np.asarray(estimates)
    truths = np.asarray(truths)
    if estimates.shape != truths.shape:
        raise ValueError(f"length mismatch {estimates.shape} vs {truths.shape}")
    if estimates.ndim == 2:
        estimates, truths = estimates[None], truths[None]
    n = truths.shape[-1]
    d = estimates - truths
    per_sample = np.sum(d.real**2 + d.imag**2, axis=(-2, -1))
    return float(np.sum(per_sample)) / (2.0 * n * n) / truths.shape[0]


def time_domain_mse(estimates, truths) -> float:
    """Error measured after mapping both frequency-domain matrices back to the
    time domain; equal to :func:`matrix_mse` because the DFT is unitary."""
    return matrix_mse(freq_to_time(np.asarray(estimates)), freq_to_time(np.asarray(truths)))


def write_results_csv(path, rows):
    """Write result dictionaries with columns ``RESULT_COLUMNS``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(RESULT_COLUMNS)
        for r in rows:
            w.writerow([
                int(r["N"]), int(r["K"]), int(r["m"]), r["preset"],
                fmt_float(r["snr_db"]), fmt_float(r["mse"]), int(r["n_test"]), int(r["seed"]),
            ])
