"""End-to-end runs: dataset generation, training, SNR sweeps and theory checks.

All outputs are deterministic functions of the configuration (including its
master seed).
"""

import csv
import hashlib
import json
import logging
import os
from dataclasses import dataclass

import numpy as np

from . import theory
from ._util import derive_rng, fmt_float
from .channel import bem_variances
from .config import ExperimentConfig
from .dataset import SWEEP_STREAM, SampleSet, generate, generate_fixed_snr, load_dataset, save_dataset, split_train_val
from .estimator import testing_mse, write_results_csv
from .nn import ReluNetwork, TrainingReport, fit, init_network, load_checkpoint, save_checkpoint

logger = logging.getLogger(__name__)

HISTORY_COLUMNS = ("epoch", "train_loss", "val_loss", "lr", "weight_drift")
INIT_STREAM = 31


def derive_params(cfg: ExperimentConfig) -> dict:
    o = cfg.ofdm
    return {
        "num_subcarriers": o.num_subcarriers,
        "subcarrier_spacing_hz": o.subcarrier_spacing,
        "useful_duration_s": o.useful_duration,
        "sample_period_s": o.sample_period,
        "channel_order": o.channel_order,
        "bem_order": o.bem_order,
        "block_len": o.block_len,
        "max_doppler_hz": o.max_doppler_hz,
        "input_dim": cfg.input_dim,
        "label_dim": cfg.label_dim,
        "width": cfg.width,
    }


def format_params(params: dict) -> str:
    w = max(len(k) for k in params)
    return "\n".join(f"{k:<{w}}  {fmt_float(v) if isinstance(v, float) else v}" for k, v in params.items())


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def gen_dataset(cfg: ExperimentConfig, out_dir) -> dict:
    os.makedirs(out_dir, exist_ok=True)
    train, test = generate(cfg.dataset, cfg.ofdm, dtype=cfg.float_dtype)
    paths = {"train": os.path.join(out_dir, "train.bin"), "test": os.path.join(out_dir, "test.bin")}
    save_dataset(paths["train"], train)
    save_dataset(paths["test"], test)
    manifest = {
        "config_hash": cfg.hash(),
        "ofdm_hash": train.config_hash,
        "counts": {"train": len(train), "test": len(test)},
        "files": {k: {"path": os.path.basename(p), "sha256": file_sha256(p)} for k, p in paths.items()},
        "config": cfg.to_dict(),
    }
    with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    return manifest


@dataclass
class TrainedModel:
    net: ReluNetwork
    report: TrainingReport


def new_network(cfg: ExperimentConfig) -> ReluNetwork:
    return init_network(cfg.width, cfg.input_dim, cfg.label_dim, cfg.net.num_hidden,
                        derive_rng(cfg.seed, INIT_STREAM), cfg.net.preset, cfg.float_dtype)


def train_model(cfg: ExperimentConfig, train: SampleSet = None) -> TrainedModel:
    if train is None:
        train, _ = generate(cfg.dataset, cfg.ofdm, dtype=cfg.float_dtype)
    fit_set, val_set = split_train_val(train, cfg.dataset.train_val_split, cfg.seed)
    net = new_network(cfg)
    report = fit(net, fit_set.x, fit_set.label, val_set.x, val_set.label, cfg.train)
    return TrainedModel(net, report)


def write_history_csv(path, report: TrainingReport):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(HISTORY_COLUMNS)
        for row in report.history:
            w.writerow([row["epoch"]] + [fmt_float(row[k]) for k in HISTORY_COLUMNS[1:]])


def train_command(cfg: ExperimentConfig, out_dir, dataset_path=None) -> TrainedModel:
    os.makedirs(out_dir, exist_ok=True)
    train = load_dataset(dataset_path) if dataset_path else None
    model = train_model(cfg, train)
    save_checkpoint(os.path.join(out_dir, "checkpoint.npz"), model.net, model.report, cfg.hash(),
                    extra={"config": cfg.to_dict()})
    write_history_csv(os.path.join(out_dir, "history.csv"), model.report)
    return model


def sweep_sets(cfg: ExperimentConfig) -> dict:
    """Fresh test set per SNR grid point, ``n_test`` samples each."""
    table = bem_variances(cfg.ofdm)
    return {
        snr: generate_fixed_snr(cfg.ofdm, snr, cfg.dataset.n_test, cfg.seed, SWEEP_STREAM + k,
                                cfg.dataset.snr_convention, cfg.float_dtype, table)
        for k, snr in enumerate(cfg.snr_test_grid)
    }


def sweep_snr(cfg: ExperimentConfig, net: ReluNetwork, sets: dict = None) -> list:
    sets = sweep_sets(cfg) if sets is None else sets
    rows = []
    for snr, test in sets.items():
        rows.append({
            "N": cfg.ofdm.num_subcarriers, "K": net.num_hidden, "m": net.width,
            "preset": preset_name(net), "snr_db": snr, "mse": testing_mse(net, test),
            "n_test": len(test), "seed": cfg.seed,
        })
    return rows


def preset_name(net: ReluNetwork) -> str:
    if all(net.trainable):
        return "all"
    if not net.trainable[0] and not net.trainable[-1] and all(net.trainable[1:-1]):
        return "hidden_only"
    return "custom"


def sweep_command(cfg: ExperimentConfig, checkpoint_path, out_path) -> list:
    net, _, _ = load_checkpoint(checkpoint_path)
    if net.input_dim != cfg.input_dim or net.output_dim != cfg.label_dim:
        raise ValueError(
            f"checkpoint dimensions ({net.input_dim}, {net.output_dim}) do not match the config "
            f"({cfg.input_dim}, {cfg.label_dim})"
        )
    rows = sweep_snr(cfg, net)
    write_results_csv(out_path, rows)
    return rows


# --------------------------------------------------------------------------
# theory


NORM_PROFILES = (
    (0.25, 0.25, 0.25, 0.25),
    (0.7, 0.1, 0.1, 0.1),
    (0.5, 0.5),
    tuple([1.0 / 8] * 8),
)
NORM_DEVIATIONS = (0.0, 0.5, 1.0, 2.0)


def run_theory(cfg: ExperimentConfig) -> list:
    th, seed = cfg.theory, cfg.seed
    return [
        theory.check_label_energy(cfg.ofdm, th.label_trials, seed),
        theory.check_parseval(cfg.ofdm, 100, seed),
        theory.check_small_label_probability(cfg.ofdm, th.label_trials, seed),
        theory.check_gordon(64, 32, th.gordon_trials, seed),
        theory.check_gordon(16, 16, th.gordon_trials, seed),
        theory.check_gordon(1, 1, th.gordon_trials * 20, seed),
        theory.check_paley_zygmund("abs_normal", trials=th.mc_trials, seed=seed),
        theory.check_paley_zygmund("rayleigh", trials=th.mc_trials, seed=seed),
        theory.check_paley_zygmund("constant", thresholds=(0.0, 0.5, 1.0), trials=1000, seed=seed),
        theory.check_norm_concentration(NORM_PROFILES, NORM_DEVIATIONS, th.mc_trials, seed),
        theory.check_moment_integral(),
        theory.check_sqrt_sum(th.sqrt_tuples, seed=seed),
        theory.check_mse_probability_bound(n=cfg.ofdm.num_subcarriers, channel_order=cfg.ofdm.channel_order,
                              bem_order=cfg.ofdm.bem_order),
    ]


REPORT_COLUMNS = ("claim_id", "estimate", "stderr", "bound", "kind", "verdict", "n_samples", "seed")


def write_theory_reports(out_dir, reports) -> str:
    os.makedirs(out_dir, exist_ok=True)
    counts = {}
    summary = os.path.join(out_dir, "theory_summary.csv")
    with open(summary, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(REPORT_COLUMNS)
        for r in reports:
            k = counts.get(r.claim_id, 0)
            counts[r.claim_id] = k + 1
            name = r.claim_id if k == 0 else f"{r.claim_id}-{k}"
            with open(os.path.join(out_dir, f"{name}.json"), "w") as jf:
                json.dump(r.to_dict(), jf, indent=2, sort_keys=True, default=_json_num)
            w.writerow([r.claim_id, fmt_float(r.estimate), fmt_float(r.stderr), fmt_float(r.bound),
                        r.kind, r.verdict, r.n_samples, r.seed])
    return summary


def _json_num(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    raise TypeError(type(obj).__name__)
