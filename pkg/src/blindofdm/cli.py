"""Command line entry point ``blindofdm``.

Exit codes: 0 success, 1 a checked bound was violated, 2 invalid input.
"""

import argparse
import logging
import sys

from . import experiment
from .config import ExperimentConfig, load_config
from .estimator import write_results_csv
from .nn import TrainingDivergedError
from .ofdm import ConfigError
from .theory import VIOLATED

EXIT_OK, EXIT_VIOLATION, EXIT_INVALID = 0, 1, 2


def _load(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    return cfg


def cmd_derive_params(args) -> int:
    text = experiment.format_params(experiment.derive_params(_load(args)))
    print(text)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    return EXIT_OK


def cmd_gen_dataset(args) -> int:
    manifest = experiment.gen_dataset(_load(args), args.out or "dataset")
    print(f"wrote {manifest['counts']['train']} training and {manifest['counts']['test']} test samples")
    return EXIT_OK


def cmd_train(args) -> int:
    model = experiment.train_command(_load(args), args.out or "run", args.dataset)
    last = model.report.history[-1]
    print(f"epochs {model.report.stopped_epoch}  best val loss {model.report.best_val_loss:.6g}"
          f"  final drift {last['weight_drift']:.6g}")
    return EXIT_OK


def cmd_sweep_snr(args) -> int:
    cfg = _load(args)
    out = args.out or "mse_vs_snr.csv"
    if args.checkpoint:
        rows = experiment.sweep_command(cfg, args.checkpoint, out)
    else:
        model = experiment.train_model(cfg)
        rows = experiment.sweep_snr(cfg, model.net)
        write_results_csv(out, rows)
    for r in rows:
        print(f"snr {r['snr_db']:6.1f} dB  mse {r['mse']:.8f}")
    return EXIT_OK


def cmd_verify_theory(args) -> int:
    cfg = _load(args)
    reports = experiment.run_theory(cfg)
    experiment.write_theory_reports(args.out or "theory", reports)
    for r in reports:
        print(f"{r.claim_id:<24} {r.verdict}")
    return EXIT_VIOLATION if any(r.verdict == VIOLATED for r in reports) else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="blindofdm", description="Blind OFDM channel estimation laboratory")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, func, help_text):
        s = sub.add_parser(name, help=help_text)
        s.add_argument("--config", help="INI configuration file")
        s.add_argument("--seed", type=int, help="override the master seed")
        s.add_argument("--out", help="output file or directory")
        s.set_defaults(func=func)
        return s

    add("derive-params", cmd_derive_params, "print derived physical parameters")
    add("gen-dataset", cmd_gen_dataset, "generate training and test sets")
    t = add("train", cmd_train, "train a network and write checkpoint and history")
    t.add_argument("--dataset", help="training set written by gen-dataset (generated on the fly if omitted)")
    s = add("sweep-snr", cmd_sweep_snr, "testing MSE at each SNR grid point")
    s.add_argument("--checkpoint", help="checkpoint written by train (trains first if omitted)")
    add("verify-theory", cmd_verify_theory, "run all numerical bound checks")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (ConfigError, ValueError, FileNotFoundError, TrainingDivergedError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
