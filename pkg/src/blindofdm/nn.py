"""Fully connected ReLU network without biases, trained by backpropagation.

Layout: an input layer ``m x input_dim``, ``K`` hidden layers ``m x m`` (each
followed by ReLU, as is the input layer) and a linear output layer
``output_dim x m``. Weights are stored in one list ordered input, hidden..., output,
with a parallel list of trainability flags.

Samples are rows, so a batch ``X`` of shape ``(S, input_dim)`` is propagated as
``X @ W.T``.
"""

import copy
import json
import logging
from dataclasses import asdict, dataclass

import numpy as np

from ._util import derive_rng

logger = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1
PRESETS = ("all", "hidden_only")
OPTIMIZERS = ("adam", "sgd_momentum")


class TrainingDivergedError(FloatingPointError):
    """Raised when a loss or gradient stops being finite."""


@dataclass
class ReluNetwork:
    weights: list
    trainable: list

    def __post_init__(self):
        if len(self.weights) < 2:
            raise ValueError("need at least an input and an output layer")
        if len(self.trainable) != len(self.weights):
            raise ValueError("one trainability flag per weight matrix")
        for a, b in zip(self.weights[:-1], self.weights[1:]):
            if b.shape[1] != a.shape[0]:
                raise ValueError(f"layer shapes {a.shape} -> {b.shape} do not chain")

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[1]

    @property
    def output_dim(self) -> int:
        return self.weights[-1].shape[0]

    @property
    def width(self) -> int:
        return self.weights[0].shape[0]

    @property
    def num_hidden(self) -> int:
        return len(self.weights) - 2

    @property
    def dtype(self):
        return self.weights[0].dtype

    def hidden_weights(self) -> list:
        return self.weights[1:-1]

    def copy(self) -> "ReluNetwork":
        return ReluNetwork([w.copy() for w in self.weights], list(self.trainable))


def preset_flags(num_hidden: int, preset: str) -> list:
    if preset == "all":
        return [True] * (num_hidden + 2)
    if preset == "hidden_only":
        return [False] + [True] * num_hidden + [False]
    raise ValueError(f"unknown trainability preset {preset!r}; expected one of {PRESETS}")


def init_network(width, input_dim, output_dim, num_hidden, rng, preset="all", dtype=np.float64) -> ReluNetwork:
    """Gaussian initialization: variance ``2/m`` for the input and hidden
    layers, ``1/output_dim`` for the output layer."""
    if min(width, input_dim, output_dim) < 1 or num_hidden < 0:
        raise ValueError("dimensions must be >= 1")
    he = np.sqrt(2.0 / width)
    weights = [he * rng.standard_normal((width, input_dim))]
    weights += [he * rng.standard_normal((width, width)) for _ in range(num_hidden)]
    weights.append(rng.standard_normal((output_dim, width)) / np.sqrt(output_dim))
    weights = [w.astype(dtype, copy=False) for w in weights]
    return ReluNetwork(weights, preset_flags(num_hidden, preset))


@dataclass
class ForwardCache:
    """Layer inputs ``acts[k]`` (``acts[0]`` is the network input) and ReLU
    masks ``masks[k]`` (true where the pre-activation is >= 0)."""

    acts: list
    masks: list


def forward(net: ReluNetwork, x):
    """Return ``(output, cache)``; ``x`` may be one vector or a batch of rows."""
    x = np.asarray(x)
    single = x.ndim == 1
    h = x[None] if single else x
    if h.shape[-1] != net.input_dim:
        raise ValueError(f"input length {h.shape[-1]} != {net.input_dim}")
    h = h.astype(net.dtype, copy=False)
    acts, masks = [h], []
    for w in net.weights[:-1]:
        pre = h @ w.T
        mask = pre >= 0
        h = np.where(mask, pre, 0)
        masks.append(mask)
        acts.append(h)
    out = h @ net.weights[-1].T
    if single:
        out = out[0]
    return out, ForwardCache(acts, masks)


def predict(net: ReluNetwork, x, batch_size: int = 1024) -> np.ndarray:
    x = np.asarray(x)
    out = np.empty((x.shape[0], net.output_dim), dtype=net.dtype)
    for a in range(0, x.shape[0], batch_size):
        out[a : a + batch_size] = forward(net, x[a : a + batch_size])[0]
    return out


def sign_product_output(net: ReluNetwork, x) -> np.ndarray:
    """Output of a single input written as an explicit product of weight
    matrices and diagonal 0/1 activation matrices."""
    x = np.asarray(x, dtype=float)
    _, cache = forward(net, x)
    prod = np.eye(net.input_dim)
    for w, mask in zip(net.weights[:-1], cache.masks):
        prod = np.diag(mask[0].astype(float)) @ w @ prod
    return net.weights[-1] @ prod @ x


def loss(output, target) -> float:
    """Half the mean over samples of the squared error norm."""
    e = np.asarray(output, dtype=float) - np.asarray(target, dtype=float)
    if e.ndim == 1:
        e = e[None]
    return 0.5 * float(np.sum(e * e)) / e.shape[0]


def gradients(net: ReluNetwork, cache: ForwardCache, err: np.ndarray, all_layers: bool = False) -> list:
    """Backpropagate ``err = output - target`` of the half mean-squared loss.

    Returns one gradient per weight matrix; frozen layers get ``None`` unless
    ``all_layers`` is set.
    """
    err = np.atleast_2d(err)
    delta = err / err.shape[0]
    n_layers = len(net.weights)
    grads = [None] * n_layers
    for k in range(n_layers - 1, -1, -1):
        if all_layers or net.trainable[k]:
            grads[k] = delta.T @ cache.acts[k]
        if k == 0 or not (all_layers or any(net.trainable[:k])):
            break
        delta = (delta @ net.weights[k]) * cache.masks[k - 1]
    return grads


# --------------------------------------------------------------------------
# optimizers


@dataclass
class TrainConfig:
    optimizer: str = "adam"
    learning_rate: float = 1e-3
    momentum: float = 0.9
    batch_size: int = 50
    max_epochs: int = 10
    early_stop_patience: int = 5
    lr_reduce_factor: float = 0.1
    lr_reduce_patience: int = 5
    min_delta: float = 0.0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"unknown optimizer {self.optimizer!r}; expected one of {OPTIMIZERS}")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must lie in [0, 1)")
        if self.batch_size < 1 or self.max_epochs < 1:
            raise ValueError("batch_size and max_epochs must be >= 1")
        if not 0.0 < self.lr_reduce_factor <= 1.0:
            raise ValueError("lr_reduce_factor must lie in (0, 1]")


@dataclass
class AdamState:
    first: list
    second: list
    step: int = 0


def adam_step(state: AdamState, grads: list, lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
    """One bias-corrected Adam update.

    Returns ``(new_state, updates)``; ``updates[k]`` is added to parameter ``k``
    (``None`` entries in ``grads`` are skipped).
    """
    t = state.step + 1
    first, second, updates = [], [], []
    c1 = 1.0 - beta1**t
    c2 = 1.0 - beta2**t
    for g, m1, m2 in zip(grads, state.first, state.second):
        if g is None:
            first.append(m1)
            second.append(m2)
            updates.append(None)
            continue
        m1 = beta1 * m1 + (1.0 - beta1) * g
        m2 = beta2 * m2 + (1.0 - beta2) * (g * g)
        first.append(m1)
        second.append(m2)
        updates.append(-lr * (m1 / c1) / (np.sqrt(m2 / c2) + eps))
    return AdamState(first, second, t), updates


def momentum_step(velocity: list, grads: list, lr: float, momentum: float):
    """Heavy-ball update ``v <- momentum*v - lr*g``; returns the new velocities,
    which are also the parameter increments."""
    out = []
    for g, v in zip(grads, velocity):
        out.append(v if g is None else momentum * v - lr * g)
    return out


def init_optimizer(net: ReluNetwork, cfg: TrainConfig):
    zeros = [np.zeros_like(w) if t else np.zeros((0,), dtype=w.dtype) for w, t in zip(net.weights, net.trainable)]
    if cfg.optimizer == "adam":
        return AdamState(zeros, [z.copy() for z in zeros], 0)
    return [z.copy() for z in zeros]


def train_step(net: ReluNetwork, batch_x, batch_y, cfg: TrainConfig, state, lr: float = None):
    """Update the trainable weights in place on one batch.

    Returns ``(loss_before_update, new_optimizer_state)``.
    """
    lr = cfg.learning_rate if lr is None else lr
    out, cache = forward(net, batch_x)
    err = out - np.asarray(batch_y, dtype=net.dtype)
    batch_loss = 0.5 * float(np.sum(err.astype(float) ** 2)) / err.shape[0]
    if not np.isfinite(batch_loss):
        raise TrainingDivergedError(f"non-finite batch loss {batch_loss}")
    grads = gradients(net, cache, err)
    for k, g in enumerate(grads):
        if g is not None and not np.all(np.isfinite(g)):
            raise TrainingDivergedError(f"non-finite gradient in layer {k}")
    if cfg.optimizer == "adam":
        state, updates = adam_step(state, grads, lr, cfg.beta1, cfg.beta2, cfg.epsilon)
    else:
        state = momentum_step(state, grads, lr, cfg.momentum)
        updates = [v if g is not None else None for v, g in zip(state, grads)]
    for k, u in enumerate(updates):
        if u is not None and net.trainable[k]:
            net.weights[k] += u.astype(net.dtype, copy=False)
    return batch_loss, state


def dataset_loss(net: ReluNetwork, x, y, batch_size: int = 1024) -> float:
    total = 0.0
    for a in range(0, x.shape[0], batch_size):
        out, _ = forward(net, x[a : a + batch_size])
        e = out.astype(float) - np.asarray(y[a : a + batch_size], dtype=float)
        total += float(np.sum(e * e))
    return 0.5 * total / x.shape[0]


def hidden_drift(net: ReluNetwork, initial: ReluNetwork) -> float:
    """Frobenius distance between the current and initial hidden weights."""
    sq = 0.0
    for w, w0 in zip(net.hidden_weights(), initial.hidden_weights()):
        d = w.astype(float) - w0.astype(float)
        sq += float(np.sum(d * d))
    return float(np.sqrt(sq))


@dataclass
class TrainingReport:
    history: list
    best_epoch: int
    stopped_epoch: int
    best_val_loss: float
    initial_val_loss: float

    def to_dict(self) -> dict:
        return asdict(self)


def fit(net: ReluNetwork, train_x, train_y, val_x, val_y, cfg: TrainConfig) -> TrainingReport:
    """Mini-batch training with plateau-based learning-rate reduction and
    early stopping, both monitoring validation loss. The best weights seen
    are restored before returning."""
    n = train_x.shape[0]
    if n == 0 or val_x.shape[0] == 0:
        raise ValueError("training and validation sets must be nonempty")
    initial = net.copy()
    state = init_optimizer(net, cfg)
    lr = cfg.learning_rate
    best = dataset_loss(net, val_x, val_y)
    initial_val = best
    best_weights = [w.copy() for w in net.weights]
    best_epoch, wait, lr_wait = 0, 0, 0
    history = []
    epoch = 0
    for epoch in range(1, cfg.max_epochs + 1):
        perm = derive_rng(cfg.seed, 7, epoch).permutation(n)
        running, seen = 0.0, 0
        for a in range(0, n, cfg.batch_size):
            idx = perm[a : a + cfg.batch_size]
            batch_loss, state = train_step(net, train_x[idx], train_y[idx], cfg, state, lr)
            running += batch_loss * len(idx)
            seen += len(idx)
        val = dataset_loss(net, val_x, val_y)
        if not np.isfinite(val):
            raise TrainingDivergedError(f"non-finite validation loss at epoch {epoch}")
        history.append({
            "epoch": epoch,
            "train_loss": running / seen,
            "val_loss": val,
            "lr": lr,
            "weight_drift": hidden_drift(net, initial),
        })
        logger.info("epoch %d train %.6g val %.6g lr %.3g", epoch, running / seen, val, lr)
        if val < best - cfg.min_delta:
            best, best_epoch, wait, lr_wait = val, epoch, 0, 0
            best_weights = [w.copy() for w in net.weights]
        else:
            wait += 1
            lr_wait += 1
            if lr_wait >= cfg.lr_reduce_patience:
                lr *= cfg.lr_reduce_factor
                lr_wait = 0
            if wait >= cfg.early_stop_patience:
                break
    net.weights = best_weights
    return TrainingReport(history, best_epoch, epoch, best, initial_val)


# --------------------------------------------------------------------------
# checkpoints


def save_checkpoint(path, net: ReluNetwork, report: TrainingReport = None, config_hash: str = "",
                    optimizer_state=None, extra: dict = None):
    header = {
        "format_version": CHECKPOINT_VERSION,
        "config_hash": config_hash,
        "shapes": [list(w.shape) for w in net.weights],
        "trainable": list(net.trainable),
        "dtype": np.dtype(net.dtype).str,
        "report": report.to_dict() if report is not None else None,
        "extra": extra or {},
    }
    arrays = {f"w{k}": w for k, w in enumerate(net.weights)}
    if isinstance(optimizer_state, AdamState):
        header["optimizer"] = {"kind": "adam", "step": optimizer_state.step}
        arrays.update({f"adam_m{k}": a for k, a in enumerate(optimizer_state.first)})
        arrays.update({f"adam_v{k}": a for k, a in enumerate(optimizer_state.second)})
    elif optimizer_state is not None:
        header["optimizer"] = {"kind": "sgd_momentum"}
        arrays.update({f"velocity{k}": a for k, a in enumerate(optimizer_state)})
    with open(path, "wb") as fh:
        np.savez(fh, header=np.array(json.dumps(header)), **arrays)


def load_checkpoint(path):
    """Return ``(net, header, optimizer_state)``."""
    with np.load(path, allow_pickle=False) as data:
        header = json.loads(str(data["header"]))
        if header.get("format_version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {header.get('format_version')}")
        n = len(header["shapes"])
        weights = [np.array(data[f"w{k}"]) for k in range(n)]
        opt = header.get("optimizer")
        state = None
        if opt and opt["kind"] == "adam":
            state = AdamState(
                [np.array(data[f"adam_m{k}"]) for k in range(n)],
                [np.array(data[f"adam_v{k}"]) for k in range(n)],
                opt["step"],
            )
        elif opt:
            state = [np.array(data[f"velocity{k}"]) for k in range(n)]
    return ReluNetwork(weights, header["trainable"]), header, state


def clone_config(cfg: TrainConfig, **changes) -> TrainConfig:
    out = copy.copy(cfg)
    for k, v in changes.items():
        setattr(out, k, v)
    out.__post_init__()
    return out
