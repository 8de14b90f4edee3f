"""Feedforward softmax classifier trained from scratch with Adam.

Hidden layers use ReLU with inverted dropout (survivors scaled at train
time so evaluation is a plain forward pass).  The head is softmax over the
three aridity classes with sparse categorical cross-entropy; the loss head
gradient at the logits is (p_hat - onehot).  All math is float64.

Labels are 1/2/3 at the API surface (matching the aridity class codes) and
0-based only inside the loss head.
"""

import binascii
import json
import logging
import struct
from dataclasses import dataclass

import numpy as np

from .errors import (
    DomainError,
    IncompatibleCheckpointError,
    IntegrityError,
    ShapeError,
    UsageError,
    ValidationError,
)

log = logging.getLogger(__name__)

CHECKPOINT_MAGIC = b"ARIDNET"
CHECKPOINT_VERSION = 1

LOSS_PROB_FLOOR = 1e-12
N_CLASSES = 3


@dataclass(frozen=True)
class NetworkConfig:
    """Layer widths M_1..M_L (M_L = 3), dropout rate, and the init seed."""

    layer_widths: tuple
    dropout_rate: float = 0.5
    seed: int = 0

    def __post_init__(self):
        widths = tuple(int(w) for w in self.layer_widths)
        object.__setattr__(self, "layer_widths", widths)
        if len(widths) < 2:
            raise ValidationError("a network needs at least input and output layers")
        if widths[-1] != N_CLASSES:
            raise ValidationError(f"output layer must have {N_CLASSES} units")
        if any(w < 1 for w in widths):
            raise ValidationError("all layer widths must be >= 1")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValidationError("dropout_rate must lie in [0, 1)")
        if self.seed < 0:
            raise ValidationError("seed must be an unsigned integer")


@dataclass
class LayerParams:
    weights: np.ndarray  # (M_l, M_{l-1})
    biases: np.ndarray   # (M_l,)


@dataclass
class Network:
    config: NetworkConfig
    layers: list
    standardizer: tuple = None  # (mean, sd) arrays over leading covariates

    @property
    def input_dim(self) -> int:
        return self.config.layer_widths[0]


@dataclass
class AdamState:
    """Adam moment accumulators shaped like the parameters."""

    step: int
    m: list
    v: list
    learning_rate: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    @classmethod
    def for_network(cls, net: Network, learning_rate=0.001, beta1=0.9,
                    beta2=0.999, epsilon=1e-8) -> "AdamState":
        zeros = lambda lp: (np.zeros_like(lp.weights), np.zeros_like(lp.biases))
        return cls(
            step=0,
            m=[zeros(lp) for lp in net.layers],
            v=[zeros(lp) for lp in net.layers],
            learning_rate=learning_rate, beta1=beta1, beta2=beta2, epsilon=epsilon,
        )


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    batch_size: int = 1024
    shuffle_seed: int = 0
    early_stop_patience: int = 10  # None disables early stopping
    validation_fraction: float = 0.1
    learning_rate: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    def __post_init__(self):
        if self.epochs < 1:
            raise ValidationError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValidationError("batch_size must be >= 1")
        if not 0.0 <= self.validation_fraction < 1.0:
            raise ValidationError("validation_fraction must lie in [0, 1)")
        if self.early_stop_patience is not None and self.early_stop_patience < 1:
            raise ValidationError("early_stop_patience must be >= 1 or None")


def init(config: NetworkConfig) -> Network:
    """He-initialized network: W ~ N(0, 2/fan_in), biases zero."""
    rng = np.random.default_rng(config.seed)
    layers = []
    for fan_in, fan_out in zip(config.layer_widths[:-1], config.layer_widths[1:]):
        w = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_out, fan_in))
        layers.append(LayerParams(weights=w, biases=np.zeros(fan_out)))
    return Network(config=config, layers=layers)


def _as_batch(x, input_dim):
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != input_dim:
        raise ShapeError(
            f"input width {x.shape[-1]} does not match network input width {input_dim}"
        )
    return x, single


def forward(net: Network, x, mode: str = "eval", rng=None):
    """Run the network, returning (logits, cache).

    In ``train`` mode each hidden activation is zeroed independently with
    probability dropout_rate and survivors are scaled by 1/(1 - rate); the
    cache keeps pre-activations, activations, and the dropout multipliers
    for backward.  ``eval`` mode applies no dropout and no scaling.
    """
    if mode not in ("train", "eval"):
        raise UsageError(f"mode must be 'train' or 'eval', got {mode!r}")
    q = net.config.dropout_rate
    if mode == "train" and q > 0 and rng is None:
        raise UsageError("train-mode forward with dropout needs an rng")
    x, single = _as_batch(x, net.input_dim)

    acts = [x]
    zs = []
    drops = []
    a = x
    for li, lp in enumerate(net.layers):
        z = a @ lp.weights.T + lp.biases
        zs.append(z)
        if li == len(net.layers) - 1:
            a = z  # logits: no activation, no dropout
        else:
            a = np.maximum(z, 0.0)
            if mode == "train" and q > 0:
                drop = (rng.random(a.shape) >= q) / (1.0 - q)
            else:
                drop = None
            if drop is not None:
                a = a * drop
            drops.append(drop)
        acts.append(a)
    cache = {"acts": acts, "zs": zs, "drops": drops, "mode": mode}
    logits = acts[-1][0] if single else acts[-1]
    cache["single"] = single
    return logits, cache


def softmax(logits):
    """Max-shifted softmax over the last axis; rows sum to 1."""
    logits = np.asarray(logits, dtype=np.float64)
    if not np.all(np.isfinite(logits)):
        raise DomainError("softmax requires finite logits")
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def _labels_to_index(labels):
    labels = np.asarray(labels)
    if labels.ndim == 0:
        labels = labels[None]
    if np.any((labels < 1) | (labels > N_CLASSES)):
        raise ValidationError(f"labels must be in 1..{N_CLASSES}")
    return labels.astype(int) - 1


def scce_loss(probs, labels) -> float:
    """Mean over examples of -log(max(p_label, 1e-12))."""
    probs = np.asarray(probs, dtype=np.float64)
    if probs.ndim == 1:
        probs = probs[None, :]
    idx = _labels_to_index(labels)
    picked = probs[np.arange(probs.shape[0]), idx]
    return float(-np.log(np.maximum(picked, LOSS_PROB_FLOOR)).mean())


def backward(net: Network, cache, labels):
    """Exact gradients of scce_loss(softmax(forward(x))) wrt every parameter.

    Gradients are means over the cached batch.  Returns one (dW, db) pair
    per layer, front to back.
    """
    if cache.get("mode") != "train":
        raise UsageError("backward needs a cache from a train-mode forward")
    acts, zs, drops = cache["acts"], cache["zs"], cache["drops"]
    n = acts[0].shape[0]
    probs = softmax(acts[-1])
    idx = _labels_to_index(labels)
    if idx.shape[0] != n:
        raise ShapeError(f"{idx.shape[0]} labels for a cached batch of {n}")

    delta = probs.copy()
    delta[np.arange(n), idx] -= 1.0
    delta /= n  # mean-loss convention

    grads = [None] * len(net.layers)
    for li in range(len(net.layers) - 1, -1, -1):
        a_prev = acts[li]
        grads[li] = (delta.T @ a_prev, delta.sum(axis=0))
        if li > 0:
            delta = delta @ net.layers[li].weights
            if drops[li - 1] is not None:
                delta = delta * drops[li - 1]
            delta = delta * (zs[li - 1] > 0.0)
    return grads


def adam_step(net: Network, grads, state: AdamState):
    """One Adam update; mutates the network and state in place."""
    if len(grads) != len(net.layers):
        raise UsageError("gradient structure does not match the network")
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    lr, eps = state.learning_rate, state.epsilon
    for lp, (gw, gb), m_pair, v_pair in zip(net.layers, grads, state.m, state.v):
        if gw.shape != lp.weights.shape or gb.shape != lp.biases.shape:
            raise UsageError("gradient shapes do not match the parameters")
        for param, g, m, v in ((lp.weights, gw, m_pair[0], v_pair[0]),
                               (lp.biases, gb, m_pair[1], v_pair[1])):
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            m_hat = m / (1.0 - b1**t)
            v_hat = v / (1.0 - b2**t)
            param -= lr * m_hat / (np.sqrt(v_hat) + eps)
    return net, state


def fit_standardizer(net: Network, x, n_covariates: int) -> None:
    """Fit a per-covariate (mean, sd) transform on the leading columns."""
    if n_covariates == 0:
        net.standardizer = None
        return
    x = np.asarray(x, dtype=np.float64)
    cols = x[:, :n_covariates]
    mean = cols.mean(axis=0)
    sd = cols.std(axis=0)
    sd = np.where(sd > 0, sd, 1.0)
    net.standardizer = (mean, sd)


def apply_standardizer(net: Network, x):
    if net.standardizer is None:
        return np.asarray(x, dtype=np.float64)
    mean, sd = net.standardizer
    x = np.array(x, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    p = mean.size
    x[:, :p] = (x[:, :p] - mean) / sd
    return x[0] if single else x


def train(net: Network, features, labels, tcfg: TrainConfig,
          state: AdamState = None, initial_epoch: int = 0):
    """Mini-batch Adam over shuffled data.

    Applies the network's stored covariate standardizer to the raw
    features, holds out the trailing ``validation_fraction`` of one initial
    shuffle for early stopping (the best-validation parameters are restored
    when it triggers), and records per-epoch mean losses.  Returns
    (net, history, state); the network and state are mutated in place.
    """
    x = apply_standardizer(net, features)
    x, _ = _as_batch(x, net.input_dim)
    y = np.asarray(labels)
    if y.ndim != 1 or y.shape[0] != x.shape[0]:
        raise ShapeError("features and labels must align one row per example")
    if x.shape[0] == 0:
        raise UsageError("cannot train on an empty dataset")
    present = set(np.unique(y).tolist())
    absent = [c for c in (1, 2, 3) if c not in present]
    if absent:
        log.warning("training data has no examples of class(es) %s", absent)

    rng = np.random.default_rng(tcfg.shuffle_seed)
    order = rng.permutation(x.shape[0])
    n_val = int(round(x.shape[0] * tcfg.validation_fraction))
    n_val = min(n_val, x.shape[0] - 1)
    if n_val > 0:
        val_idx, train_idx = order[-n_val:], order[:-n_val]
    else:
        val_idx, train_idx = None, order
    x_train, y_train = x[train_idx], y[train_idx]

    if state is None:
        state = AdamState.for_network(
            net, learning_rate=tcfg.learning_rate, beta1=tcfg.beta1,
            beta2=tcfg.beta2, epsilon=tcfg.epsilon,
        )

    history = []
    best_val = np.inf
    best_params = None
    stale = 0
    n_train = x_train.shape[0]
    for e in range(tcfg.epochs):
        epoch = initial_epoch + e + 1
        perm = rng.permutation(n_train)
        loss_sum = 0.0
        for start in range(0, n_train, tcfg.batch_size):
            idx = perm[start:start + tcfg.batch_size]
            xb, yb = x_train[idx], y_train[idx]
            logits, cache = forward(net, xb, mode="train", rng=rng)
            probs = softmax(logits)
            loss_sum += scce_loss(probs, yb) * xb.shape[0]
            grads = backward(net, cache, yb)
            adam_step(net, grads, state)
        train_loss = loss_sum / n_train

        val_loss = None
        if val_idx is not None:
            val_logits, _ = forward(net, x[val_idx], mode="eval")
            val_loss = scce_loss(softmax(val_logits), y[val_idx])
        history.append({"epoch": epoch, "train_loss": train_loss, "val_loss": val_loss})

        if val_loss is not None and tcfg.early_stop_patience is not None:
            if val_loss < best_val:
                best_val = val_loss
                best_params = [
                    (lp.weights.copy(), lp.biases.copy()) for lp in net.layers
                ]
                stale = 0
            else:
                stale += 1
                if stale >= tcfg.early_stop_patience:
                    log.info("early stop at epoch %d (best val %.6f)", epoch, best_val)
                    break
    if best_params is not None:
        for lp, (w, b) in zip(net.layers, best_params):
            lp.weights = w
            lp.biases = b
    return net, history, state


def predict_probs(net: Network, features) -> np.ndarray:
    """Class probabilities in eval mode; rows sum to 1 within 1e-12."""
    x = apply_standardizer(net, features)
    logits, _ = forward(net, x, mode="eval")
    return softmax(logits)


# ---------------------------------------------------------------------------
# Checkpoints: magic + version byte, one JSON metadata block, raw little-
# endian float64 parameter (and optional Adam) arrays, then a CRC32.
# A JSON sidecar at <path>.json summarizes the architecture for humans.
# ---------------------------------------------------------------------------


def _array_bytes(arr) -> bytes:
    return np.ascontiguousarray(arr, dtype="<f8").tobytes()


def save_checkpoint(net: Network, path, state: AdamState = None,
                    extra: dict = None) -> None:
    meta = {
        "layer_widths": list(net.config.layer_widths),
        "dropout_rate": net.config.dropout_rate,
        "seed": net.config.seed,
        "standardizer": None if net.standardizer is None else {
            "mean": net.standardizer[0].tolist(),
            "sd": net.standardizer[1].tolist(),
        },
        "adam": None if state is None else {
            "step": state.step,
            "learning_rate": state.learning_rate,
            "beta1": state.beta1,
            "beta2": state.beta2,
            "epsilon": state.epsilon,
        },
        "extra": extra or {},
    }
    blob = json.dumps(meta, sort_keys=True).encode("utf-8")
    payload = bytearray()
    payload += CHECKPOINT_MAGIC
    payload += bytes([CHECKPOINT_VERSION])
    payload += struct.pack("<I", len(blob))
    payload += blob
    for lp in net.layers:
        payload += _array_bytes(lp.weights)
        payload += _array_bytes(lp.biases)
    if state is not None:
        for pairs in (state.m, state.v):
            for mw, mb in pairs:
                payload += _array_bytes(mw)
                payload += _array_bytes(mb)
    crc = binascii.crc32(bytes(payload)) & 0xFFFFFFFF
    with open(path, "wb") as fh:
        fh.write(payload)
        fh.write(struct.pack("<I", crc))

    sidecar = {
        "architecture": {
            "layer_widths": list(net.config.layer_widths),
            "dropout_rate": net.config.dropout_rate,
            "parameters": int(sum(lp.weights.size + lp.biases.size for lp in net.layers)),
        },
        "standardized_covariates": net.standardizer is not None,
        "adam_step": None if state is None else state.step,
        "extra": extra or {},
    }
    with open(str(path) + ".json", "w") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_checkpoint(path):
    """Read a checkpoint; returns (net, adam_state_or_None, extra_dict)."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < len(CHECKPOINT_MAGIC) + 1:
        raise IntegrityError(f"{path}: not a checkpoint (too short)")
    if raw[:len(CHECKPOINT_MAGIC)] != CHECKPOINT_MAGIC:
        raise IncompatibleCheckpointError(f"{path}: bad magic, not an ARIDNET checkpoint")
    version = raw[len(CHECKPOINT_MAGIC)]
    if version != CHECKPOINT_VERSION:
        raise IncompatibleCheckpointError(
            f"{path}: checkpoint version {version} is incompatible with "
            f"reader version {CHECKPOINT_VERSION}"
        )
    if len(raw) < len(CHECKPOINT_MAGIC) + 1 + 4 + 4:
        raise IntegrityError(f"{path}: truncated checkpoint")
    body, crc_stored = raw[:-4], struct.unpack("<I", raw[-4:])[0]
    if binascii.crc32(body) & 0xFFFFFFFF != crc_stored:
        raise IntegrityError(f"{path}: checksum mismatch, file corrupt or truncated")

    off = len(CHECKPOINT_MAGIC) + 1
    (meta_len,) = struct.unpack_from("<I", body, off)
    off += 4
    if off + meta_len > len(body):
        raise IntegrityError(f"{path}: truncated metadata block")
    meta = json.loads(body[off:off + meta_len].decode("utf-8"))
    off += meta_len

    config = NetworkConfig(
        layer_widths=tuple(meta["layer_widths"]),
        dropout_rate=meta["dropout_rate"],
        seed=meta["seed"],
    )

    def take(shape):
        nonlocal off
        n = int(np.prod(shape)) * 8
        if off + n > len(body):
            raise IntegrityError(f"{path}: truncated parameter block")
        arr = np.frombuffer(body[off:off + n], dtype="<f8").reshape(shape).copy()
        off += n
        return arr

    widths = config.layer_widths
    layers = [
        LayerParams(weights=take((widths[i + 1], widths[i])), biases=take((widths[i + 1],)))
        for i in range(len(widths) - 1)
    ]
    net = Network(config=config, layers=layers)
    if meta["standardizer"] is not None:
        net.standardizer = (
            np.asarray(meta["standardizer"]["mean"], dtype=np.float64),
            np.asarray(meta["standardizer"]["sd"], dtype=np.float64),
        )

    state = None
    if meta["adam"] is not None:
        m = [(take((widths[i + 1], widths[i])), take((widths[i + 1],)))
             for i in range(len(widths) - 1)]
        v = [(take((widths[i + 1], widths[i])), take((widths[i + 1],)))
             for i in range(len(widths) - 1)]
        state = AdamState(
            step=meta["adam"]["step"], m=m, v=v,
            learning_rate=meta["adam"]["learning_rate"],
            beta1=meta["adam"]["beta1"], beta2=meta["adam"]["beta2"],
            epsilon=meta["adam"]["epsilon"],
        )
    if off != len(body):
        raise IntegrityError(f"{path}: {len(body) - off} unexpected trailing bytes")
    return net, state, meta.get("extra", {})
