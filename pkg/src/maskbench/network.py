"""Feed-forward mask estimator trained with AdaGrad plus momentum.

The network maps normalized feature rows to per-frame mask rows: ReLU
hidden layers with inverted dropout, and a sigmoid or linear output
depending on the target's codomain.  Everything here is plain numpy;
parameters live in float32 so checkpoints round-trip bitwise.
"""

import json
import os
import struct
from dataclasses import dataclass

import numpy as np
import scipy.special
from sklearn.base import BaseEstimator, RegressorMixin

from .masks import (
    ComplexMask,
    MaskParams,
    RealMask,
    uncompress_complex_mask,
    uncompress_mask,
)
from .validation import as_2d_float

ACTIVATIONS = ("sigmoid", "linear")

CHECKPOINT_MAGIC = b"MSEP"
CHECKPOINT_VERSION = 1

# sigmoid outputs fit masks bounded in [0, 1]; everything else is linear
OUTPUT_ACTIVATION = {
    "ibm": "sigmoid",
    "irm": "sigmoid",
    "psm": "linear",
    "orm": "linear",
    "cirm": "linear",
}


class TrainingDivergedError(RuntimeError):
    """Raised when an epoch produces a non-finite loss."""


def output_activation_for(kind):
    try:
        return OUTPUT_ACTIVATION[kind]
    except KeyError:
        raise ValueError(f"unknown mask kind: {kind!r}") from None


@dataclass(frozen=True)
class ModelConfig:
    layer_dims: tuple
    output_activation: str = "sigmoid"
    dropout_rate: float = 0.2
    seed: int = 0

    def __post_init__(self):
        dims = tuple(int(d) for d in self.layer_dims)
        object.__setattr__(self, "layer_dims", dims)
        if len(dims) < 2:
            raise ValueError("layer_dims needs at least input and output")
        if min(dims) < 1:
            raise ValueError("layer sizes must be positive")
        if self.output_activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation: {self.output_activation!r}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must be in [0, 1)")


@dataclass
class Model:
    config: ModelConfig
    weights: list
    biases: list
    epochs_seen: int = 0
    train_mse: float = float("nan")
    val_mse: float = float("nan")

    def parameters(self):
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def copy_params(self):
        return [p.copy() for p in self.parameters()]

    def set_params_from(self, flat):
        n_layers = len(self.weights)
        for i in range(n_layers):
            self.weights[i] = flat[2 * i].copy()
            self.biases[i] = flat[2 * i + 1].copy()


def init_model(config, dtype=np.float32):
    """Glorot-uniform weights, zero biases, all draws from config.seed."""
    rng = np.random.default_rng(config.seed)
    weights, biases = [], []
    dims = config.layer_dims
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(
            rng.uniform(-limit, limit, size=(fan_in, fan_out)).astype(dtype)
        )
        biases.append(np.zeros(fan_out, dtype=dtype))
    return Model(config=config, weights=weights, biases=biases)


def forward(model, X, train=False, rng=None, dropout_masks=None):
    """Run the network.

    In train mode, inverted dropout follows each hidden ReLU: units are
    kept with probability 1 - dropout_rate and scaled by its inverse, so
    eval mode needs no rescaling.  Masks come from rng unless an explicit
    list is supplied (which makes the pass a deterministic function, the
    form the gradient checks differentiate through).
    """
    dtype = model.weights[0].dtype
    X = np.ascontiguousarray(X, dtype=dtype)
    if X.ndim != 2 or X.shape[1] != model.config.layer_dims[0]:
        raise ValueError(
            f"expected input of shape (n, {model.config.layer_dims[0]}), "
            f"got {X.shape}"
        )
    keep = 1.0 - model.config.dropout_rate
    n_hidden = len(model.weights) - 1
    use_dropout = train and model.config.dropout_rate > 0.0
    if use_dropout and dropout_masks is None:
        if rng is None:
            raise ValueError("train-mode forward needs rng or dropout_masks")
        dropout_masks = []
    inputs, relu_outs, masks = [], [], []
    a = X
    for i in range(n_hidden):
        inputs.append(a)
        h = np.maximum(a @ model.weights[i] + model.biases[i], 0.0)
        relu_outs.append(h)
        if use_dropout:
            if len(dropout_masks) > i:
                m = dropout_masks[i]
            else:
                m = (rng.random(h.shape) < keep).astype(dtype) / dtype.type(keep)
                dropout_masks.append(m)
            masks.append(m)
            a = h * m
        else:
            masks.append(None)
            a = h
    inputs.append(a)
    z = a @ model.weights[-1] + model.biases[-1]
    if model.config.output_activation == "sigmoid":
        out = scipy.special.expit(z)
    else:
        out = z
    cache = {"inputs": inputs, "relu": relu_outs, "masks": masks, "out": out}
    return out, cache


def mse_loss(pred, target):
    diff = np.asarray(pred, dtype=np.float64) - np.asarray(target, dtype=np.float64)
    return float(np.mean(diff * diff))


def backprop(model, cache, target):
    """Exact gradients of the mean-squared error through the cached pass,
    realized dropout masks included.  Returns one gradient per parameter
    in model.parameters() order."""
    out = cache["out"]
    dtype = out.dtype
    target = np.ascontiguousarray(target, dtype=dtype)
    if target.shape != out.shape:
        raise ValueError(f"target shape {target.shape} != output {out.shape}")
    delta = (2.0 / out.size) * (out - target)
    if model.config.output_activation == "sigmoid":
        delta = delta * out * (1.0 - out)
    grads = [None] * (2 * len(model.weights))
    for i in range(len(model.weights) - 1, -1, -1):
        grads[2 * i] = cache["inputs"][i].T @ delta
        grads[2 * i + 1] = delta.sum(axis=0)
        if i > 0:
            delta = delta @ model.weights[i].T
            if cache["masks"][i - 1] is not None:
                delta = delta * cache["masks"][i - 1]
            delta = delta * (cache["relu"][i - 1] > 0)
    return grads


@dataclass
class OptimizerState:
    accum: list
    velocity: list
    learning_rate: float = 0.01
    epsilon: float = 1e-8


def init_optimizer(model, learning_rate=0.01, epsilon=1e-8):
    params = model.parameters()
    return OptimizerState(
        accum=[np.zeros_like(p) for p in params],
        velocity=[np.zeros_like(p) for p in params],
        learning_rate=learning_rate,
        epsilon=epsilon,
    )


def momentum_for_epoch(epoch):
    """0.5 through epoch 5, 0.9 afterwards (epochs count from 1)."""
    return 0.5 if epoch <= 5 else 0.9


def adagrad_momentum_step(model, grads, state, momentum):
    """Accumulate squared gradients, scale the step per-coordinate, then
    apply momentum.  The squared-gradient accumulator never decreases."""
    params = model.parameters()
    for p, g, G, v in zip(params, grads, state.accum, state.velocity):
        G += g * g
        step = -state.learning_rate * g / (np.sqrt(G) + state.epsilon)
        v *= momentum
        v += step
        p += v


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 256
    learning_rate: float = 0.01
    epochs: int = 30
    validation_fraction: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1 or self.epochs < 0:
            raise ValueError("batch_size must be >= 1 and epochs >= 0")
        if not 0.0 <= self.validation_fraction < 1.0:
            raise ValueError("validation_fraction must be in [0, 1)")
        if self.learning_rate <= 0.0:
            raise ValueError("learning_rate must be positive")


def _predict_batched(model, X, chunk=8192):
    outs = []
    for start in range(0, X.shape[0], chunk):
        out, _ = forward(model, X[start : start + chunk], train=False)
        outs.append(out)
    return np.vstack(outs)


def train_network(model, X, Y, train_cfg=TrainConfig()):
    """Mini-batch training with a held-out validation slice.

    The same generator drives the validation split, the per-epoch
    shuffles, and the dropout draws, so a (model seed, train seed) pair
    fixes every arithmetic operation of the run.  Returns the model at
    the best validation epoch (the final epoch when validation is off)
    and the per-epoch history.
    """
    dtype = model.weights[0].dtype
    X = np.ascontiguousarray(X, dtype=dtype)
    Y = np.ascontiguousarray(Y, dtype=dtype)
    if X.shape[0] != Y.shape[0]:
        raise ValueError(f"X has {X.shape[0]} rows but Y has {Y.shape[0]}")
    if Y.ndim != 2 or Y.shape[1] != model.config.layer_dims[-1]:
        raise ValueError(
            f"expected targets of shape (n, {model.config.layer_dims[-1]}), "
            f"got {Y.shape}"
        )
    rng = np.random.default_rng(train_cfg.seed)
    n = X.shape[0]
    n_val = int(round(train_cfg.validation_fraction * n))
    if n_val > 0:
        perm = rng.permutation(n)
        val_idx, train_idx = perm[:n_val], perm[n_val:]
    else:
        val_idx, train_idx = np.array([], dtype=int), np.arange(n)
    if train_idx.size == 0:
        raise ValueError("validation split leaves no training rows")

    state = init_optimizer(model, train_cfg.learning_rate)
    history = []
    best_val = np.inf
    best_snapshot = None
    best_epoch = 0
    for epoch in range(1, train_cfg.epochs + 1):
        mu = momentum_for_epoch(epoch)
        order = train_idx[rng.permutation(train_idx.size)]
        sq_sum = 0.0
        count = 0
        for start in range(0, order.size, train_cfg.batch_size):
            idx = order[start : start + train_cfg.batch_size]
            out, cache = forward(model, X[idx], train=True, rng=rng)
            diff = out.astype(np.float64) - Y[idx].astype(np.float64)
            sq_sum += float(np.sum(diff * diff))
            count += out.size
            grads = backprop(model, cache, Y[idx])
            adagrad_momentum_step(model, grads, state, mu)
        train_mse = sq_sum / count
        val_mse = float("nan")
        if n_val > 0:
            val_mse = mse_loss(_predict_batched(model, X[val_idx]), Y[val_idx])
        if not np.isfinite(train_mse) or (n_val > 0 and not np.isfinite(val_mse)):
            raise TrainingDivergedError(
                f"non-finite loss at epoch {epoch}: "
                f"train={train_mse!r} val={val_mse!r}"
            )
        model.epochs_seen = epoch
        model.train_mse = train_mse
        model.val_mse = val_mse
        history.append({
            "epoch": epoch,
            "train_mse": train_mse,
            "val_mse": val_mse,
            "momentum": mu,
            "learning_rate": train_cfg.learning_rate,
        })
        if n_val > 0 and val_mse < best_val:
            best_val = val_mse
            best_snapshot = model.copy_params()
            best_epoch = epoch
    if n_val > 0 and best_snapshot is not None:
        model.set_params_from(best_snapshot)
        model.epochs_seen = best_epoch
        model.train_mse = history[best_epoch - 1]["train_mse"]
        model.val_mse = best_val
    return model, history


# --- checkpoint format ---------------------------------------------------
#
# magic "MSEP" | uint32 version | uint32 json length | config JSON |
# per layer: float32-LE row-major weights then biases.

_U32 = struct.Struct("<I")


def save_checkpoint(path, model):
    header = {
        "layer_dims": list(model.config.layer_dims),
        "output_activation": model.config.output_activation,
        "dropout_rate": model.config.dropout_rate,
        "seed": model.config.seed,
        "epochs_seen": model.epochs_seen,
        "train_mse": model.train_mse,
        "val_mse": model.val_mse,
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(_U32.pack(CHECKPOINT_VERSION))
        fh.write(_U32.pack(len(blob)))
        fh.write(blob)
        for w, b in zip(model.weights, model.biases):
            fh.write(np.ascontiguousarray(w, dtype="<f4").tobytes())
            fh.write(np.ascontiguousarray(b, dtype="<f4").tobytes())


def _read_exact(fh, n, path):
    data = fh.read(n)
    if len(data) < n:
        raise ValueError(f"{path}: truncated checkpoint")
    return data


def load_checkpoint(path):
    with open(path, "rb") as fh:
        if _read_exact(fh, 4, path) != CHECKPOINT_MAGIC:
            raise ValueError(f"{path}: not a model checkpoint")
        (version,) = _U32.unpack(_read_exact(fh, 4, path))
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {version}")
        (blob_len,) = _U32.unpack(_read_exact(fh, 4, path))
        header = json.loads(_read_exact(fh, blob_len, path).decode("utf-8"))
        config = ModelConfig(
            layer_dims=tuple(header["layer_dims"]),
            output_activation=header["output_activation"],
            dropout_rate=header["dropout_rate"],
            seed=header["seed"],
        )
        weights, biases = [], []
        dims = config.layer_dims
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            w = np.frombuffer(
                _read_exact(fh, 4 * fan_in * fan_out, path), dtype="<f4"
            ).reshape(fan_in, fan_out)
            b = np.frombuffer(_read_exact(fh, 4 * fan_out, path), dtype="<f4")
            weights.append(w.copy())
            biases.append(b.copy())
    model = Model(config=config, weights=weights, biases=biases)
    model.epochs_seen = int(header.get("epochs_seen", 0))
    model.train_mse = float(header.get("train_mse", float("nan")))
    model.val_mse = float(header.get("val_mse", float("nan")))
    return model


def target_dim_for(kind, n_bins):
    """Output width a model must have to predict this mask kind."""
    if kind == "cirm":
        return 2 * n_bins
    if kind in OUTPUT_ACTIVATION:
        return n_bins
    raise ValueError(f"unknown mask kind: {kind!r}")


def infer_mask(model, features, kind, params=MaskParams(), hard_binary=True):
    """Predict a mask from normalized features and undo any target-space
    transform, returning a mask ready for application.

    Binary predictions are thresholded at 0.5 unless hard_binary is off;
    compressed targets are mapped back through the inverse tanh.
    """
    expected = output_activation_for(kind)
    if model.config.output_activation != expected:
        raise ValueError(
            f"model output activation {model.config.output_activation!r} does "
            f"not match kind {kind!r} (needs {expected!r})"
        )
    out = _predict_batched(model, as_2d_float(features)).astype(np.float64)
    if kind == "cirm":
        if out.shape[1] % 2 != 0:
            raise ValueError("complex mask model must have an even output width")
        half = out.shape[1] // 2
        compressed = ComplexMask(out[:, :half] + 1j * out[:, half:], compressed=True)
        return uncompress_complex_mask(compressed, params)
    if kind == "ibm":
        values = (out > 0.5).astype(np.float64) if hard_binary else np.clip(out, 0, 1)
        return RealMask(values, "ibm")
    if kind == "irm":
        return RealMask(np.clip(out, 0.0, 1.0), "irm")
    if kind == "psm":
        return RealMask(np.clip(out, -params.K, params.K), "psm")
    if kind == "orm":
        return uncompress_mask(RealMask(out, "orm_compressed"), params)
    raise ValueError(f"unknown mask kind: {kind!r}")


class MlpMaskRegressor(BaseEstimator, RegressorMixin):
    """Estimator-style wrapper around init_model plus train_network."""

    def __init__(self, hidden_layers=3, hidden_units=1024,
                 output_activation="sigmoid", dropout_rate=0.2,
                 learning_rate=0.01, batch_size=256, epochs=30,
                 validation_fraction=0.1, seed=0):
        self.hidden_layers = hidden_layers
        self.hidden_units = hidden_units
        self.output_activation = output_activation
        self.dropout_rate = dropout_rate
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.epochs = epochs
        self.validation_fraction = validation_fraction
        self.seed = seed

    def fit(self, X, y):
        X = as_2d_float(X)
        y = as_2d_float(y)
        dims = (
            (X.shape[1],)
            + (self.hidden_units,) * self.hidden_layers
            + (y.shape[1],)
        )
        config = ModelConfig(
            layer_dims=dims,
            output_activation=self.output_activation,
            dropout_rate=self.dropout_rate,
            seed=self.seed,
        )
        model = init_model(config)
        self.model_, self.history_ = train_network(
            model, X, y,
            TrainConfig(
                batch_size=self.batch_size,
                learning_rate=self.learning_rate,
                epochs=self.epochs,
                validation_fraction=self.validation_fraction,
                seed=self.seed,
            ),
        )
        return self

    def predict(self, X):
        if not hasattr(self, "model_"):
            raise ValueError("this MlpMaskRegressor instance is not fitted yet")
        return _predict_batched(self.model_, as_2d_float(X)).astype(np.float64)
