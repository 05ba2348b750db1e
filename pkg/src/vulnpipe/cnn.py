"""Small convolutional classifier over receptive-field tensors.

Architecture: one conv layer (f filters, each spanning a whole k x d field,
sliding across the w field axis), ReLU, flatten, one dense layer producing
binary logits (secure=0, insecure=1) or four logits when the vulnerability
type head is enabled.  Everything is float64 and trained with plain SGD.

Gradient bookkeeping is sum-over-batch: backward() returns gradients of the
summed cross-entropy (duplicating a sample exactly doubles its
contribution) and each SGD step applies the summed gradient at the
configured learning rate.

Training is single-threaded and fully seeded: one seed fixes the parameter
init and the per-epoch shuffles, making history and weights bit-reproducible
for a given kernel backend.
"""

from __future__ import annotations

import base64
import json
import warnings
from dataclasses import dataclass

import numpy as np

from . import kernels
from .patchy_san import EncoderConfig, FieldTensor

CLASS_NAMES = ("secure", "insecure")
TYPE_CLASS_NAMES = ("secure", "buffer_overflow", "null_deref", "memory_leak")


class ShapeMismatch(Exception):
    """Input tensor shape inconsistent with the model parameters."""


class CheckpointError(Exception):
    """Checkpoint file malformed or trained against a different encoder config."""


class DegenerateDataWarning(UserWarning):
    """A training or validation split contains a single class."""


@dataclass
class ModelParams:
    conv_w: np.ndarray  # (f, k*d)
    conv_b: np.ndarray  # (f,)
    dense_w: np.ndarray  # (f*w, n_classes)
    dense_b: np.ndarray  # (n_classes,)

    @property
    def n_filters(self) -> int:
        return self.conv_w.shape[0]

    @property
    def n_classes(self) -> int:
        return self.dense_b.shape[0]

    def copy(self) -> "ModelParams":
        return ModelParams(self.conv_w.copy(), self.conv_b.copy(),
                           self.dense_w.copy(), self.dense_b.copy())

    def assert_finite(self):
        for arr in (self.conv_w, self.conv_b, self.dense_w, self.dense_b):
            if not np.isfinite(arr).all():
                raise FloatingPointError("non-finite parameter after update")


@dataclass
class TrainConfig:
    learning_rate: float = 0.001
    max_epochs: int = 100
    batch_size: int = 16
    patience: int = 10
    seed: int = 0
    loss: str = "cross_entropy"

    def validate(self):
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")
        if self.patience > self.max_epochs:
            raise ValueError("patience cannot exceed max epochs")
        if self.loss != "cross_entropy":
            raise ValueError(f"unsupported loss {self.loss!r}")

    def to_dict(self) -> dict:
        return {
            "learning_rate": self.learning_rate,
            "max_epochs": self.max_epochs,
            "batch_size": self.batch_size,
            "patience": self.patience,
            "seed": self.seed,
            "loss": self.loss,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        cfg = cls(
            learning_rate=float(d.get("learning_rate", 0.001)),
            max_epochs=int(d.get("max_epochs", 100)),
            batch_size=int(d.get("batch_size", 16)),
            patience=int(d.get("patience", 10)),
            seed=int(d.get("seed", 0)),
            loss=str(d.get("loss", "cross_entropy")),
        )
        cfg.validate()
        return cfg


def init_params(encoder: EncoderConfig, n_filters: int = 16, n_classes: int = 2,
                seed: int = 0) -> ModelParams:
    """Glorot-uniform init, fully determined by the seed."""
    rng = np.random.default_rng(seed)
    q = encoder.k * encoder.d
    lim_conv = np.sqrt(6.0 / (q + 1))
    conv_w = rng.uniform(-lim_conv, lim_conv, size=(n_filters, q))
    conv_b = np.zeros(n_filters)
    flat = n_filters * encoder.w
    lim_dense = np.sqrt(6.0 / (flat + n_classes))
    dense_w = rng.uniform(-lim_dense, lim_dense, size=(flat, n_classes))
    dense_b = np.zeros(n_classes)
    return ModelParams(conv_w, conv_b, dense_w, dense_b)


def _as_batch(x) -> np.ndarray:
    if isinstance(x, FieldTensor):
        return x.data[None, :, :, :]
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 3:
        return arr[None, :, :, :]
    if arr.ndim == 4:
        return arr
    raise ShapeMismatch(f"expected (w,k,d) or (n,w,k,d), got shape {arr.shape}")


def forward(params: ModelParams, tensor) -> tuple[np.ndarray, dict]:
    """Logits plus cached activations for backward().

    Accepts a FieldTensor, a (w,k,d) array, or an (n,w,k,d) batch; logits
    come back with the matching rank.
    """
    x = _as_batch(tensor)
    n, w, k, d = x.shape
    f, q = params.conv_w.shape
    if q != k * d:
        raise ShapeMismatch(f"conv filters expect field size {q}, tensor has {k*d}")
    if params.dense_w.shape[0] != f * w:
        raise ShapeMismatch(
            f"dense layer expects {params.dense_w.shape[0]} inputs, conv yields {f*w}"
        )
    x2 = np.ascontiguousarray(x.reshape(n, w, k * d))
    pre = kernels.conv_forward(x2, params.conv_w, params.conv_b)  # (n, w, f)
    act = np.maximum(pre, 0.0)
    flat = act.reshape(n, w * f)
    # einsum without optimize keeps the reduction order independent of the
    # batch row count (BLAS does not), so per-sample values never depend on
    # their batch mates.
    logits = np.einsum("nf,fc->nc", flat, params.dense_w, optimize=False) + params.dense_b
    cache = {"x2": x2, "pre": pre, "flat": flat, "logits": logits}
    single = isinstance(tensor, FieldTensor) or (np.asarray(tensor).ndim == 3)
    if single:
        return logits[0], cache
    return logits, cache


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def cross_entropy(logits: np.ndarray, targets: np.ndarray) -> float:
    """Summed cross-entropy of a batch of logits against integer targets."""
    logits = np.atleast_2d(logits)
    targets = np.atleast_1d(targets)
    z = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(z).sum(axis=1))
    picked = z[np.arange(len(targets)), targets]
    return float((log_norm - picked).sum())


@dataclass
class Gradients:
    conv_w: np.ndarray
    conv_b: np.ndarray
    dense_w: np.ndarray
    dense_b: np.ndarray


def backward(params: ModelParams, cache: dict, targets) -> Gradients:
    """Exact gradients of the summed batch cross-entropy."""
    targets = np.atleast_1d(np.asarray(targets, dtype=np.int64))
    logits = cache["logits"]
    n = logits.shape[0]
    if len(targets) != n:
        raise ShapeMismatch(f"{n} cached samples but {len(targets)} targets")
    probs = softmax(logits)
    dlogits = probs.copy()
    dlogits[np.arange(n), targets] -= 1.0  # d(sum CE)/dlogits
    dense_dw = cache["flat"].T @ dlogits
    dense_db = dlogits.sum(axis=0)
    dflat = dlogits @ params.dense_w.T
    f = params.n_filters
    w = cache["pre"].shape[1]
    dact = dflat.reshape(n, w, f)
    dpre = dact * (cache["pre"] > 0.0)
    conv_dw, conv_db = kernels.conv_param_grads(cache["x2"], dpre)
    return Gradients(conv_dw, conv_db, dense_dw, dense_db)


def predict(params: ModelParams, tensor) -> tuple[int, float]:
    """(class index, probability); an exact binary tie fails closed to insecure."""
    logits, _ = forward(params, tensor)
    logits = np.atleast_2d(logits)[0]
    probs = softmax(logits)
    if params.n_classes == 2 and logits[0] == logits[1]:
        return 1, float(probs[1])
    idx = int(np.argmax(logits))
    return idx, float(probs[idx])


def predict_batch(params: ModelParams, x: np.ndarray) -> np.ndarray:
    logits, _ = forward(params, x)
    logits = np.atleast_2d(logits)
    labels = np.argmax(logits, axis=1)
    if params.n_classes == 2:
        ties = logits[:, 0] == logits[:, 1]
        labels[ties] = 1
    return labels


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    val_loss: float


def _mean_loss(params: ModelParams, x: np.ndarray, y: np.ndarray) -> float:
    logits, _ = forward(params, x)
    return cross_entropy(np.atleast_2d(logits), y) / len(y)


def train(
    params: ModelParams,
    train_data: tuple[np.ndarray, np.ndarray],
    val_data: tuple[np.ndarray, np.ndarray],
    cfg: TrainConfig,
) -> tuple[ModelParams, list[EpochStats]]:
    """SGD with seeded shuffling and patience-based early stopping.

    Keeps the best-validation-loss parameters seen; a patience of 0 stops
    after exactly one epoch.  Warns (and proceeds) when a split holds a
    single class.
    """
    cfg.validate()
    x_train, y_train = train_data
    x_val, y_val = val_data
    if len(x_train) == 0 or len(x_val) == 0:
        raise ValueError("empty training or validation split")
    for name, labels in (("training", y_train), ("validation", y_val)):
        if len(set(int(v) for v in labels)) < 2:
            warnings.warn(f"{name} split contains a single class", DegenerateDataWarning)

    rng = np.random.default_rng(cfg.seed)
    y_train = np.asarray(y_train, dtype=np.int64)
    y_val = np.asarray(y_val, dtype=np.int64)
    n = len(y_train)
    params = params.copy()  # leave the caller's init untouched
    best = params.copy()
    best_val = np.inf
    bad_epochs = 0
    history: list[EpochStats] = []

    for epoch in range(1, cfg.max_epochs + 1):
        perm = rng.permutation(n)
        epoch_loss = 0.0
        for lo in range(0, n, cfg.batch_size):
            idx = perm[lo : lo + cfg.batch_size]
            xb, yb = x_train[idx], y_train[idx]
            logits, cache = forward(params, xb)
            epoch_loss += cross_entropy(np.atleast_2d(logits), yb)
            grads = backward(params, cache, yb)
            lr = cfg.learning_rate
            params.conv_w -= lr * grads.conv_w
            params.conv_b -= lr * grads.conv_b
            params.dense_w -= lr * grads.dense_w
            params.dense_b -= lr * grads.dense_b
            params.assert_finite()
        val_loss = _mean_loss(params, x_val, y_val)
        history.append(EpochStats(epoch, epoch_loss / n, val_loss))
        if val_loss < best_val:
            best_val = val_loss
            best = params.copy()
            bad_epochs = 0
        else:
            bad_epochs += 1
        if bad_epochs >= cfg.patience:
            break
    return best, history


# --------------------------------------------------------------------------
# Checkpoint format
# --------------------------------------------------------------------------

def _encode_array(arr: np.ndarray) -> dict:
    return {
        "shape": list(arr.shape),
        "data": base64.b64encode(arr.astype("<f8").tobytes()).decode("ascii"),
    }


def _decode_array(rec: dict) -> np.ndarray:
    raw = base64.b64decode(rec["data"])
    return np.frombuffer(raw, dtype="<f8").reshape(rec["shape"]).copy()


def checkpoint_to_json(params: ModelParams, encoder: EncoderConfig) -> str:
    doc = {
        "encoder": encoder.to_dict(),
        "params": {
            "conv_w": _encode_array(params.conv_w),
            "conv_b": _encode_array(params.conv_b),
            "dense_w": _encode_array(params.dense_w),
            "dense_b": _encode_array(params.dense_b),
        },
    }
    return json.dumps(doc, indent=2) + "\n"


def checkpoint_from_json(text: str, expected: EncoderConfig | None = None) -> tuple[ModelParams, EncoderConfig]:
    try:
        doc = json.loads(text)
        encoder = EncoderConfig.from_dict(doc["encoder"])
        p = doc["params"]
        params = ModelParams(
            _decode_array(p["conv_w"]),
            _decode_array(p["conv_b"]),
            _decode_array(p["dense_w"]),
            _decode_array(p["dense_b"]),
        )
    except (KeyError, ValueError, TypeError) as exc:
        raise CheckpointError(f"malformed checkpoint: {exc}") from exc
    if expected is not None and encoder != expected:
        raise CheckpointError(
            f"checkpoint trained against encoder {encoder.to_dict()}, expected {expected.to_dict()}"
        )
    return params, encoder
