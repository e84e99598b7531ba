"""Feedforward binary classifier: ReLU hidden layers, sigmoid output."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .autodiff import Tape
from .data import FeatureSchema
from .errors import DataError, FingerprintError, ModelFormatError, NumericError, ShapeError
from .io import atomic_write_text

log = logging.getLogger(__name__)

FORMAT_NAME = "predsens-mlp"
FORMAT_VERSION = 1

DEFAULT_HIDDEN = (64, 32)


@dataclass
class MlpModel:
    layer_dims: tuple[int, ...]
    weights: list[np.ndarray]  # weights[k] has shape (layer_dims[k+1], layer_dims[k])
    biases: list[np.ndarray]
    metadata: dict = field(default_factory=dict)
    schema_fingerprint: str | None = None
    schema: dict | None = None  # serialized FeatureSchema the model was trained against

    def __post_init__(self):
        self.layer_dims = tuple(int(d) for d in self.layer_dims)
        if len(self.weights) != len(self.layer_dims) - 1 or len(self.biases) != len(self.weights):
            raise ShapeError(f"{len(self.weights)} weight matrices for layer dims {self.layer_dims}")
        for k, (W, b) in enumerate(zip(self.weights, self.biases)):
            want = (self.layer_dims[k + 1], self.layer_dims[k])
            if W.shape != want or b.shape != (want[0],):
                raise ShapeError(f"layer {k}: weight {W.shape} / bias {b.shape}, expected {want} / ({want[0]},)")

    @property
    def input_dim(self) -> int:
        return self.layer_dims[0]

    def params(self) -> list[np.ndarray]:
        out = []
        for W, b in zip(self.weights, self.biases):
            out += [W, b]
        return out

    def copy(self) -> MlpModel:
        return MlpModel(self.layer_dims, [W.copy() for W in self.weights], [b.copy() for b in self.biases],
                        dict(self.metadata), self.schema_fingerprint, self.schema)


def init(layer_dims, seed: int) -> MlpModel:
    """Glorot-uniform weights, zero biases."""
    dims = tuple(int(d) for d in layer_dims)
    if len(dims) < 2 or any(d <= 0 for d in dims):
        raise ValueError(f"layer dims must be positive, got {dims}")
    if dims[-1] != 1:
        raise ValueError(f"last layer must have width 1, got {dims[-1]}")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        limit = math.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return MlpModel(dims, weights, biases, {"init_seed": seed})


def record_forward(tape: Tape, model: MlpModel, x: int, param_ids=None) -> int:
    """Record the network on ``tape`` and return the logit node.

    ``param_ids`` are pre-recorded leaves for ``model.params()``; when omitted
    the parameters enter as constants.
    """
    if param_ids is None:
        param_ids = [tape.constant(p) for p in model.params()]
    h = x
    n_layers = len(model.weights)
    for k in range(n_layers):
        h = tape.add(tape.matvec(param_ids[2 * k], h), param_ids[2 * k + 1])
        if k < n_layers - 1:
            h = tape.relu(h)
    return h


def _check_width(model: MlpModel, x: np.ndarray) -> None:
    if x.shape[-1] != model.input_dim:
        raise ShapeError(f"input has {x.shape[-1]} features, model expects {model.input_dim}")


def predict(model: MlpModel, x) -> float:
    """Probability of the positive class for one feature vector."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ShapeError(f"predict takes one vector, got shape {x.shape}")
    _check_width(model, x)
    tape = Tape()
    p = tape.sigmoid(record_forward(tape, model, tape.constant(x)))
    return float(tape.value(p)[0])


def predict_batch(model: MlpModel, X) -> np.ndarray:
    """Probabilities for each row of ``X``."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    _check_width(model, X)
    tape = Tape()
    p = tape.sigmoid(record_forward(tape, model, tape.constant(X)))
    return tape.value(p)[:, 0].copy()


def decide(prob):
    return (np.asarray(prob) >= 0.5).astype(np.int8)


def loss_and_grads(model: MlpModel, X: np.ndarray, y: np.ndarray) -> tuple[float, list[np.ndarray]]:
    """Mean fused sigmoid+BCE over a batch and its gradient for every parameter."""
    tape = Tape()
    pids = [tape.leaf(p) for p in model.params()]
    xid = tape.constant(X)
    loss = tape.bce_with_logits(record_forward(tape, model, xid, pids), y)
    grads = tape.backward(loss)
    return float(tape.value(loss)), [grads[i] for i in pids]


def accuracy(model: MlpModel, X, y) -> float:
    return float(np.mean(decide(predict_batch(model, X)) == np.asarray(y)))


@dataclass
class TrainTrace:
    loss: list[float] = field(default_factory=list)
    accuracy: list[float] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"epochs": [{"epoch": i + 1, "loss": l, "accuracy": a}
                           for i, (l, a) in enumerate(zip(self.loss, self.accuracy))]}


def train(model: MlpModel, X, y, *, epochs: int = 20, batch_size: int = 128, learning_rate: float = 0.05,
          seed: int = 0) -> tuple[MlpModel, TrainTrace]:
    """Mini-batch SGD on mean BCE. Returns a new model; ``model`` is untouched."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.shape[0] == 0:
        raise DataError("training set is empty")
    _check_width(model, X)
    model = model.copy()
    params = model.params()
    rng = np.random.default_rng(seed)
    n = X.shape[0]
    trace = TrainTrace()
    for epoch in range(1, epochs + 1):
        order = rng.permutation(n)
        total = 0.0
        for b, start in enumerate(range(0, n, batch_size)):
            idx = order[start:start + batch_size]
            loss, grads = loss_and_grads(model, X[idx], y[idx])
            if not math.isfinite(loss) or not all(np.isfinite(g).all() for g in grads):
                raise NumericError(f"non-finite loss at epoch {epoch}, batch {b}; learning rate too high?",
                                   epoch, b)
            for p, g in zip(params, grads):
                p -= learning_rate * g
            total += loss * len(idx)
        trace.loss.append(total / n)
        trace.accuracy.append(accuracy(model, X, y))
        log.info("epoch %d: loss %.5f accuracy %.4f", epoch, trace.loss[-1], trace.accuracy[-1])
    model.metadata.update({"seed": seed, "epochs": epochs, "learning_rate": learning_rate,
                           "batch_size": batch_size})
    return model, trace


def to_dict(model: MlpModel) -> dict:
    return {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "layer_dims": list(model.layer_dims),
        "weights": [W.tolist() for W in model.weights],
        "biases": [b.tolist() for b in model.biases],
        "schema_fingerprint": model.schema_fingerprint,
        "schema": model.schema,
        "metadata": model.metadata,
    }


def dumps(model: MlpModel) -> str:
    # json writes floats with repr(), which round-trips float64 exactly
    return json.dumps(to_dict(model), sort_keys=True, indent=1) + "\n"


def loads(text: str, expected_fingerprint: str | None = None) -> MlpModel:
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"model file is not valid JSON: {exc}") from None
    if not isinstance(d, dict) or d.get("format") != FORMAT_NAME:
        raise ModelFormatError("not a predsens model file")
    if d.get("version") != FORMAT_VERSION:
        raise ModelFormatError(f"unsupported model format version {d.get('version')!r}")
    try:
        model = MlpModel(tuple(d["layer_dims"]),
                         [np.array(W, dtype=np.float64) for W in d["weights"]],
                         [np.array(b, dtype=np.float64) for b in d["biases"]],
                         d.get("metadata", {}), d.get("schema_fingerprint"), d.get("schema"))
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFormatError(f"malformed model file: {exc}") from None
    if model.schema is not None:
        actual = FeatureSchema.from_dict(model.schema).fingerprint()
        if actual != model.schema_fingerprint:
            raise FingerprintError("embedded schema does not match the recorded fingerprint")
    if expected_fingerprint is not None and model.schema_fingerprint != expected_fingerprint:
        raise FingerprintError(f"model was trained for schema {model.schema_fingerprint}, "
                               f"dataset schema is {expected_fingerprint}")
    return model


def save(model: MlpModel, path) -> None:
    atomic_write_text(path, dumps(model))


def load(path, expected_fingerprint: str | None = None) -> MlpModel:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise DataError(f"cannot read model file {path}: {exc}") from exc
    return loads(text, expected_fingerprint)
