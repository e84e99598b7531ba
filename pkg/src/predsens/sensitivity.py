"""Prediction sensitivity: the magnitude of the derivative of a model's output
with respect to one input feature group, evaluated at a specific example.

Values are in units of "probability per standardized feature unit" (or logit
per unit with ``space="logit"``) and are only comparable within one model.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .autodiff import INPUT, Tape
from .data import CONTINUOUS, EncodedDataset, FeatureSchema
from .errors import DataError, ShapeError
from .model import MlpModel, decide, record_forward

AGGREGATIONS = ("l2", "maxabs", "sumabs")
SPACES = ("probability", "logit")

BATCH_CHUNK = 4096


def _record_output(tape: Tape, model: MlpModel, x_id: int, space: str) -> int:
    if space not in SPACES:
        raise ValueError(f"space must be one of {SPACES}, got {space!r}")
    z = record_forward(tape, model, x_id)
    return tape.sigmoid(z) if space == "probability" else z


def input_gradient(model: MlpModel, x, space: str = "probability") -> tuple[float, np.ndarray]:
    """Output value and its gradient with respect to the input vector ``x``."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != model.input_dim:
        raise ShapeError(f"expected a vector of {model.input_dim} features, got shape {x.shape}")
    tape = Tape()
    xid = tape.leaf(x, kind=INPUT)
    out = _record_output(tape, model, xid, space)
    grads = tape.backward(tape.sum(out))
    return float(tape.value(out)[0]), grads[xid]


def input_gradients(model: MlpModel, X, space: str = "probability") -> tuple[np.ndarray, np.ndarray]:
    """Per-row outputs and input gradients for a batch.

    Rows do not interact in the forward pass, so the gradient of the summed
    outputs with respect to the batch matrix holds each row's own gradient.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[1] != model.input_dim:
        raise ShapeError(f"expected {model.input_dim} features, got {X.shape[1]}")
    outs, grads = [], []
    for start in range(0, X.shape[0], BATCH_CHUNK):
        tape = Tape()
        xid = tape.leaf(X[start:start + BATCH_CHUNK], kind=INPUT)
        out = _record_output(tape, model, xid, space)
        g = tape.backward(tape.sum(out))
        outs.append(tape.value(out)[:, 0])
        grads.append(g[xid])
    return np.concatenate(outs), np.concatenate(grads)


def aggregate(partials: np.ndarray, how: str = "l2") -> np.ndarray:
    """Collapse the last axis of a group's partials into one non-negative value."""
    partials = np.asarray(partials)
    if how == "l2":
        return np.sqrt(np.sum(partials * partials, axis=-1))
    if how == "maxabs":
        return np.max(np.abs(partials), axis=-1)
    if how == "sumabs":
        return np.sum(np.abs(partials), axis=-1)
    raise ValueError(f"aggregation must be one of {AGGREGATIONS}, got {how!r}")


def group_sensitivities(schema: FeatureSchema, grads: np.ndarray, how: str = "l2") -> dict[str, np.ndarray]:
    """Per-group sensitivity from input gradients (vector or row batch)."""
    if grads.shape[-1] != schema.width:
        raise ShapeError(f"gradient width {grads.shape[-1]} != schema width {schema.width}")
    return {g.name: aggregate(grads[..., g.start:g.end], how) for g in schema.groups}


def prediction_sensitivity(model: MlpModel, schema: FeatureSchema, x, group: str | None = None, *,
                           how: str = "l2", space: str = "probability") -> float:
    """Sensitivity of one prediction to ``group`` (default: the protected attribute)."""
    g = schema.group(group or schema.protected)
    _, grad = input_gradient(model, x, space)
    return float(aggregate(grad[g.start:g.end], how))


@dataclass
class SensitivityRecord:
    prediction: float
    decision: int
    per_group: dict[str, float]
    protected_sensitivity: float

    def to_dict(self) -> dict:
        return asdict(self)


def profile(model: MlpModel, schema: FeatureSchema, x, *, how: str = "l2",
            space: str = "probability") -> SensitivityRecord:
    """All group sensitivities of one example from a single backward pass."""
    value, grad = input_gradient(model, x, space)
    per_group = {k: float(v) for k, v in group_sensitivities(schema, grad, how).items()}
    # decision always comes from the probability, even when differentiating the logit
    prob = value if space == "probability" else float(1.0 / (1.0 + np.exp(-value)))
    return SensitivityRecord(prob, int(decide(prob)), per_group, per_group[schema.protected])


@dataclass
class BatchProfile:
    """Column-oriented profile of a dataset."""

    predictions: np.ndarray
    decisions: np.ndarray
    per_group: dict[str, np.ndarray]
    protected: str

    @property
    def protected_sensitivity(self) -> np.ndarray:
        return self.per_group[self.protected]

    def __len__(self) -> int:
        return len(self.predictions)

    def records(self):
        names = list(self.per_group)
        for i in range(len(self)):
            per = {k: float(self.per_group[k][i]) for k in names}
            yield SensitivityRecord(float(self.predictions[i]), int(self.decisions[i]), per, per[self.protected])


def profile_batch(model: MlpModel, dataset: EncodedDataset, *, how: str = "l2",
                  space: str = "probability") -> BatchProfile:
    if len(dataset) == 0:
        raise DataError("cannot profile an empty dataset")
    values, grads = input_gradients(model, dataset.features, space)
    probs = values if space == "probability" else 1.0 / (1.0 + np.exp(-values))
    return BatchProfile(probs, decide(probs), group_sensitivities(dataset.schema, grads, how),
                        dataset.schema.protected)


@dataclass
class DistributionSummary:
    group: str
    n: int
    min: float
    q1: float
    median: float
    q3: float
    max: float
    mean: float
    whisker_low: float
    whisker_high: float
    n_outliers: int

    CSV_FIELDS = ("group", "min", "q1", "median", "q3", "max", "mean", "whisker_low", "whisker_high",
                  "n_outliers")

    def row(self) -> list:
        return [getattr(self, f) for f in self.CSV_FIELDS]


def summarize(group: str, values) -> DistributionSummary:
    """Box-plot statistics. Quartiles interpolate linearly between order
    statistics; whiskers end at the furthest datum within 1.5 IQR."""
    v = np.sort(np.asarray(values, dtype=np.float64))
    if v.size == 0:
        raise DataError(f"no values to summarize for {group!r}")
    q1, med, q3 = np.quantile(v, [0.25, 0.5, 0.75], method="linear")
    iqr = q3 - q1
    lo_fence, hi_fence = q1 - 1.5 * iqr, q3 + 1.5 * iqr
    inside = v[(v >= lo_fence) & (v <= hi_fence)]
    return DistributionSummary(
        group, int(v.size), float(v[0]), float(q1), float(med), float(q3), float(v[-1]), float(v.mean()),
        float(inside[0]), float(inside[-1]), int(v.size - inside.size),
    )


def batch_distribution(model: MlpModel, dataset: EncodedDataset, *, how: str = "l2",
                       space: str = "probability", batch: BatchProfile | None = None) -> list[DistributionSummary]:
    """One summary per schema group, in schema order."""
    bp = batch or profile_batch(model, dataset, how=how, space=space)
    return [summarize(name, vals) for name, vals in bp.per_group.items()]


def smoothness_probe(model: MlpModel, schema: FeatureSchema, x, radius: float, n: int, seed: int, *,
                     how: str = "l2", space: str = "probability") -> dict:
    """Spread of the protected sensitivity over ``n`` random perturbations of ``x``.

    Only continuous columns move, each by uniform noise in [-radius, radius];
    categorical columns stay on their one-hot vertices.
    """
    if radius < 0:
        raise ValueError(f"radius must be non-negative, got {radius}")
    if n < 1:
        raise ValueError(f"need at least one perturbation, got n={n}")
    cols = [g.start for g in schema.groups if g.kind == CONTINUOUS]
    if not cols:
        raise DataError("schema has no continuous columns; smoothness probe is undefined")
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (schema.width,):
        raise ShapeError(f"expected a vector of {schema.width} features, got shape {x.shape}")
    rng = np.random.default_rng(seed)
    X = np.tile(x, (n, 1))
    X[:, cols] += rng.uniform(-radius, radius, size=(n, len(cols)))
    _, grads = input_gradients(model, X, space)
    g = schema.group(schema.protected)
    s = aggregate(grads[:, g.start:g.end], how)
    return {"n": n, "radius": radius, "min": float(s.min()), "max": float(s.max()), "mean": float(s.mean()),
            "stddev": float(s.std()), "at_point": prediction_sensitivity(model, schema, x, how=how, space=space)}
