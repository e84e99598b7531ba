"""Threshold monitor on protected-attribute sensitivity.

A prediction is flagged when its sensitivity is strictly greater than the
threshold; flagged predictions are "discarded" when computing group metrics
and everything else is "kept". The monitor never changes a prediction.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from . import metrics
from .data import EncodedDataset, FeatureSchema
from .errors import DataError, EmptyGroupError, UndefinedMetricError
from .io import csv_text
from .model import MlpModel
from .sensitivity import BatchProfile, profile, profile_batch

OFF = math.inf


@dataclass(frozen=True)
class MonitorConfig:
    threshold: float = OFF
    how: str = "l2"
    space: str = "probability"

    def __post_init__(self):
        if math.isnan(self.threshold) or self.threshold < 0:
            raise ValueError(f"threshold must be >= 0, got {self.threshold}")


@dataclass(frozen=True)
class Verdict:
    prediction: float
    decision: int
    protected_sensitivity: float
    flagged: bool

    def to_dict(self) -> dict:
        return asdict(self)


def is_flagged(sensitivity, threshold: float):
    return np.asarray(sensitivity) > threshold


def kept_mask(sensitivity, threshold: float) -> np.ndarray:
    return ~is_flagged(sensitivity, threshold)


def evaluate(model: MlpModel, schema: FeatureSchema, x, config: MonitorConfig) -> Verdict:
    rec = profile(model, schema, x, how=config.how, space=config.space)
    s = rec.protected_sensitivity
    return Verdict(rec.prediction, rec.decision, s, bool(s > config.threshold))


@dataclass(frozen=True)
class FilteredMetrics:
    tau: float
    kept: int
    discarded: int
    kept_privileged: int
    kept_unprivileged: int
    stat_parity: float | None
    disp_impact: float | None

    @property
    def stat_parity_defined(self) -> bool:
        return self.stat_parity is not None

    @property
    def disp_impact_defined(self) -> bool:
        return self.disp_impact is not None

    def to_dict(self) -> dict:
        d = asdict(self)
        d["tau"] = None if math.isinf(self.tau) else self.tau
        d["stat_parity_defined"] = self.stat_parity_defined
        d["disp_impact_defined"] = self.disp_impact_defined
        return d


def metrics_on_kept(decisions, privileged, sensitivity, tau: float) -> FilteredMetrics:
    """Group metrics over the predictions the monitor at ``tau`` lets through.

    A metric whose group is empty, or whose ratio has a zero denominator, is
    reported as None rather than raising.
    """
    decisions = np.asarray(decisions)
    privileged = np.asarray(privileged, dtype=bool)
    keep = kept_mask(sensitivity, tau)
    n_kept = int(keep.sum())
    sp = di = None
    if n_kept:
        gp = metrics.GroupedPredictions(decisions[keep], privileged[keep])
        try:
            sp = metrics.statistical_parity(gp)
        except EmptyGroupError:
            pass
        try:
            di = metrics.disparate_impact(gp)
        except (EmptyGroupError, UndefinedMetricError):
            pass
    kp = int(np.count_nonzero(keep & privileged))
    return FilteredMetrics(float(tau), n_kept, int(keep.size - n_kept), kp, n_kept - kp, sp, di)


def filtered_metrics(model: MlpModel, dataset: EncodedDataset, config: MonitorConfig,
                     batch: BatchProfile | None = None) -> FilteredMetrics:
    if len(dataset) == 0:
        raise DataError("dataset is empty")
    bp = batch or profile_batch(model, dataset, how=config.how, space=config.space)
    return metrics_on_kept(bp.decisions, dataset.privileged, bp.protected_sensitivity, config.threshold)


def default_grid(sensitivity) -> list[float]:
    """Deciles (10th..100th percentile) of the observed sensitivities, plus infinity."""
    s = np.asarray(sensitivity, dtype=np.float64)
    if s.size == 0:
        raise DataError("no sensitivities to build a grid from")
    qs = np.quantile(s, np.arange(1, 11) / 10.0, method="linear")
    return [float(q) for q in qs] + [OFF]


SWEEP_FIELDS = ("tau", "kept", "discarded", "stat_parity", "stat_parity_defined", "disp_impact",
                "disp_impact_defined")


@dataclass
class SweepReport:
    rows: list[FilteredMetrics]  # tau descending

    def __len__(self) -> int:
        return len(self.rows)

    def to_csv(self) -> str:
        def cell(v):
            return "" if v is None else v

        return csv_text(SWEEP_FIELDS, (
            [r.tau, r.kept, r.discarded, cell(r.stat_parity), int(r.stat_parity_defined), cell(r.disp_impact),
             int(r.disp_impact_defined)]
            for r in self.rows))


def sweep_arrays(decisions, privileged, sensitivity, grid=None) -> SweepReport:
    grid = default_grid(sensitivity) if grid is None else [float(t) for t in grid]
    if not grid:
        raise ValueError("threshold grid is empty")
    return SweepReport([metrics_on_kept(decisions, privileged, sensitivity, t)
                        for t in sorted(grid, reverse=True)])


def threshold_sweep(model: MlpModel, dataset: EncodedDataset, grid=None, *, how: str = "l2",
                    space: str = "probability", batch: BatchProfile | None = None) -> SweepReport:
    if len(dataset) == 0:
        raise DataError("dataset is empty")
    bp = batch or profile_batch(model, dataset, how=how, space=space)
    return sweep_arrays(bp.decisions, dataset.privileged, bp.protected_sensitivity, grid)
