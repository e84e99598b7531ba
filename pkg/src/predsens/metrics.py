"""Group fairness metrics over hard 0/1 decisions.

Sign convention: unprivileged minus (or over) privileged, so negative
statistical parity and disparate impact below 1 both mean the unprivileged
group receives fewer positive decisions. Disparate impact under 0.8 is the
usual "four-fifths" alert line; nothing here enforces it.

Rates are computed with exact fractions and rounded once to float64.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import DataError, EmptyGroupError, UndefinedMetricError


@dataclass(frozen=True)
class GroupedPredictions:
    decisions: np.ndarray  # int, values in {0, 1}
    privileged: np.ndarray  # bool, parallel to decisions

    def __post_init__(self):
        d = np.asarray(self.decisions)
        p = np.asarray(self.privileged, dtype=bool)
        if d.shape != p.shape or d.ndim != 1:
            raise DataError(f"decisions {d.shape} and group membership {p.shape} must be equal-length vectors")
        if d.size == 0:
            raise DataError("no predictions")
        object.__setattr__(self, "decisions", d)
        object.__setattr__(self, "privileged", p)

    def size(self, privileged: bool) -> int:
        return int(np.count_nonzero(self.privileged == privileged))


def _rate(gp: GroupedPredictions, privileged: bool) -> Fraction:
    mask = gp.privileged == privileged
    n = int(np.count_nonzero(mask))
    if n == 0:
        which = "privileged" if privileged else "unprivileged"
        raise EmptyGroupError(f"{which} group is empty")
    return Fraction(int(np.count_nonzero(gp.decisions[mask] == 1)), n)


def positive_rate(gp: GroupedPredictions, privileged: bool) -> float:
    return float(_rate(gp, privileged))


def statistical_parity(gp: GroupedPredictions) -> float:
    return float(_rate(gp, False) - _rate(gp, True))


def disparate_impact(gp: GroupedPredictions) -> float:
    unpriv, priv = _rate(gp, False), _rate(gp, True)
    if priv == 0:
        raise UndefinedMetricError("privileged positive rate is 0; disparate impact is undefined")
    return float(unpriv / priv)


def report(gp: GroupedPredictions) -> dict:
    """JSON-ready summary of both metrics. Undefined values are null."""
    sizes = {"privileged": gp.size(True), "unprivileged": gp.size(False)}
    rates = {}
    for name, flag in (("privileged", True), ("unprivileged", False)):
        rates[name] = positive_rate(gp, flag) if sizes[name] else None
    out = {}
    for name, fn in (("statistical_parity", statistical_parity), ("disparate_impact", disparate_impact)):
        try:
            value = fn(gp)
        except (EmptyGroupError, UndefinedMetricError):
            value = None
        out[name] = {"metric": name, "value": value, "defined": value is not None,
                     "group_sizes": sizes, "positive_rates": rates}
    return out
