"""Single-pass statistics for a stream of sensitivity values."""

from __future__ import annotations

import bisect
import copy
import math


class GKSketch:
    """Greenwald-Khanna quantile summary.

    A query for quantile phi returns a stored value whose rank is within
    ``eps * n`` of ``phi * n``. The default ``eps = 0.005`` keeps rank error
    under 1% of the stream length with some margin.
    """

    def __init__(self, eps: float = 0.005) -> None:
        if not 0.0 < eps < 0.5:
            raise ValueError(f"eps must be in (0, 0.5), got {eps}")
        self.eps = eps
        self.n = 0
        self._values: list[float] = []
        self._g: list[int] = []
        self._delta: list[int] = []
        self._period = max(1, int(1.0 / (2.0 * eps)))

    def __len__(self) -> int:
        return len(self._values)

    def insert(self, v: float) -> None:
        i = bisect.bisect_right(self._values, v)
        if i == 0 or i == len(self._values):
            delta = 0
        else:
            delta = max(0, math.floor(2.0 * self.eps * self.n) - 1)
        self._values.insert(i, v)
        self._g.insert(i, 1)
        self._delta.insert(i, delta)
        self.n += 1
        if self.n % self._period == 0:
            self._compress()

    def _compress(self) -> None:
        cap = math.floor(2.0 * self.eps * self.n)
        i = len(self._values) - 2
        while i >= 1:
            if self._g[i] + self._g[i + 1] + self._delta[i + 1] <= cap:
                self._g[i + 1] += self._g[i]
                del self._values[i], self._g[i], self._delta[i]
            i -= 1

    def query(self, phi: float) -> float:
        if self.n == 0:
            raise ValueError("quantile of an empty stream")
        target = max(1, math.ceil(phi * self.n))
        bound = self.eps * self.n
        rmin = 0
        best, best_err = self._values[-1], math.inf
        for v, g, d in zip(self._values, self._g, self._delta):
            rmin += g
            err = max(target - rmin, rmin + d - target)
            if err <= bound:
                return v
            if err < best_err:
                best, best_err = v, err
        return best


class StreamStats:
    """Running count, mean and sample variance (Welford) plus a quantile sketch.

    Single writer. :meth:`snapshot` returns a fresh dict, so readers never see
    a half-applied update.
    """

    QUANTILES = (0.5, 0.9, 0.99)

    def __init__(self, eps: float = 0.005) -> None:
        self.count = 0
        self.mean = 0.0
        self._m2 = 0.0
        self.sketch = GKSketch(eps)

    def update(self, x: float) -> StreamStats:
        x = float(x)
        if not math.isfinite(x) or x < 0:
            raise ValueError(f"sensitivity must be a finite non-negative number, got {x!r}")
        self.count += 1
        d = x - self.mean
        self.mean += d / self.count
        self._m2 += d * (x - self.mean)
        self.sketch.insert(x)
        return self

    @property
    def variance(self) -> float:
        return self._m2 / (self.count - 1) if self.count >= 2 else 0.0

    def snapshot(self) -> dict:
        snap = {
            "count": self.count,
            "mean": self.mean if self.count else None,
            "variance": self.variance,
            "stddev": math.sqrt(self.variance),
            "stddev_defined": self.count >= 2,
            "rank_error_bound": self.sketch.eps,
        }
        for q in self.QUANTILES:
            snap[f"q{round(q * 100)}"] = self.sketch.query(q) if self.count else None
        return copy.deepcopy(snap)


def stream_update(stats: StreamStats, sensitivity: float) -> StreamStats:
    return stats.update(sensitivity)


def stream_snapshot(stats: StreamStats) -> dict:
    return stats.snapshot()
