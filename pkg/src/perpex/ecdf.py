"""Empirical distribution views over full samples or retained upper tails."""

import math

import numpy as np

from .errors import InsufficientSampleError


class EcdfView:
    """Sorted sample, possibly only the upper part of a larger one.

    ``values`` holds the largest ``len(values)`` order statistics of a sample
    of ``size`` points, ascending. With ``size == len(values)`` it is the
    whole sample.

    Quantiles use the inverse-ECDF convention: the quantile at ``level`` is
    the order statistic of (1-based) rank ``ceil(level * size)``.
    """

    def __init__(self, values, size=None, presorted=False):
        v = np.asarray(values, dtype=float)
        if v.ndim != 1 or v.size == 0:
            raise ValueError("need a nonempty 1-d sample")
        self.values = v if presorted else np.sort(v)
        self.size = int(v.size if size is None else size)
        if self.size < self.values.size:
            raise ValueError("size smaller than the number of retained values")
        self.offset = self.size - self.values.size  # ranks 1..offset are not kept

    def __len__(self):
        return self.size

    @property
    def complete(self):
        return self.offset == 0

    def rank(self, level):
        return max(1, min(self.size, math.ceil(level * self.size)))

    def quantile(self, level):
        levels = np.atleast_1d(np.asarray(level, dtype=float))
        ranks = np.array([self.rank(x) for x in levels])
        if np.any(ranks <= self.offset):
            lowest = float(levels[np.argmin(ranks)])
            raise InsufficientSampleError(
                math.ceil(self.size - self.rank(lowest) + 1), self.values.size, "retained tail"
            )
        out = self.values[ranks - self.offset - 1]
        return float(out[0]) if np.ndim(level) == 0 else out

    def level(self, x):
        """ECDF at ``x`` (fraction of the sample <= x); only valid inside the kept range."""
        k = np.searchsorted(self.values, x, side="right")
        if self.offset and np.any(np.asarray(k) == 0):
            raise InsufficientSampleError(self.size, self.values.size, "retained tail")
        return (self.offset + k) / self.size

    def survival(self, x):
        """Empirical ``P(R > x)``; exact counts from the kept tail."""
        above = self.values.size - np.searchsorted(self.values, x, side="right")
        if self.offset and np.any(np.asarray(above) == self.values.size):
            raise InsufficientSampleError(self.size, self.values.size, "retained tail")
        return above / self.size

    def to_rows(self):
        """(value, level) pairs for CSV export."""
        lv = (self.offset + np.arange(1, self.values.size + 1)) / self.size
        return zip(self.values.tolist(), lv.tolist())
