"""Goodness of fit: exact one-sample KS distance to the Gumbel law, the
two-sided tail-bound feasibility check, moment oracles and the geometric
counterexample."""

from __future__ import annotations

import itertools
import json
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from .ecdf import EcdfView
from .errors import EstimationError, InsufficientSampleError, SpecError
from .extremes import theta_at_level
from .mdist import TwoPoint
from .norming import IDENTITY, NormingPair, empirical_norming
from .recurrence import sample_stationary

DEFAULT_CONSTANT_GRID = (0.25, 0.5, 1.0, 2.0, 4.0)

__all__ = [
    "EcdfView",
    "gumbel_cdf",
    "gumbel_ppf",
    "ks_gumbel",
    "ks_gumbel_best_fit",
    "SandwichReport",
    "tail_sandwich",
    "moment_oracle",
    "geometric_check",
]


def gumbel_cdf(x):
    return np.exp(-np.exp(-np.asarray(x, dtype=float)))


def gumbel_ppf(p):
    return -np.log(-np.log(np.asarray(p, dtype=float)))


def ks_gumbel(sample, norming=IDENTITY):
    """``sup_x |ECDF(a (m - b)) - exp(-e^{-x})|``, evaluated on both sides of every jump."""
    z = np.sort(norming.a * (np.asarray(sample, dtype=float) - norming.b))
    if z.size == 0:
        raise SpecError("sample", "empty")
    g = gumbel_cdf(z)
    i = np.arange(1, z.size + 1)
    return float(max(np.max(i / z.size - g), np.max(g - (i - 1) / z.size)))


def ks_gumbel_best_fit(sample, start=None):
    """Smallest KS distance over affine normings, by Nelder-Mead on ``(log a, b)``.

    Starts from ``start`` or from a moment fit. Returns ``(ks, NormingPair)``.
    """
    x = np.asarray(sample, dtype=float)
    if start is None:
        sd = float(np.std(x)) or 1.0
        a0 = math.pi / (math.sqrt(6.0) * sd)
        start = NormingPair(a=a0, b=float(np.mean(x)) - 0.5772156649015329 / a0, n=None, method="empirical")
    obj = lambda p: ks_gumbel(x, NormingPair(a=math.exp(p[0]), b=p[1], n=None, method="empirical"))
    best = optimize.minimize(obj, [math.log(start.a), start.b], method="Nelder-Mead",
                             options={"xatol": 1e-8, "fatol": 1e-10, "maxiter": 4000})
    pair = NormingPair(a=math.exp(best.x[0]), b=float(best.x[1]), n=start.n, method="empirical",
                       theta_used=start.theta_used, extra={"fit": "min-ks"})
    return float(best.fun), pair


@dataclass(frozen=True)
class SandwichReport:
    y_grid: list
    neg_log_tail: list
    lower_feasible: list
    upper_feasible: list
    dropped: list

    @property
    def feasible(self):
        return bool(self.lower_feasible) and bool(self.upper_feasible)

    def to_dict(self):
        return {"y_grid": self.y_grid, "neg_log_tail": self.neg_log_tail,
                "lower_feasible": self.lower_feasible, "upper_feasible": self.upper_feasible,
                "dropped": self.dropped, "feasible": self.feasible}

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)


def _log_bound(spec, c, cp, y):
    return np.array([c * yy * spec.log_p_delta(cp / yy) for yy in y])


def tail_sandwich(sample, spec, y_grid=None, constant_grid=DEFAULT_CONSTANT_GRID, n_y=20):
    """Which constant pairs make ``exp{c y ln p_{c'/y}}`` a lower (resp. upper)
    bound for the empirical ``P(R > y)`` at every grid point.

    Lower: ``c0 y ln p_{c1/y} <= ln P(R > y)``; upper: ``ln P(R > y) <=
    c2 y ln p_{c3/y}``. The grid must sit between the empirical 90% and
    99.99% quantiles (default: ``n_y`` evenly spaced points there). Grid
    points where the empirical tail is zero are dropped with a warning.
    """
    view = sample if isinstance(sample, EcdfView) else EcdfView(sample)
    lo, hi = view.quantile(0.9), view.quantile(0.9999)
    if y_grid is None:
        y = np.linspace(lo, hi, n_y)
    else:
        y = np.asarray(y_grid, dtype=float)
        if y.size < 1 or np.any(np.diff(y) <= 0.0):
            raise SpecError("y_grid", "must be strictly increasing and nonempty")
        if y[0] < lo or y[-1] > hi:
            raise SpecError("y_grid", f"must lie within [{lo:.6g}, {hi:.6g}] (empirical 90%..99.99%)")
    tail = view.survival(y)
    zero = tail <= 0.0
    dropped = y[zero].tolist()
    if dropped:
        warnings.warn(f"empirical tail is zero at {len(dropped)} grid points; dropping them")
        y, tail = y[~zero], tail[~zero]
    log_tail = np.log(tail)
    pairs = list(itertools.product(constant_grid, repeat=2))
    lower = [[c, cp] for c, cp in pairs if np.all(_log_bound(spec, c, cp, y) <= log_tail)]
    upper = [[c, cp] for c, cp in pairs if np.all(log_tail <= _log_bound(spec, c, cp, y))]
    return SandwichReport(y.tolist(), (-log_tail).tolist(), lower, upper, dropped)


def moment_oracle(spec, q):
    """``(E R, E R^2)`` from the fixed point ``R = M R + q`` with M independent of R."""
    em, em2 = spec.moments()
    if not (em < 1.0 and em2 < 1.0):
        raise SpecError("family", "needs E M < 1 and E M^2 < 1")
    er = q / (1.0 - em)
    return er, (q * q + 2.0 * q * em * er) / (1.0 - em2)


def geometric_tail(p, q, n_samples, rng, k_max=15):
    """Empirical and exact ``P(R > k q)`` for the two-point law, ``k = 0..k_max``.

    R takes the values ``q (1 + j)``; ``R > k q`` is tested as ``R > (k + 1/2) q``
    so that rounding in the series sum cannot flip a comparison.
    """
    r = sample_stationary(TwoPoint(p), q, rng, n_samples, allow_counterexample=True).values
    r = np.sort(r)
    ks = np.arange(k_max + 1)
    emp = 1.0 - np.searchsorted(r, (ks + 0.5) * q, side="right") / r.size
    return emp, float(p) ** ks


def geometric_check(p, q, n_samples, rng, k_max=15):
    """Largest ``|P_hat(R > k q) - p**k|`` over ``k <= k_max``."""
    emp, exact = geometric_tail(p, q, n_samples, rng, k_max)
    return float(np.max(np.abs(emp - exact)))


def maxima_gof(maxima, tail_view, block_len, theta=1.0, x_grid=None, best_fit=False):
    """Empirical norming from the stationary tail, then KS of the block maxima.

    ``theta="estimated"`` replaces the extremal index by its log-form blocks
    estimate at the norming level ``1 - 1/block_len`` on the same data (see
    :func:`perpex.extremes.theta_at_level`); at desk-scale block lengths the
    clustering of exceedances is far from its limit and this matters.

    When the quantile fit is degenerate (flat quantiles of a lattice law) the
    ``norming`` and ``ks`` entries are ``None`` with a ``reason``; the best fit,
    if requested, then starts from a moment fit instead.
    """
    kw = {} if x_grid is None else {"x_grid": x_grid}
    out = {"block_len": int(block_len), "n_blocks": int(np.size(maxima))}
    if theta == "estimated":
        est = theta_at_level(maxima, block_len, tail_view)
        theta = est.theta_hat
        out["theta_estimate"] = est.to_dict()
    out["theta_used"] = float(theta)
    try:
        pair = empirical_norming(tail_view, block_len, theta, **kw)
        out["norming"], out["ks"] = pair.to_dict(), ks_gumbel(maxima, pair)
    except EstimationError as exc:
        if not best_fit or isinstance(exc, InsufficientSampleError):
            raise
        pair = None
        out["norming"], out["ks"], out["reason"] = None, None, str(exc)
    if best_fit:
        ks_min, best = ks_gumbel_best_fit(maxima, pair)
        out["ks_best_fit"] = ks_min
        out["norming_best_fit"] = best.to_dict()
    return out
