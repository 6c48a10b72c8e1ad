"""Extremal index: theoretical value, blocks and runs estimators, and the
conditional non-exceedance probability ``P(M R + q <= u | R > u)``."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import rng as rngmod
from .errors import EstimationError, SpecError
from .mdist import require_simulatable
from .recurrence import CHUNK, sample_stationary

DEFAULT_PERCENTILE = 99.5
DEFAULT_RUN_GAP = 20


@dataclass(frozen=True)
class ExceedanceRecords:
    """0-based step indices (ascending) where a path of length ``n`` exceeds ``u``."""

    indices: np.ndarray
    n: int
    u: float

    @classmethod
    def from_path(cls, values, u):
        values = np.asarray(values)
        return cls(np.flatnonzero(values > u), values.size, float(u))

    @property
    def count(self):
        return int(self.indices.size)


@dataclass(frozen=True)
class ExtremalIndexEstimate:
    theta_hat: float
    method: str
    u: float | None = None
    params: dict = field(default_factory=dict)
    n_exceed: int | None = None
    se: float | None = None
    clipped: bool = False

    def to_dict(self):
        return {"theta_hat": self.theta_hat, "method": self.method, "u": self.u,
                "params": self.params, "n_exceed": self.n_exceed, "se": self.se,
                "clipped": self.clipped}

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)


def _clip(theta):
    if theta > 1.0:
        return 1.0, True
    if not theta > 0.0:
        return np.nextafter(0.0, 1.0), True
    return float(theta), False


def _require_exceedances(records):
    if records.count < 1:
        raise EstimationError(f"no exceedances of u = {records.u:.6g}; lower the threshold")


def default_block_len(n):
    return math.ceil(math.sqrt(n))


def theta_theoretical(spec, allow_counterexample=False):
    """``1 - P(M = 1)``."""
    require_simulatable(spec, allow_counterexample)
    return 1.0 - spec.p0


def _blocks_value(K, N, k, r, estimator):
    if estimator == "ratio":
        return K / N
    if K >= k:
        return math.nan
    return math.log1p(-K / k) / (r * math.log1p(-N / (k * r)))


def theta_blocks(records, block_len=None, estimator="log"):
    """Blocks estimator over the ``n // block_len`` complete blocks.

    ``estimator="ratio"``: (#blocks with an exceedance) / (#exceedances).
    ``estimator="log"`` (default): ``log(1 - K/k) / (r log(1 - N/n))``, which
    corrects the ratio for blocks that hold several independent clusters; the
    two agree when ``K << k``. The standard error is a delete-one-block
    jackknife.
    """
    if estimator not in ("log", "ratio"):
        raise SpecError("estimator", f"expected 'log' or 'ratio', got {estimator!r}")
    r = default_block_len(records.n) if block_len is None else int(block_len)
    if r < 2:
        raise SpecError("block_len", f"must be >= 2, got {block_len!r}")
    k = records.n // r
    if k < 2:
        raise SpecError("block_len", f"need at least two complete blocks, got {k}")
    idx = records.indices[records.indices < k * r]
    N = int(idx.size)
    if N < 1:
        _require_exceedances(ExceedanceRecords(idx, records.n, records.u))
    per_block = np.bincount(idx // r, minlength=k)
    hit = per_block > 0
    K = int(np.count_nonzero(hit))
    theta = _blocks_value(K, N, k, r, estimator)
    if math.isnan(theta):
        raise EstimationError("every block holds an exceedance; raise u or shorten the blocks")

    # jackknife, deleting one block at a time
    Kj = K - hit.astype(float)
    Nj = N - per_block.astype(float)
    ok = Nj > 0
    if estimator == "ratio":
        tj = Kj[ok] / Nj[ok]
    else:
        ok &= Kj < k - 1
        tj = np.log1p(-Kj[ok] / (k - 1)) / (r * np.log1p(-Nj[ok] / ((k - 1) * r)))
    se = float(math.sqrt((tj.size - 1) / tj.size * np.sum((tj - tj.mean()) ** 2))) if tj.size > 1 else None
    theta, clipped = _clip(theta)
    return ExtremalIndexEstimate(theta, "blocks", records.u,
                                 {"block_len": r, "n_blocks": k, "blocks_hit": K, "estimator": estimator},
                                 N, se, clipped)


def theta_at_level(maxima, block_len, view, level=None):
    """Log-form blocks estimator from block maxima alone, at one threshold.

    ``u`` is the stationary quantile at ``level`` (default ``1 - 1/block_len``,
    the level the norming aims at); ``K/k`` is the fraction of block maxima
    above ``u`` and ``N/n`` the empirical ``P(R > u)`` from ``view``.
    """
    r = int(block_len)
    maxima = np.asarray(maxima, dtype=float)
    k = maxima.size
    if k < 2:
        raise SpecError("maxima", f"need at least two blocks, got {k}")
    u = view.quantile(1.0 - 1.0 / r if level is None else level)
    K = int(np.count_nonzero(maxima > u))
    tail = float(view.survival(u))
    if K < 1 or tail <= 0.0:
        raise EstimationError(f"no exceedances of u = {u:.6g}")
    if K >= k:
        raise EstimationError("every block holds an exceedance; raise the level")
    theta = math.log1p(-K / k) / (r * math.log1p(-tail))
    # delta method on log(1 - K/k), treating the tail fraction as exact
    se = math.sqrt(K / (k * (k - K))) / (r * -math.log1p(-tail))
    theta, clipped = _clip(theta)
    return ExtremalIndexEstimate(theta, "blocks", float(u),
                                 {"block_len": r, "n_blocks": k, "blocks_hit": K, "estimator": "log",
                                  "level": 1.0 - 1.0 / r if level is None else level},
                                 int(round(tail * view.size)), se, clipped)


def theta_runs(records, run_gap=DEFAULT_RUN_GAP, se_block_len=None):
    """Runs estimator: fraction of exceedances followed by ``>= run_gap``
    non-exceedances (the last one counts as closing its cluster).

    The standard error is a delete-one-block jackknife with blocks of
    ``se_block_len`` steps (default ``ceil(sqrt(n))``).
    """
    run_gap = int(run_gap)
    if run_gap < 1:
        raise SpecError("run_gap", f"must be >= 1, got {run_gap!r}")
    _require_exceedances(records)
    idx = records.indices
    N = idx.size
    ends = np.ones(N, dtype=bool)
    ends[:-1] = np.diff(idx) - 1 >= run_gap
    C = int(np.count_nonzero(ends))
    theta = C / N

    r = default_block_len(records.n) if se_block_len is None else int(se_block_len)
    k = -(-records.n // r)
    blk = idx // r
    n_b = np.bincount(blk, minlength=k).astype(float)
    c_b = np.bincount(blk, weights=ends, minlength=k)
    ok = N - n_b > 0
    tj = (C - c_b[ok]) / (N - n_b[ok])
    se = float(math.sqrt((tj.size - 1) / tj.size * np.sum((tj - tj.mean()) ** 2))) if tj.size > 1 else None
    theta, clipped = _clip(theta)
    return ExtremalIndexEstimate(theta, "runs", records.u, {"run_gap": run_gap, "clusters": C},
                                 int(N), se, clipped)


def conditional_non_exceedance(spec, q, u, n_samples, rng, attempt_cap=10**8,
                               tolerance=1e-12, max_terms=10**6, allow_counterexample=False):
    """Monte Carlo ``P(M R + q <= u | R > u)`` with R stationary and M independent.

    Stationary draws are rejected until ``n_samples`` exceed ``u`` (at most
    ``attempt_cap`` draws in total); then one fresh multiplier per kept draw.
    """
    require_simulatable(spec, allow_counterexample)
    if not u >= q:
        raise SpecError("u", f"threshold must be >= q = {q}, got {u!r}")
    n_samples = int(n_samples)
    if n_samples < 1:
        raise SpecError("n_samples", f"must be >= 1, got {n_samples!r}")
    rng = rngmod.as_generator(rng)
    kept = []
    have = 0
    attempts = 0
    batch = 4 * CHUNK
    while have < n_samples:
        if attempts >= attempt_cap:
            raise EstimationError(
                f"only {have} of {n_samples} draws exceeded u = {u:.6g} within {attempts} attempts"
            )
        k = int(min(batch, attempt_cap - attempts))
        r = sample_stationary(spec, q, rng, k, tolerance, max_terms, allow_counterexample=True).values
        attempts += k
        hit = r[r > u]
        if hit.size:
            kept.append(hit[: n_samples - have])
            have += kept[-1].size
    r = np.concatenate(kept)
    m = spec.sample(rng, r.size)
    p = float(np.mean(m * r + q <= u))
    se = math.sqrt(max(p * (1.0 - p), 1.0 / r.size) / r.size)
    return ExtremalIndexEstimate(p, "conditional", float(u),
                                 {"n_samples": n_samples, "attempts": attempts}, int(r.size), se)
