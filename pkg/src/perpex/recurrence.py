"""Paths and stationary draws of ``R_n = M_n R_{n-1} + q``.

The multipliers are drawn in fixed-size chunks from a per-replica Philox
stream and pushed through a compiled (or pure-Python) loop. Observers see the
path one chunk at a time, so arbitrarily long runs need bounded memory.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import kernels, rng as rngmod
from .ecdf import EcdfView
from .errors import ReplicaError, SpecError
from .mdist import require_simulatable

CHUNK = 1 << 16


@dataclass(frozen=True)
class Fixed:
    r0: float = 0.0

    def __post_init__(self):
        if not self.r0 >= 0.0:
            raise SpecError("r0", f"must be nonnegative, got {self.r0!r}")


@dataclass(frozen=True)
class Stationary:
    """Start from a draw of the backward series (exact law up to truncation)."""

    tolerance: float = 1e-12
    max_terms: int = 10**6

    def __post_init__(self):
        if not 0.0 < self.tolerance <= 1.0:
            raise SpecError("tolerance", f"must lie in (0, 1], got {self.tolerance!r}")
        if int(self.max_terms) < 1:
            raise SpecError("max_terms", f"must be >= 1, got {self.max_terms!r}")


@dataclass(frozen=True)
class BurnIn:
    steps: int
    r0: float = 0.0

    def __post_init__(self):
        if int(self.steps) < 0:
            raise SpecError("steps", f"must be >= 0, got {self.steps!r}")


@dataclass(frozen=True)
class RecurrenceConfig:
    q: float = 1.0
    n: int = 1
    replicas: int = 1
    seed: int = 0
    init: Fixed | Stationary | BurnIn = field(default_factory=Stationary)
    allow_counterexample: bool = False

    def __post_init__(self):
        if not (math.isfinite(self.q) and self.q > 0.0):
            raise SpecError("q", f"must be a positive real, got {self.q!r}")
        if int(self.n) < 1:
            raise SpecError("n", f"must be >= 1, got {self.n!r}")
        if int(self.replicas) < 1:
            raise SpecError("replicas", f"must be >= 1, got {self.replicas!r}")

    def with_(self, **kw):
        from dataclasses import replace

        return replace(self, **kw)


class SeriesDraw(NamedTuple):
    values: np.ndarray
    truncated: np.ndarray


@dataclass
class PathSummary:
    final: float
    running_max: float
    replica: int = 0
    sub_seed: int | None = None
    r0: float = 0.0
    n: int = 0
    init_truncated: bool = False
    block_maxima: np.ndarray | None = None
    observers: list = field(default_factory=list)


def step(r, m, q):
    return m * r + q


def _m_chunk(spec, rng, k):
    return np.ascontiguousarray(spec.sample(rng, k), dtype=float)


def sample_stationary(spec, q, rng, size=None, tolerance=1e-12, max_terms=10**6,
                      allow_counterexample=False):
    """Draw from the stationary law via ``q * (1 + M1 + M1 M2 + ...)``.

    The series for each draw stops at the first partial product ``<= tolerance``
    (so the neglected tail has mean at most ``tolerance * E R``), or after
    ``max_terms`` multipliers, in which case its ``truncated`` flag is set.
    Draws consume one shared multiplier stream in order.

    Returns a :class:`SeriesDraw` of arrays, or of a float and a bool when
    ``size`` is None.
    """
    require_simulatable(spec, allow_counterexample)
    Stationary(tolerance, max_terms)
    rng = rngmod.as_generator(rng)
    n = 1 if size is None else int(size)
    out = np.empty(n)
    trunc = np.zeros(n, dtype=np.uint8)
    q = float(q)
    m = np.empty(0)
    pos, out_pos, acc, prod, terms = 0, 0, q, 1.0, 0
    while out_pos < n:
        if pos >= m.shape[0]:
            m = _m_chunk(spec, rng, CHUNK)
            pos = 0
        pos, out_pos, acc, prod, terms = kernels.series_fill(
            m, pos, acc, prod, terms, q, float(tolerance), int(max_terms), out, trunc, out_pos
        )
    trunc = trunc.astype(bool)
    if size is None:
        return SeriesDraw(float(out[0]), bool(trunc[0]))
    return SeriesDraw(out, trunc)


# -- observers -----------------------------------------------------------------
#
# ``update(values, offset)`` receives a view of the next chunk; ``offset`` is the
# 0-based step index of ``values[0]``. The buffer is reused, copy what you keep.


class RunningMax:
    def __init__(self):
        self.value = -math.inf

    def update(self, values, offset):
        self.value = max(self.value, float(values.max()))


class PathRecorder:
    """Keeps the last ``window`` values (all of them when ``window`` is None)."""

    def __init__(self, window=None):
        self.window = window
        self._parts = []
        self._kept = 0

    def update(self, values, offset):
        self._parts.append(values.copy())
        self._kept += values.size
        if self.window is not None:
            while self._kept - self._parts[0].size >= self.window:
                self._kept -= self._parts.pop(0).size

    @property
    def values(self):
        if not self._parts:
            return np.empty(0)
        out = np.concatenate(self._parts)
        return out if self.window is None else out[-self.window:]


class Moments:
    def __init__(self):
        self.count = 0
        self.total = 0.0
        self.total_sq = 0.0

    def update(self, values, offset):
        self.count += values.size
        self.total += float(values.sum())
        self.total_sq += float(np.dot(values, values))

    @property
    def mean(self):
        return self.total / self.count


class Exceedances:
    """Step indices where the path exceeds ``u``."""

    def __init__(self, u):
        self.u = float(u)
        self.count = 0
        self._idx = []

    def update(self, values, offset):
        self.count += values.size
        hit = np.flatnonzero(values > self.u)
        if hit.size:
            self._idx.append(hit + offset)

    @property
    def indices(self):
        return np.concatenate(self._idx) if self._idx else np.empty(0, dtype=np.int64)


class BlockMaxima:
    """Maxima over consecutive blocks of ``block_len`` steps."""

    def __init__(self, block_len):
        if int(block_len) < 1:
            raise SpecError("block_len", f"must be >= 1, got {block_len!r}")
        self.block_len = int(block_len)
        self._done = []
        self._partial = -math.inf
        self._fill = 0

    def update(self, values, offset):
        L = self.block_len
        i = 0
        if self._fill:
            take = min(L - self._fill, values.size)
            self._partial = max(self._partial, float(values[:take].max()))
            self._fill += take
            i = take
            if self._fill == L:
                self._done.append(np.array([self._partial]))
                self._partial, self._fill = -math.inf, 0
        full = (values.size - i) // L
        if full:
            self._done.append(values[i:i + full * L].reshape(full, L).max(axis=1))
            i += full * L
        if i < values.size:
            self._partial = float(values[i:].max())
            self._fill = values.size - i

    @property
    def maxima(self):
        return np.concatenate(self._done) if self._done else np.empty(0)


class TailKeeper:
    """Largest ``k`` values seen (with their step indices) and the total count."""

    def __init__(self, k):
        self.k = int(k)
        if self.k < 1:
            raise SpecError("k", f"must be >= 1, got {k!r}")
        self.count = 0
        self._vals = np.empty(0)
        self._idx = np.empty(0, dtype=np.int64)
        self._pv = []
        self._pi = []
        self._pending = 0
        self._thr = -math.inf

    def update(self, values, offset):
        self.count += values.size
        sel = np.flatnonzero(values > self._thr) if self._thr > -math.inf else np.arange(values.size)
        if sel.size:
            self._pv.append(values[sel])
            self._pi.append(sel + offset)
            self._pending += sel.size
            if self._pending + self._vals.size > 2 * self.k + CHUNK:
                self._compact()

    def _compact(self):
        v = np.concatenate([self._vals, *self._pv])
        ix = np.concatenate([self._idx, *self._pi])
        self._pv, self._pi, self._pending = [], [], 0
        # ascending by value; among ties the earliest step sorts last and survives,
        # matching the strict ``> threshold`` filter in update()
        order = np.lexsort((-ix, v))
        if v.size > self.k:
            order = order[-self.k:]
        self._vals, self._idx = v[order], ix[order]
        if v.size >= self.k:
            self._thr = float(self._vals[0])

    def merged(self, other):
        out = TailKeeper(self.k)
        out.count = self.count + other.count
        out._pv = [self.values, other.values]
        out._pi = [self.indices, other.indices]
        out._compact()
        return out

    def _final(self):
        if self._pv:
            self._compact()

    @property
    def values(self):
        self._final()
        return self._vals

    @property
    def indices(self):
        self._final()
        return self._idx

    def view(self):
        return EcdfView(self.values, size=self.count, presorted=True)


# -- paths ---------------------------------------------------------------------


def _initial_value(config, spec, rng):
    init = config.init
    if isinstance(init, Fixed):
        return float(init.r0), False
    if isinstance(init, Stationary):
        d = sample_stationary(spec, config.q, rng, None, init.tolerance, init.max_terms,
                              allow_counterexample=True)
        return d.values, d.truncated
    if isinstance(init, BurnIn):
        r = float(init.r0)
        left = int(init.steps)
        buf = np.empty(min(CHUNK, max(left, 1)))
        while left:
            k = min(CHUNK, left)
            r = kernels.path_fill(_m_chunk(spec, rng, k), r, config.q, buf[:k])
            left -= k
        return r, False
    raise SpecError("init", f"unknown initialization {init!r}")


def simulate_path(config, spec, rng=None, observers=(), replica=0, n=None):
    """Run one path of ``n`` steps (default ``config.n``), streaming to ``observers``.

    With ``rng=None`` the initial value and the multipliers come from the
    ``(config.seed, replica)`` streams; a caller-supplied generator feeds both.
    """
    require_simulatable(spec, config.allow_counterexample)
    n = int(config.n if n is None else n)
    if rng is None:
        init_rng = rngmod.substream(config.seed, replica, rngmod.INIT)
        path_rng = rngmod.substream(config.seed, replica, rngmod.PATH)
        seed_tag = rngmod.sub_seed(config.seed, replica, rngmod.PATH)
    else:
        init_rng = path_rng = rngmod.as_generator(rng)
        seed_tag = None
    r, init_trunc = _initial_value(config, spec, init_rng)
    r0 = r
    q = float(config.q)
    running = RunningMax()
    obs = [running, *observers]
    buf = np.empty(min(CHUNK, n))
    done = 0
    while done < n:
        k = min(CHUNK, n - done)
        view = buf[:k]
        r = kernels.path_fill(_m_chunk(spec, path_rng, k), r, q, view)
        for o in obs:
            o.update(view, done)
        done += k
    blocks = next((o.maxima for o in observers if isinstance(o, BlockMaxima)), None)
    return PathSummary(final=r, running_max=running.value, replica=replica, sub_seed=seed_tag,
                       r0=r0, n=n, init_truncated=init_trunc, block_maxima=blocks,
                       observers=list(observers))


def block_maxima(config, spec, block_len, n_blocks, rng=None, replica=0, observers=()):
    """Maxima of ``n_blocks`` consecutive blocks on one stationary path."""
    if not isinstance(config.init, Stationary):
        raise SpecError("init", "block maxima need a stationary initialization")
    if int(n_blocks) < 1:
        raise SpecError("n_blocks", f"must be >= 1, got {n_blocks!r}")
    bm = BlockMaxima(block_len)
    simulate_path(config, spec, rng, [bm, *observers], replica, n=int(block_len) * int(n_blocks))
    return bm.maxima


def coarsen(maxima, factor):
    """Maxima over ``factor`` consecutive blocks (drops an incomplete trailing group)."""
    factor = int(factor)
    k = maxima.size // factor
    return maxima[:k * factor].reshape(k, factor).max(axis=1)


# -- ensembles -----------------------------------------------------------------


class StationaryJob:
    """``size`` stationary draws per replica, pooled in replica order."""

    def __init__(self, size):
        self.size = int(size)

    def __call__(self, config, spec, replica):
        init = config.init if isinstance(config.init, Stationary) else Stationary()
        return sample_stationary(spec, config.q, rngmod.substream(config.seed, replica, rngmod.STATIONARY),
                                 self.size, init.tolerance, init.max_terms, config.allow_counterexample)

    @staticmethod
    def merge(results):
        return SeriesDraw(np.concatenate([r.values for r in results]),
                          np.concatenate([r.truncated for r in results]))


class BlockMaximaJob:
    """Block maxima per replica; optionally keeps the top ``tail_k`` path values."""

    def __init__(self, block_len, n_blocks, tail_k=0):
        self.block_len = int(block_len)
        self.n_blocks = int(n_blocks)
        self.tail_k = int(tail_k)

    def __call__(self, config, spec, replica):
        tail = [TailKeeper(self.tail_k)] if self.tail_k else []
        m = block_maxima(config, spec, self.block_len, self.n_blocks, replica=replica, observers=tail)
        return m, (tail[0] if tail else None)

    @staticmethod
    def merge(results):
        maxima = np.concatenate([m for m, _ in results])
        tails = [t for _, t in results if t is not None]
        tail = None
        for t in tails:
            tail = t if tail is None else tail.merged(t)
        return maxima, tail


class PathJob:
    """One path per replica; ``observer_factory()`` builds fresh observers."""

    def __init__(self, observer_factory=list):
        self.observer_factory = observer_factory

    def __call__(self, config, spec, replica):
        return simulate_path(config, spec, observers=self.observer_factory(), replica=replica)

    @staticmethod
    def merge(results):
        return list(results)


def ensemble(config, spec, job, threads=1, merge=None):
    """Run ``job(config, spec, replica)`` for every replica and merge in replica order.

    The output is a pure function of ``(config, spec, job)``: sub-streams are
    keyed on ``(seed, replica, stream)`` and merging ignores completion order,
    so ``threads`` only changes wall-clock time.
    """
    require_simulatable(spec, config.allow_counterexample)

    def run(replica):
        try:
            return job(config, spec, replica)
        except Exception as exc:
            raise ReplicaError(replica, exc) from exc

    ids = range(int(config.replicas))
    if threads and int(threads) > 1 and config.replicas > 1:
        with ThreadPoolExecutor(max_workers=int(threads)) as pool:
            results = list(pool.map(run, ids))
    else:
        results = [run(i) for i in ids]
    merge = merge or getattr(job, "merge", list)
    return merge(results)
