import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from perpex import kernels
from perpex import recurrence as rec
from perpex.errors import IneligibleSpecError, ReplicaError, SpecError
from perpex.gof import moment_oracle
from perpex.mdist import AtomMixture, Beta, ExpIntFamily, RFamily, TwoPoint
from perpex.recurrence import (BlockMaxima, BlockMaximaJob, BurnIn, Exceedances, Fixed, Moments, PathJob,
                               PathRecorder, RecurrenceConfig, Stationary, StationaryJob, TailKeeper,
                               block_maxima, coarsen, ensemble, sample_stationary, simulate_path, step)
from perpex.rng import STATIONARY, substream

HAS_COMPILED = "compiled" in kernels.BACKENDS
needs_compiled = pytest.mark.skipif(not HAS_COMPILED, reason="extension not built")


def test_step():
    assert step(2.0, 0.5, 1.0) == 2.0
    assert step(0.0, 0.3, 1.5) == 1.5


# -- backend parity --------------------------------------------------------------


@needs_compiled
@settings(max_examples=50, deadline=None)
@given(m=arrays(np.float64, st.integers(1, 300), elements=st.floats(0.0, 1.0)),
       r0=st.floats(0.0, 1e6), q=st.floats(1e-3, 1e3))
def test_path_kernel_parity(m, r0, q):
    a, b = np.empty_like(m), np.empty_like(m)
    ra = kernels.get("python").path_fill(m, r0, q, a)
    rb = kernels.get("compiled").path_fill(m, r0, q, b)
    assert ra == rb
    assert a.tobytes() == b.tobytes()


@needs_compiled
@settings(max_examples=50, deadline=None)
@given(m=arrays(np.float64, st.integers(1, 400), elements=st.floats(0.0, 1.0)),
       n_out=st.integers(1, 50), tol=st.sampled_from([1e-12, 1e-3, 0.5]), cap=st.integers(1, 40))
def test_series_kernel_parity(m, n_out, tol, cap):
    res = []
    for name in ("python", "compiled"):
        out = np.zeros(n_out)
        tr = np.zeros(n_out, dtype=np.uint8)
        state = kernels.get(name).series_fill(m, 0, 1.0, 1.0, 0, 1.0, tol, cap, out, tr, 0)
        res.append((tuple(state), out.tobytes(), tr.tobytes()))
    assert res[0] == res[1]


@needs_compiled
def test_pipeline_parity(monkeypatch):
    spec = AtomMixture(0.3, Beta(1, 1))
    cfg = RecurrenceConfig(q=1.0, n=3 * rec.CHUNK + 17, seed=5)
    fast = (sample_stationary(spec, 1.0, substream(1), 3000).values,
            simulate_path(cfg, spec, observers=[PathRecorder()]).observers[0].values)
    monkeypatch.setattr(kernels, "_impl", kernels.get("python"))
    slow = (sample_stationary(spec, 1.0, substream(1), 3000).values,
            simulate_path(cfg, spec, observers=[PathRecorder()]).observers[0].values)
    assert fast[0].tobytes() == slow[0].tobytes()
    assert fast[1].tobytes() == slow[1].tobytes()


# -- stationary draws ------------------------------------------------------------------


def test_series_matches_explicit_loop():
    spec, q, tol = Beta(2, 1), 1.5, 1e-9
    got = sample_stationary(spec, q, substream(3), 50, tolerance=tol).values
    m = spec.sample(substream(3), rec.CHUNK)
    ref, pos = [], 0
    for _ in range(50):
        acc, prod = q, 1.0
        while prod > tol:
            prod *= m[pos]
            pos += 1
            acc += q * prod
        ref.append(acc)
    assert np.array_equal(got, ref)


def test_truncation_flag():
    spec = AtomMixture(0.9, Beta(1, 1))
    d = sample_stationary(spec, 1.0, substream(4), 10_000, max_terms=5)
    # a draw stops early only if one of its five multipliers is tiny enough
    assert d.truncated.mean() > 0.5
    assert np.all(d.values[d.truncated] <= 6.0 + 1e-12)
    assert not sample_stationary(spec, 1.0, substream(4), 10_000).truncated.any()


def test_scalar_draw():
    d = sample_stationary(Beta(1, 1), 1.0, substream(8))
    assert isinstance(d.values, float) and isinstance(d.truncated, bool)


def test_stationary_gate():
    with pytest.raises(IneligibleSpecError):
        sample_stationary(TwoPoint(0.5), 1.0, substream(0), 10)
    d = sample_stationary(TwoPoint(0.5), 1.0, substream(0), 10, allow_counterexample=True)
    assert np.all(d.values == np.round(d.values))


@pytest.mark.parametrize("spec", [Beta(1, 1), Beta(2, 1), Beta(0.5, 2), RFamily(2), RFamily(1.5),
                                  ExpIntFamily(), AtomMixture(0.3, Beta(1, 1))], ids=str)
def test_moments_match_fixed_point_oracle(spec):
    q = 1.3
    r = sample_stationary(spec, q, substream(21), 10**6).values
    er, er2 = moment_oracle(spec, q)
    n = r.size
    assert abs(r.mean() - er) < 4 * r.std() / math.sqrt(n)
    assert abs(np.mean(r * r) - er2) < 4 * np.std(r * r) / math.sqrt(n)


def test_q_scaling_is_exact():
    # the series is linear in q
    a = sample_stationary(Beta(2, 1), 1.0, substream(6), 1000).values
    b = sample_stationary(Beta(2, 1), 4.0, substream(6), 1000).values
    assert np.allclose(b, 4.0 * a, rtol=1e-13)


# -- paths and observers --------------------------------------------------------------


def test_path_determinism_and_replica_streams():
    spec = Beta(1, 1)
    cfg = RecurrenceConfig(n=1000, seed=99)
    a = simulate_path(cfg, spec, observers=[PathRecorder()], replica=2)
    b = simulate_path(cfg, spec, observers=[PathRecorder()], replica=2)
    c = simulate_path(cfg, spec, observers=[PathRecorder()], replica=3)
    assert np.array_equal(a.observers[0].values, b.observers[0].values)
    assert not np.array_equal(a.observers[0].values, c.observers[0].values)
    assert a.sub_seed == b.sub_seed != c.sub_seed


def test_path_follows_recurrence():
    spec = Beta(2, 1)
    g = substream(12)
    cfg = RecurrenceConfig(n=500, init=Fixed(3.0))
    s = simulate_path(cfg, spec, rng=g, observers=[PathRecorder()])
    m = spec.sample(substream(12), 500)
    r, ref = 3.0, []
    for mi in m:
        r = step(r, mi, 1.0)
        ref.append(r)
    assert np.array_equal(s.observers[0].values, ref)
    assert s.final == ref[-1] and s.running_max == max(ref) and s.r0 == 3.0


def test_observers_against_full_path():
    spec = RFamily(2)
    n = 2 * rec.CHUNK + 1234
    obs = [PathRecorder(), PathRecorder(window=777), Moments(), Exceedances(2.5), BlockMaxima(1000),
           TailKeeper(321)]
    s = simulate_path(RecurrenceConfig(n=n, seed=4), spec, observers=obs)
    x = obs[0].values
    assert x.size == n
    assert np.array_equal(obs[1].values, x[-777:])
    assert obs[2].mean == pytest.approx(x.mean(), rel=1e-12)
    assert np.array_equal(obs[3].indices, np.flatnonzero(x > 2.5))
    assert np.array_equal(obs[4].maxima, x[: n // 1000 * 1000].reshape(-1, 1000).max(axis=1))
    assert np.array_equal(s.block_maxima, obs[4].maxima)
    top = np.argsort(x, kind="stable")[-321:]
    assert np.array_equal(obs[5].values, x[top])
    assert set(obs[5].indices.tolist()) == set(top.tolist())
    assert obs[5].count == n


@settings(max_examples=60, deadline=None)
@given(x=arrays(np.float64, st.integers(1, 400), elements=st.sampled_from([0.0, 1.0, 2.0, 2.5, 3.0, 7.0])),
       k=st.integers(1, 50), cut=st.integers(1, 97))
def test_tail_keeper_with_ties(x, k, cut):
    t = TailKeeper(k)
    for off in range(0, x.size, cut):
        t.update(x[off:off + cut], off)
    kk = min(k, x.size)
    assert np.array_equal(t.values, np.sort(x)[-kk:])
    assert np.array_equal(x[t.indices], t.values)
    assert len(set(t.indices.tolist())) == kk
    v = t.view()
    assert v.size == x.size


@settings(max_examples=60, deadline=None)
@given(x=arrays(np.float64, st.integers(1, 500), elements=st.floats(0, 100)),
       L=st.integers(1, 60), cut=st.integers(1, 70))
def test_block_maxima_chunking(x, L, cut):
    bm = BlockMaxima(L)
    for off in range(0, x.size, cut):
        bm.update(x[off:off + cut], off)
    k = x.size // L
    assert np.array_equal(bm.maxima, x[: k * L].reshape(k, L).max(axis=1) if k else np.empty(0))


def test_tail_keeper_merge():
    x = substream(2).random(5000)
    y = substream(3).random(7000)
    a, b = TailKeeper(100), TailKeeper(100)
    a.update(x, 0)
    b.update(y, 0)
    m = a.merged(b)
    assert np.array_equal(m.values, np.sort(np.concatenate([x, y]))[-100:])
    assert m.count == 12000


def test_coarsen():
    x = np.arange(10.0)
    assert np.array_equal(coarsen(x, 3), [2.0, 5.0, 8.0])
    assert np.array_equal(coarsen(x, 1), x)


def test_block_maxima_coarsen_consistency():
    spec = Beta(2, 1)
    cfg = RecurrenceConfig(seed=1)
    fine = block_maxima(cfg, spec, 100, 500)
    coarse = block_maxima(cfg, spec, 1000, 50)
    assert np.array_equal(coarsen(fine, 10), coarse)


def test_block_maxima_needs_stationary_start():
    with pytest.raises(SpecError):
        block_maxima(RecurrenceConfig(init=Fixed(0.0)), Beta(1, 1), 10, 10)


def test_burn_in_and_fixed_start_forget_initial_value():
    spec = Beta(1, 1)
    a = simulate_path(RecurrenceConfig(n=200, init=Fixed(0.0)), spec, rng=substream(7)).final
    b = simulate_path(RecurrenceConfig(n=200, init=Fixed(100.0)), spec, rng=substream(7)).final
    # the two paths share multipliers; their gap is the initial gap times the product
    assert abs(a - b) < 100.0 * 1e-12
    s = simulate_path(RecurrenceConfig(n=10, init=BurnIn(1000)), spec)
    assert s.r0 >= 1.0


def test_config_validation():
    with pytest.raises(SpecError):
        RecurrenceConfig(q=0.0)
    with pytest.raises(SpecError):
        RecurrenceConfig(replicas=0)
    with pytest.raises(SpecError):
        Stationary(tolerance=0.0)
    with pytest.raises(SpecError):
        Fixed(-1.0)


# -- ensembles ---------------------------------------------------------------------------


def test_ensemble_thread_independence():
    spec = AtomMixture(0.3, Beta(1, 1))
    cfg = RecurrenceConfig(replicas=6, seed=17)
    one = ensemble(cfg, spec, StationaryJob(20_000), threads=1)
    many = ensemble(cfg, spec, StationaryJob(20_000), threads=4)
    assert one.values.tobytes() == many.values.tobytes()
    m1, t1 = ensemble(cfg, spec, BlockMaximaJob(100, 300, tail_k=50), threads=1)
    m4, t4 = ensemble(cfg, spec, BlockMaximaJob(100, 300, tail_k=50), threads=3)
    assert m1.tobytes() == m4.tobytes()
    assert t1.values.tobytes() == t4.values.tobytes()


def test_ensemble_replica_streams_match_direct_calls():
    spec = Beta(2, 1)
    cfg = RecurrenceConfig(replicas=3, seed=8)
    pooled = ensemble(cfg, spec, StationaryJob(100), threads=2).values
    direct = [sample_stationary(spec, 1.0, substream(8, i, STATIONARY), 100).values for i in range(3)]
    assert np.array_equal(pooled, np.concatenate(direct))


def test_ensemble_paths_in_replica_order():
    cfg = RecurrenceConfig(n=100, replicas=4, seed=3)
    out = ensemble(cfg, Beta(1, 1), PathJob(), threads=4)
    assert [s.replica for s in out] == [0, 1, 2, 3]


def test_ensemble_wraps_failures():
    def job(config, spec, replica):
        if replica == 2:
            raise ValueError("boom")
        return replica

    with pytest.raises(ReplicaError) as err:
        ensemble(RecurrenceConfig(replicas=4), Beta(1, 1), job)
    assert err.value.replica == 2


def test_ensemble_gate():
    with pytest.raises(IneligibleSpecError):
        ensemble(RecurrenceConfig(), TwoPoint(0.5), StationaryJob(10))


def test_ergodic_average_of_stationary_path():
    mom = Moments()
    simulate_path(RecurrenceConfig(n=10**6, seed=42), Beta(1, 1), observers=[mom])
    assert abs(mom.mean - 2.0) < 0.02
