import numpy as np
import pytest

from mvdict.errors import ConfigError, RangeError, SolverError
from mvdict.evoked import (EvokedPattern, epoch_record, grand_average, latency_to_shift,
                           learn_ep_kernel, ls_estimate, peak_index, spatial_pattern,
                           to_average_reference, toeplitz_normal_equations, truncate_pattern)
from mvdict.metrics import max_correlation
from mvdict.model import ContinuousRecord, EpochSet
from mvdict.simulate import SimulationSpec, generate_trials, p300_like_pattern


def dense_onset_matrix(onsets, total, n):
    """Explicit Toeplitz onset matrix (total x n)."""
    d = np.zeros((total, n))
    for t in onsets:
        d[t : t + n] += np.eye(n)
    return d


def test_pattern_normalization_and_sign(rng):
    w = rng.standard_normal((10, 3))
    w[4] = [-5.0, -4.0, -6.0]
    p = EvokedPattern(w).normalize()
    assert np.linalg.norm(p.waveform) == pytest.approx(1.0, abs=1e-12)
    assert p.waveform[4].mean() > 0
    with pytest.raises(ConfigError):
        EvokedPattern(w, normalized=True)
    with pytest.raises(ConfigError):
        EvokedPattern(np.zeros((3, 2))).normalize()


def test_epoch_record_examples(rng):
    y = rng.standard_normal((50, 3))
    e = epoch_record(ContinuousRecord(y, [0]), 50)
    assert np.array_equal(e.data[0], y)
    e = epoch_record(ContinuousRecord(y, [0, 10, 30]), 12)
    assert e.data.shape == (3, 12, 3)
    with pytest.raises(RangeError):
        epoch_record(ContinuousRecord(y, [0, 45]), 12)


def test_epoch_record_planted_offset(rng):
    pat = rng.standard_normal((6, 2))
    y = 0.01 * rng.standard_normal((200, 2))
    onsets = [5, 60, 120]
    for t in onsets:
        y[t + 4 : t + 10] += pat
    for ep in epoch_record(ContinuousRecord(y, onsets), 20):
        assert np.allclose(ep[4:10], pat, atol=0.05)


def test_grand_average_examples(rng):
    a = rng.standard_normal((8, 2))
    assert np.array_equal(grand_average(EpochSet(a[None])).waveform, a)
    assert np.allclose(grand_average(EpochSet(np.stack([a, -a]))).waveform, 0)
    with pytest.raises(ConfigError):
        grand_average(np.zeros((0, 4, 2)))


def test_grand_average_noise_gain():
    ref = p300_like_pattern(length=65, n_channels=8)
    sim = generate_trials(SimulationSpec(ref.waveform, n_trials=1000, n_samples=192, seed=4))
    ga, _ = truncate_pattern(grand_average(sim.epochs), 65)
    assert max_correlation(ga, ref) >= 0.95


def test_normal_equations_match_dense(rng):
    onsets = [0, 7, 15, 40]
    y = rng.standard_normal((70, 2))
    gram, rhs = toeplitz_normal_equations(ContinuousRecord(y, onsets), 20)
    d = dense_onset_matrix(onsets, 70, 20)
    assert np.array_equal(gram, d.T @ d)
    assert np.allclose(rhs, d.T @ y, atol=1e-12)


def test_ls_equals_ga_without_overlap(rng):
    n = 25
    onsets = np.cumsum(rng.integers(n, 2 * n, size=12))
    y = rng.standard_normal((int(onsets[-1]) + n + 3, 4))
    rec = ContinuousRecord(y, onsets)
    ls = ls_estimate(rec, n).waveform
    ga = grand_average(epoch_record(rec, n)).waveform
    assert np.linalg.norm(ls - ga) <= 1e-10 * np.linalg.norm(ga)


def test_ls_single_onset(rng):
    y = rng.standard_normal((30, 2))
    assert np.allclose(ls_estimate(ContinuousRecord(y, [5]), 10).waveform, y[5:15], atol=1e-12)


def test_ls_recovers_overlapping_patterns(rng):
    n = 20
    pat = rng.standard_normal((n, 3))
    onsets = [0, n // 2, 40, 40 + n // 2, 90]
    y = np.zeros((120, 3))
    for t in onsets:
        y[t : t + n] += pat
    rec = ContinuousRecord(y, onsets)
    assert np.max(np.abs(ls_estimate(rec, n).waveform - pat)) <= 1e-8
    assert np.max(np.abs(grand_average(epoch_record(rec, n)).waveform - pat)) > 0.1


def test_ls_onset_matrix_has_full_rank(rng):
    # the earliest onset gives every column a distinct leading row, so DtD is never singular
    for _ in range(20):
        onsets = np.sort(rng.choice(60, size=int(rng.integers(1, 15)), replace=False))
        gram, _ = toeplitz_normal_equations(ContinuousRecord(np.ones((80, 1)), onsets), 20)
        assert np.linalg.matrix_rank(gram) == 20


def test_ls_solver_failure_reports_lags(monkeypatch):
    import mvdict.evoked as ev

    def broken(*args, **kwargs):
        raise ev.linalg.LinAlgError("not positive definite")

    monkeypatch.setattr(ev.linalg, "cho_factor", broken)
    rec = ContinuousRecord(np.ones((40, 1)), [0, 3, 10])
    with pytest.raises(SolverError, match="lags"):
        ls_estimate(rec, 12)


def test_spatial_pattern_examples(rng):
    single = rng.standard_normal((9, 1))
    assert spatial_pattern(single)[0] == single[np.argmax(np.abs(single[:, 0])), 0]
    w = 0.01 * rng.standard_normal((12, 4))
    w[7] = [3.0, -2.0, 1.0, 4.0]
    assert np.array_equal(spatial_pattern(w), w[7])
    a = np.sin(np.linspace(0, np.pi, 15))
    v = np.array([0.5, -1.0, 2.0])
    assert np.allclose(spatial_pattern(np.outer(a, v)), v * a.max())
    assert np.array_equal(spatial_pattern(w, "absmax"), w[7])
    with pytest.raises(ConfigError):
        spatial_pattern(w, "median")


def test_spatial_pattern_invariant_to_zero_rows(rng):
    w = rng.standard_normal((10, 3))
    padded = np.vstack([np.zeros((4, 3)), w, np.zeros((6, 3))])
    assert np.array_equal(spatial_pattern(padded), spatial_pattern(w))


def test_average_reference(rng):
    assert np.allclose(to_average_reference(np.outer(np.arange(5.0), np.ones(4))), 0)
    y = rng.standard_normal((8, 4))
    once = to_average_reference(y)
    assert np.max(np.abs(once.sum(axis=1))) <= 1e-12
    assert np.allclose(to_average_reference(once), once, atol=1e-15)
    z = rng.standard_normal((8, 4))
    assert np.allclose(to_average_reference(y + 2 * z), once + 2 * to_average_reference(z))
    with pytest.raises(ConfigError):
        to_average_reference(np.ones((5, 1)))


def test_truncate_pattern_window(rng):
    w = np.zeros((100, 2))
    w[70] = [1.0, 1.0]
    p, start = truncate_pattern(w, 21)
    assert start == 60 and p.length == 21 and p.waveform[10, 0] > 0
    p, start = truncate_pattern(w[:75], 21)
    assert start == 54
    with pytest.raises(ConfigError):
        truncate_pattern(w, 101)


def test_latency_to_shift():
    assert latency_to_shift(300, 240, 65) == 40
    assert peak_index(np.eye(5)[:, :1]) == 0


def test_learn_ep_noiseless_fixed_point(rng):
    ref = p300_like_pattern(length=33, n_channels=4)
    data = np.zeros((30, 100, 4))
    amps = rng.uniform(0.5, 2.0, 30)
    for p in range(30):
        data[p, 30:63] = amps[p] * ref.waveform
    k = learn_ep_kernel(EpochSet(data, 240.0), length=33, interval=(0, 3), center_shift=30,
                        iterations=5)
    assert max_correlation(k, ref) >= 0.999
    assert abs(np.linalg.norm(k.waveform) - 1) <= 1e-10


def test_learn_ep_validates(rng):
    e = EpochSet(rng.standard_normal((4, 50, 2)), 240.0)
    with pytest.raises(ConfigError):
        learn_ep_kernel(e, length=60)
    with pytest.raises(ConfigError):
        learn_ep_kernel(e, length=20, interval=(900.0, 4))
    with pytest.raises(ConfigError):
        learn_ep_kernel(e, init=np.ones((10, 2)), length=20, interval=(100.0, 2))


def test_learn_ep_full_settings_many_channels():
    # T = 65 samples, 9-point interval around 300 ms, 20 passes, GA warm start on C = 64
    ref = p300_like_pattern(length=65, n_channels=64)
    sim = generate_trials(SimulationSpec(ref.waveform, n_trials=40, n_samples=192, seed=2))
    k = learn_ep_kernel(sim.epochs, length=65, interval=(300.0, 4), iterations=20)
    assert k.waveform.shape == (65, 64)
    assert abs(np.linalg.norm(k.waveform) - 1) <= 1e-10


def test_learn_ep_beats_ga_under_jitter():
    ref = p300_like_pattern()
    ga_c, dla_c = [], []
    for seed in range(3):
        sim = generate_trials(SimulationSpec(ref.waveform, n_trials=200, jitter=6.0, seed=seed))
        ga, start = truncate_pattern(grand_average(sim.epochs), 65)
        k = learn_ep_kernel(sim.epochs, init=ga, center_shift=start, interval=(0, 4))
        ga_c.append(max_correlation(ga, ref))
        dla_c.append(max_correlation(k, ref))
    assert np.mean(dla_c) > np.mean(ga_c)
