import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mvdict.errors import ConfigError, ShapeError
from mvdict.model import (KernelDictionary, MultivariateSignal, ShiftKernel, SparseCode,
                          correlate_all_shifts, instantiate_atom, multivariate_inner, synthesize)

from conftest import naive_correlation, random_dictionary


def test_instantiate_atom_placement():
    a, b = 0.6, 0.8
    ker = np.array([[a], [b]])
    np.testing.assert_array_equal(instantiate_atom(ker, 0, 4)[:, 0], [a, b, 0, 0])
    np.testing.assert_array_equal(instantiate_atom(ker, 2, 4)[:, 0], [0, 0, a, b])


def test_instantiate_atom_out_of_range():
    ker = np.ones((3, 2)) / np.sqrt(6)
    with pytest.raises(IndexError):
        instantiate_atom(ker, 2, 4)
    with pytest.raises(IndexError):
        instantiate_atom(ker, -1, 4)


@settings(max_examples=50, deadline=None)
@given(t=st.integers(1, 8), c=st.integers(1, 4), extra=st.integers(0, 10), seed=st.integers(0, 2**32 - 1))
def test_instantiate_preserves_norm(t, c, extra, seed):
    rng = np.random.default_rng(seed)
    ker = ShiftKernel.from_array(rng.standard_normal((t, c)))
    n = t + extra
    exact = math.fsum(ker.waveform.ravel() ** 2)
    for s in range(n - t + 1):
        assert math.fsum(instantiate_atom(ker, s, n).ravel() ** 2) == exact


def test_shift_kernel_requires_unit_norm():
    with pytest.raises(ConfigError):
        ShiftKernel(np.ones((2, 2)))
    k = ShiftKernel.from_array(np.ones((2, 2)))
    assert abs(np.linalg.norm(k.waveform) - 1) < 1e-12


def test_dictionary_channel_mismatch():
    with pytest.raises(ShapeError):
        KernelDictionary.from_arrays([np.ones((3, 2)), np.ones((3, 3))])
    with pytest.raises(ConfigError):
        KernelDictionary(())


def test_signal_validation():
    with pytest.raises(ConfigError):
        MultivariateSignal(np.array([[np.nan]]))
    sig = MultivariateSignal(np.zeros((5, 2)), 250.0)
    assert sig.n_samples == 5 and sig.n_channels == 2
    assert np.asarray(sig).shape == (5, 2)


def test_synthesize_empty_and_single(rng):
    d = random_dictionary(rng, 2, 4, 3)
    assert np.all(synthesize(d, SparseCode(), 10) == 0)
    out = synthesize(d, SparseCode(((0, 0, 2.0),)), 10)
    assert abs(np.linalg.norm(out) - 2.0) < 1e-12


def test_synthesize_bad_index(rng):
    d = random_dictionary(rng, 2, 4, 3)
    with pytest.raises(IndexError):
        synthesize(d, SparseCode(((5, 0, 1.0),)), 10)


def test_synthesize_disjoint_supports_residual_zero(rng):
    d = random_dictionary(rng, 2, 4, 2)
    code = SparseCode(((0, 1, 1.5), (1, 10, -0.7)))
    y = synthesize(d, code, 20)
    by_hand = np.zeros((20, 2))
    by_hand[1:5] += 1.5 * d[0].waveform
    by_hand[10:14] += -0.7 * d[1].waveform
    assert np.max(np.abs(y - by_hand)) <= 1e-12


def test_synthesize_linearity(rng):
    d = random_dictionary(rng, 3, 5, 2)
    c1 = SparseCode(((0, 0, 1.0), (2, 7, 0.5)))
    c2 = SparseCode(((1, 3, -2.0),))
    lhs = synthesize(d, c1 + c2, 16)
    rhs = synthesize(d, c1, 16) + synthesize(d, c2, 16)
    assert np.max(np.abs(lhs - rhs)) <= 1e-12


def test_duplicate_code_rejected():
    with pytest.raises(ConfigError):
        SparseCode(((0, 1, 1.0), (0, 1, 2.0)))


def test_multivariate_inner_examples():
    a = np.array([[1.0, 2.0], [3.0, 4.0]])
    b = np.eye(2)
    assert multivariate_inner(a, b) == 5.0
    u = np.zeros((4, 2))
    u[0, 0] = 1.0
    assert multivariate_inner(u, u) == 1.0
    v = np.zeros((4, 2))
    v[3, 1] = 1.0
    assert multivariate_inner(u, v) == 0.0
    with pytest.raises(ShapeError):
        multivariate_inner(np.ones((2, 2)), np.ones((3, 2)))


def test_correlate_peak_at_true_shift(rng):
    ker = ShiftKernel.from_array(rng.standard_normal((6, 3)))
    r = instantiate_atom(ker, 5, 30)
    corr = correlate_all_shifts(r, ker)
    assert corr.shape == (25,)
    assert np.argmax(corr) == 5
    assert abs(corr[5] - 1.0) < 1e-12


def test_correlate_zero_residual(rng):
    ker = ShiftKernel.from_array(rng.standard_normal((4, 2)))
    assert np.all(correlate_all_shifts(np.zeros((16, 2)), ker) == 0)


def test_correlate_matches_naive_oracle(rng):
    r = rng.standard_normal((16, 2))
    k = rng.standard_normal((4, 2))
    ref = naive_correlation(r, k)
    for threshold in (0, 10**9):
        got = correlate_all_shifts(r, k, fft_threshold=threshold)
        assert np.max(np.abs(got - ref)) <= 1e-9 * np.max(np.abs(ref))


def test_correlate_length_errors(rng):
    with pytest.raises(ShapeError):
        correlate_all_shifts(np.zeros((3, 1)), np.ones((4, 1)))
    with pytest.raises(ShapeError):
        correlate_all_shifts(np.zeros((8, 2)), np.ones((4, 1)))


@settings(max_examples=40, deadline=None)
@given(n=st.integers(4, 120), t=st.integers(1, 40), c=st.integers(1, 4), seed=st.integers(0, 2**32 - 1))
def test_adjoint_identity(n, t, c, seed):
    t = min(t, n)
    rng = np.random.default_rng(seed)
    y = rng.standard_normal((n, c))
    ker = ShiftKernel.from_array(rng.standard_normal((t, c)))
    direct = np.array([multivariate_inner(y, instantiate_atom(ker, s, n)) for s in range(n - t + 1)])
    scale = max(1.0, np.max(np.abs(direct)))
    for threshold in (0, 10**9):
        got = correlate_all_shifts(y, ker, fft_threshold=threshold)
        assert np.max(np.abs(got - direct)) <= 1e-9 * scale
