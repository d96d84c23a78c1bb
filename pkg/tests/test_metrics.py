import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mvdict.errors import ConfigError, ShapeError
from mvdict.gabor import GaborGrid, build_gabor_dictionary
from mvdict.metrics import (RhoCurve, cross_correlation, dictionary_recovery, max_correlation,
                            reconstruction_rate, rho_curve)
from mvdict.model import CodeEntry, EpochSet, SparseCode, synthesize
from mvdict.pursuit import VARIANTS

from conftest import random_dictionary


def test_rate_examples():
    y = [np.ones((4, 2)), 2 * np.ones((4, 2))]
    assert reconstruction_rate(y, [np.zeros((4, 2))] * 2) == 1.0
    assert reconstruction_rate(y, y) == 0.0
    assert reconstruction_rate(y, [0.5 * y[0], 0.25 * y[1]]) == 0.625


def test_rate_errors():
    with pytest.raises(ConfigError):
        reconstruction_rate([np.zeros((3, 1))], [np.zeros((3, 1))])
    with pytest.raises(ShapeError):
        reconstruction_rate([np.ones((3, 1))], [np.zeros((4, 1))])
    with pytest.raises(ConfigError):
        reconstruction_rate([np.ones((3, 1))], [])


def test_cross_correlation_against_loop(rng):
    a = rng.standard_normal((7, 3))
    b = rng.standard_normal((5, 3))
    lags, values = cross_correlation(a, b)
    for lag, v in zip(lags, values):
        acc = 0.0
        for t in range(5):
            if 0 <= t + lag < 7:
                acc += a[t + lag] @ b[t]
        assert v == pytest.approx(acc, abs=1e-12)


def test_max_correlation_examples(rng):
    ref = rng.standard_normal((20, 3))
    shifted = np.zeros((26, 3))
    shifted[3:23] = ref
    assert max_correlation(ref, ref) == pytest.approx(1.0, abs=1e-12)
    assert max_correlation(shifted, ref) == pytest.approx(1.0, abs=1e-9)
    assert max_correlation(-ref, ref) == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(ShapeError):
        max_correlation(ref, ref[:, :2])
    with pytest.raises(ConfigError):
        max_correlation(np.zeros((3, 3)), ref)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.integers(-6, 6), st.floats(0.01, 100.0),
       st.sampled_from([-1.0, 1.0]))
def test_max_correlation_invariances(seed, shift, scale, sign):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((15, 2))
    b = rng.standard_normal((15, 2))
    base = max_correlation(a, b)
    moved = np.zeros((27, 2))
    moved[6 + shift : 21 + shift] = a
    assert max_correlation(moved, b) == pytest.approx(base, abs=1e-9)
    assert max_correlation(sign * scale * a, b) == pytest.approx(base, abs=1e-9)
    assert max_correlation(b, a) == pytest.approx(base, abs=1e-9)
    assert 0.0 <= base <= 1.0


def test_max_correlation_lag_range(rng):
    ref = rng.standard_normal((10, 2))
    moved = np.zeros((20, 2))
    moved[8:18] = ref
    assert max_correlation(moved, ref, lag_range=(8, 8)) == pytest.approx(1.0)
    assert max_correlation(moved, ref, lag_range=(0, 2)) < 0.9
    with pytest.raises(ConfigError):
        max_correlation(moved, ref, lag_range=(100, 200))


def test_dictionary_recovery_assignment(rng):
    planted = [rng.standard_normal((8, 2)) for _ in range(3)]
    learned = [-planted[2], 3 * planted[0], planted[1]]
    mean, per, assign = dictionary_recovery(learned, planted)
    assert mean == pytest.approx(1.0)
    assert assign == {0: 1, 1: 2, 2: 0}
    assert np.allclose(per, 1.0)


def test_rho_curve_k0_and_exact_recovery(rng):
    d = random_dictionary(rng, 3, 8, 2)
    trials = []
    for _ in range(5):
        code = SparseCode((CodeEntry(0, int(rng.integers(0, 5)), 1.0),
                           CodeEntry(2, int(rng.integers(20, 25)), -2.0)))
        trials.append(synthesize(d, code, 40))
    curve = rho_curve(np.array(trials), d, "momp", [0, 1, 2])
    assert curve.rho[0] == 0.0
    assert curve.rho[2] >= 0.999
    assert curve.method == "MOMP"


def test_rho_curve_validates(rng):
    d = random_dictionary(rng, 1, 4, 1)
    with pytest.raises(ConfigError):
        rho_curve(rng.standard_normal((2, 10, 1)), d, "momp", [2, 1])
    with pytest.raises(ConfigError):
        rho_curve(rng.standard_normal((2, 10, 1)), d, "momp", [])
    with pytest.raises(ConfigError):
        rho_curve(np.zeros((2, 10, 1)), d, "momp", [1])


def _variant_inputs(rng, variant):
    if variant == "MOMP":
        return random_dictionary(rng, 3, 6, 2), rng.standard_normal((4, 24, 2))
    analytic = variant in ("MMP3", "MMP4")
    gd = build_gabor_dictionary(GaborGrid(24, (4, 8), 3), analytic=analytic)
    return gd.atoms, rng.standard_normal((4, 24, 2))


@pytest.mark.parametrize("variant", VARIANTS)
def test_rho_non_decreasing_in_k(variant):
    rng = np.random.default_rng(VARIANTS.index(variant))
    for _ in range(20):
        atoms, trials = _variant_inputs(rng, variant)
        curve = rho_curve(trials, atoms, variant, [0, 1, 2, 3, 4])
        assert all(b >= a - 1e-12 for a, b in zip(curve.rho, curve.rho[1:]))
        assert curve.rho[0] == 0.0
        assert all(0.0 <= r <= 1.0 for r in curve.rho)


def test_rho_threads_identical(rng):
    d = random_dictionary(rng, 2, 6, 2)
    trials = EpochSet(rng.standard_normal((8, 30, 2)))
    a = rho_curve(trials, d, "momp", [1, 3], threads=1)
    b = rho_curve(trials, d, "momp", [1, 3], threads=4)
    assert a.rho == b.rho


def test_rho_curve_export(tmp_path):
    curve = RhoCurve([1, 2], [0.25, 0.5], "MOMP", "planted")
    curve.to_csv(tmp_path / "r.csv")
    curve.to_json(tmp_path / "r.json")
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert lines[0] == "K,rho,method,dataset"
    assert lines[1] == "1,0.25,MOMP,planted"
    assert json.loads((tmp_path / "r.json").read_text())["rho"] == [0.25, 0.5]
