import numpy as np
import pytest

from mvdict.model import KernelDictionary


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_dictionary(rng, n_kernels, length, n_channels):
    return KernelDictionary.from_arrays(rng.standard_normal((n_kernels, length, n_channels)))


def naive_correlation(residual, kernel):
    """Sliding-sum oracle: O(N * T * C) explicit loops."""
    n, c = residual.shape
    t = kernel.shape[0]
    out = np.zeros(n - t + 1)
    for tau in range(n - t + 1):
        acc = 0.0
        for i in range(t):
            for ch in range(c):
                acc += residual[tau + i, ch] * kernel[i, ch]
        out[tau] = acc
    return out


def expand_atoms(dictionary, n):
    """All shifted atoms of a kernel dictionary, kernel-major then shift."""
    atoms, index = [], []
    for l, ker in enumerate(dictionary):
        for s in range(n - ker.length + 1):
            a = np.zeros((n, ker.n_channels))
            a[s : s + ker.length] = ker.waveform
            atoms.append(a)
            index.append((l, s))
    return atoms, index
