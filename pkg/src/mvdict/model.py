"""Data model and synthesis primitives for shift-invariant multivariate coding.

Signals are stored time-major: an array of shape ``(n_samples, n_channels)``.
A kernel is a short ``(length, n_channels)`` waveform of unit Frobenius norm
that can be placed at any integer shift ``0 <= shift <= n - length`` of a
signal of length ``n`` (dense convolutional model).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.signal import fftconvolve

from .errors import ConfigError, ShapeError

#: Above this many multiply-adds per channel (``n * length``) correlations
#: switch from direct sliding sums to FFT convolution.
FFT_THRESHOLD = 4096

NORM_TOL = 1e-10


def _as_2d(x, name="signal"):
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise ShapeError(f"{name} must be 2-D (samples x channels), got shape {arr.shape}")
    return arr


def _frozen(arr):
    arr = np.array(arr, dtype=float, copy=True)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class MultivariateSignal:
    """An ``N x C`` real signal with its sampling rate."""

    samples: np.ndarray
    sample_rate: float = 1.0

    def __post_init__(self):
        arr = _as_2d(self.samples)
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ShapeError("a signal needs at least one sample and one channel")
        if not np.all(np.isfinite(arr)):
            raise ConfigError("signal contains non-finite values")
        if not self.sample_rate > 0:
            raise ConfigError("sample_rate must be positive")
        object.__setattr__(self, "samples", _frozen(arr))

    def __array__(self, dtype=None, copy=None):
        if dtype is None:
            return self.samples
        return self.samples.astype(dtype)

    @property
    def n_samples(self):
        return self.samples.shape[0]

    @property
    def n_channels(self):
        return self.samples.shape[1]


@dataclass(frozen=True)
class ShiftKernel:
    """A unit-norm multivariate waveform of shape ``(length, C)``.

    Use :meth:`from_array` to build one from an arbitrary nonzero array.
    """

    waveform: np.ndarray

    def __post_init__(self):
        arr = _as_2d(self.waveform, "kernel")
        norm = np.linalg.norm(arr)
        if abs(norm - 1.0) > NORM_TOL:
            raise ConfigError(f"kernel must have unit Frobenius norm, got {norm:.12g}")
        object.__setattr__(self, "waveform", _frozen(arr))

    @classmethod
    def from_array(cls, arr):
        arr = _as_2d(arr, "kernel")
        norm = np.linalg.norm(arr)
        if norm == 0 or not np.isfinite(norm):
            raise ConfigError("cannot normalize a zero or non-finite kernel")
        return cls(arr / norm)

    def __array__(self, dtype=None, copy=None):
        if dtype is None:
            return self.waveform
        return self.waveform.astype(dtype)

    @property
    def length(self):
        return self.waveform.shape[0]

    @property
    def n_channels(self):
        return self.waveform.shape[1]


@dataclass(frozen=True)
class KernelDictionary:
    """An ordered, immutable set of shift kernels sharing one channel count."""

    kernels: tuple = field(default_factory=tuple)

    def __post_init__(self):
        kernels = tuple(k if isinstance(k, ShiftKernel) else ShiftKernel(k) for k in self.kernels)
        if not kernels:
            raise ConfigError("a dictionary needs at least one kernel")
        channels = {k.n_channels for k in kernels}
        if len(channels) != 1:
            raise ShapeError(f"kernels disagree on channel count: {sorted(channels)}")
        object.__setattr__(self, "kernels", kernels)

    @classmethod
    def from_arrays(cls, arrays: Iterable, normalize=True):
        if normalize:
            return cls(tuple(ShiftKernel.from_array(a) for a in arrays))
        return cls(tuple(arrays))

    def __len__(self):
        return len(self.kernels)

    def __getitem__(self, i):
        return self.kernels[i]

    def __iter__(self):
        return iter(self.kernels)

    @property
    def n_channels(self):
        return self.kernels[0].n_channels

    @property
    def lengths(self):
        return [k.length for k in self.kernels]

    def arrays(self):
        """Writable copies of the kernel waveforms."""
        return [np.array(k.waveform) for k in self.kernels]

    def n_atoms(self, n):
        """Number of shifted atoms generated for a signal of length ``n``."""
        return sum(max(n - t + 1, 0) for t in self.lengths)


class CodeEntry(NamedTuple):
    kernel: int
    shift: int
    coef: float


@dataclass(frozen=True)
class SparseCode:
    """Sparse code of the multivariate model: ``(kernel, shift, coef)`` entries."""

    entries: tuple = ()

    def __post_init__(self):
        entries = tuple(CodeEntry(int(k), int(s), float(c)) for k, s, c in self.entries)
        keys = [(e.kernel, e.shift) for e in entries]
        if len(set(keys)) != len(keys):
            raise ConfigError("duplicate (kernel, shift) pairs in sparse code")
        object.__setattr__(self, "entries", entries)

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def __add__(self, other):
        return SparseCode(self.entries + tuple(other.entries))


class MultichannelEntry(NamedTuple):
    atom: int
    amplitudes: np.ndarray
    phases: np.ndarray


@dataclass(frozen=True)
class MultichannelCode:
    """Sparse code of the multichannel model: one atom, C amplitudes and phases."""

    entries: tuple = ()

    def __post_init__(self):
        out = []
        for atom, amps, phases in self.entries:
            amps = _frozen(np.atleast_1d(amps))
            phases = _frozen(np.atleast_1d(phases))
            if amps.shape != phases.shape:
                raise ShapeError("amplitudes and phases must have the same length")
            if not np.all(np.isfinite(amps)):
                raise ConfigError("non-finite amplitude in multichannel code")
            if np.any(phases <= -np.pi - 1e-12) or np.any(phases > np.pi + 1e-12):
                raise ConfigError("phases must lie in (-pi, pi]")
            out.append(MultichannelEntry(int(atom), amps, phases))
        object.__setattr__(self, "entries", tuple(out))

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)


def instantiate_atom(kernel, shift, n):
    """Place ``kernel`` at ``shift`` inside an all-zero ``(n, C)`` array."""
    w = _as_2d(kernel, "kernel")
    t = w.shape[0]
    if not (0 <= shift <= n - t):
        raise IndexError(f"shift {shift} out of range [0, {n - t}] for kernel length {t}, n={n}")
    out = np.zeros((n, w.shape[1]))
    out[shift : shift + t] = w
    return out


def synthesize(dictionary: KernelDictionary, code: SparseCode, n):
    """Sum of ``coef * instantiate_atom(kernel, shift, n)`` over the code."""
    out = np.zeros((n, dictionary.n_channels))
    for k, s, c in code:
        if not 0 <= k < len(dictionary):
            raise IndexError(f"kernel index {k} out of range for {len(dictionary)} kernels")
        w = dictionary[k].waveform
        if not 0 <= s <= n - w.shape[0]:
            raise IndexError(f"shift {s} out of range for kernel {k}")
        out[s : s + w.shape[0]] += c * w
    return out


def multivariate_inner(a, b):
    """Trace scalar product: the sum over channels of per-channel dot products."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch {a.shape} vs {b.shape}")
    return float(np.vdot(b, a))


def correlate_all_shifts(residual, kernel, fft_threshold=None):
    """Multivariate correlation of ``residual`` with ``kernel`` at every valid shift.

    Entry ``tau`` equals ``multivariate_inner(residual, instantiate_atom(kernel, tau, N))``.
    Returns a vector of length ``N - T + 1``.
    """
    r = _as_2d(residual, "residual")
    w = _as_2d(kernel, "kernel")
    n, c = r.shape
    t = w.shape[0]
    if w.shape[1] != c:
        raise ShapeError(f"kernel has {w.shape[1]} channels, residual has {c}")
    if t > n:
        raise ShapeError(f"kernel length {t} exceeds signal length {n}")
    if fft_threshold is None:
        fft_threshold = FFT_THRESHOLD
    if n * t > fft_threshold:
        return fftconvolve(r, w[::-1], mode="valid", axes=0).sum(axis=1)
    windows = sliding_window_view(r, t, axis=0)  # (n - t + 1, c, t)
    return np.einsum("wct,tc->w", windows, w)


def stack_epochs(epochs: Sequence) -> np.ndarray:
    """Stack a sequence of ``(N, C)`` arrays into ``(P, N, C)``."""
    arrs = [_as_2d(e, "epoch") for e in epochs]
    shapes = {a.shape for a in arrs}
    if len(shapes) != 1:
        raise ShapeError(f"epochs have inconsistent shapes: {sorted(shapes)}")
    return np.stack(arrs)


@dataclass(frozen=True)
class EpochSet:
    """``P`` trials of shape ``(N, C)`` stored as a ``(P, N, C)`` array."""

    data: np.ndarray
    sample_rate: float = 1.0

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=float)
        if arr.ndim == 2:
            arr = arr[None]
        if arr.ndim != 3:
            raise ShapeError(f"epochs must be (P, N, C), got shape {arr.shape}")
        if arr.shape[0] < 1:
            raise ConfigError("an epoch set needs at least one trial")
        if not np.all(np.isfinite(arr)):
            raise ConfigError("epochs contain non-finite values")
        object.__setattr__(self, "data", _frozen(arr))

    @classmethod
    def from_list(cls, epochs, sample_rate=1.0):
        return cls(stack_epochs(epochs), sample_rate)

    def __len__(self):
        return self.data.shape[0]

    def __getitem__(self, p):
        return self.data[p]

    def __iter__(self):
        return iter(self.data)

    @property
    def n_samples(self):
        return self.data.shape[1]

    @property
    def n_channels(self):
        return self.data.shape[2]


@dataclass(frozen=True)
class ContinuousRecord:
    """A long recording with stimulus onsets given in samples."""

    samples: np.ndarray
    onsets: np.ndarray
    sample_rate: float = 1.0

    def __post_init__(self):
        arr = _as_2d(self.samples)
        onsets = np.asarray(self.onsets, dtype=np.int64).ravel()
        if np.any(np.diff(onsets) <= 0):
            raise ConfigError("onsets must be strictly increasing")
        if onsets.size and (onsets[0] < 0 or onsets[-1] >= arr.shape[0]):
            raise ConfigError("onsets fall outside the record")
        object.__setattr__(self, "samples", _frozen(arr))
        onsets = onsets.copy()
        onsets.flags.writeable = False
        object.__setattr__(self, "onsets", onsets)

    @property
    def n_samples(self):
        return self.samples.shape[0]

    @property
    def n_channels(self):
        return self.samples.shape[1]
