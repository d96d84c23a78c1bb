"""Evoked-potential estimation: grand average, Toeplitz least squares and
shift-constrained single-kernel learning, plus spatial patterns and the
average-reference transform.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .errors import ConfigError, RangeError, SolverError
from .learning import LearnConfig, mdla_train
from .model import ContinuousRecord, EpochSet, KernelDictionary, _as_2d


@dataclass(frozen=True)
class EvokedPattern:
    waveform: np.ndarray
    normalized: bool = False

    def __post_init__(self):
        w = np.array(_as_2d(self.waveform, "pattern"), dtype=float)
        if self.normalized:
            norm = np.linalg.norm(w)
            if abs(norm - 1) > 1e-10:
                raise ConfigError(f"normalized pattern has norm {norm}")
        w.flags.writeable = False
        object.__setattr__(self, "waveform", w)

    def __array__(self, dtype=None, copy=None):
        return self.waveform if dtype is None else self.waveform.astype(dtype)

    @property
    def length(self):
        return self.waveform.shape[0]

    @property
    def n_channels(self):
        return self.waveform.shape[1]

    def normalize(self):
        """Unit-norm copy; the sign makes the peak RMS row have a positive mean."""
        w = self.waveform
        norm = np.linalg.norm(w)
        if norm == 0:
            raise ConfigError("cannot normalize a zero pattern")
        w = w / norm
        peak = int(np.argmax(np.linalg.norm(w, axis=1)))
        if w[peak].mean() < 0:
            w = -w
        return EvokedPattern(w, normalized=True)


def _check_onsets(record: ContinuousRecord, n):
    if n < 1:
        raise ConfigError("epoch length must be positive")
    onsets = record.onsets
    if onsets.size == 0:
        raise ConfigError("the record has no onsets")
    bad = np.flatnonzero(onsets + n > record.n_samples)
    if bad.size:
        raise RangeError(f"onset {int(onsets[bad[0]])} + epoch length {n} exceeds the "
                         f"record length {record.n_samples}")
    return onsets


def epoch_record(record: ContinuousRecord, n):
    """Cut ``n``-sample epochs starting at every onset."""
    onsets = _check_onsets(record, n)
    data = np.stack([record.samples[t : t + n] for t in onsets])
    return EpochSet(data, record.sample_rate)


def grand_average(epochs):
    """Elementwise mean of the epochs."""
    data = epochs.data if isinstance(epochs, EpochSet) else np.asarray(epochs, dtype=float)
    if data.ndim != 3 or data.shape[0] == 0:
        raise ConfigError("grand average needs at least one epoch")
    return EvokedPattern(data.mean(axis=0))


def toeplitz_normal_equations(record: ContinuousRecord, n):
    """Gram matrix ``D^T D`` (lag counts) and right-hand side ``D^T Y``."""
    onsets = _check_onsets(record, n)
    y = record.samples
    rhs = np.zeros((n, y.shape[1]))
    for t in onsets:
        rhs += y[t : t + n]
    diffs = onsets[None, :] - onsets[:, None]
    lags, counts = np.unique(diffs[np.abs(diffs) < n], return_counts=True)
    col = np.zeros(n)
    for lag, count in zip(lags, counts):
        if lag >= 0:
            col[lag] = count
    return linalg.toeplitz(col), rhs


def ls_estimate(record: ContinuousRecord, n):
    """Least-squares evoked response accounting for overlapping epochs.

    Solves ``(D^T D) phi = D^T Y`` where ``D`` is the ``len(record) x n``
    Toeplitz onset matrix.  ``D`` itself is never formed; only its lag-count
    Gram matrix.
    """
    gram, rhs = toeplitz_normal_equations(record, n)
    try:
        cf = linalg.cho_factor(gram, check_finite=False)
        d = np.diag(cf[0]) ** 2
        if d.min() <= 1e-12 * d.max():
            raise linalg.LinAlgError("near singular")
    except linalg.LinAlgError as exc:
        lags = np.flatnonzero(gram[:, 0])
        raise SolverError(f"singular onset Gram matrix (nonzero lags {lags.tolist()[:10]})") from exc
    return EvokedPattern(linalg.cho_solve(cf, rhs, check_finite=False))


def peak_index(pattern, mode="rms"):
    """Time index of the temporal maximum: cross-channel RMS or global absolute max."""
    w = _as_2d(pattern, "pattern")
    if mode == "rms":
        return int(np.argmax(np.sqrt((w ** 2).mean(axis=1))))
    if mode == "absmax":
        return int(np.unravel_index(np.argmax(np.abs(w)), w.shape)[0])
    raise ConfigError(f"unknown peak mode {mode!r}")


def spatial_pattern(pattern, mode="rms"):
    """Per-channel amplitudes at the temporal maximum of the pattern."""
    w = _as_2d(pattern, "pattern")
    if w.size == 0:
        raise ConfigError("empty pattern")
    return w[peak_index(w, mode)].copy()


def truncate_pattern(pattern, length):
    """Window of ``length`` samples centered on the RMS peak, normalized.

    Returns ``(EvokedPattern, start)`` with ``start`` the window position in
    the original pattern.
    """
    w = _as_2d(pattern, "pattern")
    if length > w.shape[0]:
        raise ConfigError(f"cannot truncate a {w.shape[0]}-sample pattern to {length}")
    peak = peak_index(w)
    start = min(max(peak - length // 2, 0), w.shape[0] - length)
    return EvokedPattern(w[start : start + length]).normalize(), start


def to_average_reference(signal):
    """Subtract the cross-channel mean from every sample."""
    y = _as_2d(signal)
    if y.shape[1] < 2:
        raise ConfigError("average reference needs at least two channels")
    return y - y.mean(axis=1, keepdims=True)


def latency_to_shift(center_ms, sample_rate, length):
    """Kernel shift placing the kernel center at ``center_ms`` after the onset."""
    return int(round(center_ms * sample_rate / 1000.0)) - length // 2


def learn_ep_kernel(epochs, init=None, length=65, interval=(300.0, 4), iterations=20,
                    step_size=0.01, seed=0, sample_rate=None, center_shift=None,
                    return_trace=False):
    """Learn one evoked kernel with shifts restricted around a latency.

    Parameters
    ----------
    epochs : EpochSet
    init : EvokedPattern, optional
        Warm start, typically the grand average; defaults to the grand
        average of ``epochs``.  Patterns longer than ``length`` are
        truncated around their RMS peak.
    length : int
        Kernel length in samples, fixed during learning.
    interval : (center_ms, halfwidth)
        The kernel center is searched within ``halfwidth`` samples of
        ``center_ms`` after the onset.
    step_size : float
        Initial step.  Single trials of evoked data sit far below the noise,
        so the default is small enough to average over about a hundred
        trials per kernel update.
    center_shift : int, optional
        Center of the shift interval given directly as a kernel shift in
        samples; overrides ``interval[0]``.
    """
    if not isinstance(epochs, EpochSet):
        epochs = EpochSet(np.asarray(epochs, dtype=float), sample_rate or 1.0)
    fs = sample_rate or epochs.sample_rate
    n = epochs.n_samples
    if length > n:
        raise ConfigError(f"kernel length {length} exceeds epoch length {n}")
    if init is None:
        init = grand_average(epochs)
    w = _as_2d(init, "init")
    if w.shape[0] > length:
        w = truncate_pattern(w, length)[0].waveform
    elif w.shape[0] < length:
        raise ConfigError("initial pattern is shorter than the kernel")
    center_ms, half = interval
    center = center_shift if center_shift is not None else latency_to_shift(center_ms, fs, length)
    if not 0 <= center <= n - length:
        raise ConfigError(f"interval center shift {center} outside [0, {n - length}]")
    config = LearnConfig(n_kernels=1, iterations=iterations, sparsity=1, initial_length=length,
                         adapt_length=False, step_size=step_size, shift_interval=(center, half),
                         skip_edge_updates=True, reinit_unused=False, seed=seed)
    kernels, trace = mdla_train(epochs, config, init=KernelDictionary.from_arrays([w]))
    pattern = EvokedPattern(kernels[0].waveform).normalize()
    return (pattern, trace) if return_trace else pattern
