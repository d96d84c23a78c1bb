"""Online multivariate dictionary learning.

Each pass visits the trials one at a time in a shuffled order.  A trial is
coded with the multivariate OMP against the current kernels, then every
kernel used in the code takes a stochastic gradient step on the squared
reconstruction error and is renormalized to unit Frobenius norm.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ConfigError
from .model import EpochSet, KernelDictionary, SparseCode, _as_2d
from .pursuit import PursuitConfig, momp_decompose, shift_bounds


class KernelCollapseWarning(RuntimeWarning):
    """A kernel lost all its energy and was re-initialized."""


@dataclass(frozen=True)
class LearnConfig:
    """Parameters of :func:`mdla_train`.

    ``step_normalization="curvature"`` divides each kernel's gradient by a
    running average of its squared coefficients, which makes the step size
    independent of the signal units; ``"none"`` applies ``eta * gradient``
    as is.
    """

    n_kernels: int = 20
    iterations: int = 100
    sparsity: int = 1
    initial_length: int = 32
    limit_length: Optional[int] = None
    length_extension: int = 40
    adapt_length: bool = True
    step_size: float = 0.1
    step_normalization: str = "curvature"
    curvature_memory: float = 0.05
    shift_interval: Optional[tuple] = None
    skip_edge_updates: bool = False
    edge_margin: float = 0.1
    edge_threshold: float = 0.05
    min_length: int = 4
    reinit_unused: bool = True
    shuffle: bool = True
    seed: int = 0
    keep_snapshots: bool = False

    def __post_init__(self):
        limit = self.initial_length if self.limit_length is None else self.limit_length
        object.__setattr__(self, "limit_length", int(limit))
        for name in ("n_kernels", "iterations", "sparsity", "initial_length"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be a positive integer")
        if self.initial_length > self.limit_length:
            raise ConfigError("initial_length must not exceed limit_length")
        if self.length_extension < 0:
            raise ConfigError("length_extension must be nonnegative")
        if self.step_size < 0:
            raise ConfigError("step_size must be nonnegative")
        if self.step_normalization not in ("curvature", "none"):
            raise ConfigError("step_normalization must be 'curvature' or 'none'")
        if self.shift_interval is not None:
            center, half = self.shift_interval
            if half < 0:
                raise ConfigError("shift_interval halfwidth must be nonnegative")
            object.__setattr__(self, "shift_interval", (int(center), int(half)))

    def eta(self, i):
        """Step size of pass ``i`` (1-based)."""
        return self.step_size / (1.0 + i / self.iterations)

    @property
    def shift_range(self):
        if self.shift_interval is None:
            return None
        center, half = self.shift_interval
        return center - half, center + half


@dataclass
class TrainingTrace:
    mean_residual: list = field(default_factory=list)
    mean_residual_ratio: list = field(default_factory=list)
    usage: list = field(default_factory=list)
    lengths: list = field(default_factory=list)
    bounds: list = field(default_factory=list)
    skipped: list = field(default_factory=list)
    reinitialized: list = field(default_factory=list)
    eta: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)

    @property
    def n_passes(self):
        return len(self.mean_residual)

    def rows(self):
        n_k = len(self.usage[0]) if self.usage else 0
        header = (["pass", "eta", "mean_residual", "mean_residual_ratio", "skipped", "reinitialized",
                   "length_bound"] + [f"usage_{k}" for k in range(n_k)]
                  + [f"length_{k}" for k in range(n_k)])
        yield header
        for i in range(self.n_passes):
            yield ([i + 1, repr(self.eta[i]), repr(self.mean_residual[i]),
                    repr(self.mean_residual_ratio[i]), self.skipped[i],
                    len(self.reinitialized[i]), self.bounds[i]]
                   + list(map(int, self.usage[i])) + list(map(int, self.lengths[i])))

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            csv.writer(fh).writerows(self.rows())


def kernel_length_schedule(i, total, limit_length, extension=40):
    """Length bound of pass ``i``: the limit for the first two thirds, then limit + extension.

    >>> kernel_length_schedule(66, 100, 80), kernel_length_schedule(67, 100, 80)
    (80, 120)
    """
    if not 1 <= i <= total:
        raise ConfigError(f"pass index {i} outside [1, {total}]")
    return limit_length if i <= (2 * total) // 3 else limit_length + extension


def _window_rms(rows):
    return np.linalg.norm(rows) / math.sqrt(rows.size) if rows.size else 0.0


def adapt_kernel_length(kernel, bound, edge_threshold=0.05, margin=0.1, min_length=4):
    """Grow or trim a kernel depending on the energy found at its edges.

    An edge is energetic when its per-sample RMS over ``margin * length``
    rows exceeds ``edge_threshold`` times the kernel RMS.  Energetic edges are
    extended by that many zero rows, without exceeding ``bound``.  When both
    edges are quiet, leading and trailing rows whose RMS falls below the same
    threshold are trimmed (never below ``min_length`` rows).  The result is
    renormalized to unit norm.
    """
    w = _as_2d(kernel, "kernel").copy()
    t, c = w.shape
    bound = int(bound)
    m = max(1, int(round(margin * t)))
    ref = edge_threshold * _window_rms(w)
    left_hot = _window_rms(w[:m]) > ref
    right_hot = _window_rms(w[-m:]) > ref
    if left_hot or right_hot:
        room = max(bound - t, 0)
        add_left = m if left_hot else 0
        add_right = m if right_hot else 0
        while add_left + add_right > room:
            if add_left >= add_right and add_left > 0:
                add_left -= 1
            else:
                add_right -= 1
        w = np.vstack([np.zeros((add_left, c)), w, np.zeros((add_right, c))])
    else:
        row_rms = np.linalg.norm(w, axis=1) / math.sqrt(c)
        live = np.flatnonzero(row_rms > ref)
        if live.size:
            lo, hi = live[0], live[-1] + 1
        else:
            lo, hi = 0, t
        keep = max(min_length, hi - lo)
        if keep > hi - lo:
            pad = keep - (hi - lo)
            lo = max(0, lo - pad // 2)
            hi = min(t, lo + keep)
            lo = max(0, hi - keep)
        w = w[lo:hi]
    row_energy = (w ** 2).sum(axis=1)
    lo, hi = 0, w.shape[0]
    while hi - lo > max(bound, 1):
        if row_energy[lo] <= row_energy[hi - 1]:
            lo += 1
        else:
            hi -= 1
    w = w[lo:hi]
    norm = np.linalg.norm(w)
    if norm == 0:
        return w
    return w / norm


def _random_window(data, length, rng):
    p_count, n, _ = data.shape
    for _ in range(100):
        p = int(rng.integers(p_count))
        s = int(rng.integers(n - length + 1))
        win = data[p, s : s + length]
        norm = np.linalg.norm(win)
        if norm > 0:
            return win / norm
    nz = [p for p in range(p_count) if np.any(data[p])]
    if not nz:
        raise ConfigError("cannot initialize kernels from all-zero trials")
    p = nz[0]
    energy = np.convolve((data[p] ** 2).sum(axis=1), np.ones(length), "valid")
    s = int(np.argmax(energy))
    win = data[p, s : s + length]
    return win / np.linalg.norm(win)


def init_dictionary(trials, n_kernels, length, rng):
    """Kernels taken from random windows of random trials, unit-normalized."""
    data = trials.data if isinstance(trials, EpochSet) else np.asarray(trials, dtype=float)
    if data.ndim == 2:
        data = data[None]
    if length > data.shape[1]:
        raise ConfigError(f"initial length {length} exceeds trial length {data.shape[1]}")
    rng = np.random.default_rng(rng)
    return KernelDictionary(tuple(_random_window(data, length, rng) for _ in range(n_kernels)))


def _gradients(kernels, residual, code):
    grads = {}
    for l, s, x in code:
        t = kernels[l].shape[0]
        g = grads.setdefault(l, [np.zeros_like(kernels[l]), 0.0])
        g[0] += x * residual[s : s + t]
        g[1] += x * x
    return grads


def _apply(kernels, grads, eta, scales):
    collapsed = []
    for l, (g, _) in grads.items():
        new = kernels[l] + (eta / scales[l]) * g
        norm = np.linalg.norm(new)
        if norm == 0 or not np.isfinite(norm):
            collapsed.append(l)
            continue
        kernels[l] = new / norm
    return collapsed


def dictionary_update_step(dictionary: KernelDictionary, trial, code: SparseCode, eta,
                           curvature=None, rng=None):
    """One stochastic gradient step on ``||trial - synthesis(code)||^2``.

    Each kernel ``l`` used by ``code`` moves by ``eta * sum(x * residual window)``
    (divided by ``curvature[l]`` when given) and is renormalized.  A kernel
    reduced to zero is re-seeded from a random window of ``trial``.
    """
    y = _as_2d(trial, "trial")
    kernels = dictionary.arrays()
    recon = np.zeros_like(y)
    for l, s, x in code:
        recon[s : s + kernels[l].shape[0]] += x * kernels[l]
    grads = _gradients(kernels, y - recon, code)
    scales = {l: 1.0 if curvature is None else curvature[l] for l in grads}
    collapsed = _apply(kernels, grads, eta, scales)
    if collapsed:
        rng = np.random.default_rng(rng)
        for l in collapsed:
            warnings.warn(f"kernel {l} collapsed; re-initializing", KernelCollapseWarning,
                          stacklevel=2)
            kernels[l] = _random_window(y[None], kernels[l].shape[0], rng)
    return KernelDictionary(tuple(kernels))


def _worst_window(trial, residual, length):
    energy = np.convolve((residual ** 2).sum(axis=1), np.ones(length), "valid")
    s = int(np.argmax(energy))
    win = trial[s : s + length]
    norm = np.linalg.norm(win)
    return None if norm == 0 else win / norm


def mdla_train(trials, config: LearnConfig, init: Optional[KernelDictionary] = None):
    """Learn a shift-invariant multivariate dictionary from a set of trials.

    Parameters
    ----------
    trials : EpochSet or array of shape (P, N, C)
    config : LearnConfig
    init : KernelDictionary, optional
        Warm start; by default kernels are drawn from random trial windows.

    Returns
    -------
    dictionary : KernelDictionary
    trace : TrainingTrace
    """
    data = trials.data if isinstance(trials, EpochSet) else np.asarray(trials, dtype=float)
    if data.ndim != 3 or data.shape[0] == 0:
        raise ConfigError("trials must be a non-empty (P, N, C) array")
    p_count, n, c = data.shape
    if init is None and config.initial_length > n:
        raise ConfigError(f"initial kernel length {config.initial_length} exceeds the "
                          f"trial length {n}")
    rng = np.random.default_rng(config.seed)
    if init is None:
        dictionary = init_dictionary(data, config.n_kernels, config.initial_length, rng)
    else:
        dictionary = init
        if dictionary.n_channels != c:
            raise ConfigError("initial dictionary channel count does not match the trials")
    kernels = dictionary.arrays()
    n_k = len(kernels)
    if max(k.shape[0] for k in kernels) > n:
        raise ConfigError("a kernel is longer than the trials")
    pursuit = PursuitConfig(config.sparsity, "MOMP")
    shift_range = config.shift_range
    curvature = [None] * n_k
    beta = config.curvature_memory
    trace = TrainingTrace()

    for i in range(1, config.iterations + 1):
        eta = config.eta(i)
        order = rng.permutation(p_count) if config.shuffle else np.arange(p_count)
        norms = np.empty(p_count)
        ratios = np.empty(p_count)
        usage = np.zeros(n_k, dtype=int)
        skipped = 0
        for j, p in enumerate(order):
            y = data[p]
            current = KernelDictionary(tuple(kernels))
            res = momp_decompose(y, current, pursuit, shift_range=shift_range)
            norms[j] = np.linalg.norm(res.residual)
            y_norm = np.linalg.norm(y)
            ratios[j] = norms[j] / y_norm if y_norm > 0 else 0.0
            for l, _ in res.selected:
                usage[l] += 1
            if config.skip_edge_updates and shift_range is not None:
                on_edge = False
                for l, s in res.selected:
                    lo, hi = shift_bounds(kernels[l].shape[0], n, shift_range)
                    if hi > lo and s in (lo, hi):
                        on_edge = True
                if on_edge:
                    skipped += 1
                    continue
            grads = _gradients(kernels, res.residual, res.code)
            if config.step_normalization == "curvature":
                scales = {}
                for l, (_, h) in grads.items():
                    curvature[l] = h if curvature[l] is None else (1 - beta) * curvature[l] + beta * h
                    scales[l] = curvature[l] if curvature[l] > 0 else 1.0
            else:
                scales = {l: 1.0 for l in grads}
            for l in _apply(kernels, grads, eta, scales):
                warnings.warn(f"kernel {l} collapsed; re-initializing", KernelCollapseWarning,
                              stacklevel=2)
                kernels[l] = _random_window(data, kernels[l].shape[0], rng)

        bound = min(kernel_length_schedule(i, config.iterations, config.limit_length,
                                           config.length_extension), n)
        if config.adapt_length:
            for l in range(n_k):
                adapted = adapt_kernel_length(kernels[l], bound, config.edge_threshold,
                                              config.edge_margin, config.min_length)
                if np.linalg.norm(adapted) > 0:
                    kernels[l] = adapted

        reinit = []
        if config.reinit_unused and n_k > 1:
            worst = int(order[int(np.argmax(ratios))])
            for l in np.flatnonzero(usage == 0):
                y = data[worst]
                res = momp_decompose(y, KernelDictionary(tuple(kernels)), pursuit,
                                     shift_range=shift_range)
                win = _worst_window(y, res.residual, kernels[l].shape[0])
                if win is not None:
                    kernels[l] = win
                    curvature[l] = None
                    reinit.append(int(l))

        trace.mean_residual.append(float(norms.mean()))
        trace.mean_residual_ratio.append(float(ratios.mean()))
        trace.usage.append(usage)
        trace.lengths.append([k.shape[0] for k in kernels])
        trace.bounds.append(bound)
        trace.skipped.append(skipped)
        trace.reinitialized.append(reinit)
        trace.eta.append(eta)
        if config.keep_snapshots:
            trace.snapshots.append(KernelDictionary(tuple(np.array(k) for k in kernels)))

    return KernelDictionary(tuple(kernels)), trace
