"""Synthetic trial generation: shifted evoked patterns in correlated noise,
planted-dictionary signals, and the jitter sweep comparing grand average
and shift-constrained learning.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.signal import lfilter

from .errors import ConfigError
from .evoked import (EvokedPattern, grand_average, latency_to_shift, learn_ep_kernel,
                     truncate_pattern)
from .metrics import max_correlation
from .model import EpochSet, KernelDictionary, _as_2d
from .parallel import pmap

BINOMIAL_TAPS = np.array([1.0, 4.0, 6.0, 4.0, 1.0]) / 16.0
DEFAULT_LATENCY_MS = 300.0


@dataclass(frozen=True)
class FirNoiseModel:
    """White noise filtered in time by ``taps`` then mixed across channels.

    ``mixing[i, j]`` is the weight of source ``j`` in channel ``i``.
    """

    taps: np.ndarray
    mixing: np.ndarray

    def __post_init__(self):
        taps = np.atleast_1d(np.asarray(self.taps, dtype=float))
        mixing = np.atleast_2d(np.asarray(self.mixing, dtype=float))
        if taps.ndim != 1 or taps.size == 0:
            raise ConfigError("FIR taps must be a nonempty vector")
        if mixing.shape[0] != mixing.shape[1]:
            raise ConfigError("mixing matrix must be square")
        object.__setattr__(self, "taps", taps)
        object.__setattr__(self, "mixing", mixing)

    @property
    def n_channels(self):
        return self.mixing.shape[0]

    @classmethod
    def default(cls, n_channels, spatial_decay=0.9, taps=BINOMIAL_TAPS):
        idx = np.arange(n_channels)
        return cls(taps, spatial_decay ** np.abs(idx[:, None] - idx[None, :]))


def correlated_noise(n, model: FirNoiseModel, rng):
    """``(n, C)`` draw of the noise model."""
    rng = np.random.default_rng(rng)
    c = model.n_channels
    white = rng.standard_normal((n + model.taps.size - 1, c))
    colored = lfilter(model.taps, [1.0], white, axis=0)[model.taps.size - 1 :]
    return colored @ model.mixing.T


def scale_to_snr(signal, noise, snr_db):
    """Scale ``noise`` so that ``10 log10(||signal||^2 / ||noise||^2) = snr_db``."""
    ps = float(np.sum(np.square(signal)))
    pn = float(np.sum(np.square(noise)))
    if ps == 0:
        raise ConfigError("SNR is undefined for a zero signal")
    if math.isinf(snr_db) and snr_db > 0:
        return np.zeros_like(noise)
    if pn == 0:
        raise ConfigError("cannot scale a zero noise draw")
    return noise * math.sqrt(ps / (pn * 10.0 ** (snr_db / 10.0)))


@dataclass(frozen=True)
class SimulationSpec:
    """Trials made of one shifted pattern plus colored noise.

    The pattern starts at ``shift_mean + round(jitter * z)``, clipped to the
    epoch, with ``z`` standard normal.  By default ``shift_mean`` puts the
    pattern center 300 ms after the epoch start.  Amplitudes are
    ``amplitude_mean + amplitude_std * z'``.  The SNR is enforced per
    trial (``snr_mode="trial"``) or on the whole set (``"global"``).
    """

    pattern: np.ndarray
    n_trials: int = 200
    n_samples: int = 192
    jitter: float = 0.0
    shift_mean: Optional[int] = None
    amplitude_mean: float = 1.0
    amplitude_std: float = 0.0
    snr_db: float = -10.0
    snr_mode: str = "trial"
    sample_rate: float = 240.0
    noise: Optional[FirNoiseModel] = None
    seed: int = 0

    def __post_init__(self):
        p = np.asarray(_as_2d(self.pattern, "pattern"), dtype=float)
        object.__setattr__(self, "pattern", p)
        if p.shape[0] > self.n_samples:
            raise ConfigError("pattern is longer than the epoch")
        if self.n_trials < 1:
            raise ConfigError("n_trials must be positive")
        if self.jitter < 0:
            raise ConfigError("jitter must be nonnegative")
        if self.snr_mode not in ("trial", "global"):
            raise ConfigError("snr_mode must be 'trial' or 'global'")
        if self.shift_mean is None:
            mean = latency_to_shift(DEFAULT_LATENCY_MS, self.sample_rate, p.shape[0])
            object.__setattr__(self, "shift_mean", min(max(mean, 0), self.n_samples - p.shape[0]))
        if not 0 <= self.shift_mean <= self.n_samples - p.shape[0]:
            raise ConfigError("shift_mean places the pattern outside the epoch")
        if self.noise is None:
            object.__setattr__(self, "noise", FirNoiseModel.default(p.shape[1]))
        elif self.noise.n_channels != p.shape[1]:
            raise ConfigError("noise model channel count differs from the pattern")

    @property
    def max_shift(self):
        return self.n_samples - self.pattern.shape[0]


@dataclass
class SimulatedTrials:
    epochs: EpochSet
    shifts: np.ndarray
    amplitudes: np.ndarray
    clean: np.ndarray = field(repr=False)


def _draw_trial(spec: SimulationSpec, seq):
    rng = np.random.default_rng(seq)
    shift = spec.shift_mean + int(round(spec.jitter * rng.standard_normal()))
    shift = min(max(shift, 0), spec.max_shift)
    amp = spec.amplitude_mean + spec.amplitude_std * rng.standard_normal()
    clean = np.zeros((spec.n_samples, spec.pattern.shape[1]))
    clean[shift : shift + spec.pattern.shape[0]] = amp * spec.pattern
    noise = correlated_noise(spec.n_samples, spec.noise, rng)
    return shift, amp, clean, noise


def generate_trials(spec: SimulationSpec, threads=1):
    """Draw the trials of ``spec``.  Each trial has its own seed stream, so
    the output does not depend on ``threads``."""
    seqs = np.random.SeedSequence(spec.seed).spawn(spec.n_trials)
    draws = pmap(lambda s: _draw_trial(spec, s), seqs, threads)
    shifts = np.array([d[0] for d in draws], dtype=np.int64)
    amps = np.array([d[1] for d in draws])
    clean = np.stack([d[2] for d in draws])
    noise = np.stack([d[3] for d in draws])
    if spec.snr_mode == "global":
        noise = scale_to_snr(clean, noise, spec.snr_db)
    else:
        noise = np.stack([scale_to_snr(c, e, spec.snr_db) for c, e in zip(clean, noise)])
    return SimulatedTrials(EpochSet(clean + noise, spec.sample_rate), shifts, amps, clean)


def p300_like_pattern(length=65, n_channels=8, sample_rate=240.0):
    """Synthetic unit-norm multichannel evoked pattern.

    A narrow positive wave peaks at the window center with a posterior
    topography, preceded by a short negative wave with a frontal topography
    and followed by a slow negative wave.  The spatial structure differs
    between the components, so the pattern is not rank one.
    """
    if length < 8 or n_channels < 1:
        raise ConfigError("pattern needs at least 8 samples and one channel")
    t = (np.arange(length) - length // 2) * 1000.0 / sample_rate  # ms from the center
    ch = np.linspace(0.0, 1.0, n_channels)

    def bump(mu, width):
        return np.exp(-0.5 * ((t - mu) / width) ** 2)

    def topo(mu, width):
        return np.exp(-0.5 * ((ch - mu) / width) ** 2)

    w = (np.outer(bump(0.0, 11.0), topo(0.7, 0.35))
         - 0.6 * np.outer(bump(-28.0, 6.0), topo(0.2, 0.3))
         - 0.3 * np.outer(bump(35.0, 12.5), topo(0.5, 0.6)))
    w *= np.hanning(length + 2)[1:-1, None]
    return EvokedPattern(w).normalize()


def planted_trials(dictionary: KernelDictionary, n_trials, n_samples, sparsity, snr_db, rng,
                   coef_range=(1.0, 2.0)):
    """Sums of ``sparsity`` random shifted kernels with random signed
    coefficients plus white noise at ``snr_db`` per trial."""
    rng = np.random.default_rng(rng)
    data = np.zeros((n_trials, n_samples, dictionary.n_channels))
    for p in range(n_trials):
        for _ in range(sparsity):
            l = int(rng.integers(len(dictionary)))
            k = dictionary[l].waveform
            s = int(rng.integers(n_samples - k.shape[0] + 1))
            c = rng.choice([-1.0, 1.0]) * rng.uniform(*coef_range)
            data[p, s : s + k.shape[0]] += c * k
        noise = rng.standard_normal(data[p].shape)
        data[p] += scale_to_snr(data[p], noise, snr_db)
    return EpochSet(data)


def smooth_random_kernels(n_kernels, length, n_channels, rng, smoothing=3.0):
    """Random temporally smooth, tapered, unit-norm kernels."""
    rng = np.random.default_rng(rng)
    half = int(math.ceil(3 * smoothing))
    g = np.exp(-0.5 * (np.arange(-half, half + 1) / smoothing) ** 2)
    taper = np.hanning(length + 2)[1:-1, None]
    kernels = []
    for _ in range(n_kernels):
        white = rng.standard_normal((length + 2 * half, n_channels))
        smooth = np.stack([np.convolve(white[:, c], g, mode="valid") for c in range(n_channels)], 1)
        kernels.append(smooth * taper)
    return KernelDictionary.from_arrays(kernels)


@dataclass
class JitterSweepResult:
    sigmas: list
    ga: np.ndarray      # (len(sigmas), reps)
    mdla: np.ndarray

    def summary(self):
        for j, s in enumerate(self.sigmas):
            yield s, float(self.ga[j].mean()), float(self.ga[j].std()), \
                float(self.mdla[j].mean()), float(self.mdla[j].std())

    def rows(self):
        """Long format: one row per method and jitter level."""
        yield ["method", "sigma", "mean_correlation", "std_correlation", "reps"]
        for name, values in (("GA", self.ga), ("M-DLA", self.mdla)):
            for j, s in enumerate(self.sigmas):
                yield [name, s, repr(float(values[j].mean())), repr(float(values[j].std())),
                       values.shape[1]]


def _sweep_job(reference, length, spec, halfwidth, iterations, step_size):
    sim = generate_trials(spec)
    ga = grand_average(sim.epochs)
    ga_t, start = truncate_pattern(ga, length)
    learned = learn_ep_kernel(sim.epochs, init=ga_t, length=length, interval=(0.0, halfwidth),
                              center_shift=start, iterations=iterations, step_size=step_size,
                              seed=spec.seed)
    return max_correlation(ga_t, reference), max_correlation(learned, reference)


def jitter_sweep(reference, sigmas: Sequence[float] = (0, 2, 4, 6, 8), reps=10, n_trials=200,
                 n_samples=192, snr_db=-10.0, length=None, halfwidth=4, iterations=20,
                 step_size=0.01, sample_rate=240.0, seed=0, threads=1, noise=None):
    """Grand average versus shift-constrained learning under latency jitter.

    For every jitter level and repetition, trials are simulated, the grand
    average is truncated to ``length`` samples around its peak and used both
    as an estimate and as the warm start of single-kernel learning with
    shifts within ``halfwidth`` samples of the truncation position.  Both
    estimates are scored by their max correlation with ``reference``.
    """
    reference = np.asarray(_as_2d(reference, "reference"), dtype=float)
    length = reference.shape[0] if length is None else int(length)
    if reps < 1:
        raise ConfigError("reps must be positive")
    seqs = np.random.SeedSequence(seed).spawn(len(sigmas) * reps)
    jobs = []
    for j, sigma in enumerate(sigmas):
        for r in range(reps):
            sub = int(seqs[j * reps + r].generate_state(1)[0])
            spec = SimulationSpec(reference, n_trials, n_samples, float(sigma), snr_db=snr_db,
                                  sample_rate=sample_rate, noise=noise, seed=sub)
            jobs.append(spec)
    out = pmap(lambda s: _sweep_job(reference, length, s, halfwidth, iterations, step_size),
               jobs, threads)
    out = np.array(out).reshape(len(sigmas), reps, 2)
    return JitterSweepResult(list(sigmas), out[..., 0], out[..., 1])
