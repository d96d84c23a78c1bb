"""Parametric Gabor dictionaries (real and analytic atoms).

Atoms are Gaussian-windowed sinusoids

    phi(t) = beta / sqrt(s) * exp(-pi ((t - c) / s)**2) * cos(2 pi f (t - c) + phase)

sampled on ``t = 0 .. n-1`` with center ``c = alpha * tau`` and unit discrete
l2 norm (``beta`` is whatever makes the sampled atom unit-norm).  The
oscillation is referenced to the atom center so that atoms sharing
``(s, f, phase)`` are exact translates of each other while their window stays
in bounds.  Atoms whose window crosses the signal edges are truncated, then
renormalized.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConfigError

#: Window half-width in scale units; exp(-pi * 6**2) ~ 1.6e-49.
WINDOW_HALF_WIDTH = 6.0

DEFAULT_SCALES = (4, 8, 16, 32, 64, 128, 256)
DEFAULT_PHASES = (0.0, math.pi / 2)


@dataclass(frozen=True)
class GaborParams:
    scale: float
    shift_index: int
    shift_factor: float
    frequency: float
    phase: float = 0.0

    @property
    def center(self):
        return self.shift_factor * self.shift_index


def _local_window(scale, frequency, phase, analytic):
    half = int(math.ceil(WINDOW_HALF_WIDTH * scale))
    offsets = np.arange(-half, half + 1, dtype=float)
    env = np.exp(-math.pi * (offsets / scale) ** 2) / math.sqrt(scale)
    if analytic:
        # phase is carried per channel by the coefficient for analytic atoms
        return half, env * np.exp(2j * math.pi * frequency * offsets)
    return half, env * np.cos(2 * math.pi * frequency * offsets + phase)


def _place(p: GaborParams, n, analytic):
    if p.scale <= 0:
        raise ConfigError("Gabor scale must be positive")
    c = p.center
    if not 0 <= c < n:
        raise ConfigError(f"atom center {c} outside [0, {n})")
    if c != int(c):
        # non-integer centers: evaluate directly on the sample grid
        t = np.arange(n, dtype=float) - c
        env = np.exp(-math.pi * (t / p.scale) ** 2) / math.sqrt(p.scale)
        if analytic:
            atom = env * np.exp(2j * math.pi * p.frequency * t)
        else:
            atom = env * np.cos(2 * math.pi * p.frequency * t + p.phase)
    else:
        c = int(c)
        half, win = _local_window(p.scale, p.frequency, p.phase, analytic)
        lo, hi = c - half, c + half + 1
        atom = np.zeros(n, dtype=win.dtype)
        wlo, whi = max(0, -lo), len(win) - max(0, hi - n)
        atom[max(lo, 0) : min(hi, n)] = win[wlo:whi]
        if wlo == 0 and whi == len(win):
            norm = np.linalg.norm(win)
            return atom / norm
    norm = np.linalg.norm(atom)
    if norm == 0:
        raise ConfigError(f"degenerate Gabor atom (zero norm) for {p}")
    return atom / norm


def gabor_atom(p: GaborParams, n):
    """Sampled, unit-norm real Gabor atom of length ``n``."""
    return _place(p, n, analytic=False)


def complex_gabor_atom(p: GaborParams, n):
    """Sampled, unit-norm analytic Gabor atom ``window * exp(i 2 pi f (t - c))``.

    ``p.phase`` is ignored; per-channel phases come from the projections.
    """
    return _place(p, n, analytic=True)


@dataclass(frozen=True)
class GaborGrid:
    """Enumeration rule for a multiscale Gabor dictionary.

    ``frequencies_per_scale`` is either one count shared by all scales or one
    count per scale.  Frequencies for a scale with ``F`` values are the
    midpoints ``(k - 1/2) / (2 F)``, ``k = 1..F``, of a uniform partition of
    ``(0, 0.5)``.  The shift step of scale ``s`` is ``round(shift_fraction * s)``
    samples (at least 1) and centers cover ``[0, signal_length)``.
    """

    signal_length: int
    scales: tuple = DEFAULT_SCALES
    frequencies_per_scale: object = 16
    phases: tuple = DEFAULT_PHASES
    shift_fraction: float = 0.5

    def __post_init__(self):
        if self.signal_length < 1:
            raise ConfigError("signal_length must be positive")
        scales = tuple(float(s) for s in self.scales if s <= self.signal_length)
        if not scales:
            raise ConfigError("no Gabor scale fits the signal length")
        if isinstance(self.frequencies_per_scale, (int, np.integer)):
            freqs = (int(self.frequencies_per_scale),) * len(scales)
        else:
            allf = tuple(int(f) for f in self.frequencies_per_scale)
            if len(allf) == len(self.scales):
                allf = tuple(f for f, s in zip(allf, self.scales) if s <= self.signal_length)
            freqs = allf
            if len(freqs) != len(scales):
                raise ConfigError("frequencies_per_scale must match the number of scales")
        if any(f < 0 for f in freqs) or sum(freqs) == 0:
            raise ConfigError("empty Gabor grid: no frequencies")
        phases = tuple(float(p) for p in self.phases)
        if not phases:
            raise ConfigError("empty Gabor grid: no phases")
        if not self.shift_fraction > 0:
            raise ConfigError("shift_fraction must be positive")
        object.__setattr__(self, "scales", scales)
        object.__setattr__(self, "frequencies_per_scale", freqs)
        object.__setattr__(self, "phases", phases)

    def shift_step(self, scale):
        return max(1, int(round(self.shift_fraction * scale)))

    def n_shifts(self, scale):
        return -(-self.signal_length // self.shift_step(scale))

    def frequencies(self, i):
        f = self.frequencies_per_scale[i]
        return [(k - 0.5) / (2.0 * f) for k in range(1, f + 1)]

    def n_atoms(self, analytic=False):
        n_ph = 1 if analytic else len(self.phases)
        return sum(self.n_shifts(s) * f * n_ph for s, f in zip(self.scales, self.frequencies_per_scale))

    def iter_params(self, analytic=False):
        """Parameters in scale-major, then shift, frequency, phase order."""
        phases = (0.0,) if analytic else self.phases
        for i, s in enumerate(self.scales):
            step = self.shift_step(s)
            freqs = self.frequencies(i)
            for tau in range(self.n_shifts(s)):
                for f in freqs:
                    for ph in phases:
                        yield GaborParams(s, tau, float(step), f, ph)


def _min_coin_split(coins, amount):
    """Nonnegative multiplicities ``d`` with ``sum(d * coins) == amount``.

    Minimizes the total multiplicity; ties go to the earliest coins.  Returns
    None when the amount cannot be formed.
    """
    inf = amount + 1
    best = [0] + [inf] * amount
    choice = [-1] * (amount + 1)
    for a in range(1, amount + 1):
        for j, c in enumerate(coins):
            if c <= a and best[a - c] + 1 < best[a]:
                best[a] = best[a - c] + 1
                choice[a] = j
    if best[amount] >= inf:
        return None
    d = [0] * len(coins)
    a = amount
    while a:
        j = choice[a]
        d[j] += 1
        a -= coins[j]
    return d


def target_grid(signal_length, target_m, scales=DEFAULT_SCALES, phases=DEFAULT_PHASES,
                shift_fraction=0.5):
    """Grid whose per-scale frequency counts give exactly ``target_m`` real atoms.

    Every scale gets the same base count; the remainder is spread over as few
    extra frequencies as possible.

    >>> target_grid(501, 30720).n_atoms()
    30720
    """
    probe = GaborGrid(signal_length, scales, 1, phases, shift_fraction)
    n_ph = len(probe.phases)
    if target_m % n_ph:
        raise ConfigError(f"target_m={target_m} is not a multiple of the {n_ph} phases")
    units = target_m // n_ph
    counts = [probe.n_shifts(s) for s in probe.scales]
    total = sum(counts)
    base = units // total
    while base >= 0:
        extra = _min_coin_split(counts, units - base * total)
        if extra is not None:
            freqs = tuple(base + e for e in extra)
            return GaborGrid(signal_length, probe.scales, freqs, probe.phases, shift_fraction)
        base -= 1
    raise ConfigError(f"cannot reach target_m={target_m} with this grid")


@dataclass(frozen=True)
class GaborDictionary:
    """Monochannel atom table ``atoms[m]`` of length ``n`` with its parameters."""

    atoms: np.ndarray
    params: tuple
    analytic: bool = False

    def __len__(self):
        return self.atoms.shape[0]

    @property
    def signal_length(self):
        return self.atoms.shape[1]


def build_gabor_dictionary(grid: GaborGrid, analytic=False):
    """Enumerate the atoms of ``grid`` (real, or analytic for MMP3/MMP4)."""
    params = tuple(grid.iter_params(analytic=analytic))
    if not params:
        raise ConfigError("empty Gabor grid")
    n = grid.signal_length
    dtype = complex if analytic else float
    atoms = np.empty((len(params), n), dtype=dtype)
    for m, p in enumerate(params):
        atoms[m] = _place(p, n, analytic)
    atoms.flags.writeable = False
    return GaborDictionary(atoms, params, analytic)


def analytic_from_params(params: Sequence[GaborParams], n):
    """Analytic atom table for the distinct ``(scale, center, frequency)`` of ``params``."""
    seen = {}
    for p in params:
        key = (p.scale, p.shift_index, p.shift_factor, p.frequency)
        if key not in seen:
            seen[key] = GaborParams(p.scale, p.shift_index, p.shift_factor, p.frequency, 0.0)
    uniq = tuple(seen.values())
    atoms = np.array([complex_gabor_atom(p, n) for p in uniq])
    atoms.flags.writeable = False
    return GaborDictionary(atoms, uniq, analytic=True)
