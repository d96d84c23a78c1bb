"""Greedy pursuits: monochannel MP/OMP, multichannel MMP1-4 and multivariate OMP.

Monochannel and multichannel variants work on an atom table of shape
``(M, N)`` (one monochannel atom per row, real, or complex analytic for
MMP3/MMP4).  The multivariate OMP works on a :class:`KernelDictionary`
of shift kernels placed at every valid shift.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .errors import ConfigError, ShapeError
from .model import (KernelDictionary, MultichannelCode, MultichannelEntry, SparseCode,
                    _as_2d, correlate_all_shifts)

VARIANTS = ("MP", "OMP", "MMP1", "MMP2", "MMP3", "MMP4", "MOMP")
MMP_VARIANTS = ("MMP1", "MMP2", "MMP3", "MMP4")
COMPLEX_VARIANTS = ("MMP3", "MMP4")

RIDGE = 1e-10
#: Reciprocal condition number below which the Gram matrix gets a ridge.
RCOND_LIMIT = 1e-12


class NearSingularWarning(RuntimeWarning):
    """The active-set Gram matrix was regularized."""


@dataclass(frozen=True)
class PursuitConfig:
    sparsity: int
    variant: str = "MOMP"
    residual_tolerance: float = 0.0

    def __post_init__(self):
        variant = self.variant.upper().replace("-", "").replace("_", "")
        if variant not in VARIANTS:
            raise ConfigError(f"unknown pursuit variant {self.variant!r}; expected one of {VARIANTS}")
        object.__setattr__(self, "variant", variant)
        if int(self.sparsity) != self.sparsity or self.sparsity < 1:
            raise ConfigError("sparsity K must be a positive integer")
        if self.residual_tolerance < 0:
            raise ConfigError("residual_tolerance must be nonnegative")


@dataclass
class DecompositionResult:
    code: object
    residual: np.ndarray
    residual_norm_history: np.ndarray
    regularized: bool = False
    selected: list = field(default_factory=list)

    def residual_ratio(self, signal):
        return np.linalg.norm(self.residual) / np.linalg.norm(signal)


def _stop(norm, signal_norm, tol):
    return tol > 0 and norm < tol * signal_norm


def _check_atoms(atoms, n=None):
    atoms = np.asarray(atoms)
    if atoms.ndim != 2 or atoms.shape[0] == 0:
        raise ConfigError("atom table must be a non-empty (M, N) array")
    if n is not None and atoms.shape[1] != n:
        raise ShapeError(f"atoms have length {atoms.shape[1]}, signal has {n} samples")
    return atoms


# -- least squares on an active set -------------------------------------------

def _solve_gram(gram, rhs):
    """Solve ``gram @ x = rhs``; regularize when near singular."""
    k = gram.shape[0]
    regularized = False
    try:
        cf = linalg.cho_factor(gram, lower=True, check_finite=False)
        d = np.diag(cf[0]) ** 2
        if d.min() <= RCOND_LIMIT * d.max():
            raise linalg.LinAlgError("near singular")
        x = linalg.cho_solve(cf, rhs, check_finite=False)
    except linalg.LinAlgError:
        regularized = True
        warnings.warn("near-singular active-set Gram matrix; adding a 1e-10 ridge",
                      NearSingularWarning, stacklevel=3)
        x = linalg.solve(gram + RIDGE * np.eye(k), rhs, assume_a="pos")
    return x, regularized


def orthogonal_project(signal, active_atoms):
    """Least-squares coefficients of ``signal`` on ``active_atoms``.

    Parameters
    ----------
    signal : array of shape (N, C) or (N,)
    active_atoms : sequence of arrays shaped like ``signal``

    Returns
    -------
    coefs : array of shape (len(active_atoms),)
        Minimizer of ``||signal - sum_i coefs[i] * active_atoms[i]||_F``.
    """
    y = np.asarray(signal, dtype=float).ravel()
    if len(active_atoms) == 0:
        return np.zeros(0)
    a = np.array([np.asarray(at, dtype=float).ravel() for at in active_atoms])
    if a.shape[1] != y.size:
        raise ShapeError("atoms and signal differ in size")
    coefs, _ = _solve_gram(a @ a.T, a @ y)
    return coefs


# -- monochannel -----------------------------------------------------------------

def mp_select_mono(residual, atoms):
    """Index of the atom most correlated (in absolute value) with ``residual``."""
    r = np.asarray(residual, dtype=float).ravel()
    atoms = _check_atoms(atoms, r.size)
    return int(np.argmax(np.abs(atoms @ r)))


def _mono_channel(y, atoms, k_max, orthogonal, tol, y_norm):
    residual = y.copy()
    history = [np.linalg.norm(residual)]
    picks, coefs = [], []
    regularized = False
    corr_all = atoms @ y
    for _ in range(k_max):
        corr = atoms @ residual
        if orthogonal and picks:
            corr[picks] = 0.0
        m = int(np.argmax(np.abs(corr)))
        if orthogonal:
            if m in picks:
                break
            picks.append(m)
            sub = atoms[picks]
            coefs, reg = _solve_gram(sub @ sub.T, corr_all[picks])
            regularized |= reg
            residual = y - coefs @ sub
        else:
            picks.append(m)
            coefs.append(corr[m])
            residual = residual - corr[m] * atoms[m]
        history.append(np.linalg.norm(residual))
        if _stop(history[-1], y_norm, tol):
            break
    return picks, np.asarray(coefs, dtype=float), residual, history, regularized


def mono_decompose(signal, atoms, config: PursuitConfig):
    """MP or OMP applied independently to every channel.

    Each channel receives ``K`` atoms; the code stores one entry per selected
    atom with the coefficient on its own channel and zeros elsewhere.
    """
    y = _as_2d(signal)
    atoms = _check_atoms(atoms, y.shape[0])
    if np.iscomplexobj(atoms):
        raise ConfigError(f"{config.variant} needs a real atom table")
    orthogonal = config.variant == "OMP"
    n, c = y.shape
    residual = np.empty_like(y)
    histories, entries, selected = [], [], []
    regularized = False
    for ch in range(c):
        norm = np.linalg.norm(y[:, ch])
        picks, coefs, res, hist, reg = _mono_channel(
            y[:, ch], atoms, config.sparsity, orthogonal, config.residual_tolerance, norm)
        regularized |= reg
        residual[:, ch] = res
        histories.append(hist)
        for m, x in zip(picks, coefs):
            amps = np.zeros(c)
            amps[ch] = x
            entries.append((m, amps, np.zeros(c)))
        selected.append(picks)
    length = max(len(h) for h in histories)
    padded = np.array([h + [h[-1]] * (length - len(h)) for h in histories])
    history = np.sqrt((padded ** 2).sum(axis=0))
    return DecompositionResult(MultichannelCode(tuple(entries)), residual, history,
                               regularized, selected)


# -- multichannel ----------------------------------------------------------------

def mmp_scores(residual, atoms, variant):
    """Selection score of every atom for a multichannel MP variant.

    Returns ``(scores, projections)`` where ``projections[m, c]`` is the
    (complex for MMP3/MMP4) scalar product of channel ``c`` with atom ``m``.
    """
    variant = variant.upper()
    if variant not in MMP_VARIANTS:
        raise ConfigError(f"{variant!r} is not a multichannel variant")
    r = _as_2d(residual, "residual")
    atoms = _check_atoms(atoms, r.shape[0])
    is_complex = np.iscomplexobj(atoms)
    if (variant in COMPLEX_VARIANTS) != is_complex:
        kind = "complex analytic" if variant in COMPLEX_VARIANTS else "real"
        raise ConfigError(f"{variant} needs a {kind} atom table")
    proj = (atoms.conj() if is_complex else atoms) @ r
    if variant in ("MMP1", "MMP3"):
        scores = (np.abs(proj) ** 2).sum(axis=1)
    else:
        scores = np.abs(proj.sum(axis=1))
    return scores, proj


def _phase_waveforms(atom, phases):
    """Unit-norm real waveforms ``Re(atom * exp(i phase_c))`` as columns."""
    g = np.real(atom[:, None] * np.exp(1j * phases)[None, :])
    norms = np.linalg.norm(g, axis=0)
    safe = np.where(norms > 0, norms, 1.0)
    return g / safe, norms > 0


def mmp_select(residual, atoms, variant):
    """Select one atom and extract per-channel amplitudes and phases.

    Returns ``(index, amplitudes, phases, waveforms)``; ``waveforms`` is the
    ``(N, C)`` unit-norm per-channel contribution so that the MP update is
    ``residual - waveforms * amplitudes``.
    """
    scores, proj = mmp_scores(residual, atoms, variant)
    m = int(np.argmax(scores))
    atom = atoms[m]
    if np.iscomplexobj(atoms):
        phases = np.angle(proj[m])
        waves, ok = _phase_waveforms(atom, phases)
        r = _as_2d(residual, "residual")
        amps = np.where(ok, np.einsum("tc,tc->c", r, waves), 0.0)
    else:
        amps = proj[m].copy()
        phases = np.zeros_like(amps)
        waves = np.repeat(atom[:, None], amps.size, axis=1)
    return m, amps, phases, waves


def mmp_decompose(signal, atoms, config: PursuitConfig):
    """Multichannel matching pursuit with plain (non-orthogonal) MP updates."""
    if config.variant not in MMP_VARIANTS:
        raise ConfigError(f"mmp_decompose does not handle {config.variant}")
    y = _as_2d(signal)
    atoms = _check_atoms(atoms, y.shape[0])
    residual = y.copy()
    y_norm = np.linalg.norm(y)
    history = [y_norm]
    entries, selected = [], []
    for _ in range(config.sparsity):
        m, amps, phases, waves = mmp_select(residual, atoms, config.variant)
        residual = residual - waves * amps[None, :]
        entries.append((m, amps, phases))
        selected.append(m)
        history.append(np.linalg.norm(residual))
        if _stop(history[-1], y_norm, config.residual_tolerance):
            break
    return DecompositionResult(MultichannelCode(tuple(entries)), residual,
                               np.asarray(history), False, selected)


# -- multivariate OMP --------------------------------------------------------------

def shift_bounds(length, n, shift_range=None):
    """Inclusive admissible shift interval for a kernel of ``length`` in ``n`` samples."""
    lo, hi = 0, n - length
    if shift_range is not None:
        lo = max(lo, int(shift_range[0]))
        hi = min(hi, int(shift_range[1]))
    return lo, hi


def momp_select(residual, dictionary: KernelDictionary, shift_range=None, exclude=(),
                fft_threshold=None):
    """Best ``(kernel, shift, correlation)`` over all kernels and admissible shifts.

    Ties go to the lowest kernel index, then the lowest shift.  Pairs in
    ``exclude`` are skipped.  Returns None when no candidate is left.
    """
    n = residual.shape[0]
    best = None
    best_score = -1.0
    for l, ker in enumerate(dictionary):
        lo, hi = shift_bounds(ker.length, n, shift_range)
        if hi < lo:
            continue
        corr = correlate_all_shifts(residual, ker.waveform, fft_threshold)[lo : hi + 1]
        score = np.abs(corr)
        for kl, s in exclude:
            if kl == l and lo <= s <= hi:
                score[s - lo] = -1.0
        j = int(np.argmax(score))
        if score[j] > best_score:
            best_score = score[j]
            best = (l, lo + j, float(corr[j]))
    return best


def momp_decompose(signal, dictionary: KernelDictionary, config: PursuitConfig,
                   shift_range=None, fft_threshold=None):
    """Shift-invariant multivariate OMP.

    Each iteration picks the kernel and shift with maximal absolute
    multivariate correlation with the residual, then refits every active
    coefficient by least squares.

    Parameters
    ----------
    signal : array of shape (N, C)
    dictionary : KernelDictionary
    config : PursuitConfig
        ``config.sparsity`` is the number of atoms K.
    shift_range : (lo, hi), optional
        Inclusive bounds on the admissible shifts of every kernel.

    Returns
    -------
    DecompositionResult
        ``code`` is a :class:`SparseCode` with the least-squares coefficients.
    """
    y = _as_2d(signal)
    n, c = y.shape
    if dictionary.n_channels != c:
        raise ShapeError(f"dictionary has {dictionary.n_channels} channels, signal has {c}")
    if max(dictionary.lengths) > n:
        raise ShapeError("a kernel is longer than the signal")
    residual = y.copy()
    y_norm = np.linalg.norm(y)
    history = [y_norm]
    active, flats = [], []
    coefs = np.zeros(0)
    regularized = False
    yf = y.ravel()
    gram = np.zeros((0, 0))
    rhs = np.zeros(0)
    for _ in range(config.sparsity):
        pick = momp_select(residual, dictionary, shift_range, active, fft_threshold)
        if pick is None:
            break
        l, s, _ = pick
        atom = np.zeros((n, c))
        w = dictionary[l].waveform
        atom[s : s + w.shape[0]] = w
        af = atom.ravel()
        cross = np.array([f @ af for f in flats])
        k = len(flats)
        g = np.empty((k + 1, k + 1))
        g[:k, :k] = gram
        g[k, :k] = g[:k, k] = cross
        g[k, k] = af @ af
        gram = g
        rhs = np.append(rhs, af @ yf)
        active.append((l, s))
        flats.append(af)
        coefs, reg = _solve_gram(gram, rhs)
        regularized |= reg
        residual = (yf - coefs @ np.array(flats)).reshape(n, c)
        history.append(np.linalg.norm(residual))
        if _stop(history[-1], y_norm, config.residual_tolerance):
            break
    code = SparseCode(tuple((l, s, x) for (l, s), x in zip(active, coefs)))
    return DecompositionResult(code, residual, np.asarray(history), regularized, list(active))


def decompose(signal, dictionary, config: PursuitConfig, **kwargs):
    """Dispatch to the pursuit implementing ``config.variant``.

    ``dictionary`` is a :class:`KernelDictionary` for MOMP and an ``(M, N)``
    atom table (or anything with an ``atoms`` attribute) otherwise.
    """
    if config.variant == "MOMP":
        if not isinstance(dictionary, KernelDictionary):
            raise ConfigError("MOMP needs a KernelDictionary")
        return momp_decompose(signal, dictionary, config, **kwargs)
    atoms = getattr(dictionary, "atoms", dictionary)
    if config.variant in MMP_VARIANTS:
        return mmp_decompose(signal, atoms, config)
    return mono_decompose(signal, atoms, config)
