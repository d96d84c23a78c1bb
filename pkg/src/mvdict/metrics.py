"""Reconstruction rate and correlation metrics."""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import ConfigError, ShapeError
from .model import EpochSet, _as_2d
from .parallel import pmap
from .pursuit import PursuitConfig, decompose


def reconstruction_rate(trials, residuals):
    """``1 - mean_p ||residual_p|| / ||trial_p||`` (Frobenius norms)."""
    trials = list(trials)
    residuals = list(residuals)
    if len(trials) != len(residuals) or not trials:
        raise ConfigError("need the same, nonzero number of trials and residuals")
    ratios = []
    for y, e in zip(trials, residuals):
        y = np.asarray(y, dtype=float)
        e = np.asarray(e, dtype=float)
        if y.shape != e.shape:
            raise ShapeError(f"trial shape {y.shape} differs from residual shape {e.shape}")
        ny = np.linalg.norm(y)
        if ny == 0:
            raise ConfigError("zero-norm trial")
        ratios.append(np.linalg.norm(e) / ny)
    return 1.0 - float(np.mean(ratios))


def cross_correlation(estimate, reference):
    """Multivariate correlation at every lag (zero-padded overlap).

    Returns ``(lags, values)``; index ``j`` is the trace product of the
    reference with the estimate advanced by ``lags[j]`` samples.
    """
    a = _as_2d(estimate, "estimate")
    b = _as_2d(reference, "reference")
    if a.shape[1] != b.shape[1]:
        raise ShapeError(f"channel count mismatch {a.shape[1]} vs {b.shape[1]}")
    values = sum(np.correlate(a[:, c], b[:, c], mode="full") for c in range(a.shape[1]))
    lags = np.arange(-(b.shape[0] - 1), a.shape[0])
    return lags, values


def max_correlation(estimate, reference, lag_range=None):
    """Maximum absolute normalized correlation over lags, in ``[0, 1]``.

    Both patterns are scaled to unit Frobenius norm first, so the value is
    invariant to sign, scale and (within the lag range) time shifts.
    """
    a = _as_2d(estimate, "estimate")
    b = _as_2d(reference, "reference")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise ConfigError("cannot correlate a zero pattern")
    lags, values = cross_correlation(a / na, b / nb)
    if lag_range is not None:
        keep = (lags >= lag_range[0]) & (lags <= lag_range[1])
        if not keep.any():
            raise ConfigError("empty lag range")
        values = values[keep]
    return float(min(1.0, np.max(np.abs(values))))


def dictionary_recovery(learned, planted):
    """Mean max-correlation between planted and learned kernels under the best one-to-one assignment.

    Returns ``(mean, per_planted, assignment)``.
    """
    learned = [np.asarray(k) for k in learned]
    planted = [np.asarray(k) for k in planted]
    score = np.array([[max_correlation(l, p) for l in learned] for p in planted])
    rows, cols = linear_sum_assignment(-score)
    per = score[rows, cols]
    return float(per.mean()), per, dict(zip(rows.tolist(), cols.tolist()))


@dataclass
class RhoCurve:
    k_values: list
    rho: list
    method: str = ""
    dataset: str = ""

    def rows(self):
        yield ["K", "rho", "method", "dataset"]
        for k, r in zip(self.k_values, self.rho):
            yield [k, repr(r), self.method, self.dataset]

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            csv.writer(fh).writerows(self.rows())

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump(asdict(self), fh, indent=2)


def residual_histories(trials, dictionary, method, k_max, threads=1, **kwargs):
    """Residual-norm history (``k = 0..k_max``) of every trial, padded on early stop."""
    config = PursuitConfig(k_max, method)
    data = trials.data if isinstance(trials, EpochSet) else [np.asarray(t) for t in trials]

    def run(y):
        h = decompose(y, dictionary, config, **kwargs).residual_norm_history
        if len(h) < k_max + 1:
            h = np.concatenate([h, np.full(k_max + 1 - len(h), h[-1])])
        return h

    return np.array(pmap(run, list(data), threads))


def rho_curve(trials, dictionary, method, k_values: Sequence[int], dataset="", threads=1,
              **kwargs):
    """Reconstruction rate as a function of the sparsity.

    Greedy pursuits are run once up to ``max(k_values)``; the rate at each
    smaller ``K`` is read from the residual-norm history.
    """
    k_values = [int(k) for k in k_values]
    if not k_values:
        raise ConfigError("k_values must not be empty")
    if sorted(k_values) != k_values or k_values[0] < 0:
        raise ConfigError("k_values must be nonnegative and sorted ascending")
    data = trials.data if isinstance(trials, EpochSet) else np.asarray(trials, dtype=float)
    norms = np.linalg.norm(data.reshape(len(data), -1), axis=1)
    if np.any(norms == 0):
        raise ConfigError("zero-norm trial")
    k_max = k_values[-1]
    if k_max == 0:
        rho = [0.0] * len(k_values)
    else:
        hist = residual_histories(data, dictionary, method, k_max, threads, **kwargs)
        # the K = 0 residual is the trial itself; avoid summation-order rounding
        hist[:, 0] = norms
        rho = [1.0 - float(np.mean(hist[:, k] / norms)) for k in k_values]
    return RhoCurve(k_values, rho, PursuitConfig(1, method).variant, dataset)
