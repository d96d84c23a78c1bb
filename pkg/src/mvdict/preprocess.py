"""Bandpass filtering and zero-padding."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import signal as sps

from .errors import ConfigError
from .model import ContinuousRecord, EpochSet, MultivariateSignal, _as_2d


@dataclass(frozen=True)
class FilterSpec:
    low_hz: float
    high_hz: float
    order: int = 3
    kind: str = "bandpass"
    design: str = "butterworth"

    def __post_init__(self):
        if self.kind != "bandpass" or self.design != "butterworth":
            raise ConfigError("only Butterworth bandpass filters are supported")
        if int(self.order) != self.order or self.order < 1:
            raise ConfigError("filter order must be a positive integer")
        if not 0 < self.low_hz < self.high_hz:
            raise ConfigError(f"invalid band [{self.low_hz}, {self.high_hz}] Hz")

    def validate(self, sample_rate):
        if not self.high_hz < sample_rate / 2:
            raise ConfigError(f"high cutoff {self.high_hz} Hz must be below Nyquist "
                              f"({sample_rate / 2} Hz)")

    def sos(self, sample_rate):
        """Second-order sections of the digital design."""
        self.validate(sample_rate)
        return sps.butter(int(self.order), [self.low_hz, self.high_hz], btype="bandpass",
                          fs=sample_rate, output="sos")

    def response(self, freqs_hz, sample_rate):
        """Complex frequency response of the designed filter at ``freqs_hz``."""
        _, h = sps.sosfreqz(self.sos(sample_rate), worN=np.atleast_1d(freqs_hz), fs=sample_rate)
        return h


def _filter_array(x, sos, zero_phase):
    x = np.asarray(x, dtype=float)
    if zero_phase:
        return sps.sosfiltfilt(sos, x, axis=-2)
    return sps.sosfilt(sos, x, axis=-2)


def butterworth_bandpass(signal, spec: FilterSpec, sample_rate=None, zero_phase=False):
    """Filter every channel along time.

    Accepts a :class:`MultivariateSignal`, :class:`EpochSet` (each epoch is
    filtered independently), :class:`ContinuousRecord` or a plain array with
    an explicit ``sample_rate``; returns the same kind.  Causal by default,
    forward-backward with ``zero_phase=True``.
    """
    if isinstance(signal, EpochSet):
        sos = spec.sos(sample_rate or signal.sample_rate)
        return EpochSet(_filter_array(signal.data, sos, zero_phase), signal.sample_rate)
    if isinstance(signal, ContinuousRecord):
        sos = spec.sos(sample_rate or signal.sample_rate)
        return ContinuousRecord(_filter_array(signal.samples, sos, zero_phase), signal.onsets,
                                signal.sample_rate)
    if isinstance(signal, MultivariateSignal):
        sos = spec.sos(sample_rate or signal.sample_rate)
        return MultivariateSignal(_filter_array(signal.samples, sos, zero_phase),
                                  signal.sample_rate)
    if sample_rate is None:
        raise ConfigError("sample_rate is required for plain arrays")
    return _filter_array(_as_2d(signal), spec.sos(sample_rate), zero_phase)


def zero_pad(signal, pad=0, after=None):
    """Prepend ``pad`` and append ``after`` (default ``pad``) zero rows.

    Works on 2-D signals and on epoch stacks (padding every epoch).
    """
    after = pad if after is None else after
    if pad < 0 or after < 0:
        raise ConfigError("padding must be nonnegative")
    if isinstance(signal, EpochSet):
        return EpochSet(np.pad(signal.data, ((0, 0), (pad, after), (0, 0))), signal.sample_rate)
    if isinstance(signal, MultivariateSignal):
        return MultivariateSignal(np.pad(signal.samples, ((pad, after), (0, 0))),
                                  signal.sample_rate)
    return np.pad(_as_2d(signal), ((pad, after), (0, 0)))
