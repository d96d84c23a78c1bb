"""Signal and dictionary files, plus small CSV writers.

Binary signal file (``.mvsg``), all little-endian::

    magic   5 bytes  b"MVSG1"
    kind    uint8    0 = epochs, 1 = continuous record
    C       uint32   channel count
    fs      float64  sample rate in Hz
    N       uint64   samples per epoch, or record length
    count   uint64   number of epochs, or number of onsets
    payload float64  time-major samples, epochs stored one after another
    onsets  int64    ``count`` values, continuous records only

Binary dictionary file (``.mvdk``)::

    magic   5 bytes  b"MVDK1"
    L, C    uint32   kernel and channel counts
    T_l     uint32   L kernel lengths
    payload float64  kernels one after another, each time-major (T_l, C)
"""

from __future__ import annotations

import csv
import struct

import numpy as np

from .errors import ConfigError, ParseError
from .model import ContinuousRecord, EpochSet, KernelDictionary, _as_2d

SIGNAL_MAGIC = b"MVSG1"
DICT_MAGIC = b"MVDK1"
_SIGNAL_HEADER = struct.Struct("<5sBIdQQ")
_DICT_HEADER = struct.Struct("<5sII")
KIND_EPOCHS, KIND_CONTINUOUS = 0, 1
FORMATS = ("binary", "csv")


def _format_of(path, fmt):
    if fmt is not None:
        if fmt not in FORMATS:
            raise ConfigError(f"unknown format {fmt!r}; expected one of {FORMATS}")
        return fmt
    return "csv" if str(path).lower().endswith(".csv") else "binary"


def _read_exact(buf, offset, size, what):
    if offset + size > len(buf):
        raise ParseError(f"truncated file while reading {what}: need {size} bytes, "
                         f"{len(buf) - offset} left", offset)
    return buf[offset : offset + size]


def _floats(buf, offset, count, what):
    raw = _read_exact(buf, offset, 8 * count, what)
    return np.frombuffer(raw, dtype="<f8").astype(float), offset + 8 * count


def encode_signals(data) -> bytes:
    if isinstance(data, EpochSet):
        p, n, c = data.data.shape
        header = _SIGNAL_HEADER.pack(SIGNAL_MAGIC, KIND_EPOCHS, c, data.sample_rate, n, p)
        return header + data.data.astype("<f8").tobytes()
    if isinstance(data, ContinuousRecord):
        n, c = data.samples.shape
        header = _SIGNAL_HEADER.pack(SIGNAL_MAGIC, KIND_CONTINUOUS, c, data.sample_rate, n,
                                     data.onsets.size)
        return header + data.samples.astype("<f8").tobytes() + data.onsets.astype("<i8").tobytes()
    raise ConfigError(f"cannot encode {type(data).__name__}")


def decode_signals(buf: bytes):
    head = _read_exact(buf, 0, _SIGNAL_HEADER.size, "header")
    magic, kind, c, fs, n, count = _SIGNAL_HEADER.unpack(head)
    if magic != SIGNAL_MAGIC:
        raise ParseError(f"bad magic {magic!r}, expected {SIGNAL_MAGIC!r}", 0)
    off = _SIGNAL_HEADER.size
    if kind == KIND_EPOCHS:
        values, off = _floats(buf, off, count * n * c, "epoch samples")
        out = EpochSet(values.reshape(count, n, c), fs)
    elif kind == KIND_CONTINUOUS:
        values, off = _floats(buf, off, n * c, "record samples")
        raw = _read_exact(buf, off, 8 * count, "onsets")
        onsets = np.frombuffer(raw, dtype="<i8").astype(np.int64)
        off += 8 * count
        out = ContinuousRecord(values.reshape(n, c), onsets, fs)
    else:
        raise ParseError(f"unknown signal kind {kind}", 5)
    if off != len(buf):
        raise ParseError(f"{len(buf) - off} trailing bytes", off)
    return out


def _sample_rate_comment(line):
    line = line.strip()
    if line.startswith("#") and "sample_rate=" in line:
        try:
            return float(line.split("sample_rate=", 1)[1])
        except ValueError as exc:
            raise ParseError(f"bad sample rate comment {line!r}") from exc
    return None


def _read_csv(path):
    fs = None
    rows = []
    with open(path, newline="") as fh:
        for line in fh:
            if line.startswith("#"):
                fs = _sample_rate_comment(line) or fs
            elif line.strip():
                rows.append(line)
    reader = list(csv.reader(rows))
    if not reader:
        raise ParseError(f"{path}: empty CSV")
    header, body = reader[0], reader[1:]
    if any(len(r) != len(header) for r in body):
        raise ParseError(f"{path}: ragged CSV rows")
    try:
        values = np.array([[float(v) for v in r] for r in body], dtype=float)
    except ValueError as exc:
        raise ParseError(f"{path}: non-numeric CSV value ({exc})") from exc
    return header, values.reshape(len(body), len(header)), fs


def load_signals(path, fmt=None):
    """Read an :class:`EpochSet` or :class:`ContinuousRecord`.

    CSV files hold one column per channel and a header row; a ``trial``
    first column marks epochs, an ``onset`` column (0/1 per sample) marks
    a continuous record, and the sample rate is read from an optional
    ``# sample_rate=<Hz>`` comment line.
    """
    fmt = _format_of(path, fmt)
    if fmt == "binary":
        with open(path, "rb") as fh:
            return decode_signals(fh.read())
    header, values, fs = _read_csv(path)
    fs = 1.0 if fs is None else fs
    names = [h.strip().lower() for h in header]
    if names and names[0] == "trial":
        trial = values[:, 0].astype(np.int64)
        ids = list(dict.fromkeys(trial.tolist()))
        data = [values[trial == t, 1:] for t in ids]
        if len({d.shape[0] for d in data}) > 1:
            raise ParseError(f"{path}: epochs of unequal length")
        return EpochSet(np.stack(data), fs)
    if "onset" in names:
        j = names.index("onset")
        onsets = np.flatnonzero(values[:, j] != 0)
        samples = np.delete(values, j, axis=1)
        return ContinuousRecord(samples, onsets, fs)
    return ContinuousRecord(values, np.zeros(0, dtype=np.int64), fs)


def _fmt(v):
    return repr(float(v))


def save_signals(data, path, fmt=None):
    fmt = _format_of(path, fmt)
    if fmt == "binary":
        with open(path, "wb") as fh:
            fh.write(encode_signals(data))
        return
    with open(path, "w", newline="") as fh:
        fh.write(f"# sample_rate={data.sample_rate!r}\n")
        w = csv.writer(fh)
        if isinstance(data, EpochSet):
            w.writerow(["trial"] + [f"ch{c}" for c in range(data.n_channels)])
            for p, epoch in enumerate(data.data):
                for row in epoch:
                    w.writerow([p] + [_fmt(v) for v in row])
        else:
            mark = np.zeros(data.n_samples, dtype=int)
            mark[data.onsets] = 1
            w.writerow([f"ch{c}" for c in range(data.samples.shape[1])] + ["onset"])
            for row, m in zip(data.samples, mark):
                w.writerow([_fmt(v) for v in row] + [int(m)])


def encode_dictionary(dictionary: KernelDictionary) -> bytes:
    lengths = dictionary.lengths
    parts = [_DICT_HEADER.pack(DICT_MAGIC, len(dictionary), dictionary.n_channels),
             struct.pack(f"<{len(lengths)}I", *lengths)]
    parts += [k.waveform.astype("<f8").tobytes() for k in dictionary]
    return b"".join(parts)


def decode_dictionary(buf: bytes, normalize=False) -> KernelDictionary:
    head = _read_exact(buf, 0, _DICT_HEADER.size, "header")
    magic, n_kernels, c = _DICT_HEADER.unpack(head)
    if magic != DICT_MAGIC:
        raise ParseError(f"bad magic {magic!r}, expected {DICT_MAGIC!r}", 0)
    off = _DICT_HEADER.size
    raw = _read_exact(buf, off, 4 * n_kernels, "kernel lengths")
    lengths = struct.unpack(f"<{n_kernels}I", raw)
    off += 4 * n_kernels
    arrays = []
    for l, t in enumerate(lengths):
        values, new = _floats(buf, off, t * c, f"kernel {l}")
        arrays.append(values.reshape(t, c))
        off = new
    if off != len(buf):
        raise ParseError(f"{len(buf) - off} trailing bytes", off)
    try:
        return KernelDictionary.from_arrays(arrays, normalize=normalize)
    except ValueError as exc:
        raise ParseError(f"invalid kernels: {exc}") from exc


def save_dictionary(dictionary: KernelDictionary, path):
    with open(path, "wb") as fh:
        fh.write(encode_dictionary(dictionary))


def load_dictionary(path, normalize=False) -> KernelDictionary:
    with open(path, "rb") as fh:
        return decode_dictionary(fh.read(), normalize=normalize)


def save_matrix_csv(path, matrix, header=None, prefix="ch"):
    """Write a 2-D array with one row per time sample."""
    m = _as_2d(matrix)
    header = header or [f"{prefix}{c}" for c in range(m.shape[1])]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in m:
            w.writerow([_fmt(v) for v in row])


def load_matrix_csv(path):
    return _read_csv(path)[1]


def write_rows(path, rows):
    with open(path, "w", newline="") as fh:
        csv.writer(fh).writerows(rows)


def load_noise_model(path):
    """FIR noise coefficients from CSV: first row the taps, then the C x C mixing matrix.

    Lines starting with ``#`` are ignored; there is no header row.
    """
    from .simulate import FirNoiseModel

    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(l for l in fh if l.strip() and not l.startswith("#"))]
    if len(rows) < 2:
        raise ParseError(f"{path}: need a taps row and a mixing matrix")
    try:
        taps = [float(v) for v in rows[0]]
        mixing = np.array([[float(v) for v in r] for r in rows[1:]])
    except ValueError as exc:
        raise ParseError(f"{path}: non-numeric value ({exc})") from exc
    try:
        return FirNoiseModel(taps, mixing)
    except ValueError as exc:
        raise ParseError(f"{path}: {exc}") from exc
