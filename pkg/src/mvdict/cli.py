"""Command-line front end.

Every subcommand writes plain CSV (and JSON where noted) so results can be
plotted with any tool.  Errors go to standard error as
``error[<kind>]: <message>`` with exit code 2 for configuration errors and
1 for runtime failures.
"""

from __future__ import annotations

import argparse
import configparser
import logging
import os
import sys
import time

import numpy as np

from . import __version__
from .errors import ConfigError, MvdictError, ParseError, SolverError
from .evoked import (epoch_record, grand_average, learn_ep_kernel, ls_estimate, spatial_pattern,
                     to_average_reference, truncate_pattern)
from .fileio import (load_dictionary, load_matrix_csv, load_noise_model, load_signals,
                     save_dictionary, save_matrix_csv, save_signals, write_rows)
from .gabor import (DEFAULT_SCALES, GaborGrid, GaborParams, analytic_from_params,
                    build_gabor_dictionary, target_grid)
from .learning import LearnConfig, mdla_train
from .metrics import max_correlation, reconstruction_rate, rho_curve
from .model import ContinuousRecord, EpochSet, KernelDictionary
from .parallel import resolve_threads
from .preprocess import FilterSpec, butterworth_bandpass, zero_pad
from .pursuit import COMPLEX_VARIANTS, PursuitConfig, decompose
from .simulate import (FirNoiseModel, SimulationSpec, generate_trials, jitter_sweep,
                       p300_like_pattern)

log = logging.getLogger("mvdict")

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _int_list(text):
    try:
        return [int(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _float_list(text):
    try:
        return [float(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _pair(text):
    vals = _float_list(text)
    if len(vals) != 2:
        raise argparse.ArgumentTypeError(f"expected two comma-separated numbers, got {text!r}")
    return vals


def _common(p):
    p.add_argument("--config", help="key = value file; command-line flags take precedence")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=None,
                   help="worker threads (default: $MVDICT_THREADS or all cores)")
    p.add_argument("--dry-run", action="store_true", help="validate the configuration and exit")
    p.add_argument("--log-level", default="WARNING",
                   choices=["DEBUG", "INFO", "WARNING", "ERROR"])


def _filter_args(p):
    p.add_argument("--bandpass", type=_pair, default=None, metavar="LOW,HIGH",
                   help="Butterworth bandpass in Hz applied before processing")
    p.add_argument("--order", type=int, default=3)
    p.add_argument("--zero-phase", action="store_true")
    p.add_argument("--pad", type=int, default=0, help="zero rows added at both ends")


def build_parser():
    parser = _Parser(prog="mvdict", description="Shift-invariant multivariate sparse coding "
                     "and dictionary learning for multichannel signals.")
    parser.add_argument("--version", action="version", version=f"mvdict {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("gabor-gen", help="build a Gabor atom dictionary file")
    _common(p)
    p.add_argument("--n", type=int, help="signal length in samples")
    p.add_argument("--scales", type=_int_list, default=list(DEFAULT_SCALES))
    p.add_argument("--freqs", type=int, default=None, help="frequencies per scale")
    p.add_argument("--target-m", type=int, default=None, help="exact number of real atoms")
    p.add_argument("--shift-fraction", type=float, default=0.5)
    p.add_argument("--out", help="dictionary file (.mvdk); parameters go to <out>.params.csv")
    p.set_defaults(required=("n", "out"))

    p = sub.add_parser("learn", help="learn a kernel dictionary from epochs")
    _common(p)
    _filter_args(p)
    p.add_argument("--input", help="training epochs (.mvsg or .csv)")
    p.add_argument("--out", help="learned dictionary (.mvdk)")
    p.add_argument("--trace", default=None, help="per-pass training trace CSV")
    p.add_argument("--init", default=None, help="initial dictionary (.mvdk)")
    p.add_argument("--kernels", type=int, default=20)
    p.add_argument("--iterations", type=int, default=100)
    p.add_argument("--k", type=int, default=1, help="sparsity per trial during learning")
    p.add_argument("--initial-length", type=int, default=32)
    p.add_argument("--limit-length", type=int, default=None)
    p.add_argument("--extension", type=int, default=40)
    p.add_argument("--fixed-length", action="store_true", help="disable kernel length adaptation")
    p.add_argument("--step-size", type=float, default=0.1)
    p.add_argument("--step-normalization", choices=["curvature", "none"], default="curvature")
    p.add_argument("--interval", type=_pair, default=None, metavar="CENTER,HALF",
                   help="restrict shifts to CENTER +/- HALF samples")
    p.add_argument("--skip-edge", action="store_true")
    p.set_defaults(required=("input", "out"))

    for name, text in (("decompose", "sparse-code signals"),
                       ("rho-curve", "reconstruction rate versus sparsity")):
        p = sub.add_parser(name, help=text)
        _common(p)
        _filter_args(p)
        p.add_argument("--input", help="epochs (.mvsg or .csv)")
        p.add_argument("--dict", help="dictionary (.mvdk)")
        p.add_argument("--params", default=None,
                       help="Gabor parameter CSV (needed for MMP3/MMP4; default <dict>.params.csv)")
        p.add_argument("--variant", default="momp")
        if name == "decompose":
            p.add_argument("--k", type=int, default=1)
            p.add_argument("--code", default=None, help="code CSV")
            p.add_argument("--residuals", default=None, help="residual epochs (.mvsg or .csv)")
            p.set_defaults(required=("input", "dict"))
        else:
            p.add_argument("--k-list", type=_int_list, default=[1, 2, 3, 4, 5])
            p.add_argument("--dataset", default="")
            p.add_argument("--out", help="CSV with columns K, rho, method, dataset")
            p.add_argument("--json", default=None)
            p.set_defaults(required=("input", "dict", "out"))

    p = sub.add_parser("estimate-ep", help="estimate an evoked pattern")
    _common(p)
    _filter_args(p)
    p.add_argument("--input", help="continuous record with onsets, or epochs")
    p.add_argument("--method", choices=["ga", "ls", "mdla"], default="ga")
    p.add_argument("--epoch-length", type=int, default=None,
                   help="epoch length in samples (continuous input)")
    p.add_argument("--length", type=int, default=65, help="pattern length T")
    p.add_argument("--interval", type=_pair, default=[300.0, 4], metavar="MS,HALF",
                   help="kernel-center latency in ms and halfwidth in samples")
    p.add_argument("--iterations", type=int, default=20)
    p.add_argument("--step-size", type=float, default=0.01)
    p.add_argument("--avg-ref", action="store_true", help="average-reference the channels")
    p.add_argument("--spatial-mode", choices=["rms", "absmax"], default="rms")
    p.add_argument("--reference", default=None, help="pattern CSV to correlate with")
    p.add_argument("--out", help="pattern CSV (rows = time)")
    p.add_argument("--spatial", default=None, help="spatial pattern CSV")
    p.set_defaults(required=("input", "out"))

    p = sub.add_parser("simulate", help="simulate jittered evoked trials")
    _common(p)
    _sim_args(p)
    p.add_argument("--sigma", type=float, default=0.0, help="shift standard deviation (samples)")
    p.add_argument("--shift-mean", type=int, default=None)
    p.add_argument("--amp-mean", type=float, default=1.0)
    p.add_argument("--amp-std", type=float, default=0.0)
    p.add_argument("--snr-mode", choices=["trial", "global"], default="trial")
    p.add_argument("--out", help="trials (.mvsg or .csv)")
    p.add_argument("--truth", default=None, help="ground truth CSV (trial, shift, amplitude)")
    p.add_argument("--reference-out", default=None, help="reference pattern CSV")
    p.set_defaults(required=("out",))

    p = sub.add_parser("fig8", help="grand average versus learning under latency jitter")
    _common(p)
    _sim_args(p)
    p.add_argument("--sigmas", type=_float_list, default=[0, 2, 4, 6, 8])
    p.add_argument("--reps", type=int, default=10)
    p.add_argument("--halfwidth", type=int, default=4)
    p.add_argument("--iterations", type=int, default=20)
    p.add_argument("--step-size", type=float, default=0.01)
    p.add_argument("--out", help="CSV with columns method, sigma, mean_correlation, ...")
    p.set_defaults(required=("out",))
    return parser


def _sim_args(p):
    p.add_argument("--pattern", default=None, help="reference pattern CSV (default: synthetic)")
    p.add_argument("--length", type=int, default=65)
    p.add_argument("--channels", type=int, default=8)
    p.add_argument("--fs", type=float, default=240.0)
    p.add_argument("--p", type=int, default=200, help="trials")
    p.add_argument("--n", type=int, default=192, help="samples per epoch")
    p.add_argument("--snr", type=float, default=-10.0, help="dB")
    p.add_argument("--noise-file", default=None, help="FIR noise coefficients CSV")
    p.add_argument("--spatial-decay", type=float, default=0.9)


# config files -------------------------------------------------------------

def _subparser(parser, command):
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            return action.choices[command]
    raise KeyError(command)


def _coerce(action, key, raw):
    if isinstance(action, argparse._StoreTrueAction):
        low = raw.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"config key {key!r}: expected a boolean, got {raw!r}")
    if action.choices is not None and raw not in action.choices:
        raise ConfigError(f"config key {key!r}: {raw!r} not in {list(action.choices)}")
    if action.type is None:
        return raw
    try:
        return action.type(raw)
    except (ValueError, argparse.ArgumentTypeError) as exc:
        raise ConfigError(f"config key {key!r}: {exc}") from exc


def read_config(path, subparser):
    """Key-value defaults for ``subparser``; unknown keys are rejected."""
    cp = configparser.ConfigParser(interpolation=None, comment_prefixes=("#", ";"))
    try:
        with open(path) as fh:
            cp.read_string("[mvdict]\n" + fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    except configparser.Error as exc:
        raise ConfigError(f"malformed config file {path}: {exc}") from exc
    actions = {a.dest: a for a in subparser._actions if a.dest not in ("help", "config")}
    out = {}
    for section in cp.sections():
        for key, raw in cp.items(section):
            dest = key.replace("-", "_")
            if dest not in actions:
                raise ConfigError(f"unknown config key {key!r} in {path}")
            out[dest] = _coerce(actions[dest], key, raw)
    return out


def parse_args(argv):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        raise ConfigError("missing subcommand; see mvdict --help")
    if args.config:
        sub = _subparser(parser, args.command)
        sub.set_defaults(**read_config(args.config, sub))
        args = parser.parse_args(argv)
    missing = [k for k in args.required if getattr(args, k) is None]
    if missing:
        raise ConfigError("missing required option(s): " +
                          ", ".join("--" + k.replace("_", "-") for k in missing))
    args.threads = resolve_threads(args.threads)
    return args


# helpers ------------------------------------------------------------------

def _check_input(path):
    if path is not None and not os.path.exists(path):
        raise ConfigError(f"input file not found: {path}")


def _preprocess(data, args):
    if args.bandpass is not None:
        spec = FilterSpec(args.bandpass[0], args.bandpass[1], args.order)
        spec.validate(data.sample_rate)
        if not args.dry_run:
            data = butterworth_bandpass(data, spec, zero_phase=args.zero_phase)
    if args.pad:
        if isinstance(data, ContinuousRecord):
            raise ConfigError("--pad applies to epochs only")
        data = zero_pad(data, args.pad)
    return data


def _load_epochs(path):
    data = load_signals(path)
    if not isinstance(data, EpochSet):
        raise ConfigError(f"{path} holds a continuous record; epochs are expected")
    return data


def _load_params(path):
    rows = load_matrix_csv(path)
    return [GaborParams(int(r[0]), int(r[1]), float(r[2]), float(r[3]), float(r[4]))
            for r in rows]


def _pursuit_dictionary(args, n):
    dictionary = load_dictionary(args.dict)
    variant = PursuitConfig(1, args.variant).variant
    if variant == "MOMP":
        return dictionary, variant
    if dictionary.n_channels != 1 or set(dictionary.lengths) != {n}:
        raise ConfigError(f"{variant} needs monochannel atoms of the signal length {n}")
    if variant in COMPLEX_VARIANTS:
        params = args.params or args.dict + ".params.csv"
        _check_input(params)
        return analytic_from_params(_load_params(params), n), variant
    return np.stack([k.waveform[:, 0] for k in dictionary]), variant


def _noise_model(args, channels):
    if args.noise_file:
        model = load_noise_model(args.noise_file)
        if model.n_channels != channels:
            raise ConfigError("noise file channel count differs from the pattern")
        return model
    return FirNoiseModel.default(channels, args.spatial_decay)


def _reference(args):
    if args.pattern:
        _check_input(args.pattern)
        return load_matrix_csv(args.pattern)
    return p300_like_pattern(args.length, args.channels, args.fs).waveform


# subcommands --------------------------------------------------------------

def cmd_gabor_gen(args):
    if args.target_m is not None:
        grid = target_grid(args.n, args.target_m, args.scales, shift_fraction=args.shift_fraction)
    else:
        grid = GaborGrid(args.n, tuple(args.scales), args.freqs or 8,
                         shift_fraction=args.shift_fraction)
    if args.dry_run:
        print(f"dry-run ok: {grid.n_atoms()} atoms")
        return EXIT_OK
    gd = build_gabor_dictionary(grid)
    save_dictionary(KernelDictionary.from_arrays(gd.atoms[:, :, None], normalize=False), args.out)
    write_rows(args.out + ".params.csv",
               [["scale", "shift_index", "shift_factor", "frequency", "phase"]] +
               [[p.scale, p.shift_index, p.shift_factor, repr(p.frequency), repr(p.phase)]
                for p in gd.params])
    print(f"atoms={len(gd)}")
    return EXIT_OK


def cmd_learn(args):
    _check_input(args.input)
    _check_input(args.init)
    interval = None if args.interval is None else (int(args.interval[0]), int(args.interval[1]))
    config = LearnConfig(n_kernels=args.kernels, iterations=args.iterations, sparsity=args.k,
                         initial_length=args.initial_length, limit_length=args.limit_length,
                         length_extension=args.extension, adapt_length=not args.fixed_length,
                         step_size=args.step_size, step_normalization=args.step_normalization,
                         shift_interval=interval, skip_edge_updates=args.skip_edge,
                         seed=args.seed)
    epochs = _preprocess(_load_epochs(args.input), args)
    if config.initial_length > epochs.n_samples:
        raise ConfigError(f"initial kernel length {config.initial_length} exceeds the epoch "
                          f"length {epochs.n_samples}")
    if args.dry_run:
        print("dry-run ok")
        return EXIT_OK
    init = load_dictionary(args.init) if args.init else None
    dictionary, trace = mdla_train(epochs, config, init=init)
    save_dictionary(dictionary, args.out)
    if args.trace:
        trace.to_csv(args.trace)
    print(f"kernels={len(dictionary)} final_residual_ratio={trace.mean_residual_ratio[-1]!r}")
    return EXIT_OK


def cmd_decompose(args):
    _check_input(args.input)
    _check_input(args.dict)
    epochs = _preprocess(_load_epochs(args.input), args)
    dictionary, variant = _pursuit_dictionary(args, epochs.n_samples)
    config = PursuitConfig(args.k, variant)
    if args.dry_run:
        print("dry-run ok")
        return EXIT_OK
    results = [decompose(y, dictionary, config) for y in epochs.data]
    rho = reconstruction_rate(epochs.data, [r.residual for r in results])
    if args.code:
        rows = [["trial", "rank", "channel", "index", "shift", "coef", "phase"]]
        for p, r in enumerate(results):
            rows += _code_rows(p, r)
        write_rows(args.code, rows)
    if args.residuals:
        save_signals(EpochSet(np.stack([r.residual for r in results]), epochs.sample_rate),
                     args.residuals)
    print(f"rho={rho!r}")
    return EXIT_OK


def _code_rows(p, result):
    code = result.code
    rows = []
    if hasattr(code, "entries") and code.entries and hasattr(code.entries[0], "kernel"):
        for j, e in enumerate(code.entries):
            rows.append([p, j, "", e.kernel, e.shift, repr(float(e.coef)), ""])
    elif hasattr(code, "entries"):
        for j, e in enumerate(code.entries):
            for c, (a, ph) in enumerate(zip(e.amplitudes, e.phases)):
                rows.append([p, j, c, e.atom, "", repr(float(a)), repr(float(ph))])
    else:
        for c, per in enumerate(code):
            for j, (m, x) in enumerate(per):
                rows.append([p, j, c, m, "", repr(float(x)), ""])
    return rows


def cmd_rho_curve(args):
    _check_input(args.input)
    _check_input(args.dict)
    epochs = _preprocess(_load_epochs(args.input), args)
    dictionary, variant = _pursuit_dictionary(args, epochs.n_samples)
    if args.dry_run:
        print("dry-run ok")
        return EXIT_OK
    curve = rho_curve(epochs, dictionary, variant, args.k_list, dataset=args.dataset,
                      threads=args.threads)
    curve.to_csv(args.out)
    if args.json:
        curve.to_json(args.json)
    for k, r in zip(curve.k_values, curve.rho):
        print(f"K={k} rho={r!r}")
    return EXIT_OK


def cmd_estimate_ep(args):
    _check_input(args.input)
    _check_input(args.reference)
    data = _preprocess(load_signals(args.input), args)
    if args.avg_ref:
        data = (EpochSet(data.data - data.data.mean(axis=2, keepdims=True), data.sample_rate)
                if isinstance(data, EpochSet) else
                ContinuousRecord(to_average_reference(data.samples), data.onsets, data.sample_rate))
    continuous = isinstance(data, ContinuousRecord)
    if continuous and args.epoch_length is None:
        raise ConfigError("--epoch-length is required for continuous input")
    n = args.epoch_length if continuous else data.n_samples
    if args.length > n:
        raise ConfigError(f"pattern length {args.length} exceeds the epoch length {n}")
    if args.method == "ls" and not continuous:
        raise ConfigError("the least-squares estimate needs a continuous record with onsets")
    if args.dry_run:
        print("dry-run ok")
        return EXIT_OK
    epochs = epoch_record(data, n) if continuous else data
    if args.method == "ls":
        pattern = truncate_pattern(ls_estimate(data, n), args.length)[0]
    elif args.method == "ga":
        pattern = truncate_pattern(grand_average(epochs), args.length)[0]
    else:
        pattern = learn_ep_kernel(epochs, length=args.length,
                                  interval=(args.interval[0], int(args.interval[1])),
                                  iterations=args.iterations, step_size=args.step_size,
                                  seed=args.seed)
    save_matrix_csv(args.out, pattern.waveform)
    if args.spatial:
        save_matrix_csv(args.spatial, spatial_pattern(pattern, args.spatial_mode)[None])
    if args.reference:
        print(f"correlation={max_correlation(pattern, load_matrix_csv(args.reference))!r}")
    return EXIT_OK


def cmd_simulate(args):
    _check_input(args.noise_file)
    pattern = _reference(args)
    spec = SimulationSpec(pattern, args.p, args.n, args.sigma, args.shift_mean, args.amp_mean,
                          args.amp_std, args.snr, args.snr_mode, args.fs,
                          _noise_model(args, pattern.shape[1]), args.seed)
    if args.dry_run:
        print("dry-run ok")
        return EXIT_OK
    sim = generate_trials(spec, threads=args.threads)
    save_signals(sim.epochs, args.out)
    if args.truth:
        write_rows(args.truth, [["trial", "shift", "amplitude"]] +
                   [[p, int(s), repr(float(a))] for p, (s, a) in
                    enumerate(zip(sim.shifts, sim.amplitudes))])
    if args.reference_out:
        save_matrix_csv(args.reference_out, spec.pattern)
    print(f"trials={len(sim.epochs)}")
    return EXIT_OK


def cmd_fig8(args):
    _check_input(args.noise_file)
    pattern = _reference(args)
    noise = _noise_model(args, pattern.shape[1])
    SimulationSpec(pattern, args.p, args.n, max(args.sigmas, default=0), snr_db=args.snr,
                   noise=noise)
    if not args.sigmas:
        raise ConfigError("--sigmas must not be empty")
    if args.dry_run:
        print("dry-run ok")
        return EXIT_OK
    result = jitter_sweep(pattern, args.sigmas, args.reps, args.p, args.n, args.snr,
                          halfwidth=args.halfwidth, iterations=args.iterations,
                          step_size=args.step_size, sample_rate=args.fs, seed=args.seed,
                          threads=args.threads, noise=noise)
    write_rows(args.out, result.rows())
    for s, ga, _, dla, _ in result.summary():
        print(f"sigma={s:g} ga={ga:.4f} mdla={dla:.4f}")
    return EXIT_OK


COMMANDS = {"gabor-gen": cmd_gabor_gen, "learn": cmd_learn, "decompose": cmd_decompose,
            "rho-curve": cmd_rho_curve, "estimate-ep": cmd_estimate_ep,
            "simulate": cmd_simulate, "fig8": cmd_fig8}


def _fail(kind, exc, code):
    print(f"error[{kind}]: {exc}", file=sys.stderr)
    return code


def run(argv=None):
    """Run one subcommand and return its exit code."""
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = parse_args(argv)
    except ConfigError as exc:
        return _fail("config", exc, EXIT_CONFIG)
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    logging.basicConfig(level=args.log_level, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    start = time.perf_counter()
    try:
        code = COMMANDS[args.command](args)
    except ConfigError as exc:
        return _fail("config", exc, EXIT_CONFIG)
    except ParseError as exc:
        return _fail("parse", exc, EXIT_RUNTIME)
    except SolverError as exc:
        return _fail("solver", exc, EXIT_RUNTIME)
    except OSError as exc:
        return _fail("io", exc, EXIT_RUNTIME)
    except (MvdictError, ValueError, IndexError) as exc:
        return _fail("runtime", exc, EXIT_RUNTIME)
    log.info("%s finished in %.2f s", args.command, time.perf_counter() - start)
    return code


def main():
    sys.exit(run())
