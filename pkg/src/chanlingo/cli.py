"""``chanlingo`` command line: gen, build-vocab, train, predict, eval, diversity, attention.

Every subcommand also accepts ``--config FILE`` (``key=value`` lines; keys are
option names such as ``M`` or ``max-size``) and ``--dump-config FILE`` which
records the fully resolved options. Flags given on the command line win over
the config file. Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
import traceback
from pathlib import Path

from . import __version__
from ._io import atomic_write_text
from .channel_synth import (
    CSF_VERSION,
    FadingConfig,
    add_noise,
    generate_tap,
    read_csf,
    write_csf,
)
from .errors import ChanlingoError, InvalidStateError, VocabularyMismatchError
from .evaluation import (
    DiversitySet,
    RunResult,
    prediction_diversity,
    report,
    splice,
    zoh_baseline,
)
from .neural.checkpoint import FORMAT_VERSION
from .neural.optim import Adam
from .predictor import (
    ModelConfig,
    PredictionTask,
    WindowedDataset,
    build_model,
    load_checkpoint,
    make_dataset,
    save_checkpoint,
    train,
    transfer_predict,
)
from .predictor.inference import history_ids
from .vcc import (
    DEFAULT_MAX_SIZE,
    DEFAULT_MIN_FREQUENCY,
    DEFAULT_QUANT_STEP,
    VCCF_VERSION,
    build_vocabulary_from_series,
    encode,
    load_vocabulary,
    normalize_power,
    save_vocabulary,
)

log = logging.getLogger("chanlingo")

# options that steer the CLI itself and never go into a dumped config
_META_DESTS = {"command", "config", "dump_config", "handler"}
_REQUIRED = {
    "gen": ["out"],
    "build-vocab": ["inputs", "out"],
    "train": ["mode", "inputs", "vocab", "M", "N", "out"],
    "predict": ["model", "vocab", "inputs", "M", "N", "out"],
    "eval": ["truth", "model", "vocab", "M", "N", "report"],
    "diversity": ["inputs", "out"],
    "attention": ["model", "inputs", "M", "N", "out"],
}


class UsageError(Exception):
    pass


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def _float_list(text):
    return tuple(float(x) for x in str(text).split(",") if x.strip())


def _bool(text):
    lowered = str(text).strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


def _common(p):
    g = p.add_argument_group("run options")
    g.add_argument("--config", help="key=value file with defaults for any option below")
    g.add_argument("--dump-config", help="write the resolved options to this key=value file")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--threads", type=_positive_int, default=1, help="BLAS threads; 1 is bit-reproducible")
    g.add_argument("--log-level", default="WARNING", choices=["DEBUG", "INFO", "WARNING", "ERROR"])


def build_parser():
    parser = argparse.ArgumentParser(prog="chanlingo", description=__doc__.splitlines()[0])
    parser.add_argument(
        "--version", action="version",
        version=f"chanlingo {__version__} (csf {CSF_VERSION}, vccf {VCCF_VERSION}, CKPT v{FORMAT_VERSION})",
    )
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    subs = {}

    p = sub.add_parser("gen", help="synthesize sum-of-sinusoids fading taps into CSF files")
    p.add_argument("--out", help="output .csf (multi-tap runs add a _tapK suffix)")
    p.add_argument("--carrier-freq-hz", type=float, default=3.45e9)
    p.add_argument("--speed-mps", type=float, default=3 / 3.6)
    p.add_argument("--sample-interval-s", type=float, default=1e-3)
    p.add_argument("--num-sinusoids", type=_positive_int, default=32)
    p.add_argument("--num-taps", type=_positive_int, default=1)
    p.add_argument("--tap-gains-db", type=_float_list, default=None, help="comma-separated, one per tap")
    p.add_argument("--duration-samples", type=int, default=10_000)
    p.add_argument("--rng-seed", type=int, default=None, help="defaults to --seed")
    p.add_argument("--snr-db", type=float, default=math.inf)
    p.add_argument("--label", default="")
    p.set_defaults(handler=cmd_gen)
    subs["gen"] = p

    p = sub.add_parser("build-vocab", help="build a vocabulary of channel changes")
    p.add_argument("--in", dest="inputs", nargs="+")
    p.add_argument("--step", type=float, default=DEFAULT_QUANT_STEP)
    p.add_argument("--max-size", type=_positive_int, default=DEFAULT_MAX_SIZE)
    p.add_argument("--min-freq", type=_positive_int, default=DEFAULT_MIN_FREQUENCY)
    p.add_argument("--out")
    p.set_defaults(handler=cmd_build_vocab)
    subs["build-vocab"] = p

    p = sub.add_parser("train", help="train an NLG or NMT predictor")
    p.add_argument("--mode", choices=["nlg", "nmt"])
    p.add_argument("--in", dest="inputs", nargs="+")
    p.add_argument("--vocab")
    p.add_argument("--M", type=_positive_int)
    p.add_argument("--N", type=_positive_int)
    p.add_argument("--stride", type=_positive_int, default=1)
    p.add_argument("--bidir", action="store_true")
    p.add_argument("--attention", action="store_true")
    p.add_argument("--cell", choices=["gru", "lstm"], default="gru")
    p.add_argument("--hidden", type=_positive_int, default=64)
    p.add_argument("--emb", type=_positive_int, default=32)
    p.add_argument("--layers", type=_positive_int, default=2)
    p.add_argument("--epochs", type=int, default=2)
    p.add_argument("--batch-size", type=_positive_int, default=64)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--clip-norm", type=float, default=5.0)
    p.add_argument("--decoder-seed", choices=["zero", "last"], default="zero")
    p.add_argument("--init", help="checkpoint to fine-tune instead of starting from scratch")
    p.add_argument("--out")
    p.set_defaults(handler=cmd_train)
    subs["train"] = p

    p = sub.add_parser("predict", help="predict the samples following a CSF history")
    p.add_argument("--model")
    p.add_argument("--vocab")
    p.add_argument("--in", dest="inputs")
    p.add_argument("--M", type=_positive_int)
    p.add_argument("--N", type=_positive_int)
    p.add_argument("--S", type=_positive_int, default=1)
    p.add_argument("--out")
    p.set_defaults(handler=cmd_predict)
    subs["predict"] = p

    p = sub.add_parser("eval", help="spliced-prediction NMSE on a truth sequence")
    p.add_argument("--truth")
    p.add_argument("--model")
    p.add_argument("--vocab")
    p.add_argument("--M", type=_positive_int)
    p.add_argument("--N", type=_positive_int)
    p.add_argument("--accumulate", action="store_true")
    p.add_argument("--baseline", action="store_true", help="add a zero-order-hold row")
    p.add_argument("--normalize", choices=["predicted", "truth"], default="predicted")
    p.add_argument("--label", default="model")
    p.add_argument("--report")
    p.set_defaults(handler=cmd_eval)
    subs["eval"] = p

    p = sub.add_parser("diversity", help="max-magnitude combination of aligned predictions")
    p.add_argument("--in", dest="inputs", action="append")
    p.add_argument("--out")
    p.add_argument("--trace")
    p.set_defaults(handler=cmd_diversity)
    subs["diversity"] = p

    p = sub.add_parser("attention", help="export decoder attention weights (N rows x M columns)")
    p.add_argument("--model")
    p.add_argument("--vocab", help="defaults to the vocabulary stored in the checkpoint")
    p.add_argument("--in", dest="inputs")
    p.add_argument("--M", type=_positive_int)
    p.add_argument("--N", type=_positive_int)
    p.add_argument("--start", type=int, default=None, help="first history sample (default: last M+1)")
    p.add_argument("--out")
    p.set_defaults(handler=cmd_attention)
    subs["attention"] = p

    for p in subs.values():
        _common(p)
    return parser, subs


# -- config files ----------------------------------------------------------------


def read_config_file(path) -> dict:
    out = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise UsageError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        out[key.strip()] = value.strip()
    return out


def _actions_by_key(subparser):
    table = {}
    for action in subparser._actions:
        if not action.option_strings or action.dest in ("help",):
            continue
        table[action.dest] = action
        for opt in action.option_strings:
            table[opt.lstrip("-")] = action
            table[opt.lstrip("-").replace("-", "_")] = action
    return table


def _convert(action, text):
    if isinstance(action, argparse._StoreTrueAction):
        return _bool(text)
    many = action.nargs in ("+", "*") or isinstance(action, argparse._AppendAction)
    conv = action.type or str
    try:
        if many:
            return [conv(x) for x in text.split(",") if x]
        value = conv(text)
    except (ValueError, argparse.ArgumentTypeError) as exc:
        raise UsageError(f"config key {action.dest!r}: {exc}") from None
    if action.choices is not None and value not in action.choices:
        raise UsageError(f"config key {action.dest!r}: {value!r} not in {sorted(action.choices)}")
    return value


def _format_value(value):
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, (list, tuple)):
        return ",".join(_format_value(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def dump_config(ns) -> str:
    lines = [f"command={ns.command}"]
    for key in sorted(vars(ns)):
        value = getattr(ns, key)
        if key in _META_DESTS or value is None:
            continue
        lines.append(f"{key}={_format_value(value)}")
    return "\n".join(lines) + "\n"


def parse_args(argv=None):
    """Parse and validate a command line into a namespace (the run configuration).

    Usage problems exit with status 2 naming the offending flag or key.
    """
    parser, subs = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    ns = parser.parse_args(argv)
    if ns.command is None:
        parser.print_usage(sys.stderr)
        parser.exit(2, "chanlingo: error: a command is required\n")
    sub = subs[ns.command]
    try:
        if ns.config:
            table = _actions_by_key(sub)
            defaults = {}
            for key, text in read_config_file(ns.config).items():
                if key == "command":
                    if text != ns.command:
                        raise UsageError(f"config is for {text!r}, not {ns.command!r}")
                    continue
                action = table.get(key)
                if action is None or action.dest in _META_DESTS:
                    raise UsageError(f"unknown config key {key!r}")
                defaults[action.dest] = _convert(action, text)
            sub.set_defaults(**defaults)
            ns = parser.parse_args(argv)
    except (UsageError, OSError) as exc:
        sub.error(str(exc))
    missing = [d for d in _REQUIRED[ns.command] if getattr(ns, d, None) in (None, [])]
    if missing:
        flags = ", ".join("--" + ("in" if d == "inputs" else d.replace("_", "-")) for d in missing)
        sub.error(f"the following arguments are required: {flags}")
    problem = _check_paths(ns)
    if problem:
        sub.error(problem)
    return ns


_INPUT_DESTS = ("inputs", "vocab", "model", "truth", "init")
_OUTPUT_DESTS = ("out", "report", "trace", "dump_config")


def _check_paths(ns):
    # everything is checked up front so a run never fails halfway on a typo
    for dest in _INPUT_DESTS:
        value = getattr(ns, dest, None)
        for path in value if isinstance(value, list) else [value]:
            if path is not None and not Path(path).is_file():
                return f"--{'in' if dest == 'inputs' else dest}: no such file {path!r}"
    for dest in _OUTPUT_DESTS:
        value = getattr(ns, dest, None)
        if value is not None and not Path(value).resolve().parent.is_dir():
            return f"--{dest.replace('_', '-')}: directory of {value!r} does not exist"
    return None


# -- helpers -----------------------------------------------------------------------


def _load_normalized(path):
    series, rms = normalize_power(read_csf(path))
    return series, rms


def _load_vocab_for(model, path):
    vocab = load_vocabulary(path)
    model.check_vocabulary(vocab.hash)
    return vocab


def _write_tsv(path, rows):
    atomic_write_text(path, "".join("\t".join(str(x) for x in row) + "\n" for row in rows))


# -- subcommands -------------------------------------------------------------------


def cmd_gen(ns):
    gains = ns.tap_gains_db if ns.tap_gains_db is not None else (0.0,) * ns.num_taps
    cfg = FadingConfig(
        carrier_freq_hz=ns.carrier_freq_hz,
        speed_mps=ns.speed_mps,
        sample_interval_s=ns.sample_interval_s,
        num_sinusoids=ns.num_sinusoids,
        num_taps=ns.num_taps,
        tap_gains_db=tuple(gains),
        duration_samples=ns.duration_samples,
        rng_seed=ns.seed if ns.rng_seed is None else ns.rng_seed,
    )
    out = Path(ns.out)
    for k in range(cfg.num_taps):
        series = generate_tap(cfg, k)
        series = add_noise(series, ns.snr_db, rng_seed=cfg.rng_seed * 1_000_003 + k)
        if ns.label:
            series = series.with_samples(series.samples, label=ns.label if cfg.num_taps == 1 else f"{ns.label}-tap{k}")
        path = out if cfg.num_taps == 1 else out.with_name(f"{out.stem}_tap{k}{out.suffix}")
        write_csf(series, path)
        log.info("gen: wrote %s (%d samples, f_d=%.3f Hz)", path, len(series), cfg.doppler_hz)


def cmd_build_vocab(ns):
    series = [_load_normalized(p)[0] for p in ns.inputs]
    vocab = build_vocabulary_from_series(series, ns.step, ns.max_size, ns.min_freq)
    save_vocabulary(vocab, ns.out)
    log.info("build-vocab: %r", vocab)


def cmd_train(ns):
    vocab = load_vocabulary(ns.vocab)
    task = PredictionTask(ns.M, ns.N, ns.stride)
    parts = [make_dataset(encode(_load_normalized(p)[0], vocab, anchor="first"), task, vocab) for p in ns.inputs]
    dataset = WindowedDataset.concatenate(parts)
    if len(dataset) == 0:
        raise ChanlingoError("training inputs are shorter than one M+N window")
    optimizer = None
    if ns.init:
        model, optimizer, _ = load_checkpoint(ns.init, expected_vocabulary_hash=vocab.hash)
    else:
        config = ModelConfig(
            arrangement=ns.mode, num_ids=vocab.num_ids, emb=ns.emb, hidden=ns.hidden, layers=ns.layers,
            cell=ns.cell, bidirectional=ns.bidir, attention=ns.attention, decoder_seed=ns.decoder_seed,
        )
        model = build_model(config, vocab.hash, seed=ns.seed)
    if optimizer is None:
        optimizer = Adam(learning_rate=ns.lr, clip_norm=ns.clip_norm)
    rep = train(model, dataset, ns.epochs, optimizer, batch_size=ns.batch_size, seed=ns.seed, base_lr=ns.lr)
    save_checkpoint(model, ns.out, optimizer, vocab=vocab)
    print(f"trained {ns.mode} on {len(dataset)} windows: epoch losses "
          + " ".join(f"{x:.5f}" for x in rep.epoch_losses))


def cmd_predict(ns):
    model, _, _ = load_checkpoint(ns.model)
    vocab = _load_vocab_for(model, ns.vocab)
    history, rms = _load_normalized(ns.inputs)
    task = PredictionTask(ns.M, ns.N, S=ns.S)
    pred = transfer_predict(model, vocab, history, task)
    write_csf(pred.with_samples(pred.samples * rms, label=f"{history.label}+pred"), ns.out)


def cmd_eval(ns):
    model, _, _ = load_checkpoint(ns.model)
    vocab = _load_vocab_for(model, ns.vocab)
    truth, _ = _load_normalized(ns.truth)
    task = PredictionTask(ns.M, ns.N)
    results = [RunResult.from_spliced(ns.label, splice(truth, model, vocab, task, ns.accumulate), ns.normalize)]
    if ns.baseline:
        results.append(RunResult.from_spliced("zoh", zoh_baseline(truth, task), ns.normalize))
    text, tsv = report(results)
    atomic_write_text(ns.report, tsv)
    print(text, end="")


def cmd_diversity(ns):
    candidates = [read_csf(p) for p in ns.inputs]

    dset = DiversitySet(candidates)
    combined = prediction_diversity(dset)
    write_csf(combined, ns.out)
    if ns.trace:
        _write_tsv(ns.trace, [("index", "winner")] + list(enumerate(dset.selector_trace.tolist())))


def cmd_attention(ns):
    model, _, stored_vocab = load_checkpoint(ns.model)
    if not getattr(model.config, "attention", False):
        raise InvalidStateError(f"{ns.model} was trained without attention; nothing to export")
    if ns.vocab:
        vocab = _load_vocab_for(model, ns.vocab)
    elif stored_vocab is not None:
        vocab = stored_vocab
    else:
        raise VocabularyMismatchError("checkpoint carries no vocabulary; pass --vocab")
    series, _ = _load_normalized(ns.inputs)
    start = len(series) - (ns.M + 1) if ns.start is None else ns.start
    if start < 0 or start + ns.M + 1 > len(series):
        raise ChanlingoError(f"history window [{start}, {start + ns.M + 1}) outside series of length {len(series)}")
    ids = history_ids(series.samples[start:start + ns.M + 1][None], vocab)[0]
    _, weights = model.predict(ids, ns.N, return_attention=True)
    _write_tsv(ns.out, [[repr(float(w)) for w in row] for row in weights])


# -- entry point -------------------------------------------------------------------


def _origin(exc) -> str:
    tb = traceback.extract_tb(exc.__traceback__)
    return Path(tb[-1].filename).stem if tb else "chanlingo"


def run(ns) -> int:
    logging.basicConfig(level=getattr(logging, ns.log_level), format="%(levelname)s %(name)s: %(message)s")
    from threadpoolctl import threadpool_limits

    try:
        if ns.dump_config:
            atomic_write_text(ns.dump_config, dump_config(ns))
        with threadpool_limits(limits=ns.threads):
            ns.handler(ns)
    except (ChanlingoError, OSError, ValueError) as exc:
        print(f"chanlingo {ns.command}: {_origin(exc)}: {exc}", file=sys.stderr)
        return 1
    return 0


def main(argv=None) -> int:
    ns = parse_args(argv)
    return run(ns)


if __name__ == "__main__":
    sys.exit(main())
