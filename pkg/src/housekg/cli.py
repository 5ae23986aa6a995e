"""Command-line front end.

Commands::

    housekg train      --data DIR|NAME [model and training flags] [--out DIR]
    housekg eval       --data DIR|NAME --checkpoint FILE [--split test] [--out DIR]
    housekg test-props --k K [--trials N]
    housekg gen-synth  --entities N --out DIR [--kind pattern|n-to-1]

Hyperparameters come from flags or from a ``--config`` file of ``key=value``
lines (flag names without dashes); flags win over the file.
"""

import argparse
import logging
import os
import sys
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import checkpoint as ckpt
from .data import (
    PARAMETER_BUDGETS,
    DatasetFormatError,
    Vocab,
    build_filter_index,
    canonical_name,
    classify_rmp,
    generate_n_to_1_kg,
    generate_pattern_kg,
    load_dataset,
    save_dataset,
)
from .model import ModelConfig, Variant, init_parameters
from .trainer import TrainConfig

log = logging.getLogger("housekg")

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_USAGE = 2
EXIT_RANGE = 3
EXIT_MISSING_PATH = 4
EXIT_DATA = 5
EXIT_CHECKPOINT = 6

DATA_ENV = "HOUSEKG_DATA"
DEFAULT_K = 4
DEFAULT_D = 50
DESK_SCALE = 0.25


class UsageError(Exception):
    def __init__(self, message, code=EXIT_USAGE):
        super().__init__(message)
        self.code = code


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message, EXIT_USAGE)


@dataclass
class RunSpec:
    command: str
    data: str = None
    data_root: str = None
    variant: Variant = Variant.HOUSE
    d: int = None
    k: int = DEFAULT_K
    m: int = 1
    train: TrainConfig = field(default_factory=TrainConfig)
    checkpoint: str = None
    resume: str = None
    out: str = None
    split: str = "test"
    threads: int = 1
    entities: int = 50
    kind: str = "pattern"
    trials: int = 200
    plots: bool = True

    @property
    def n(self) -> int:
        return self.k // 2

    @property
    def seed(self) -> int:
        return self.train.seed


# flag dest -> (type, lower bound, inclusive)
_RANGES = {
    "d": (1, True), "k": (2, True), "m": (0, True), "b": (1, True), "negatives": (1, True),
    "alpha": (0, True), "gamma": (0, False), "lr": (0, False), "lam": (0, True),
    "max_steps": (0, True), "valid_every": (0, True), "threads": (1, True),
    "entities": (10, True), "trials": (1, True), "seed": (0, True), "scale": (0, False),
}

_CONFIG_KEYS = {
    "variant": "variant", "d": "d", "k": "k", "m": "m", "b": "b", "batch": "b",
    "negatives": "negatives", "alpha": "alpha", "gamma": "gamma", "lr": "lr",
    "lambda": "lam", "max_steps": "max_steps", "max-steps": "max_steps",
    "valid_every": "valid_every", "valid-every": "valid_every", "seed": "seed",
    "threads": "threads", "lr_halving": "lr_halving", "scale": "scale",
}


def _add_model_flags(p):
    p.add_argument("--variant", choices=[v.value for v in Variant])
    p.add_argument("--d", type=int, help="rows per embedding (default: scale * budget // k)")
    p.add_argument("--k", type=int, help=f"row width (default {DEFAULT_K})")
    p.add_argument("--m", type=int, help="projections per side (default 1)")
    p.add_argument("--scale", type=float,
                   help=f"fraction of the benchmark d*k budget when --d is absent "
                        f"(default 1, desk scale {DESK_SCALE})")


def _add_train_flags(p):
    p.add_argument("--b", "--batch", dest="b", type=int)
    p.add_argument("--negatives", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--gamma", type=float)
    p.add_argument("--lr", type=float)
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--max-steps", dest="max_steps", type=int)
    p.add_argument("--valid-every", dest="valid_every", type=int)
    p.add_argument("--no-lr-halving", dest="lr_halving", action="store_false", default=None)


def build_parser():
    parser = _Parser(prog="housekg", description="Householder knowledge-graph embeddings")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, data=True):
        if data:
            p.add_argument("--data", help="dataset directory or benchmark name")
            p.add_argument("--data-root",
                           help=f"lookup root for benchmark names (then ${DATA_ENV}, ./data)")
        p.add_argument("--config", help="file of key=value lines")
        p.add_argument("--seed", type=int)
        p.add_argument("--threads", type=int)
        p.add_argument("--out", help="output directory")
        p.add_argument("-v", "--verbose", action="store_true")

    p = sub.add_parser("train", help="train a model")
    common(p)
    _add_model_flags(p)
    _add_train_flags(p)
    p.add_argument("--checkpoint", help="where to write the trained model")
    p.add_argument("--resume", help="checkpoint to continue from")
    p.add_argument("--no-plots", dest="plots", action="store_false")

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    common(p)
    p.add_argument("--variant", choices=[v.value for v in Variant])
    p.add_argument("--checkpoint")
    p.add_argument("--split", choices=["train", "valid", "test"], default="test")
    p.add_argument("--no-plots", dest="plots", action="store_false")

    p = sub.add_parser("test-props", help="run the reflection/projection property suite")
    common(p, data=False)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--trials", type=int)

    p = sub.add_parser("gen-synth", help="write a synthetic graph")
    common(p, data=False)
    p.add_argument("--entities", type=int)
    p.add_argument("--kind", choices=["pattern", "n-to-1"], default="pattern")
    return parser


def _read_config(path):
    if not os.path.isfile(path):
        raise UsageError(f"config file not found: {path}", EXIT_MISSING_PATH)
    values = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            key = key.strip().lstrip("-")
            if not sep or key not in _CONFIG_KEYS:
                raise UsageError(f"{path}:{lineno}: unknown config entry {line!r}")
            values[_CONFIG_KEYS[key]] = value.strip()
    return values


def _convert(dest, raw):
    kinds = {"variant": str, "d": int, "k": int, "m": int, "b": int, "negatives": int,
             "alpha": float, "gamma": float, "lr": float, "lam": float, "max_steps": int,
             "valid_every": int, "seed": int, "threads": int, "scale": float}
    if dest == "lr_halving":
        return raw.lower() in ("1", "true", "yes", "on")
    try:
        return kinds[dest](raw)
    except ValueError:
        raise UsageError(f"invalid value for {dest}: {raw!r}") from None


def _check_range(name, value):
    low, inclusive = _RANGES[name]
    if value is None:
        return
    ok = value >= low if inclusive else value > low
    if not ok or (isinstance(value, float) and not np.isfinite(value)):
        op = ">=" if inclusive else ">"
        raise UsageError(f"--{name} must be {op} {low}, got {value}", EXIT_RANGE)


def parse_args(argv) -> RunSpec:
    """Validated :class:`RunSpec`; raises :class:`UsageError` with an exit code."""
    ns = build_parser().parse_args(argv)
    opts = {}
    if ns.config:
        opts.update({k: _convert(k, v) for k, v in _read_config(ns.config).items()})
    opts.update({k: v for k, v in vars(ns).items() if v is not None})
    for name in _RANGES:
        _check_range(name, opts.get(name))

    spec = RunSpec(command=ns.command)
    spec.out = opts.get("out")
    spec.threads = opts.get("threads", 1)

    if ns.command == "test-props":
        spec.k = opts["k"]
        spec.trials = opts.get("trials", 200)
        spec.train = TrainConfig(seed=opts.get("seed", 0))
        return spec
    if ns.command == "gen-synth":
        if not spec.out:
            raise UsageError("gen-synth requires --out", EXIT_MISSING_PATH)
        spec.entities = opts.get("entities", 50)
        spec.kind = opts["kind"]
        spec.train = TrainConfig(seed=opts.get("seed", 0))
        return spec

    if not opts.get("data"):
        raise UsageError(f"{ns.command} requires --data", EXIT_MISSING_PATH)
    spec.data = opts["data"]
    spec.data_root = opts.get("data_root")
    spec.plots = opts.get("plots", True)
    spec.checkpoint = opts.get("checkpoint")
    if "variant" in opts:
        spec.variant = Variant(opts["variant"])
    if ns.command == "eval":
        if not spec.checkpoint:
            raise UsageError("eval requires --checkpoint", EXIT_MISSING_PATH)
        if not os.path.isfile(spec.checkpoint):
            raise UsageError(f"checkpoint not found: {spec.checkpoint}", EXIT_MISSING_PATH)
        spec.split = opts["split"]
        spec.variant = Variant(opts["variant"]) if "variant" in opts else None
        return spec

    spec.resume = opts.get("resume")
    if spec.resume and not os.path.isfile(spec.resume):
        raise UsageError(f"checkpoint not found: {spec.resume}", EXIT_MISSING_PATH)
    spec.k = opts.get("k", DEFAULT_K)
    spec.m = opts.get("m", 1)
    budget = PARAMETER_BUDGETS.get(canonical_name(os.path.basename(os.path.normpath(spec.data))))
    if budget:
        budget = int(round(budget * opts.get("scale", 1.0)))
    spec.d = opts.get("d", budget // spec.k if budget else DEFAULT_D)
    if spec.d < 1:
        raise UsageError(f"parameter budget {budget} is smaller than k={spec.k}", EXIT_RANGE)
    defaults = TrainConfig()
    spec.train = TrainConfig(
        batch_size=opts.get("b", defaults.batch_size),
        negatives=opts.get("negatives", defaults.negatives),
        alpha=opts.get("alpha", defaults.alpha),
        gamma=opts.get("gamma", defaults.gamma),
        lr=opts.get("lr", defaults.lr),
        regularization=opts.get("lam", defaults.regularization),
        max_steps=opts.get("max_steps", defaults.max_steps),
        valid_every=opts.get("valid_every", defaults.valid_every),
        seed=opts.get("seed", defaults.seed),
        lr_halving=opts.get("lr_halving", defaults.lr_halving),
        threads=spec.threads,
    )
    return spec


# -- running -------------------------------------------------------------------


def resolve_data(spec: RunSpec) -> str:
    if os.path.isdir(spec.data):
        return spec.data
    roots = [spec.data_root] if spec.data_root else []
    if os.environ.get(DATA_ENV):
        roots.append(os.environ[DATA_ENV])
    roots.append("data")
    name = canonical_name(spec.data)
    for root in roots:
        for cand in (os.path.join(root, spec.data), os.path.join(root, name)):
            if os.path.isdir(cand):
                return cand
    raise UsageError(f"dataset not found: {spec.data}", EXIT_MISSING_PATH)


def _out_dir(spec, default):
    out = spec.out or default
    os.makedirs(out, exist_ok=True)
    return out


def _write_eval_reports(out, model, store, vocab, split, filter_index, threads, plots,
                        log_rows=None, losses=None):
    from . import reports
    from .evaluation import MetricsReport, per_relation_report, rank_split, rmp_report

    triples = store.split(split)
    ranks = rank_split(model, triples, filter_index, threads)
    overall = MetricsReport.from_ranks(np.concatenate(ranks))
    per_rel = per_relation_report(model, triples, filter_index, ranks=ranks)
    classes = classify_rmp(store)
    rmp = rmp_report(model, triples, filter_index, classes, ranks=ranks)
    names = vocab.relations
    reports.write_metrics(os.path.join(out, "metrics.tsv"), split, overall)
    reports.write_per_relation(os.path.join(out, "per_relation.tsv"), per_rel, names)
    reports.write_rmp(os.path.join(out, "rmp.tsv"), rmp)
    reports.write_rmp_classes(os.path.join(out, "rmp_classes.tsv"), classes, names)
    if plots:
        from . import plotting

        plotting.plot_per_relation(os.path.join(out, "per_relation_mrr.png"), per_rel, names)
        plotting.plot_rmp(os.path.join(out, "rmp_mrr.png"), rmp)
        if log_rows is not None:
            plotting.plot_training_curve(os.path.join(out, "training_curve.png"), log_rows, losses)
    return overall


def _print_report(split, report, stream):
    d = report.as_dict()
    stream.write(f"{split}\t" + "\t".join(f"{k}={d[k]:.4f}" if k != "count" else f"{k}={d[k]}"
                                          for k in d) + "\n")


def _load(spec):
    path = resolve_data(spec)
    try:
        return load_dataset(path)
    except (DatasetFormatError, OSError) as exc:
        raise UsageError(f"cannot load dataset {path}: {exc}", EXIT_DATA) from exc


def cmd_train(spec: RunSpec, stream) -> int:
    from .trainer import train

    vocab, store = _load(spec)
    digest = vocab.digest()
    if spec.resume:
        try:
            model, _ = ckpt.load_checkpoint(spec.resume, expect_variant=spec.variant,
                                            expect_digest=digest, strict_digest=True)
        except ckpt.CheckpointError as exc:
            raise UsageError(str(exc), EXIT_CHECKPOINT) from exc
    else:
        config = ModelConfig(spec.variant, spec.d, spec.k, spec.m, store.num_entities,
                             store.num_relations, spec.seed)
        model = init_parameters(config, spec.train.gamma)
    out = _out_dir(spec, "run")
    filter_index = build_filter_index(store)
    log.info("training %s d=%d k=%d m=%d on %d triples", model.config.variant.value,
             model.config.d, model.config.k, model.config.m, len(store.train))
    with open(os.path.join(out, "train_log.tsv"), "w", encoding="utf-8") as log_fh:
        result = train(model, store, spec.train, filter_index, log_stream=log_fh)
    path = spec.checkpoint or os.path.join(out, "model.ckpt")
    ckpt.save_checkpoint(model, path, digest)
    np.savetxt(os.path.join(out, "losses.tsv"), result.losses, fmt="%.8f", header="loss",
               comments="")
    if len(store.test):
        report = _write_eval_reports(out, model, store, vocab, "test", filter_index,
                                     spec.threads, spec.plots, result.log, result.losses)
        _print_report("test", report, stream)
    elif spec.plots:
        from .plotting import plot_training_curve

        plot_training_curve(os.path.join(out, "training_curve.png"), result.log, result.losses)
    stream.write(f"checkpoint\t{path}\n")
    return EXIT_OK


def cmd_eval(spec: RunSpec, stream) -> int:
    vocab, store = _load(spec)
    try:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", ckpt.DigestMismatchWarning)
            model, _ = ckpt.load_checkpoint(spec.checkpoint, expect_variant=spec.variant,
                                            expect_digest=vocab.digest())
        for w in caught:
            log.warning("%s", w.message)
            stream.write(f"warning\t{w.message}\n")
    except ckpt.CheckpointError as exc:
        raise UsageError(str(exc), EXIT_CHECKPOINT) from exc
    c = model.config
    if (c.num_entities, c.num_relations) != (store.num_entities, store.num_relations):
        raise UsageError("checkpoint vocabulary size does not match the dataset", EXIT_CHECKPOINT)
    if not len(store.split(spec.split)):
        raise UsageError(f"split {spec.split} is empty", EXIT_DATA)
    out = _out_dir(spec, "eval")
    report = _write_eval_reports(out, model, store, vocab, spec.split, build_filter_index(store),
                                 spec.threads, spec.plots)
    _print_report(spec.split, report, stream)
    return EXIT_OK


def cmd_test_props(spec: RunSpec, stream) -> int:
    from .properties import run_properties

    results = run_properties(spec.k, spec.trials, spec.seed)
    for r in results:
        stream.write(r.line() + "\n")
    failed = sum(not r.passed for r in results)
    stream.write(f"{len(results) - failed}/{len(results)} properties passed for k={spec.k}\n")
    return EXIT_OK if failed == 0 else EXIT_FAILED


def cmd_gen_synth(spec: RunSpec, stream) -> int:
    if spec.kind == "pattern":
        vocab, store, truth = generate_pattern_kg(spec.entities, seed=spec.seed)
    else:
        side = max(2, int(round(np.sqrt(spec.entities))))
        vocab, store, truth = generate_n_to_1_kg(side, side, seed=spec.seed)
    os.makedirs(spec.out, exist_ok=True)
    save_dataset(spec.out, vocab, store)
    counts = store.counts()
    stream.write(f"wrote {spec.out}: {store.num_entities} entities, {store.num_relations} "
                 f"relations, {counts['train']}/{counts['valid']}/{counts['test']} triples\n")
    return EXIT_OK


COMMANDS = {"train": cmd_train, "eval": cmd_eval, "test-props": cmd_test_props,
            "gen-synth": cmd_gen_synth}


def run(spec: RunSpec, stream=None) -> int:
    stream = stream or sys.stdout
    return COMMANDS[spec.command](spec, stream)


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    logging.basicConfig(level=logging.INFO if "-v" in argv or "--verbose" in argv
                        else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return run(parse_args(argv))
    except UsageError as exc:
        sys.stderr.write(f"housekg: error: {exc}\n")
        return exc.code


__all__ = ["RunSpec", "UsageError", "parse_args", "run", "main", "Vocab"]
