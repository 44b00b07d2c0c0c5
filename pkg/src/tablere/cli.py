"""Command-line driver.

Exit codes: 0 success, 2 usage/config, 3 data/format, 4 numeric failure.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__, kernels
from .dataset import (
    LabelMap,
    build_corpus,
    corpus_stats,
    load_directory,
    relation_files,
    split,
    write_stats_csv,
)
from .embeddings import TableLookupProvider, load_embeddings, write_embeddings
from .errors import ConfigError, DataError, NumericError, TableReError
from .models import PRESETS, build, load_model, param_breakdown, param_count, preset
from .tensor import Tensor, check_gradients, sparse_ce_loss
from .tokenizer import MAX_LEN, Vocab, read_encoded, write_encoded
from .train import (
    EmbeddedCorpus,
    TrainConfig,
    evaluate,
    multi_seed,
    write_difficult,
    write_metrics_csv,
)
from .metrics import difficult_relations, write_confusion_csv, write_pgm

log = logging.getLogger("tablere")

PRESET_NAMES = [k.replace("_", "-") for k in PRESETS]
CORPUS_FILE = "corpus.tsv"
LABELS_FILE = "labels.txt"


def _digest(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _labels_for(corpus_path):
    p = Path(corpus_path).with_name(LABELS_FILE)
    return LabelMap.from_file(p) if p.exists() else None


def _load_config(args, defaults):
    """Built-in defaults < JSON config file < flags given on the command line."""
    resolved = dict(defaults)
    if getattr(args, "config", None):
        try:
            resolved.update(json.loads(Path(args.config).read_text(encoding="utf-8")))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from None
    for key in defaults:
        val = getattr(args, key, None)
        if val is not None:
            resolved[key] = val
    unknown = set(resolved) - set(defaults)
    if unknown:
        raise ConfigError(f"unknown config keys {sorted(unknown)}")
    return resolved


def _parse_seeds(text):
    if isinstance(text, (list, tuple)):
        return tuple(int(s) for s in text)
    try:
        return tuple(int(s) for s in str(text).split(",") if s.strip())
    except ValueError:
        raise ConfigError(f"bad --seeds value {text!r}") from None


def cmd_ingest(args):
    data_dir = Path(args.data_dir)
    if not data_dir.is_dir() or not relation_files(data_dir):
        raise ConfigError(f"{data_dir}: no relation files found")
    if not args.vocab or not Path(args.vocab).is_file():
        raise ConfigError(f"vocabulary file not found: {args.vocab}")
    vocab = Vocab.from_file(args.vocab)
    labels = LabelMap.from_file(args.labels) if args.labels else None
    records, bad_records, labels = load_directory(data_dir, labels)
    samples, bad_rows = build_corpus(records, vocab, labels, args.max_len)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_encoded(out / CORPUS_FILE, samples)
    labels.save(out / LABELS_FILE)
    stats = corpus_stats(samples, labels, n_tables=len(records), warnings=bad_records + bad_rows)
    write_stats_csv(out / "stats.csv", stats)
    summary = {
        "samples": stats.total_samples,
        "tables": stats.total_tables,
        "labels": len(labels),
        "warnings": stats.warnings,
        "malformed_records": bad_records,
        "skipped_rows": bad_rows,
        "long_tail_labels": stats.long_tail,
        "long_tail_fraction": stats.long_tail_fraction,
    }
    (out / "stats.json").write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")
    print(f"{stats.total_samples} samples from {stats.total_tables} tables, {len(labels)} labels, {stats.warnings} warnings")
    return 0


def cmd_embed_import(args):
    index = load_embeddings(args.path)
    lengths = [index.stored_length(i) for i in index.ids()]
    if args.dim is not None and index.dim != args.dim:
        raise DataError(f"{args.path}: dim {index.dim} != expected {args.dim}")
    over = [i for i, n in zip(index.ids(), lengths) if n > MAX_LEN]
    if over:
        raise DataError(f"{args.path}: sample {over[0]} stores more than {MAX_LEN} rows")
    nonfinite = [i for i in index.ids() if not np.all(np.isfinite(index.raw(i)))]
    if nonfinite:
        raise DataError(f"{args.path}: sample {nonfinite[0]} has non-finite values")
    print(f"records {len(index)}")
    print(f"dim {index.dim}")
    if lengths:
        print(f"stored length min {min(lengths)} max {max(lengths)} mean {np.mean(lengths):.2f}")
    return 0


def cmd_embed_synth(args):
    samples = read_encoded(args.corpus)
    vocab = Vocab.from_file(args.vocab)
    provider = TableLookupProvider(len(vocab), args.dim, args.seed)
    write_embeddings(
        args.out,
        ((s.sample_id, provider(s, MAX_LEN)[: s.true_length]) for s in samples),
        args.dim,
    )
    print(f"wrote {len(samples)} records of dim {args.dim} to {args.out}")
    return 0


def _open_corpus(corpus_path, embeddings_path, classes=None):
    samples = read_encoded(corpus_path)
    labels = _labels_for(corpus_path)
    n = len(labels) if labels is not None else (classes or 29)
    index = load_embeddings(embeddings_path)
    missing = [s.sample_id for s in samples if s.sample_id not in index]
    if missing:
        raise DataError(f"{embeddings_path}: no embedding for sample {missing[0]}")
    return EmbeddedCorpus(samples, index, n, labels), index


TRAIN_DEFAULTS = {
    "preset": "cnn-bilstm",
    "corpus": None,
    "embeddings": None,
    "seeds": "1,2,3,4,5",
    "out": None,
    "epochs": 40,
    "batch_size": 16,
    "optimizer": None,
    "lr": None,
    "embed_dim": None,
}


def cmd_train(args):
    cfg = _load_config(args, TRAIN_DEFAULTS)
    for key in ("corpus", "embeddings", "out"):
        if not cfg[key]:
            raise ConfigError(f"--{key} is required")
    if cfg["preset"] not in PRESET_NAMES:
        raise ConfigError(f"unknown preset {cfg['preset']!r}")
    overrides = {"embed_dim": cfg["embed_dim"]} if cfg["embed_dim"] else {}
    config = TrainConfig(
        preset=cfg["preset"],
        epochs=int(cfg["epochs"]),
        batch_size=int(cfg["batch_size"]),
        optimizer=cfg["optimizer"],
        lr=None if cfg["lr"] is None else float(cfg["lr"]),
        seeds=_parse_seeds(cfg["seeds"]),
        overrides=overrides,
    )
    config.validate()
    corpus, index = _open_corpus(cfg["corpus"], cfg["embeddings"])
    spec = config.spec(classes=corpus.n_classes)
    if index.dim != spec.embed_dim:
        raise DataError(f"embedding dim {index.dim} != preset dim {spec.embed_dim}")

    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    opt_kind, lr = config.optimizer_settings()
    resolved = dict(cfg, seeds=list(config.seeds), optimizer=opt_kind, lr=lr, spec=spec.to_dict())
    manifest = {
        "tool": "tablere",
        "version": __version__,
        "kernel_backend": kernels.BACKEND,
        "command": "train",
        "config": resolved,
        "inputs": {
            "corpus": {"path": str(cfg["corpus"]), "sha256": _digest(cfg["corpus"])},
            "embeddings": {"path": str(cfg["embeddings"]), "sha256": _digest(cfg["embeddings"])},
        },
        "artifacts": {
            "metrics": "metrics.csv",
            "confusion": "confusion.csv",
            "heatmap": "confusion.pgm",
            "loss_curve": "loss_curve.csv",
            "difficult_relations": "difficult_relations.csv",
            "models": [f"models/seed_{s}.tbmd" for s in config.seeds],
        },
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")

    report = multi_seed(config, corpus, out)
    for r in report.runs:
        if r.status == "ok":
            print(f"seed {r.seed}: accuracy {r.metrics.accuracy:.4f} macro-F1 {r.metrics.macro_f1:.4f}")
        else:
            print(f"seed {r.seed}: FAILED ({r.error})", file=sys.stderr)
    if report.completed:
        print("mean: " + " ".join(f"{k} {v:.4f}" for k, v in report.mean.items()))
    if report.failed:
        return max(r.exit_code for r in report.failed)
    return 0


def cmd_eval(args):
    model = load_model(args.model)
    corpus, index = _open_corpus(args.corpus, args.embeddings, model.spec.classes)
    if corpus.n_classes != model.spec.classes:
        raise DataError(f"model has {model.spec.classes} classes, corpus has {corpus.n_classes}")
    if index.dim != model.spec.embed_dim:
        raise DataError(f"embedding dim {index.dim} != model dim {model.spec.embed_dim}")
    seed = args.seed if args.seed is not None else model.meta.get("seed")
    if seed is None:
        raise ConfigError("model file carries no seed; pass --seed")
    plan = split(corpus.ids, int(seed))
    m = evaluate(model, corpus, plan.partition(args.split))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_metrics_csv(out / "metrics.csv", [(seed, args.split, m.summary())])
    write_confusion_csv(out / "confusion.csv", m.confusion)
    write_pgm(out / "confusion.pgm", m.confusion)
    write_difficult(out / "difficult_relations.csv", m.confusion, corpus.labels)
    print(f"{args.split}: accuracy {m.accuracy:.4f} macro-F1 {m.macro_f1:.4f} micro-F1 {m.micro_f1:.4f} weighted-F1 {m.weighted_f1:.4f}")
    name = corpus.labels.name if corpus.labels is not None else str
    for p, t, rate in difficult_relations(m.confusion, 10):
        print(f"  true {name(t)} -> predicted {name(p)}: {rate:.3f}")
    return 0


def cmd_params(args):
    spec = preset(args.preset)
    for layer, count in param_breakdown(spec):
        print(f"{layer:<16}{count:>10,}")
    print(f"{'total':<16}{param_count(spec):>10,}")
    return 0


def gradcheck_model(spec, seed=0, tol=1e-4, h=1e-5, batch=2):
    """``[(name, max_rel_error, passed)]`` for the input and every parameter tensor."""
    model = build(spec, seed).astype(np.float64)
    rng = np.random.default_rng(seed)
    x = Tensor(rng.uniform(-1, 1, (batch, spec.max_len, spec.embed_dim)), requires_grad=True)
    y = rng.integers(0, spec.classes, size=batch)
    tensors = {"input": x, **model.params}
    results = check_gradients(lambda: sparse_ce_loss(model.forward(x), y), tensors, h=h, tol=tol)
    return [(name, err, ok) for name, (err, ok) in results.items()]


def cmd_gradcheck(args):
    overrides = {"embed_dim": args.embed_dim}
    if args.preset != "baseline":
        overrides["max_len"] = args.max_len
    spec = preset(args.preset, **overrides)
    results = gradcheck_model(spec, args.seed, args.tolerance, args.step)
    failed = []
    for name, err, ok in results:
        print(f"{'PASS' if ok else 'FAIL'}  {name:<28} rel err {err:.3e}")
        if not ok:
            failed.append(name)
    if failed:
        raise NumericError(f"gradient check failed for: {', '.join(failed)}")
    print(f"all {len(results)} parameter groups pass at tolerance {args.tolerance:g}")
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="tablere", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"tablere {__version__} ({kernels.BACKEND} kernels)")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("ingest", help="per-relation JSON files -> encoded corpus + stats")
    s.add_argument("--data-dir", required=True)
    s.add_argument("--vocab", required=False)
    s.add_argument("--labels", help="label list, one per line (default: file stems)")
    s.add_argument("--max-len", type=int, default=MAX_LEN)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_ingest)

    s = sub.add_parser("embed-import", help="validate and summarize a TBRE embedding file")
    s.add_argument("path")
    s.add_argument("--dim", type=int)
    s.set_defaults(func=cmd_embed_import)

    s = sub.add_parser("embed-synth", help="write a TBRE file from a seeded lookup table")
    s.add_argument("--corpus", required=True)
    s.add_argument("--vocab", required=True)
    s.add_argument("--dim", type=int, default=768)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_embed_synth)

    s = sub.add_parser("train", help="multi-seed training and evaluation")
    s.add_argument("--config", help="JSON file of option values; flags override it")
    s.add_argument("--preset", choices=PRESET_NAMES)
    s.add_argument("--corpus")
    s.add_argument("--embeddings")
    s.add_argument("--seeds")
    s.add_argument("--out")
    s.add_argument("--epochs", type=int)
    s.add_argument("--batch-size", type=int)
    s.add_argument("--optimizer", choices=["adam", "rmsprop"])
    s.add_argument("--lr", type=float)
    s.add_argument("--embed-dim", type=int)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("eval", help="evaluate a saved model on one split partition")
    s.add_argument("--model", required=True)
    s.add_argument("--corpus", required=True)
    s.add_argument("--embeddings", required=True)
    s.add_argument("--split", choices=["train", "validation", "test"], default="test")
    s.add_argument("--seed", type=int, help="split seed (default: the one stored in the model)")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("params", help="print trainable parameter counts")
    s.add_argument("--preset", choices=PRESET_NAMES, required=True)
    s.set_defaults(func=cmd_params)

    s = sub.add_parser("gradcheck", help="finite-difference check of every parameter group")
    s.add_argument("--preset", choices=PRESET_NAMES, default="cnn-bilstm")
    s.add_argument("--tolerance", type=float, default=1e-4)
    s.add_argument("--step", type=float, default=1e-5)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--embed-dim", type=int, default=4)
    s.add_argument("--max-len", type=int, default=8, help="ignored for baseline (fixed at 50)")
    s.set_defaults(func=cmd_gradcheck)
    return p


def _thread_limit():
    raw = os.environ.get("TABLERE_THREADS", "0")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"TABLERE_THREADS must be an integer, got {raw!r}") from None
    if n <= 0:
        return None
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=n)


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        limiter = _thread_limit()
        try:
            return args.func(args)
        finally:
            if limiter is not None:
                limiter.restore_original_limits()
    except TableReError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (OSError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
