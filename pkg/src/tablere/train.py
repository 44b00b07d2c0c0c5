"""Mini-batch training, the multi-seed protocol, and run reporting."""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dataset import batches, split
from .errors import DataError, NumericError, TableReError, UsageError
from .metrics import Metrics, compute_metrics, difficult_relations, write_confusion_csv, write_pgm
from .models import PRESET_OPTIMIZER, build, preset, save_model
from .tensor import init_optimizer, optimizer_step, sparse_ce_loss

log = logging.getLogger(__name__)

SUMMARY_FIELDS = ("accuracy", "macro_f1", "micro_f1", "weighted_f1")


@dataclass
class TrainConfig:
    preset: str = "cnn-bilstm"
    epochs: int = 40
    batch_size: int = 16
    optimizer: str | None = None  # None: the preset's optimizer
    lr: float | None = None
    seeds: tuple = (1, 2, 3, 4, 5)
    overrides: dict = field(default_factory=dict)  # ModelSpec field overrides
    eval_split: str = "test"

    def spec(self, classes=None):
        extra = dict(self.overrides)
        if classes is not None:
            extra["classes"] = classes
        return preset(self.preset, **extra)

    def optimizer_settings(self):
        kind, lr = PRESET_OPTIMIZER[self.spec().kind]
        return self.optimizer or kind, lr if self.lr is None else self.lr

    def validate(self):
        if self.epochs < 1:
            raise UsageError("epochs must be >= 1")
        if not self.seeds:
            raise UsageError("at least one seed is required")
        if self.batch_size < 1:
            raise UsageError("batch size must be >= 1")
        self.spec()
        return self


class EmbeddedCorpus:
    """Encoded samples plus a provider mapping a sample to its embedding matrix."""

    def __init__(self, samples, provider, n_classes, labels=None):
        self.samples = list(samples)
        self.by_id = {s.sample_id: s for s in self.samples}
        if len(self.by_id) != len(self.samples):
            raise DataError("duplicate sample ids in corpus")
        self.provider = provider
        self.n_classes = n_classes
        self.labels = labels
        bad = [s.sample_id for s in self.samples if not 0 <= s.label < n_classes]
        if bad:
            raise DataError(f"sample {bad[0]} has a label outside [0, {n_classes})")

    @property
    def ids(self):
        return [s.sample_id for s in self.samples]

    def arrays(self, ids, max_len):
        xs = np.stack([self.provider(self.by_id[i], max_len) for i in ids])
        ys = np.array([self.by_id[i].label for i in ids], dtype=np.int64)
        return xs, ys


@dataclass
class History:
    train_loss: list = field(default_factory=list)
    val_accuracy: list = field(default_factory=list)


def predict(model, corpus, ids, chunk=256):
    preds, trues = [], []
    for i in range(0, len(ids), chunk):
        x, y = corpus.arrays(ids[i : i + chunk], model.spec.max_len)
        preds.append(model.predict(x))
        trues.append(y)
    return np.concatenate(preds), np.concatenate(trues)


def evaluate(model, corpus, ids):
    if len(ids) == 0:
        raise UsageError("cannot evaluate an empty partition")
    pred, true = predict(model, corpus, list(ids))
    m = compute_metrics(pred, true, model.spec.classes)
    if m.absent:
        log.info("classes with no support in this partition (F1 set to 0): %s", m.absent)
    return m


def fit(model, corpus, train_ids, *, epochs, batch_size=16, optimizer="adam", lr=2e-5, seed=0, val_ids=None):
    """Train ``model`` in place; dropout is live only in these forward passes."""
    if not train_ids:
        raise UsageError("training partition is empty")
    params = model.parameters()
    state = init_optimizer(optimizer, [p.data for p in params], lr)
    drop_rng = np.random.default_rng([seed, 7])
    hist = History()
    for epoch in range(epochs):
        total = 0.0
        count = 0
        for b, ids in enumerate(batches(train_ids, batch_size, seed, epoch)):
            x, y = corpus.arrays(ids, model.spec.max_len)
            model.zero_grad()
            loss = sparse_ce_loss(model.forward(x, train=True, rng=drop_rng), y, sample_ids=ids)
            value = loss.item()
            if not math.isfinite(value):
                raise NumericError(f"non-finite loss {value} at epoch {epoch}, batch {b}")
            loss.backward()
            optimizer_step([p.data for p in params], [p.grad for p in params], state)
            total += value * len(ids)
            count += len(ids)
        hist.train_loss.append(total / count)
        if val_ids:
            hist.val_accuracy.append(evaluate(model, corpus, val_ids).accuracy)
        else:
            hist.val_accuracy.append(float("nan"))
        log.info("epoch %d loss %.6f val_acc %.4f", epoch, hist.train_loss[-1], hist.val_accuracy[-1])
    return hist


@dataclass
class SeedRun:
    seed: int
    status: str = "ok"
    metrics: Metrics | None = None
    val_metrics: Metrics | None = None
    history: History | None = None
    model_path: str | None = None
    error: str | None = None
    exit_code: int = 0
    model: object = None


def train(config, corpus, seed):
    """Split by ``seed``, build, fit on train, and return ``(model, SeedRun)``."""
    spec = config.spec(classes=corpus.n_classes)
    kind, lr = config.optimizer_settings()
    plan = split(corpus.ids, seed)
    model = build(spec, seed)
    hist = fit(
        model,
        corpus,
        plan.train,
        epochs=config.epochs,
        batch_size=config.batch_size,
        optimizer=kind,
        lr=lr,
        seed=seed,
        val_ids=plan.validation,
    )
    model.meta = {"seed": seed, "preset": config.preset, "optimizer": kind, "lr": lr, "epochs": config.epochs}
    run = SeedRun(seed=seed, history=hist, model=model)
    run.metrics = evaluate(model, corpus, plan.partition(config.eval_split))
    if plan.validation:
        run.val_metrics = evaluate(model, corpus, plan.validation)
    return model, run


@dataclass
class RunReport:
    runs: list
    mean: dict

    @property
    def completed(self):
        return [r for r in self.runs if r.status == "ok"]

    @property
    def failed(self):
        return [r for r in self.runs if r.status != "ok"]

    def best(self):
        done = self.completed
        return max(done, key=lambda r: (r.metrics.accuracy, -r.seed)) if done else None


def average_metrics(runs):
    done = [r for r in runs if r.status == "ok"]
    if not done:
        return {k: float("nan") for k in SUMMARY_FIELDS}
    return {k: _mean([getattr(r.metrics, k) for r in done]) for k in SUMMARY_FIELDS}


def _mean(values):
    # shifted so that identical inputs average to exactly themselves
    base = values[0]
    return float(base + math.fsum(v - base for v in values) / len(values))


def multi_seed(config, corpus, out_dir=None):
    """One train + evaluate per seed; failures are recorded, not raised."""
    config.validate()
    models_dir = None
    if out_dir is not None:
        models_dir = Path(out_dir) / "models"
        models_dir.mkdir(parents=True, exist_ok=True)
    runs = []
    for seed in config.seeds:
        try:
            model, run = train(config, corpus, seed)
        except TableReError as exc:
            log.error("seed %s failed: %s", seed, exc)
            runs.append(SeedRun(seed=seed, status="failed", error=str(exc), exit_code=exc.exit_code))
            continue
        if models_dir is not None:
            run.model_path = str(models_dir / f"seed_{seed}.tbmd")
            save_model(model, run.model_path)
        runs.append(run)
    report = RunReport(runs=runs, mean=average_metrics(runs))
    if out_dir is not None:
        write_report(report, out_dir, corpus.labels)
    return report


def _fmt(v):
    return repr(float(v))


def write_metrics_csv(path, rows):
    """``rows``: iterable of ``(seed, status, summary dict or None)``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["seed", "status", *SUMMARY_FIELDS])
        for seed, status, summary in rows:
            vals = [_fmt(summary[k]) for k in SUMMARY_FIELDS] if summary else [""] * len(SUMMARY_FIELDS)
            w.writerow([seed, status, *vals])


def read_metrics_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def write_difficult(path, conf, labels=None, k=10):
    name = (lambda i: labels.name(i)) if labels is not None else str
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["predicted", "true", "rate"])
        for p, t, rate in difficult_relations(conf, k):
            w.writerow([name(p), name(t), _fmt(rate)])


def write_report(report, out_dir, labels=None):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = [(r.seed, r.status, r.metrics.summary() if r.metrics else None) for r in report.runs]
    rows.append(("mean", f"{len(report.completed)}/{len(report.runs)}", report.mean if report.completed else None))
    write_metrics_csv(out / "metrics.csv", rows)
    with open(out / "loss_curve.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["seed", "epoch", "train_loss", "val_accuracy"])
        for r in report.completed:
            for e, (loss, acc) in enumerate(zip(r.history.train_loss, r.history.val_accuracy)):
                w.writerow([r.seed, e, _fmt(loss), _fmt(acc)])
    best = report.best()
    if best is not None:
        write_confusion_csv(out / "confusion.csv", best.metrics.confusion)
        write_pgm(out / "confusion.pgm", best.metrics.confusion)
        write_difficult(out / "difficult_relations.csv", best.metrics.confusion, labels)
