"""Per-relation JSON table files to labeled samples, splits and batches.

Each file holds a JSON array of table objects::

    {"table_id": str, "article_title": str, "section_title": str,
     "caption": str | null, "headers": [str], "rows": [[str]],
     "subject_column": int (-1 = the article title), "object_column": int,
     "relation": str}

Any other keys (for example a section paragraph) are ignored.
"""
from __future__ import annotations

import csv
import json
import logging
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError, LabelError
from .tokenizer import MAX_LEN, encode

log = logging.getLogger(__name__)

ARTICLE_SUBJECT = -1
N_RELATIONS = 29
LONG_TAIL_THRESHOLD = 500
SPLIT_FRACTIONS = (0.4, 0.4, 0.2)


@dataclass
class TableRecord:
    table_id: str
    article_title: str
    section_title: str
    caption: str | None
    headers: list
    rows: list
    subject_column: int
    object_column: int
    relation: str


@dataclass
class RawSample:
    subject: str
    object: str
    context: list
    relation: str
    table_id: str

    def fields(self):
        return [self.subject, self.object, *self.context]


class LabelMap:
    """Bijection between relation names and indices in lexicographic order."""

    def __init__(self, names):
        names = sorted(set(names))
        if not names:
            raise LabelError("empty label set")
        self.names = names
        self._index = {n: i for i, n in enumerate(names)}

    def __len__(self):
        return len(self.names)

    def __contains__(self, name):
        return name in self._index

    def __eq__(self, other):
        return isinstance(other, LabelMap) and self.names == other.names

    def index(self, name):
        try:
            return self._index[name]
        except KeyError:
            raise LabelError(f"unknown relation {name!r}") from None

    def name(self, idx):
        return self.names[idx]

    @classmethod
    def from_file(cls, path):
        return cls(line.strip() for line in Path(path).read_text(encoding="utf-8").splitlines() if line.strip())

    def save(self, path):
        Path(path).write_text("\n".join(self.names) + "\n", encoding="utf-8")


@dataclass
class SplitPlan:
    seed: int
    train: list
    validation: list
    test: list

    def partition(self, name):
        return {"train": self.train, "validation": self.validation, "test": self.test}[name]


@dataclass
class CorpusStats:
    counts: dict
    total_samples: int
    total_tables: int
    long_tail: list = field(default_factory=list)
    long_tail_fraction: float = 0.0
    warnings: int = 0


def parse_record(obj):
    """Return a TableRecord or a reason string for skipping."""
    if not isinstance(obj, dict):
        return "record is not an object"
    try:
        rec = TableRecord(
            table_id=str(obj["table_id"]),
            article_title=obj["article_title"],
            section_title=obj.get("section_title") or "",
            caption=obj.get("caption"),
            headers=obj.get("headers") or [],
            rows=obj["rows"],
            subject_column=obj["subject_column"],
            object_column=obj["object_column"],
            relation=obj["relation"],
        )
    except KeyError as exc:
        return f"missing key {exc}"
    if not isinstance(rec.article_title, str) or not isinstance(rec.relation, str):
        return "article_title and relation must be strings"
    if not isinstance(rec.section_title, str) or not (rec.caption is None or isinstance(rec.caption, str)):
        return "section_title/caption must be strings"
    if not isinstance(rec.headers, list) or not all(isinstance(h, str) for h in rec.headers):
        return "headers must be a list of strings"
    if not isinstance(rec.rows, list) or not all(isinstance(r, list) and all(isinstance(c, str) for c in r) for r in rec.rows):
        return "rows must be a list of string lists"
    for col in (rec.subject_column, rec.object_column):
        if not isinstance(col, int) or isinstance(col, bool):
            return "column indices must be integers"
    if rec.object_column < 0 or (rec.subject_column < 0 and rec.subject_column != ARTICLE_SUBJECT):
        return "negative column index"
    for r in rec.rows:
        if rec.object_column >= len(r):
            return f"object_column {rec.object_column} outside row of width {len(r)}"
        if rec.subject_column != ARTICLE_SUBJECT and rec.subject_column >= len(r):
            return f"subject_column {rec.subject_column} outside row of width {len(r)}"
    return rec


def ingest(path, labels=None):
    """Parse one per-relation JSON file.

    Returns ``(records, skipped)``. Malformed records are skipped and counted;
    a file that is not JSON, or a record naming a relation outside ``labels``,
    is fatal.
    """
    text = Path(path).read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    if not isinstance(data, list):
        raise DataError(f"{path}: top level must be a JSON array")
    records = []
    skipped = 0
    for i, obj in enumerate(data):
        rec = parse_record(obj)
        if isinstance(rec, str):
            log.warning("%s: record %d skipped: %s", path, i, rec)
            skipped += 1
            continue
        if labels is not None and rec.relation not in labels:
            raise LabelError(f"{path}: record {i} has unknown relation {rec.relation!r}")
        records.append(rec)
    return records, skipped


def relation_files(data_dir):
    return sorted(p for p in Path(data_dir).iterdir() if p.suffix == ".json" and p.is_file())


def load_directory(data_dir, labels=None):
    """Ingest every ``*.json`` in file-name order.

    Without an explicit label map the label set is the set of file stems, one
    file per relation.
    """
    files = relation_files(data_dir)
    if not files:
        raise DataError(f"{data_dir}: no relation files found")
    if labels is None:
        labels = LabelMap(p.stem for p in files)
    records = []
    skipped = 0
    for p in files:
        recs, n = ingest(p, labels)
        records.extend(recs)
        skipped += n
    return records, skipped, labels


def _header(headers, col):
    return headers[col] if 0 <= col < len(headers) else ""


def extract_pairs(record):
    """One raw sample per row; returns ``(samples, skipped)``.

    Context is the subject-column header, the object-column header, the
    remaining headers, the caption and the section title.
    """
    used = {record.object_column}
    ordered = []
    if record.subject_column != ARTICLE_SUBJECT:
        ordered.append(_header(record.headers, record.subject_column))
        used.add(record.subject_column)
    ordered.append(_header(record.headers, record.object_column))
    ordered.extend(h for i, h in enumerate(record.headers) if i not in used)
    context = [h for h in ordered if h]
    context += [record.caption or "", record.section_title or ""]
    context = [c for c in context if c]

    out = []
    skipped = 0
    for row in record.rows:
        subject = record.article_title if record.subject_column == ARTICLE_SUBJECT else row[record.subject_column]
        obj = row[record.object_column]
        if not subject.strip() or not obj.strip():
            log.warning("table %s: row with empty entity skipped", record.table_id)
            skipped += 1
            continue
        out.append(RawSample(subject, obj, list(context), record.relation, record.table_id))
    return out, skipped


def build_corpus(records, vocab, labels, max_len=MAX_LEN):
    """Encode every row of every record; sample ids count up from 0 in input order."""
    samples = []
    skipped = 0
    for rec in records:
        raws, n = extract_pairs(rec)
        skipped += n
        for raw in raws:
            samples.append(encode(raw.fields(), vocab, max_len, labels.index(raw.relation), len(samples)))
    return samples, skipped


def split(sample_ids, seed):
    """Shuffle keyed only by ``seed``, then cut 40/40/20."""
    ids = np.array(sorted(sample_ids), dtype=np.int64)
    if ids.size == 0:
        raise DataError("cannot split an empty corpus")
    perm = ids[np.random.default_rng(seed).permutation(ids.size)]
    n_train = round(SPLIT_FRACTIONS[0] * ids.size)
    n_val = round(SPLIT_FRACTIONS[1] * ids.size)
    return SplitPlan(
        seed=seed,
        train=perm[:n_train].tolist(),
        validation=perm[n_train : n_train + n_val].tolist(),
        test=perm[n_train + n_val :].tolist(),
    )


def batches(ids, batch_size=16, seed=0, epoch=0):
    """Reshuffle per ``(seed, epoch)``; the final short batch is kept."""
    ids = list(ids)
    order = np.random.default_rng([seed, epoch]).permutation(len(ids))
    shuffled = [ids[i] for i in order]
    return [shuffled[i : i + batch_size] for i in range(0, len(shuffled), batch_size)]


def corpus_stats(samples, labels, n_tables=None, threshold=LONG_TAIL_THRESHOLD, warnings=0):
    counts = Counter(s.label for s in samples)
    per_label = {name: counts.get(i, 0) for i, name in enumerate(labels.names)}
    tail = [name for name, c in per_label.items() if c < threshold]
    return CorpusStats(
        counts=per_label,
        total_samples=len(samples),
        total_tables=n_tables if n_tables is not None else 0,
        long_tail=tail,
        long_tail_fraction=len(tail) / len(per_label),
        warnings=warnings,
    )


def write_stats_csv(path, stats):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["label", "count"])
        for name, c in stats.counts.items():
            w.writerow([name, c])
