"""Synthetic table corpora with class-correlated tokens, for tests and demos.

Every text field of a generated table is two words long. Each word is one of
the relation's own keywords with probability ``signal`` and otherwise a
filler word shared by all relations, so the field layout is fixed and the
class shows up at most positions.
"""
from __future__ import annotations

import json
from dataclasses import replace
from pathlib import Path

import numpy as np

from .dataset import LabelMap, build_corpus, parse_record
from .tokenizer import PAD_TOKEN, UNK_TOKEN, Vocab

N_KEYWORDS = 2
N_FILLER = 40


def relation_names(n_classes):
    return [f"rel_{c:02d}" for c in range(n_classes)]


def _keyword(c, j):
    return f"key{c}x{j}"


def _filler(j):
    return f"word{j}"


def synthetic_vocab(n_classes):
    tokens = [PAD_TOKEN, UNK_TOKEN]
    tokens += [_keyword(c, j) for c in range(n_classes) for j in range(N_KEYWORDS)]
    tokens += [_filler(j) for j in range(N_FILLER)]
    return Vocab(tokens)


def synthetic_tables(n_classes, per_class, seed, signal=0.75):
    """``{relation: [table dict, ...]}`` with one single-row table per sample."""
    rng = np.random.default_rng(seed)
    names = relation_names(n_classes)

    def field(c):
        words = []
        for _ in range(2):
            if rng.random() < signal:
                words.append(_keyword(c, int(rng.integers(N_KEYWORDS))))
            else:
                words.append(_filler(int(rng.integers(N_FILLER))))
        return " ".join(words)

    out = {}
    for c, rel in enumerate(names):
        tables = []
        for i in range(per_class):
            tables.append(
                {
                    "table_id": f"{rel}-{seed}-{i}",
                    "article_title": field(c),
                    "section_title": field(c),
                    "caption": field(c),
                    "headers": [field(c), field(c)],
                    "rows": [[field(c), field(c)]],
                    "subject_column": 0,
                    "object_column": 1,
                    "relation": rel,
                }
            )
        out[rel] = tables
    return out


def write_tables(data_dir, tables):
    data_dir = Path(data_dir)
    data_dir.mkdir(parents=True, exist_ok=True)
    for rel, recs in tables.items():
        (data_dir / f"{rel}.json").write_text(json.dumps(recs, indent=1), encoding="utf-8")


def synthetic_samples(n_classes, per_class, seed, vocab=None, max_len=80, id_offset=0):
    """Encoded samples straight from :func:`synthetic_tables`, plus the label map."""
    vocab = vocab or synthetic_vocab(n_classes)
    labels = LabelMap(relation_names(n_classes))
    records = [parse_record(t) for recs in synthetic_tables(n_classes, per_class, seed).values() for t in recs]
    samples, _ = build_corpus(records, vocab, labels, max_len)
    if id_offset:
        samples = [replace(s, sample_id=s.sample_id + id_offset) for s in samples]
    return samples, labels, vocab

