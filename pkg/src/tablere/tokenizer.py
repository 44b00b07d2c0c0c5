"""Text cleaning, greedy WordPiece, and fixed-length encoding."""
from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError, FormatError

log = logging.getLogger(__name__)

MAX_LEN = 80
PAD_TOKEN = "[PAD]"
UNK_TOKEN = "[UNK]"
CONTINUATION = "##"
MAX_WORD_CHARS = 100

_SEPARATORS = re.compile(r"<\s*sep\s*>|\[\s*sep\s*\]|\[\s*cls\s*\]", re.IGNORECASE)
_NON_ALNUM = re.compile(r"[\W_]+")


class Vocab:
    """Ordered token list; the line number of a token in a vocab file is its id."""

    def __init__(self, tokens, pad_token=PAD_TOKEN, unk_token=UNK_TOKEN):
        tokens = list(tokens)
        if not tokens:
            raise ConfigError("empty vocabulary")
        if tokens[0] != pad_token:
            raise ConfigError(f"vocabulary must start with the pad token {pad_token!r}, found {tokens[0]!r}")
        index = {}
        for i, tok in enumerate(tokens):
            if tok in index:
                raise ConfigError(f"duplicate vocabulary entry {tok!r} at id {i}")
            index[tok] = i
        if unk_token not in index:
            raise ConfigError(f"vocabulary lacks the unknown token {unk_token!r}")
        self.tokens = tokens
        self._index = index
        self.pad_token = pad_token
        self.unk_token = unk_token
        self.pad_id = 0
        self.unk_id = index[unk_token]

    def __len__(self):
        return len(self.tokens)

    def __contains__(self, token):
        return token in self._index

    def id(self, token):
        return self._index.get(token, self.unk_id)

    def token(self, idx):
        return self.tokens[idx]

    @classmethod
    def from_file(cls, path, **kw):
        text = Path(path).read_text(encoding="utf-8")
        return cls([line.rstrip("\r") for line in text.split("\n") if line.rstrip("\r")], **kw)

    def save(self, path):
        Path(path).write_text("\n".join(self.tokens) + "\n", encoding="utf-8")


@dataclass(frozen=True)
class EncodedSample:
    token_ids: tuple
    true_length: int
    label: int
    sample_id: int

    def ids_array(self):
        return np.asarray(self.token_ids, dtype=np.int64)


def clean_text(raw):
    """Lowercase, drop separator markers, and reduce punctuation runs to single spaces."""
    text = _SEPARATORS.sub(" ", raw.lower())
    return " ".join(_NON_ALNUM.sub(" ", text).split())


def wordpiece_tokens(text, vocab):
    """Greedy longest-match-first pieces for each whitespace word."""
    out = []
    for word in text.split():
        if len(word) > MAX_WORD_CHARS:
            out.append(vocab.unk_token)
            continue
        pieces = []
        start = 0
        while start < len(word):
            end = len(word)
            match = None
            while start < end:
                piece = word[start:end]
                if start > 0:
                    piece = CONTINUATION + piece
                if piece in vocab:
                    match = piece
                    break
                end -= 1
            if match is None:
                pieces = [vocab.unk_token]
                break
            pieces.append(match)
            start = end
        out.extend(pieces)
    return out


def wordpiece(text, vocab):
    return [vocab.id(tok) for tok in wordpiece_tokens(text, vocab)]


def decode(ids, vocab):
    """Join pieces back into words, merging ``##`` continuations."""
    words = []
    for i in ids:
        if i == vocab.pad_id:
            continue
        tok = vocab.token(i)
        if tok.startswith(CONTINUATION) and words:
            words[-1] += tok[len(CONTINUATION):]
        else:
            words.append(tok)
    return " ".join(words)


def encode(fields, vocab, max_len=MAX_LEN, label=0, sample_id=0):
    """Clean and join ``fields`` with spaces, tokenize, truncate, right-pad."""
    text = " ".join(c for c in (clean_text(f or "") for f in fields) if c)
    if not text:
        log.warning("sample %s has no text in any field; emitting an all-pad sequence", sample_id)
    ids = wordpiece(text, vocab)[:max_len]
    n = len(ids)
    return EncodedSample(tuple(ids) + (vocab.pad_id,) * (max_len - n), n, int(label), int(sample_id))


def write_encoded(path, samples):
    """Tab-separated cache: sample_id, label, true_length, space-separated ids."""
    with open(path, "w", encoding="utf-8") as fh:
        for s in samples:
            fh.write(f"{s.sample_id}\t{s.label}\t{s.true_length}\t{' '.join(map(str, s.token_ids))}\n")


def read_encoded(path):
    samples = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 4:
                raise FormatError(f"{path}:{lineno}: expected 4 tab-separated fields, got {len(parts)}")
            try:
                sid, label, n = int(parts[0]), int(parts[1]), int(parts[2])
                ids = tuple(int(t) for t in parts[3].split())
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from None
            if n > len(ids) or any(ids[n:]):
                raise DataError(f"{path}:{lineno}: ids beyond true_length {n} must be pad")
            samples.append(EncodedSample(ids, n, label, sid))
    return samples
