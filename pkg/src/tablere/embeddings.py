"""Per-sample embedding matrices: the ``TBRE`` import file and a seeded lookup table.

TBRE layout (little endian)::

    b"TBRE"  u8 version=1  u32 count  u16 dim
    repeat count times:
        u64 sample_id  u16 length  length*dim float32

Rows past a record's stored length are zero at lookup time.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import DataError, FormatError
from .tokenizer import MAX_LEN

MAGIC = b"TBRE"
VERSION = 1
_HEADER = struct.Struct("<4sBIH")
_RECORD = struct.Struct("<QH")
_F32 = np.dtype("<f4")


@dataclass
class EmbeddedSample:
    matrix: np.ndarray  # (max_len, dim) float32
    label: int
    sample_id: int


def write_embeddings(path, records, dim):
    """Write ``(sample_id, matrix)`` pairs; each matrix is ``(length, dim)``."""
    records = list(records)
    seen = set()
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, len(records), dim))
        for sid, mat in records:
            mat = np.asarray(mat, dtype=_F32)
            if mat.ndim != 2 or mat.shape[1] != dim:
                raise DataError(f"sample {sid}: matrix shape {mat.shape} does not have {dim} columns")
            if mat.shape[0] > 0xFFFF:
                raise DataError(f"sample {sid}: {mat.shape[0]} rows exceed the u16 length field")
            if sid in seen:
                raise DataError(f"duplicate sample_id {sid}")
            seen.add(sid)
            fh.write(_RECORD.pack(int(sid), mat.shape[0]))
            fh.write(np.ascontiguousarray(mat).tobytes())


class EmbeddingIndex:
    """Random access to the records of a TBRE file by sample id."""

    def __init__(self, buffer, dim, offsets, path=None):
        self._buf = buffer
        self.dim = dim
        self._offsets = offsets  # sample_id -> (byte offset of floats, length)
        self.path = path

    def __len__(self):
        return len(self._offsets)

    def __contains__(self, sample_id):
        return sample_id in self._offsets

    def ids(self):
        return list(self._offsets)

    def stored_length(self, sample_id):
        return self._offsets[sample_id][1]

    def raw(self, sample_id):
        """Stored ``(length, dim)`` rows as a read-only view."""
        try:
            start, length = self._offsets[sample_id]
        except KeyError:
            raise DataError(f"no embedding for sample_id {sample_id}") from None
        return np.frombuffer(self._buf, dtype=_F32, count=length * self.dim, offset=start).reshape(length, self.dim)

    def lookup(self, sample_id, max_len=MAX_LEN):
        rows = self.raw(sample_id)[:max_len]
        out = np.zeros((max_len, self.dim), dtype=np.float32)
        out[: rows.shape[0]] = rows
        return out

    def __call__(self, sample, max_len=MAX_LEN):
        return self.lookup(sample.sample_id, max_len)


def load_embeddings(path):
    with open(path, "rb") as fh:
        buf = fh.read()
    if len(buf) < _HEADER.size:
        raise FormatError(f"{path}: truncated header ({len(buf)} bytes)")
    magic, version, count, dim = _HEADER.unpack_from(buf, 0)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    offsets = {}
    pos = _HEADER.size
    for _ in range(count):
        if pos + _RECORD.size > len(buf):
            raise FormatError(f"{path}: truncated record header at byte offset {pos}")
        sid, length = _RECORD.unpack_from(buf, pos)
        start = pos + _RECORD.size
        end = start + length * dim * 4
        if end > len(buf):
            raise FormatError(f"{path}: truncated record for sample {sid} at byte offset {pos}")
        if sid in offsets:
            raise FormatError(f"{path}: duplicate sample_id {sid} at byte offset {pos}")
        offsets[sid] = (start, length)
        pos = end
    if pos != len(buf):
        raise FormatError(f"{path}: {len(buf) - pos} trailing bytes after last record at byte offset {pos}")
    return EmbeddingIndex(buf, dim, offsets, path=str(path))


class TableLookupProvider:
    """Deterministic per-token vectors from a seeded table; the pad id maps to zeros."""

    def __init__(self, vocab_size, dim, seed, pad_id=0):
        rng = np.random.default_rng(seed)
        self.table = rng.standard_normal((vocab_size, dim)).astype(np.float32)
        self.table[pad_id] = 0.0
        self.vocab_size = vocab_size
        self.dim = dim

    def vectors(self, token_ids):
        ids = np.asarray(token_ids, dtype=np.int64)
        bad = (ids < 0) | (ids >= self.vocab_size)
        if bad.any():
            raise DataError(f"token id {int(ids[bad][0])} outside vocabulary of size {self.vocab_size}")
        return self.table[ids]

    def __call__(self, sample, max_len=MAX_LEN):
        ids = np.asarray(sample.token_ids[:max_len], dtype=np.int64)
        out = np.zeros((max_len, self.dim), dtype=np.float32)
        n = min(sample.true_length, max_len)
        out[:n] = self.vectors(ids[:n])
        return out


def table_lookup_provider(vocab_size, dim, seed):
    return TableLookupProvider(vocab_size, dim, seed)


def embed_samples(samples, provider, max_len=MAX_LEN):
    return [EmbeddedSample(provider(s, max_len), s.label, s.sample_id) for s in samples]
