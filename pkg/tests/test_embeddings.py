import struct

import numpy as np
import pytest

from tablere.embeddings import (
    TableLookupProvider,
    load_embeddings,
    table_lookup_provider,
    write_embeddings,
)
from tablere.errors import DataError, FormatError
from tablere.tokenizer import EncodedSample


def test_empty_file(tmp_path):
    p = tmp_path / "e.tbre"
    write_embeddings(p, [], dim=768)
    idx = load_embeddings(p)
    assert len(idx) == 0 and idx.dim == 768
    with pytest.raises(DataError):
        idx.lookup(0)


def test_short_record_zero_padded(tmp_path, rng):
    p = tmp_path / "e.tbre"
    m = rng.standard_normal((5, 768)).astype(np.float32)
    write_embeddings(p, [(42, m)], dim=768)
    out = load_embeddings(p).lookup(42)
    assert out.shape == (80, 768) and out.dtype == np.float32
    np.testing.assert_array_equal(out[:5], m)
    assert not out[5:].any()


def test_roundtrip_bit_identical(tmp_path, rng):
    p = tmp_path / "e.tbre"
    recs = [(int(i), rng.standard_normal((int(n), 16)).astype(np.float32)) for i, n in zip(rng.permutation(1000)[:20], rng.integers(0, 81, 20))]
    write_embeddings(p, recs, dim=16)
    idx = load_embeddings(p)
    for sid, m in recs:
        assert idx.raw(sid).tobytes() == m.tobytes()


def test_exact_byte_layout(tmp_path):
    p = tmp_path / "e.tbre"
    write_embeddings(p, [(7, np.array([[1.0, -2.0]], dtype=np.float32))], dim=2)
    raw = p.read_bytes()
    expected = b"TBRE" + b"\x01" + struct.pack("<I", 1) + struct.pack("<H", 2) + struct.pack("<QH", 7, 1) + struct.pack("<2f", 1.0, -2.0)
    assert raw == expected


def test_bad_magic_and_version(tmp_path):
    p = tmp_path / "e.tbre"
    write_embeddings(p, [], dim=4)
    raw = bytearray(p.read_bytes())
    p.write_bytes(b"XXXX" + raw[4:])
    with pytest.raises(FormatError, match="magic"):
        load_embeddings(p)
    raw[4] = 2
    p.write_bytes(bytes(raw))
    with pytest.raises(FormatError, match="version"):
        load_embeddings(p)


def test_duplicate_id_rejected(tmp_path):
    p = tmp_path / "e.tbre"
    one = struct.pack("<QH", 3, 1) + struct.pack("<f", 1.0)
    p.write_bytes(b"TBRE\x01" + struct.pack("<IH", 2, 1) + one + one)
    with pytest.raises(FormatError, match="duplicate"):
        load_embeddings(p)


def test_truncated_record_reports_offset(tmp_path, rng):
    p = tmp_path / "e.tbre"
    write_embeddings(p, [(1, rng.standard_normal((3, 4))), (2, rng.standard_normal((3, 4)))], dim=4)
    raw = p.read_bytes()
    p.write_bytes(raw[:-5])
    second_record_offset = 11 + 10 + 3 * 4 * 4
    with pytest.raises(FormatError, match=f"byte offset {second_record_offset}"):
        load_embeddings(p)


def test_lookup_pad_rows_zero():
    prov = table_lookup_provider(10, 8, seed=0)
    s = EncodedSample((3, 4, 0, 0), 2, 0, 0)
    m = prov(s, max_len=4)
    assert not m[2:].any() and m[:2].any()
    assert not prov.vectors([0]).any()


def test_lookup_deterministic():
    a = TableLookupProvider(10, 8, seed=5)
    b = TableLookupProvider(10, 8, seed=5)
    assert a.vectors([1, 2, 9]).tobytes() == b.vectors([1, 2, 9]).tobytes()


def test_lookup_seeds_differ():
    a = TableLookupProvider(10, 8, seed=1).table
    b = TableLookupProvider(10, 8, seed=2).table
    assert (a != b).any()


def test_lookup_bad_id():
    with pytest.raises(DataError):
        TableLookupProvider(10, 8, seed=0).vectors([10])
