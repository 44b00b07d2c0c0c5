import numpy as np
import pytest

from tablere.errors import ConfigError, FormatError, ShapeError
from tablere.models import (
    PRESETS,
    ModelSpec,
    build,
    load_model,
    model_bytes,
    param_breakdown,
    param_count,
    preset,
    save_model,
)

TABLE_ONE = {"baseline": 4559, "cnn_lstm": 40581, "cnn_bilstm": 50405, "bilstm_only": 86877}


@pytest.mark.parametrize("kind,count", TABLE_ONE.items())
def test_param_count_matches_table(kind, count):
    assert param_count(preset(kind)) == count


@pytest.mark.parametrize("kind", TABLE_ONE)
def test_built_tensor_elements_match_formula(kind):
    model = build(preset(kind), seed=0)
    assert sum(p.size for p in model.parameters()) == param_count(model.spec)


def test_breakdown_cnn_bilstm():
    assert param_breakdown(preset("cnn_bilstm")) == [
        ("conv", 30728), ("bilstm.forward", 544), ("bilstm.backward", 544), ("dense", 18589),
    ]


def test_shape_trace_full_geometry():
    trace = build(preset("cnn_bilstm"), 0).shape_trace()
    assert [s for _, s in trace] == [(80, 768), (80, 8), (40, 8), (40, 16), (640,), (29,)]


def test_cnn_bilstm_forward_batch(rng):
    model = build(preset("cnn_bilstm"), 0)
    logits = model.forward(rng.standard_normal((3, 80, 768)).astype(np.float32))
    assert logits.shape == (3, 29) and np.all(np.isfinite(logits.data))
    np.testing.assert_allclose(model.predict_proba(rng.standard_normal((3, 80, 768))).sum(axis=1), 1, atol=1e-5)


def test_baseline_forward(rng):
    model = build(preset("baseline"), 0)
    assert model.forward(rng.standard_normal((1, 50, 768))).shape == (1, 29)


def test_bilstm_only_forward(rng):
    model = build(preset("bilstm-only", embed_dim=16), 0)
    assert model.forward(rng.standard_normal((2, 80, 16))).shape == (2, 29)


def test_same_seed_same_params():
    a, b = build(preset("cnn_lstm"), 7), build(preset("cnn_lstm"), 7)
    for pa, pb in zip(a.parameters(), b.parameters()):
        assert pa.data.tobytes() == pb.data.tobytes()
    c = build(preset("cnn_lstm"), 8)
    assert any(pa.data.tobytes() != pc.data.tobytes() for pa, pc in zip(a.parameters(), c.parameters()))


def test_forget_bias_initialised_to_one():
    model = build(preset("cnn_lstm"), 0)
    bias = model.params["lstm.bias"].data
    np.testing.assert_array_equal(bias[8:16], 1)
    np.testing.assert_array_equal(np.delete(bias, np.s_[8:16]), 0)


def test_eval_forward_deterministic(rng):
    model = build(preset("cnn_bilstm", embed_dim=8), 0)
    x = rng.standard_normal((2, 80, 8)).astype(np.float32)
    assert model.forward(x).data.tobytes() == model.forward(x).data.tobytes()


def test_wrong_input_shape(rng):
    with pytest.raises(ShapeError):
        build(preset("cnn_bilstm", embed_dim=8), 0).forward(rng.standard_normal((2, 40, 8)))


@pytest.mark.parametrize(
    "spec",
    [
        ModelSpec("baseline", max_len=50, filters=0, kernel=0, units=2, dropout=0.0),
        ModelSpec("baseline", max_len=80, filters=0, kernel=0, units=1, dropout=0.0),
        ModelSpec("baseline", max_len=50, filters=8, kernel=5, units=1, dropout=0.0),
        ModelSpec("cnn_lstm", max_len=79),
        ModelSpec("cnn_lstm", dropout=1.0),
        ModelSpec("transformer"),
    ],
)
def test_invalid_specs(spec):
    with pytest.raises(ConfigError):
        spec.validate()


def test_preset_names_accept_hyphens():
    assert preset("cnn-bilstm") == PRESETS["cnn_bilstm"]
    with pytest.raises(ConfigError):
        preset("cnn-gru")


def test_save_load_roundtrip(tmp_path, rng):
    model = build(preset("cnn_bilstm", embed_dim=12), 3)
    path = tmp_path / "m.tbmd"
    save_model(model, path, meta={"seed": 3})
    loaded = load_model(path)
    assert loaded.spec == model.spec and loaded.meta == {"seed": 3}
    for name, p in model.params.items():
        assert loaded.params[name].data.tobytes() == p.data.tobytes()
    x = rng.standard_normal((4, 80, 12)).astype(np.float32)
    assert loaded.forward(x).data.tobytes() == model.forward(x).data.tobytes()
    assert model_bytes(loaded) == path.read_bytes()


def test_load_wrong_magic(tmp_path):
    path = tmp_path / "m.tbmd"
    save_model(build(preset("baseline", embed_dim=4), 0), path)
    path.write_bytes(b"TBMX" + path.read_bytes()[4:])
    with pytest.raises(FormatError, match="magic"):
        load_model(path)


def test_every_single_byte_corruption_detected(tmp_path):
    path = tmp_path / "m.tbmd"
    save_model(build(preset("baseline", embed_dim=2), 0), path)
    raw = path.read_bytes()
    for pos in range(4, len(raw) - 4, 7):
        bad = bytearray(raw)
        bad[pos] ^= 0x5A
        path.write_bytes(bytes(bad))
        with pytest.raises(FormatError, match="CRC"):
            load_model(path)


def test_params_not_matching_spec(tmp_path):
    import json
    import struct
    import zlib

    model = build(preset("baseline", embed_dim=2), 0)
    raw = model_bytes(model)
    payload = raw[4:-4]
    hlen = struct.unpack_from("<I", payload, 1)[0]
    header = json.loads(payload[5:5 + hlen])
    header["spec"]["classes"] = 28
    new_header = json.dumps(header, sort_keys=True).encode()
    payload = payload[:1] + struct.pack("<I", len(new_header)) + new_header + payload[5 + hlen:]
    path = tmp_path / "m.tbmd"
    path.write_bytes(b"TBMD" + payload + struct.pack("<I", zlib.crc32(payload)))
    with pytest.raises(FormatError, match="do not match"):
        load_model(path)
