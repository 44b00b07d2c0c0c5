"""The four classifiers: baseline LSTM(1), CNN+LSTM, CNN+BiLSTM, BiLSTM-only.

Parameter counts follow from the layer geometry alone::

    conv     F*k*d + F
    lstm     4*(u*(i+u) + u)      per direction
    dense    n*c + c              n = pooled length * recurrent width

With d=768, c=29, F=8, k=5, u=8, 2-step pooling over 80 tokens this gives
40,581 (CNN+LSTM), 50,405 (CNN+BiLSTM), 86,877 (BiLSTM-only, no pooling),
and 4,559 for a 1-unit LSTM over 50 tokens. Those are only reproduced with
k=5, temporal pooling of width 2 and a dense layer over the whole flattened
state sequence, which is why those choices are fixed here.
"""
from __future__ import annotations

import dataclasses
import json
import struct
import zlib
from collections import OrderedDict
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, FormatError, ShapeError
from .tensor import (
    ConvParams,
    LstmParams,
    Tensor,
    bilstm,
    conv1d_same,
    dense,
    dropout,
    flatten,
    lstm_layer,
    maxpool1d,
    relu,
    softmax,
)

KINDS = ("baseline", "cnn_lstm", "cnn_bilstm", "bilstm_only")
CONV_KINDS = ("cnn_lstm", "cnn_bilstm")


@dataclass(frozen=True)
class ModelSpec:
    kind: str = "cnn_bilstm"
    max_len: int = 80
    embed_dim: int = 768
    filters: int = 8
    kernel: int = 5
    units: int = 8
    classes: int = 29
    dropout: float = 0.2
    pool: int = 2

    @property
    def has_conv(self):
        return self.kind in CONV_KINDS

    @property
    def bidirectional(self):
        return self.kind in ("cnn_bilstm", "bilstm_only")

    @property
    def seq_len(self):
        """Length of the sequence entering the recurrent layer."""
        return self.max_len // self.pool if self.has_conv else self.max_len

    @property
    def recurrent_width(self):
        return 2 * self.units if self.bidirectional else self.units

    def validate(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown model kind {self.kind!r}; expected one of {KINDS}")
        for name in ("max_len", "embed_dim", "units", "classes"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if not 0 <= self.dropout < 1:
            raise ConfigError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.has_conv:
            if self.filters < 1 or self.kernel < 1 or self.pool < 1:
                raise ConfigError(f"{self.kind} needs filters, kernel and pool >= 1")
            if self.max_len % self.pool:
                raise ConfigError(f"max_len {self.max_len} not divisible by pool width {self.pool}")
        elif self.filters or self.kernel:
            raise ConfigError(f"{self.kind} has no convolution; filters and kernel must be 0")
        if self.kind == "baseline" and (self.max_len != 50 or self.units != 1 or self.dropout != 0):
            raise ConfigError("baseline is fixed to max_len 50, 1 unit, no dropout")
        return self

    def to_dict(self):
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d):
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise FormatError(f"unknown spec fields {sorted(unknown)}")
        return cls(**d)


PRESETS = {
    "baseline": ModelSpec("baseline", max_len=50, filters=0, kernel=0, units=1, dropout=0.0),
    "cnn_lstm": ModelSpec("cnn_lstm"),
    "cnn_bilstm": ModelSpec("cnn_bilstm"),
    "bilstm_only": ModelSpec("bilstm_only", filters=0, kernel=0),
}

# optimizer and learning rate that go with each preset
PRESET_OPTIMIZER = {
    "baseline": ("rmsprop", 1e-3),
    "cnn_lstm": ("adam", 2e-5),
    "cnn_bilstm": ("adam", 2e-5),
    "bilstm_only": ("adam", 2e-5),
}


def preset(name, **overrides):
    key = name.replace("-", "_")
    if key not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; expected one of {[k.replace('_', '-') for k in PRESETS]}")
    return dataclasses.replace(PRESETS[key], **overrides).validate()


def lstm_param_count(units, input_dim):
    return 4 * (units * (input_dim + units) + units)


def param_breakdown(spec):
    """``[(layer, count), ...]`` in forward order."""
    spec.validate()
    layers = []
    width = spec.embed_dim
    if spec.has_conv:
        layers.append(("conv", spec.filters * spec.kernel * spec.embed_dim + spec.filters))
        width = spec.filters
    if spec.bidirectional:
        layers.append(("bilstm.forward", lstm_param_count(spec.units, width)))
        layers.append(("bilstm.backward", lstm_param_count(spec.units, width)))
    else:
        layers.append(("lstm", lstm_param_count(spec.units, width)))
    n = spec.seq_len * spec.recurrent_width
    layers.append(("dense", n * spec.classes + spec.classes))
    return layers


def param_count(spec):
    return sum(c for _, c in param_breakdown(spec))


def _glorot(rng, shape, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(np.float32)


class Model:
    def __init__(self, spec, params):
        self.spec = spec
        self.params = params
        self.meta = {}
        self._check_geometry()

    def parameters(self):
        return list(self.params.values())

    @property
    def n_params(self):
        return sum(p.size for p in self.params.values())

    def shape_trace(self):
        s = self.spec
        trace = [("input", (s.max_len, s.embed_dim))]
        if s.has_conv:
            trace.append(("conv", (s.max_len, s.filters)))
            trace.append(("maxpool", (s.seq_len, s.filters)))
        trace.append(("bilstm" if s.bidirectional else "lstm", (s.seq_len, s.recurrent_width)))
        trace.append(("flatten", (s.seq_len * s.recurrent_width,)))
        trace.append(("dense", (s.classes,)))
        return trace

    def _check_geometry(self):
        expected = {name: shape for name, shape in _param_shapes(self.spec)}
        got = {name: p.shape for name, p in self.params.items()}
        if expected != got:
            raise ShapeError(f"parameter shapes {got} do not match spec {expected}")
        assert self.shape_trace()[-2][1][0] == self.params["dense.weights"].shape[0]

    def _lstm(self, prefix):
        p = self.params
        return LstmParams(p[f"{prefix}.kernel"], p[f"{prefix}.recurrent"], p[f"{prefix}.bias"])

    def forward(self, x, train=False, rng=None):
        """Logits ``(B, classes)`` for a batch ``(B, max_len, embed_dim)``."""
        s = self.spec
        xt = x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=self.params["dense.weights"].dtype))
        if xt.data.ndim != 3 or xt.shape[1:] != (s.max_len, s.embed_dim):
            raise ShapeError(f"expected input (B, {s.max_len}, {s.embed_dim}), got {xt.shape}")
        h = xt
        if s.has_conv:
            h = conv1d_same(h, ConvParams(self.params["conv.filters"], self.params["conv.bias"]))
            h = relu(h)
            h = maxpool1d(h, s.pool, s.pool)
        if s.bidirectional:
            h = bilstm(h, self._lstm("bilstm.forward"), self._lstm("bilstm.backward"))
        else:
            h = lstm_layer(h, self._lstm("lstm"))
        h = dropout(h, s.dropout, train, rng)
        h = flatten(h)
        return dense(h, self.params["dense.weights"], self.params["dense.bias"])

    def predict_proba(self, x):
        return softmax(self.forward(x)).data

    def predict(self, x):
        return self.forward(x).data.argmax(axis=1)

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None

    def astype(self, dtype):
        params = OrderedDict(
            (name, Tensor(p.data.astype(dtype), requires_grad=True)) for name, p in self.params.items()
        )
        out = Model(self.spec, params)
        out.meta = dict(self.meta)
        return out


def _param_shapes(spec):
    shapes = []
    width = spec.embed_dim
    if spec.has_conv:
        shapes += [("conv.filters", (spec.filters, spec.kernel, spec.embed_dim)), ("conv.bias", (spec.filters,))]
        width = spec.filters
    u = spec.units
    prefixes = ["bilstm.forward", "bilstm.backward"] if spec.bidirectional else ["lstm"]
    for pre in prefixes:
        shapes += [(f"{pre}.kernel", (width, 4 * u)), (f"{pre}.recurrent", (u, 4 * u)), (f"{pre}.bias", (4 * u,))]
    n = spec.seq_len * spec.recurrent_width
    shapes += [("dense.weights", (n, spec.classes)), ("dense.bias", (spec.classes,))]
    return shapes


def build(spec, seed=0):
    spec.validate()
    rng = np.random.default_rng(seed)
    params = OrderedDict()
    for name, shape in _param_shapes(spec):
        if name == "conv.filters":
            f, k, d = shape
            data = _glorot(rng, shape, k * d, k * f)
        elif name.endswith(".kernel") or name == "dense.weights":
            data = _glorot(rng, shape, shape[0], shape[1])
        elif name.endswith(".recurrent"):
            lim = 1.0 / np.sqrt(shape[0])
            data = rng.uniform(-lim, lim, size=shape).astype(np.float32)
        else:
            data = np.zeros(shape, dtype=np.float32)
            if name.endswith(".bias") and "lstm" in name:
                u = shape[0] // 4
                data[u : 2 * u] = 1.0  # forget gate
        params[name] = Tensor(data, requires_grad=True)
    model = Model(spec, params)
    assert model.n_params == param_count(spec)
    return model


MODEL_MAGIC = b"TBMD"
MODEL_VERSION = 1


def model_bytes(model, meta=None):
    """Serialized ``TBMD`` bytes: magic, payload, CRC-32 of the payload."""
    header = json.dumps({"spec": model.spec.to_dict(), "meta": meta if meta is not None else model.meta}, sort_keys=True).encode()
    parts = [struct.pack("<BI", MODEL_VERSION, len(header)), header, struct.pack("<I", len(model.params))]
    for name, p in model.params.items():
        raw = name.encode("utf-8")
        parts.append(struct.pack("<H", len(raw)) + raw)
        parts.append(struct.pack("<B", p.data.ndim) + struct.pack(f"<{p.data.ndim}I", *p.shape))
        parts.append(np.ascontiguousarray(p.data, dtype="<f4").tobytes())
    payload = b"".join(parts)
    return MODEL_MAGIC + payload + struct.pack("<I", zlib.crc32(payload))


def save_model(model, path, meta=None):
    with open(path, "wb") as fh:
        fh.write(model_bytes(model, meta))


def load_model(path):
    with open(path, "rb") as fh:
        buf = fh.read()
    if buf[:4] != MODEL_MAGIC:
        raise FormatError(f"{path}: bad magic {buf[:4]!r}, expected {MODEL_MAGIC!r}")
    if len(buf) < 4 + 5 + 4:
        raise FormatError(f"{path}: file too short")
    payload, (crc,) = buf[4:-4], struct.unpack("<I", buf[-4:])
    if zlib.crc32(payload) != crc:
        raise FormatError(f"{path}: CRC-32 mismatch, file is corrupt")
    try:
        version, hlen = struct.unpack_from("<BI", payload, 0)
        if version != MODEL_VERSION:
            raise FormatError(f"{path}: unsupported model version {version}")
        pos = 5
        header = json.loads(payload[pos : pos + hlen].decode("utf-8"))
        pos += hlen
        spec = ModelSpec.from_dict(header["spec"])
        try:
            spec.validate()
        except ConfigError as exc:
            raise FormatError(f"{path}: invalid embedded spec: {exc}") from None
        (count,) = struct.unpack_from("<I", payload, pos)
        pos += 4
        params = OrderedDict()
        for _ in range(count):
            (nlen,) = struct.unpack_from("<H", payload, pos)
            pos += 2
            name = payload[pos : pos + nlen].decode("utf-8")
            pos += nlen
            (rank,) = struct.unpack_from("<B", payload, pos)
            pos += 1
            shape = struct.unpack_from(f"<{rank}I", payload, pos)
            pos += 4 * rank
            n = int(np.prod(shape))
            if pos + 4 * n > len(payload):
                raise FormatError(f"{path}: tensor {name!r} runs past end of payload")
            data = np.frombuffer(payload, dtype="<f4", count=n, offset=pos).reshape(shape).astype(np.float32)
            pos += 4 * n
            params[name] = Tensor(data, requires_grad=True)
    except (struct.error, UnicodeDecodeError, json.JSONDecodeError, KeyError, TypeError) as exc:
        raise FormatError(f"{path}: malformed model payload ({exc})") from None
    if pos != len(payload):
        raise FormatError(f"{path}: {len(payload) - pos} unexpected trailing bytes")
    try:
        model = Model(spec, params)
    except ShapeError as exc:
        raise FormatError(f"{path}: parameters do not match embedded spec: {exc}") from None
    model.meta = header.get("meta") or {}
    return model
