"""LSTM time-loop kernels with backend selection at import.

The compiled ``_lstm_ext`` module is used when it was built; otherwise the
numpy loop in ``_lstm_py`` is used. Set ``TABLERE_KERNELS=python`` to force
the fallback.
"""
import os

from . import _lstm_py

python_forward = _lstm_py.lstm_forward
python_backward = _lstm_py.lstm_backward

try:
    from . import _lstm_ext
except ImportError:  # extension not built
    _lstm_ext = None

if _lstm_ext is not None and os.environ.get("TABLERE_KERNELS", "").lower() != "python":
    BACKEND = "cython"
    lstm_forward = _lstm_ext.lstm_forward
    lstm_backward = _lstm_ext.lstm_backward
else:
    BACKEND = "python"
    lstm_forward = python_forward
    lstm_backward = python_backward

compiled_available = _lstm_ext is not None

__all__ = ["BACKEND", "compiled_available", "lstm_forward", "lstm_backward"]
