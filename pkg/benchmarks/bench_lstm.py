"""Compiled vs numpy LSTM kernels, plus one full training step.

    python3 benchmarks/bench_lstm.py [--repeat 20]
"""
import argparse
import timeit

import numpy as np

from tablere import kernels
from tablere.kernels import _lstm_py

try:
    from tablere.kernels import _lstm_ext
except ImportError:
    _lstm_ext = None


def _inputs(batch, steps, units, dtype, seed=0):
    rng = np.random.default_rng(seed)
    xproj = rng.standard_normal((batch, steps, 4 * units)).astype(dtype)
    rec = (rng.standard_normal((units, 4 * units)) / np.sqrt(units)).astype(dtype)
    dhs = rng.standard_normal((batch, steps, units)).astype(dtype)
    return xproj, rec, dhs


def bench_kernel(mod, batch, steps, units, dtype, repeat):
    xproj, rec, dhs = _inputs(batch, steps, units, dtype)
    hs, cs, acts = mod.lstm_forward(xproj, rec)
    fwd = min(timeit.repeat(lambda: mod.lstm_forward(xproj, rec), number=1, repeat=repeat))
    bwd = min(timeit.repeat(lambda: mod.lstm_backward(dhs, hs, cs, acts, rec), number=1, repeat=repeat))
    return fwd, bwd


def bench_train_step(mod, repeat):
    from tablere.models import build, preset
    from tablere.tensor import init_optimizer, optimizer_step, sparse_ce_loss

    kernels.lstm_forward, kernels.lstm_backward = mod.lstm_forward, mod.lstm_backward
    model = build(preset("cnn_bilstm"), 0)
    rng = np.random.default_rng(0)
    x = rng.standard_normal((16, 80, 768)).astype(np.float32)
    y = rng.integers(0, 29, 16)
    params = model.parameters()
    state = init_optimizer("adam", [p.data for p in params], 2e-5)
    drop = np.random.default_rng(1)

    def step():
        model.zero_grad()
        sparse_ce_loss(model.forward(x, train=True, rng=drop), y).backward()
        optimizer_step([p.data for p in params], [p.grad for p in params], state)

    return min(timeit.repeat(step, number=1, repeat=repeat))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args()
    mods = [("numpy", _lstm_py)] + ([("cython", _lstm_ext)] if _lstm_ext else [])
    if _lstm_ext is None:
        print("compiled kernel not built; numpy only")
    print(f"{'case':<34}{'backend':<9}{'forward ms':>12}{'backward ms':>13}")
    for batch, steps, units in [(16, 40, 8), (16, 80, 8), (16, 50, 1), (64, 80, 8), (16, 80, 64)]:
        for dtype in (np.float32, np.float64):
            case = f"B={batch} T={steps} u={units} {np.dtype(dtype).name}"
            times = {}
            for name, mod in mods:
                times[name] = bench_kernel(mod, batch, steps, units, dtype, args.repeat)
                f, b = times[name]
                print(f"{case:<34}{name:<9}{f * 1e3:>12.3f}{b * 1e3:>13.3f}")
            if len(times) == 2:
                sf = times["numpy"][0] / times["cython"][0]
                sb = times["numpy"][1] / times["cython"][1]
                print(f"{'':<34}{'speedup':<9}{sf:>11.1f}x{sb:>12.1f}x")
    print()
    for name, mod in mods:
        t = bench_train_step(mod, max(3, args.repeat // 4))
        print(f"cnn_bilstm train step, batch 16 x 80 x 768, {name:<7}{t * 1e3:9.2f} ms")


if __name__ == "__main__":
    main()
