"""Central finite-difference gradient checking in float64."""
from __future__ import annotations

import numpy as np


def numeric_grad(loss_fn, arr, h=1e-5):
    """Central differences of ``loss_fn()`` with respect to ``arr``, perturbed in place."""
    grad = np.zeros_like(arr, dtype=np.float64)
    flat = arr.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        up = float(loss_fn())
        flat[i] = orig - h
        down = float(loss_fn())
        flat[i] = orig
        gflat[i] = (up - down) / (2 * h)
    return grad


def relative_error(analytic, numeric, floor=1e-12):
    """Norm-wise ``||a - n|| / max(||a||, ||n||)`` over a whole tensor.

    An elementwise ratio is dominated by finite-difference roundoff on
    entries near zero, so the comparison is made on the full gradient.
    """
    a = np.asarray(analytic, dtype=np.float64).ravel()
    n = np.asarray(numeric, dtype=np.float64).ravel()
    scale = max(np.linalg.norm(a), np.linalg.norm(n))
    if scale <= floor:
        return 0.0
    return float(np.linalg.norm(a - n) / scale)


def check_gradients(build_loss, tensors, h=1e-5, tol=1e-4):
    """Compare autograd against central differences for each named tensor.

    ``build_loss`` rebuilds the graph from the tensors' current data and
    returns a scalar Tensor; ``tensors`` maps names to float64 leaves with
    ``requires_grad=True``. Returns ``{name: (max_rel_error, passed)}``.
    """
    for t in tensors.values():
        t.grad = None
    loss = build_loss()
    loss.backward()
    analytic = {name: (t.grad.copy() if t.grad is not None else np.zeros_like(t.data)) for name, t in tensors.items()}
    results = {}
    for name, t in tensors.items():
        num = numeric_grad(lambda: build_loss().item(), t.data, h)
        err = relative_error(analytic[name], num)
        results[name] = (err, err < tol)
    return results
