"""Central finite-difference gradient oracle shared across test modules."""

import numpy as np

from tagfm import autodiff as ad


def finite_difference(loss_fn, tensors, step=1e-6):
    """Central-difference gradient of loss_fn for every entry of each tensor.

    loss_fn must be a pure function of the tensor values (re-evaluated many
    times); returns a list of arrays aligned with `tensors`.
    """
    grads = []
    for t in tensors:
        g = np.zeros_like(t.values)
        flat = t.values.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            up = loss_fn()
            flat[i] = orig - step
            down = loss_fn()
            flat[i] = orig
            gflat[i] = (up - down) / (2.0 * step)
        grads.append(g)
    return grads


def analytic_gradients(loss_fn, tensors):
    """Tape-computed gradients of loss_fn with respect to `tensors`."""
    for t in tensors:
        t.zero_grad()
    with ad.Tape() as tape:
        loss = loss_fn()
        tape.backward(loss)
    return [np.zeros_like(t.values) if t.grad is None else t.grad.copy()
            for t in tensors]


def max_rel_err(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-8)
    return float(np.max(np.abs(a - b) / denom)) if a.size else 0.0


def check_gradients(build_loss, tensors, step=1e-6, tol=1e-4):
    """Assert analytic and central-difference gradients agree.

    build_loss() -> Tensor when run under a tape; its scalar value is used
    for the finite differences.
    """
    analytic = analytic_gradients(build_loss, tensors)
    numeric = finite_difference(lambda: build_loss().item(), tensors, step)
    worst = max(max_rel_err(a, n) for a, n in zip(analytic, numeric))
    assert worst < tol, f"gradient mismatch: max relative error {worst:.3e}"
    return worst
