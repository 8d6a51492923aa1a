"""Independent oracles shared across the test suite.

Everything here is deliberately written against the raw arrays (explicit
Python loops, sorted lists) rather than through the library's own kernels,
so agreement is meaningful.
"""

import math

import numpy as np

from growprune import tape as T
from growprune.models import forward_batch
from growprune.numerics import MaskedMatrix


def model_loss(model, x, y):
    """Eval-mode mean cross-entropy, recomputed from scratch."""
    tp = T.Tape()
    logits = forward_batch(tp, model, x, "eval")
    loss, _ = T.softmax_cross_entropy_mean(tp, logits, y)
    return float(loss.value)


def analytic_gradients(model, x, y):
    tp = T.Tape()
    logits = forward_batch(tp, model, x, "eval")
    loss, _ = T.softmax_cross_entropy_mean(tp, logits, y)
    tp.backward(loss)
    buf = tp.gradients()
    return {name: buf.mean(name) for name in buf.names()}


def randomize_biases(model, rng, scale=0.3):
    """Move a model to a generic position: nonzero biases keep ReLU inputs off
    their kink, where central differences are undefined."""
    for p in model.parameters().values():
        if not isinstance(p, MaskedMatrix):
            p[:] = scale * rng.standard_normal(p.shape)


def finite_difference_check(model, x, y, n_probes, rng, h=1e-4, tol=1e-4):
    """Max relative error between analytic grads and central differences.

    Probes raw weight entries directly (masks are not re-applied during the
    forward pass), so dormant positions are probed as "what if this
    connection existed at ±h". Assumes a generic position: a pre-activation
    within h of a ReLU kink would make the central difference meaningless.
    """
    grads = analytic_gradients(model, x, y)
    params = model.parameters()
    names = sorted(params)
    worst = 0.0
    for _ in range(n_probes):
        name = names[rng.integers(len(names))]
        p = params[name]
        arr = p.values if isinstance(p, MaskedMatrix) else p
        flat = arr.reshape(-1)
        i = int(rng.integers(flat.size))
        orig = flat[i]
        flat[i] = orig + h
        up = model_loss(model, x, y)
        flat[i] = orig - h
        down = model_loss(model, x, y)
        flat[i] = orig
        fd = (up - down) / (2.0 * h)
        a = grads[name].reshape(-1)[i]
        err = abs(a - fd) / max(abs(a), abs(fd), 1e-4)
        worst = max(worst, err)
    assert worst <= tol, f"finite-difference mismatch: relative error {worst}"
    return worst


def lstm_step_oracle(cell, x_t, h_prev, c_prev):
    """Scalar-loop reimplementation of one recurrent step (no numpy matmuls)."""

    def matvec(matrix, bias, vec):
        m = matrix.values
        out = []
        for r in range(m.shape[0]):
            acc = float(bias[r])
            for c in range(m.shape[1]):
                acc += float(m[r, c]) * float(vec[c])
            out.append(acc)
        return out

    def sig(v):
        return 1.0 / (1.0 + math.exp(-v))

    u = [float(v) for v in x_t] + [float(v) for v in h_prev]
    acts = {}
    for name, gate in cell.gates.items():
        hidden = [max(v, 0.0) for v in matvec(gate.hidden_w, gate.hidden_b, u)]
        acts[name] = matvec(gate.out_w, gate.out_b, hidden)
    width = cell.state_width
    c_t = [sig(acts["f"][j]) * float(c_prev[j]) + sig(acts["i"][j]) * math.tanh(acts["g"][j])
           for j in range(width)]
    h_t = [sig(acts["o"][j]) * math.tanh(c_t[j]) for j in range(width)]
    return np.array(h_t), np.array(c_t)


def grow_oracle(values, mask, avg_grad, alpha, lr):
    """Sorted-list reimplementation of the growth rule."""
    size = values.size
    k = math.ceil(alpha * size)
    mags = sorted((abs(float(g)) for g in avg_grad.reshape(-1)), reverse=True)
    thres = mags[k - 1]
    new_mask = mask.copy()
    new_values = values.copy()
    it = np.ndindex(values.shape)
    for idx in it:
        if abs(float(avg_grad[idx])) > thres:
            new_mask[idx] = 1
    for idx in np.ndindex(values.shape):
        if new_mask[idx]:
            new_values[idx] = new_values[idx] + lr * float(avg_grad[idx])
    return new_values, new_mask


def prune_oracle(values, mask, beta):
    """Sorted-list reimplementation of the pruning rule."""
    active = [idx for idx in np.ndindex(values.shape) if mask[idx]]
    nnz = len(active)
    new_mask = mask.copy()
    new_values = values.copy()
    if nnz == 0:
        return new_values, new_mask
    k = math.ceil(beta * nnz)
    mags = sorted(abs(float(values[idx])) for idx in active)
    thres = math.inf if k >= nnz else mags[k]
    for idx in active:
        if abs(float(values[idx])) < thres:
            new_mask[idx] = 0
            new_values[idx] = 0.0
    return new_values, new_mask
