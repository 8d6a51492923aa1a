"""Pure-numpy implementations of the hot numeric kernels.

This is the reference backend: the compiled extension must agree with these
functions to floating-point reduction-order differences (~1e-15 relative).
All functions accept C-contiguous arrays; `affine`/`affine_backward` work for
any float dtype, which is what backs the optional float32 mode.
"""

NAME = "python"


def affine(x, w, b):
    """y = x @ w.T + b for a batch x of shape (B, N), w of shape (M, N)."""
    return x @ w.T + b


def affine_backward(gy, x, w):
    """Gradients of `affine`: returns (gx, gw, gb).

    gw is dense — it is the derivative with respect to the raw weight array,
    deliberately ignoring any mask applied to the stored values.
    """
    return gy @ w, gy.T @ x, gy.sum(axis=0)


def momentum_update(value, velocity, grad, mask, lr, momentum):
    """In-place classical momentum step: v ← μv + g; value ← value − ηv.

    When `mask` is given, masked-out entries of `value` are forced back to
    zero afterwards (velocity is left dense on purpose).
    """
    velocity *= momentum
    velocity += grad
    value -= lr * velocity
    if mask is not None:
        value *= mask
