import numpy as np

from engine.tensor import backward


def relative_error(analytic, numeric):
    denominator = max(np.linalg.norm(analytic) + np.linalg.norm(numeric), 1e-12)
    return float(np.linalg.norm(analytic - numeric) / denominator)


def numerical_gradient(loss_fn, tensor, step=1e-5, indices=None):
    """
    Central finite differences of the scalar ``loss_fn()`` with respect to
    ``tensor`` (perturbed in place and restored). ``indices`` limits the
    check to selected flat positions; other entries stay zero.
    """
    tensor.data = np.ascontiguousarray(tensor.data)
    flat = tensor.data.reshape(-1)
    grad = np.zeros(flat.shape)
    positions = range(flat.size) if indices is None else indices
    for index in positions:
        original = flat[index]
        flat[index] = original + step
        upper = loss_fn().item()
        flat[index] = original - step
        lower = loss_fn().item()
        flat[index] = original
        grad[index] = (upper - lower) / (2.0 * step)
    return grad.reshape(tensor.shape)


def gradient_check(loss_fn, tensors, step=1e-5, indices=None):
    """
    Largest relative error between analytic and numeric gradients of
    ``loss_fn`` over ``tensors``. ``indices`` optionally maps a tensor to
    the flat positions to check.
    """
    for tensor in tensors:
        tensor.zero_grad()
    grads = backward(loss_fn())
    worst = 0.0
    for tensor in tensors:
        positions = None if indices is None else indices.get(tensor)
        numeric = numerical_gradient(loss_fn, tensor, step=step, indices=positions)
        analytic = grads[tensor]
        if positions is not None:
            mask = np.zeros(tensor.size, dtype=bool)
            mask[list(positions)] = True
            analytic = analytic.reshape(-1)[mask]
            numeric = numeric.reshape(-1)[mask]
        worst = max(worst, relative_error(analytic, numeric))
    return worst
