"""Central finite-difference gradient checks."""

import numpy as np
import torch


def numeric_grad(fn, tensor, eps=1e-5, indices=None):
    """Central differences of scalar ``fn()`` w.r.t. entries of ``tensor``.

    ``tensor`` is perturbed in place and restored. ``indices`` restricts the
    probe to a subset of flat positions.
    """
    flat = tensor.data.view(-1)
    if indices is None:
        indices = range(flat.numel())
    out = []
    with torch.no_grad():
        for i in indices:
            orig = flat[i].item()
            flat[i] = orig + eps
            f_plus = float(fn())
            flat[i] = orig - eps
            f_minus = float(fn())
            flat[i] = orig
            out.append((f_plus - f_minus) / (2 * eps))
    return np.array(out)


def relative_error(analytic, numeric):
    a = np.asarray(analytic, dtype=np.float64).ravel()
    n = np.asarray(numeric, dtype=np.float64).ravel()
    scale = max(np.linalg.norm(a), np.linalg.norm(n))
    if scale == 0.0:
        return 0.0
    return float(np.linalg.norm(a - n) / scale)


def check_gradients(loss_fn, tensors, eps=1e-5, max_probes=24, seed=0):
    """Compare autograd and finite-difference gradients of ``loss_fn``.

    ``tensors`` maps names to leaf tensors with ``requires_grad``. Returns a
    dict name -> relative error over a random subset of at most
    ``max_probes`` coordinates per tensor.
    """
    for t in tensors.values():
        t.grad = None
    loss = loss_fn()
    loss.backward()
    rng = np.random.default_rng(seed)
    errors = {}
    for name, t in tensors.items():
        n = t.numel()
        idx = np.arange(n) if n <= max_probes else np.sort(rng.choice(n, max_probes, replace=False))
        analytic = (t.grad if t.grad is not None else torch.zeros_like(t)).reshape(-1)[idx]
        numeric = numeric_grad(loss_fn, t, eps, idx)
        errors[name] = relative_error(analytic.detach().cpu().numpy(), numeric)
    return errors
