import numpy as np
import pytest


def rel_err(a, b, floor=1e-6):
    return abs(a - b) / max(abs(a), abs(b), floor)


def fd_gradcheck(loss_fn, tensors, h=1e-5, sample=None, seed=0):
    """Compare analytic gradients of scalar ``loss_fn()`` against central
    finite differences on the given parameter tensors.

    ``loss_fn`` must rebuild the graph from the tensors' current .data.
    ``sample``: check at most this many entries per tensor (None = all).
    Returns the max relative error over all checked entries.
    """
    for t in tensors:
        t.grad = None
    loss = loss_fn()
    loss.backward()
    grads = [t.grad.copy() if t.grad is not None else np.zeros_like(t.data) for t in tensors]
    rng = np.random.default_rng(seed)
    worst = 0.0
    for t, grad in zip(tensors, grads):
        flat = t.data.reshape(-1)
        n = flat.size
        if sample is None or sample >= n:
            idxs = range(n)
        else:
            idxs = rng.choice(n, size=sample, replace=False)
        gflat = grad.reshape(-1)
        for i in idxs:
            orig = flat[i]
            flat[i] = orig + h
            fp = loss_fn().item()
            flat[i] = orig - h
            fm = loss_fn().item()
            flat[i] = orig
            fd = (fp - fm) / (2 * h)
            worst = max(worst, rel_err(gflat[i], fd))
    return worst


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
