import numpy as np
import pytest

from heartseg import autodiff as ad


def gradcheck(make_loss, tensors, n_coords=120, eps=1e-5, rtol=1e-4, atol=1e-8, seed=0):
    """Compare tape gradients against central finite differences.

    make_loss() must rebuild the scalar loss from the given tensors each
    call. Samples up to n_coords coordinates across all tensors; each must
    agree within rtol relative (or atol absolute for near-zero pairs).
    Returns the number of coordinates checked.
    """
    tape = ad.Tape()
    with ad.recording(tape):
        loss = make_loss()
    for t in tensors:
        t.zero_grad()
    ad.backward(tape, loss)
    analytic = []
    for t in tensors:
        assert t.grad is not None, "parameter received no gradient"
        analytic.append(np.array(t.grad, copy=True))

    rng = np.random.default_rng(seed)
    sizes = [t.data.size for t in tensors]
    total = sum(sizes)
    picks = rng.choice(total, size=min(n_coords, total), replace=False)
    for flat in picks:
        ti, fc = 0, int(flat)
        while fc >= sizes[ti]:
            fc -= sizes[ti]
            ti += 1
        t = tensors[ti]
        orig = t.data.flat[fc]
        t.data.flat[fc] = orig + eps
        fp = float(make_loss().data)
        t.data.flat[fc] = orig - eps
        fm = float(make_loss().data)
        t.data.flat[fc] = orig
        fd = (fp - fm) / (2.0 * eps)
        an = analytic[ti].flat[fc]
        err = abs(fd - an)
        denom = max(abs(fd), abs(an))
        assert err < atol or err / denom < rtol, (
            f"gradient mismatch at tensor {ti} coord {fc}: "
            f"finite-difference {fd!r} vs analytic {an!r}"
        )
    return len(picks)


def projection_loss(out, seed=1):
    """Reduce a tensor op output to a scalar through a fixed random projection."""
    r = np.random.default_rng(seed).standard_normal(out.data.size)
    flat = ad.reshape(out, (1, out.data.size))
    w = ad.Tensor(r.reshape(-1, 1))
    b = ad.Tensor(np.zeros(1))
    return ad.reshape(ad.linear(flat, w, b), ())


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
