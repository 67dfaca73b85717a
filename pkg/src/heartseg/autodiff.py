"""Minimal reverse-mode autodiff on numpy arrays.

Design: a `Tensor` wraps a float64 ndarray; operations run eagerly and, when
a `Tape` is active, append (output, inputs, backward_fn) records in execution
order. `backward` walks the tape in reverse, which is automatically a
topological order, and accumulates gradients into the `.grad` of every
`requires_grad` leaf it reaches.

The op set is exactly what the segmentation network needs; there is no
broadcasting engine. Shapes follow the conventions
  conv1d:  x[N, C, T],    w[out, in, k]
  conv2d:  x[N, C, H, W], w[out, in, kh, kw]
  bilstm:  x[N, T, D] -> [N, T, 2*hidden]
Composite losses defined elsewhere participate by calling `record` with a
hand-written backward. Tapes are single-threaded; distinct threads see
distinct active-tape stacks.
"""

from __future__ import annotations

import threading
from contextlib import contextmanager
from dataclasses import dataclass

import numpy as np


class Tensor:
    """An ndarray with an optional gradient slot."""

    __slots__ = ("data", "grad", "requires_grad")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad = None

    @property
    def shape(self):
        return self.data.shape

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


class Tape:
    """Ordered record of operations for reverse traversal."""

    def __init__(self):
        self.records = []  # (output Tensor, input Tensors, backward fn)

    def __len__(self):
        return len(self.records)


_LOCAL = threading.local()


def _stack():
    if not hasattr(_LOCAL, "stack"):
        _LOCAL.stack = []
    return _LOCAL.stack


def active_tape():
    stack = _stack()
    return stack[-1] if stack else None


@contextmanager
def recording(tape: Tape):
    """Make `tape` the active tape inside the context."""
    _stack().append(tape)
    try:
        yield tape
    finally:
        _stack().pop()


def record(output: Tensor, inputs, backward_fn):
    """Append one op record to the active tape (no-op when none is active).

    backward_fn(output_grad) must return one gradient array (or None) per
    entry of `inputs`, aligned positionally.
    """
    tape = active_tape()
    if tape is not None:
        tape.records.append((output, tuple(inputs), backward_fn))


def backward(tape: Tape, loss: Tensor):
    """Accumulate d(loss)/d(leaf) into each requires_grad leaf on the tape.

    Returns a dict mapping those leaf Tensors to their gradient arrays.
    """
    if loss.data.size != 1:
        raise ValueError("backward expects a scalar loss")
    grads = {id(loss): np.ones_like(loss.data)}
    owners = {id(loss): loss}
    for out, inputs, fn in reversed(tape.records):
        g_out = grads.pop(id(out), None)
        owners.pop(id(out), None)
        if g_out is None:
            continue
        for t, g in zip(inputs, fn(g_out)):
            if g is None or not isinstance(t, Tensor):
                continue
            key = id(t)
            if key in grads:
                grads[key] = grads[key] + g
            else:
                grads[key] = g
                owners[key] = t
    leaf_grads = {}
    for key, g in grads.items():
        t = owners[key]
        if t.requires_grad:
            t.grad = g if t.grad is None else t.grad + g
            leaf_grads[t] = t.grad
    return leaf_grads


def _sigmoid(z):
    return 0.5 * (np.tanh(0.5 * z) + 1.0)


# ---------------------------------------------------------------------------
# elementwise and shape ops


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape != b.data.shape:
        raise ValueError(f"add shape mismatch {a.data.shape} vs {b.data.shape}")
    out = Tensor(a.data + b.data)
    record(out, (a, b), lambda g: (g, g))
    return out


#: Residual connections are a plain elementwise sum.
residual_add = add


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    out = Tensor(np.where(mask, x.data, 0.0))
    record(out, (x,), lambda g: (g * mask,))
    return out


def reshape(x: Tensor, shape) -> Tensor:
    orig = x.data.shape
    out = Tensor(x.data.reshape(shape))
    record(out, (x,), lambda g: (g.reshape(orig),))
    return out


def permute(x: Tensor, axes) -> Tensor:
    inv = tuple(np.argsort(axes))
    out = Tensor(np.transpose(x.data, axes))
    record(out, (x,), lambda g: (np.transpose(g, inv),))
    return out


def mean_last(x: Tensor) -> Tensor:
    """Average over the trailing axis."""
    w = x.data.shape[-1]
    out = Tensor(x.data.mean(axis=-1))
    record(out, (x,), lambda g: (np.repeat(g[..., None], w, axis=-1) / w,))
    return out


def softmax_logits(x: Tensor) -> Tensor:
    """Numerically stable softmax over the trailing axis."""
    z = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=-1, keepdims=True)
    out = Tensor(p)

    def bwd(g):
        return (p * (g - (g * p).sum(axis=-1, keepdims=True)),)

    record(out, (x,), bwd)
    return out


# ---------------------------------------------------------------------------
# linear / convolutional ops


def linear(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """x[..., D] @ w[D, K] + b[K]."""
    out = Tensor(x.data @ w.data + b.data)

    def bwd(g):
        gx = g @ w.data.T
        gw = x.data.reshape(-1, x.data.shape[-1]).T @ g.reshape(-1, g.shape[-1])
        gb = g.reshape(-1, g.shape[-1]).sum(axis=0)
        return gx, gw, gb

    record(out, (x, w, b), bwd)
    return out


def conv1d_dilated(x: Tensor, w: Tensor, b: Tensor, dilation: int = 1) -> Tensor:
    """Dilated 1-D convolution with symmetric zero padding.

    Pads dilation*(kernel-1)/2 zeros on each side so the output keeps the
    input's temporal length regardless of dilation.
    """
    n, c_in, t = x.data.shape
    c_out, c_in_w, k = w.data.shape
    if c_in != c_in_w:
        raise ValueError(f"conv1d channel mismatch: input {c_in}, kernel {c_in_w}")
    if k % 2 == 0:
        raise ValueError("conv1d kernel size must be odd")
    if dilation < 1:
        raise ValueError("dilation must be >= 1")
    pad = dilation * (k - 1) // 2
    xp = np.pad(x.data, ((0, 0), (0, 0), (pad, pad)))
    # Gather the k dilated taps once so each sample is a single matrix product.
    xcat = np.concatenate(
        [xp[:, :, kk * dilation : kk * dilation + t] for kk in range(k)], axis=1
    )  # [N, k*C_in, T]
    wcat = np.concatenate([w.data[:, :, kk] for kk in range(k)], axis=1)  # [C_out, k*C_in]
    y = np.matmul(wcat, xcat)
    y += b.data[None, :, None]
    out = Tensor(y)

    def bwd(g):
        gwcat = np.matmul(g, xcat.transpose(0, 2, 1)).sum(axis=0)
        gw = np.stack([gwcat[:, kk * c_in : (kk + 1) * c_in] for kk in range(k)], axis=2)
        gxcat = np.matmul(wcat.T, g)
        gxp = np.zeros_like(xp)
        for kk in range(k):
            gxp[:, :, kk * dilation : kk * dilation + t] += gxcat[
                :, kk * c_in : (kk + 1) * c_in
            ]
        gx = gxp[:, :, pad : pad + t] if pad else gxp
        gb = g.sum(axis=(0, 2))
        return gx, gw, gb

    record(out, (x, w, b), bwd)
    return out


def instance_norm(x: Tensor, eps: float = 1e-5) -> Tensor:
    """Per-sample, per-channel normalization over time.

    Subtracts the channel mean and divides by sqrt(biased variance + eps);
    no learned affine terms.
    """
    if x.data.ndim != 3:
        raise ValueError("instance_norm expects [N, C, T]")
    mu = x.data.mean(axis=2, keepdims=True)
    var = x.data.var(axis=2, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv
    out = Tensor(xhat)

    def bwd(g):
        gm = g.mean(axis=2, keepdims=True)
        gxm = (g * xhat).mean(axis=2, keepdims=True)
        return (inv * (g - gm - xhat * gxm),)

    record(out, (x,), bwd)
    return out


def _same_pad(size: int, kernel: int, stride: int):
    total = max((-(size // -stride) - 1) * stride + kernel - size, 0)
    return total // 2, total - total // 2


def conv2d(x: Tensor, w: Tensor, b: Tensor, stride_w: int = 1) -> Tensor:
    """2-D convolution: same-padded along H, stride `stride_w` along W.

    W is padded so the output width is ceil(W / stride_w); H keeps its size.
    """
    n, c_in, h, wid = x.data.shape
    c_out, c_in_w, kh, kw = w.data.shape
    if c_in != c_in_w:
        raise ValueError(f"conv2d channel mismatch: input {c_in}, kernel {c_in_w}")
    if kh % 2 == 0:
        raise ValueError("conv2d kernel height must be odd")
    ph = (kh - 1) // 2
    out_w = -(wid // -stride_w)
    pw_l, pw_r = _same_pad(wid, kw, stride_w)
    xp = np.pad(x.data, ((0, 0), (0, 0), (ph, ph), (pw_l, pw_r)))
    span = stride_w * (out_w - 1) + 1
    taps = [(i, j) for i in range(kh) for j in range(kw)]
    # One gathered tap block per kernel position, flattened over space.
    xcat = np.concatenate(
        [xp[:, :, i : i + h, j : j + span : stride_w] for i, j in taps], axis=1
    ).reshape(n, kh * kw * c_in, h * out_w)
    wcat = np.concatenate([w.data[:, :, i, j] for i, j in taps], axis=1)
    y = np.matmul(wcat, xcat)
    y += b.data[None, :, None]
    out = Tensor(y.reshape(n, c_out, h, out_w))

    def bwd(g):
        g2 = g.reshape(n, c_out, h * out_w)
        gwcat = np.matmul(g2, xcat.transpose(0, 2, 1)).sum(axis=0)
        gw = np.empty_like(w.data)
        gxcat = np.matmul(wcat.T, g2).reshape(n, len(taps), c_in, h, out_w)
        gxp = np.zeros_like(xp)
        for t_i, (i, j) in enumerate(taps):
            gw[:, :, i, j] = gwcat[:, t_i * c_in : (t_i + 1) * c_in]
            gxp[:, :, i : i + h, j : j + span : stride_w] += gxcat[:, t_i]
        gx = gxp[:, :, ph : ph + h, pw_l : pw_l + wid]
        gb = g.sum(axis=(0, 2, 3))
        return gx, gw, gb

    record(out, (x, w, b), bwd)
    return out


# ---------------------------------------------------------------------------
# recurrent op


@dataclass
class LstmParams:
    """One direction's weights: wx[D, 4H], wh[H, 4H], bias[4H].

    Gate order along the 4H axis is input, forget, cell, output.
    """

    wx: Tensor
    wh: Tensor
    bias: Tensor


def _lstm_scan(xs, wx, wh, b):
    """Forward scan over time-major xs[T, N, D]; returns outputs and caches."""
    t_len, n, _ = xs.shape
    hidden = wh.shape[0]
    pre_x = xs @ wx + b
    hs = np.zeros((t_len, n, hidden))
    cache = {
        "i": np.empty((t_len, n, hidden)),
        "f": np.empty((t_len, n, hidden)),
        "g": np.empty((t_len, n, hidden)),
        "o": np.empty((t_len, n, hidden)),
        "c": np.empty((t_len, n, hidden)),
        "tc": np.empty((t_len, n, hidden)),
    }
    h = np.zeros((n, hidden))
    c = np.zeros((n, hidden))
    for t in range(t_len):
        pre = pre_x[t] + h @ wh
        i = _sigmoid(pre[:, :hidden])
        f = _sigmoid(pre[:, hidden : 2 * hidden])
        g = np.tanh(pre[:, 2 * hidden : 3 * hidden])
        o = _sigmoid(pre[:, 3 * hidden :])
        c = f * c + i * g
        tc = np.tanh(c)
        h = o * tc
        hs[t] = h
        for k, v in zip(("i", "f", "g", "o", "c", "tc"), (i, f, g, o, c, tc)):
            cache[k][t] = v
    return hs, cache


def _lstm_scan_backward(xs, hs, cache, wx, wh, gh):
    """BPTT for one direction; gh is the output gradient [T, N, H]."""
    t_len, n, d = xs.shape
    hidden = wh.shape[0]
    i, f, g, o = cache["i"], cache["f"], cache["g"], cache["o"]
    c, tc = cache["c"], cache["tc"]
    dpre = np.empty((t_len, n, 4 * hidden))
    dh_carry = np.zeros((n, hidden))
    dc_carry = np.zeros((n, hidden))
    for t in range(t_len - 1, -1, -1):
        dh = gh[t] + dh_carry
        do = dh * tc[t]
        dc = dc_carry + dh * o[t] * (1.0 - tc[t] ** 2)
        di = dc * g[t]
        dg = dc * i[t]
        c_prev = c[t - 1] if t > 0 else np.zeros((n, hidden))
        df = dc * c_prev
        dc_carry = dc * f[t]
        dpre[t, :, :hidden] = di * i[t] * (1.0 - i[t])
        dpre[t, :, hidden : 2 * hidden] = df * f[t] * (1.0 - f[t])
        dpre[t, :, 2 * hidden : 3 * hidden] = dg * (1.0 - g[t] ** 2)
        dpre[t, :, 3 * hidden :] = do * o[t] * (1.0 - o[t])
        dh_carry = dpre[t] @ wh.T
    gx = dpre @ wx.T
    dpre_flat = dpre.reshape(-1, 4 * hidden)
    gwx = xs.reshape(-1, d).T @ dpre_flat
    h_prev = np.concatenate([np.zeros((1, n, hidden)), hs[:-1]], axis=0)
    gwh = h_prev.reshape(-1, hidden).T @ dpre_flat
    gb = dpre.sum(axis=(0, 1))
    return gx, gwx, gwh, gb


def bilstm(x: Tensor, fwd: LstmParams, bwd_params: LstmParams) -> Tensor:
    """Bidirectional LSTM over x[N, T, D]; returns [N, T, 2H].

    Both directions start from zero states; their outputs are concatenated
    (forward first) along the feature axis.
    """
    xs = np.ascontiguousarray(np.swapaxes(x.data, 0, 1))  # [T, N, D]
    hs_f, cache_f = _lstm_scan(xs, fwd.wx.data, fwd.wh.data, fwd.bias.data)
    xs_r = xs[::-1]
    hs_b, cache_b = _lstm_scan(xs_r, bwd_params.wx.data, bwd_params.wh.data, bwd_params.bias.data)
    hidden = fwd.wh.data.shape[0]
    out_tm = np.concatenate([hs_f, hs_b[::-1]], axis=2)  # [T, N, 2H]
    out = Tensor(np.swapaxes(out_tm, 0, 1))

    def bwd(g):
        g_tm = np.swapaxes(g, 0, 1)
        gx_f, gwx_f, gwh_f, gb_f = _lstm_scan_backward(
            xs, hs_f, cache_f, fwd.wx.data, fwd.wh.data, g_tm[:, :, :hidden]
        )
        gx_b, gwx_b, gwh_b, gb_b = _lstm_scan_backward(
            xs_r,
            hs_b,
            cache_b,
            bwd_params.wx.data,
            bwd_params.wh.data,
            np.ascontiguousarray(g_tm[::-1, :, hidden:]),
        )
        gx = np.swapaxes(gx_f + gx_b[::-1], 0, 1)
        return gx, gwx_f, gwh_f, gb_f, gwx_b, gwh_b, gb_b

    record(out, (x, fwd.wx, fwd.wh, fwd.bias, bwd_params.wx, bwd_params.wh, bwd_params.bias), bwd)
    return out
