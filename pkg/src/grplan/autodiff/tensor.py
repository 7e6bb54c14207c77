"""Reverse-mode differentiable tensors backed by numpy.

Every op records its parents and a closure that pushes the output gradient
back to them. Calling :meth:`Tensor.backward` on a scalar walks the recorded
graph in reverse topological order. A leading batch axis is carried through
all ops, so a mini-batch is one tape whose gradients equal the sum of the
per-sample gradients.
"""

from __future__ import annotations

from contextlib import contextmanager

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

DTYPE = np.float64
_dtype = DTYPE


def get_default_dtype():
    return _dtype


@contextmanager
def default_dtype(dtype):
    """Build tensors in ``dtype`` inside the block (float64 outside).

    float32 roughly halves conv time; gradient checks need float64.
    """
    global _dtype
    prev, _dtype = _dtype, np.dtype(dtype).type
    try:
        yield
    finally:
        _dtype = prev


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible."""


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(self, data, requires_grad=False, name=None, _parents=(), _backward=None):
        self.data = np.asarray(data, dtype=_dtype)
        self.grad = None
        self.requires_grad = requires_grad or any(p.requires_grad for p in _parents)
        self._parents = _parents
        self._backward = _backward
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def values(self):
        return self.data.ravel()

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ""
        return f"Tensor{label}(shape={self.shape})"

    def zero_grad(self):
        self.grad = None

    def _accumulate(self, g):
        if not self.requires_grad:
            return
        if self.grad is None:
            self.grad = np.array(g, dtype=_dtype, copy=True)
        else:
            self.grad += g

    def backward(self, grad=None):
        if grad is None:
            if self.data.size != 1:
                raise ShapeError(f"backward() without a seed needs a scalar, got shape {self.shape}")
            grad = np.ones_like(self.data)
        order, seen = [], set()

        def visit(node):
            stack = [(node, False)]
            while stack:
                t, done = stack.pop()
                if done:
                    order.append(t)
                    continue
                if id(t) in seen:
                    continue
                seen.add(id(t))
                stack.append((t, True))
                for p in t._parents:
                    if p.requires_grad and id(p) not in seen:
                        stack.append((p, False))

        visit(self)
        self._accumulate(grad)
        for t in reversed(order):
            if t._backward is not None and t.grad is not None:
                t._backward(t.grad)

    # Arithmetic used when combining losses.
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, scalar):
        return scale(self, float(scalar))

    __rmul__ = __mul__


def kaiming_uniform(rng, shape, fan_in):
    """Uniform(-b, b) with ``b = sqrt(6 / fan_in)``."""
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(g, shape):
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out = Tensor(a.data + b.data, _parents=(a, b))

    def backward(g):
        a._accumulate(_unbroadcast(g, a.shape))
        b._accumulate(_unbroadcast(g, b.shape))

    out._backward = backward
    return out


def scale(a, c):
    out = Tensor(a.data * c, _parents=(a,))
    out._backward = lambda g: a._accumulate(g * c)
    return out


def relu(x):
    mask = x.data > 0
    out = Tensor(x.data * mask, _parents=(x,))
    out._backward = lambda g: x._accumulate(g * mask)
    return out


def reshape(x, shape):
    out = Tensor(x.data.reshape(shape), _parents=(x,))
    out._backward = lambda g: x._accumulate(g.reshape(x.shape))
    return out


def concat(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    data = np.concatenate([t.data for t in tensors], axis=axis)
    out = Tensor(data, _parents=tuple(tensors))
    bounds = np.cumsum([0] + [t.shape[axis] for t in tensors])

    def backward(g):
        for t, lo, hi in zip(tensors, bounds[:-1], bounds[1:]):
            if t.requires_grad:
                index = [slice(None)] * g.ndim
                index[axis] = slice(lo, hi)
                t._accumulate(g[tuple(index)])

    out._backward = backward
    return out


def sum_all(x):
    out = Tensor(x.data.sum(), _parents=(x,))
    out._backward = lambda g: x._accumulate(np.broadcast_to(g, x.shape))
    return out


def mean_all(x):
    n = x.data.size
    out = Tensor(x.data.mean(), _parents=(x,))
    out._backward = lambda g: x._accumulate(np.broadcast_to(g / n, x.shape))
    return out


def affine(x, weight, bias):
    """``x @ weight.T + bias`` for ``x`` of shape (n_in,) or (N, n_in)."""
    if weight.data.ndim != 2 or bias.data.shape != (weight.shape[0],):
        raise ShapeError(f"weight {weight.shape} and bias {bias.shape} do not form an affine map")
    if x.shape[-1] != weight.shape[1]:
        raise ShapeError(f"input width {x.shape[-1]} != weight fan-in {weight.shape[1]}")
    out = Tensor(x.data @ weight.data.T + bias.data, _parents=(x, weight, bias))

    def backward(g):
        g2 = g.reshape(-1, weight.shape[0])
        x2 = x.data.reshape(-1, weight.shape[1])
        if weight.requires_grad:
            weight._accumulate(g2.T @ x2)
        if bias.requires_grad:
            bias._accumulate(g2.sum(axis=0))
        if x.requires_grad:
            x._accumulate((g2 @ weight.data).reshape(x.shape))

    out._backward = backward
    return out


def conv2d(x, kernel, bias, padding="same"):
    """2-D cross-correlation over a (C, H, W) or (N, C, H, W) input."""
    if kernel.data.ndim != 4:
        raise ShapeError(f"kernel must be (C_out, C_in, kh, kw), got {kernel.shape}")
    c_out, c_in, kh, kw = kernel.shape
    if kh % 2 == 0 or kw % 2 == 0:
        raise ShapeError(f"kernel spatial dims must be odd, got {kh}x{kw}")
    if bias.shape != (c_out,):
        raise ShapeError(f"bias shape {bias.shape} != ({c_out},)")
    unbatched = x.data.ndim == 3
    xd = x.data[None] if unbatched else x.data
    if xd.ndim != 4 or xd.shape[1] != c_in:
        raise ShapeError(f"input {x.shape} does not have C_in={c_in} channels")
    n, _, h, w = xd.shape
    if padding == "same":
        ph, pw = kh // 2, kw // 2
    elif padding == "valid":
        ph = pw = 0
        if h < kh or w < kw:
            raise ShapeError(f"input {h}x{w} smaller than kernel {kh}x{kw} with valid padding")
    else:
        raise ValueError(f"unknown padding {padding!r}")
    # im2col in channels-last order so every window row is one contiguous copy.
    xp = np.pad(xd.transpose(0, 2, 3, 1), ((0, 0), (ph, ph), (pw, pw), (0, 0)))
    ho, wo = xp.shape[1] - kh + 1, xp.shape[2] - kw + 1
    cols = sliding_window_view(xp, (kh, kw), axis=(1, 2))  # (n, ho, wo, c, kh, kw)
    cols = cols.transpose(0, 1, 2, 4, 5, 3).reshape(n * ho * wo, kh * kw * c_in)
    kmat = kernel.data.transpose(0, 2, 3, 1).reshape(c_out, -1)
    res = (cols @ kmat.T + bias.data).reshape(n, ho, wo, c_out).transpose(0, 3, 1, 2)
    out = Tensor(res[0] if unbatched else res, _parents=(x, kernel, bias))

    def backward(g):
        g4 = g[None] if unbatched else g
        g2 = g4.transpose(0, 2, 3, 1).reshape(-1, c_out)
        if kernel.requires_grad:
            kernel._accumulate((g2.T @ cols).reshape(c_out, kh, kw, c_in).transpose(0, 3, 1, 2))
        if bias.requires_grad:
            bias._accumulate(g2.sum(axis=0))
        if x.requires_grad:
            # Input gradient is a convolution of the output gradient with the
            # flipped kernel.
            qh, qw = kh - 1 - ph, kw - 1 - pw
            gp = np.pad(g4.transpose(0, 2, 3, 1), ((0, 0), (qh, qh), (qw, qw), (0, 0)))
            gcols = sliding_window_view(gp, (kh, kw), axis=(1, 2))
            gcols = gcols.transpose(0, 1, 2, 4, 5, 3).reshape(n * h * w, kh * kw * c_out)
            kflip = kernel.data[:, :, ::-1, ::-1].transpose(2, 3, 0, 1).reshape(-1, c_in)
            dx = (gcols @ kflip).reshape(n, h, w, c_in).transpose(0, 3, 1, 2)
            x._accumulate(dx[0] if unbatched else dx)

    out._backward = backward
    return out


def window(x, centers, k):
    """Crop a zero-padded k x k window around ``centers`` from (N, C, H, W).

    Returns an (N, C * k * k) tensor, so the width of the result is the same
    for every grid size.
    """
    if k < 1 or k % 2 == 0:
        raise ShapeError(f"window size must be odd and positive, got {k}")
    centers = np.asarray(centers, dtype=np.intp).reshape(-1, 2)
    n, c, h, w = x.shape
    if centers.shape[0] != n:
        raise ShapeError(f"{centers.shape[0]} centers for a batch of {n}")
    r = k // 2
    xp = np.pad(x.data, ((0, 0), (0, 0), (r, r), (r, r))) if r else x.data
    offs = np.arange(k)
    rows = centers[:, 0, None] + offs[None, :]
    cols = centers[:, 1, None] + offs[None, :]
    bidx = np.arange(n)[:, None, None, None]
    cidx = np.arange(c)[None, :, None, None]
    patch = xp[bidx, cidx, rows[:, None, :, None], cols[:, None, None, :]]
    out = Tensor(patch.reshape(n, c * k * k), _parents=(x,))

    def backward(g):
        dxp = np.zeros_like(xp)
        np.add.at(dxp, (bidx, cidx, rows[:, None, :, None], cols[:, None, None, :]), g.reshape(n, c, k, k))
        x._accumulate(dxp[:, :, r:r + h, r:r + w])

    out._backward = backward
    return out


def graph_conv(x, adjacency, weights, theta, bias, activation=True):
    """Graph convolution over first-order neighbourhoods.

    For node i and output channel j::

        pre_ij = sum_s A[s, i] * ([x_s, x_i, W[s, i]] @ theta[:, j] + b_j)

    ``x`` is (B, n, C); ``adjacency`` and ``weights`` are (B, n, n) arrays;
    ``theta`` is (2C + 1, C'). The parameters are independent of n.
    """
    xd = x.data
    if xd.ndim == 2:
        return reshape(graph_conv(reshape(x, (1,) + x.shape), adjacency[None], weights[None],
                                  theta, bias, activation), x.shape[:1] + (theta.shape[1],))
    b_, n, c = xd.shape
    if theta.shape[0] != 2 * c + 1:
        raise ShapeError(f"theta has {theta.shape[0]} rows, expected 2*{c}+1")
    if bias.shape != (theta.shape[1],):
        raise ShapeError(f"bias {bias.shape} does not match theta width {theta.shape[1]}")
    m = np.swapaxes(np.asarray(adjacency, dtype=_dtype), 1, 2)  # m[i, s] = A[s, i]
    wt = np.swapaxes(np.asarray(weights, dtype=_dtype), 1, 2)
    deg = m.sum(axis=2)
    ew = (m * wt).sum(axis=2)
    agg = m @ xd
    selfx = deg[..., None] * xd
    t_nb, t_self, t_w = theta.data[:c], theta.data[c:2 * c], theta.data[2 * c]
    pre = agg @ t_nb + selfx @ t_self + ew[..., None] * t_w + deg[..., None] * bias.data
    mask = pre > 0 if activation else None
    out = Tensor(pre * mask if activation else pre, _parents=(x, theta, bias))

    def backward(g):
        if activation:
            g = g * mask
        if theta.requires_grad:
            dtheta = np.concatenate([
                np.einsum("bnc,bnk->ck", agg, g),
                np.einsum("bnc,bnk->ck", selfx, g),
                np.einsum("bn,bnk->k", ew, g)[None, :],
            ])
            theta._accumulate(dtheta)
        if bias.requires_grad:
            bias._accumulate(np.einsum("bn,bnk->k", deg, g))
        if x.requires_grad:
            dx = np.swapaxes(m, 1, 2) @ (g @ t_nb.T) + deg[..., None] * (g @ t_self.T)
            x._accumulate(dx)

    out._backward = backward
    return out


def log_softmax(z, mask=None):
    z = np.asarray(z, dtype=_dtype)
    if mask is not None:
        z = np.where(mask, z, -np.inf)
    shift = z - z.max(axis=-1, keepdims=True)
    return shift - np.log(np.exp(shift).sum(axis=-1, keepdims=True))


def softmax(z, mask=None):
    return np.exp(log_softmax(z, mask))


def softmax_cross_entropy(logits, labels):
    """Mean cross-entropy of (N, n) or (n,) logits against integer labels.

    Returns ``(loss, probabilities)``; probabilities are a plain array.
    """
    single = logits.data.ndim == 1
    z = logits.data[None] if single else logits.data
    labels = np.atleast_1d(np.asarray(labels, dtype=np.intp))
    n_cls = z.shape[-1]
    if labels.shape[0] != z.shape[0]:
        raise ShapeError(f"{labels.shape[0]} labels for {z.shape[0]} rows")
    if np.any(labels < 0) or np.any(labels >= n_cls):
        raise IndexError(f"label out of range [0, {n_cls})")
    logp = log_softmax(z)
    probs = np.exp(logp)
    rows = np.arange(z.shape[0])
    loss = Tensor(-logp[rows, labels].mean(), _parents=(logits,))

    def backward(g):
        d = probs.copy()
        d[rows, labels] -= 1.0
        d *= g / z.shape[0]
        logits._accumulate(d[0] if single else d)

    loss._backward = backward
    return loss, (probs[0] if single else probs)


def l1_loss(pred, target):
    """Mean absolute error; the subgradient at zero residual is 0."""
    pred = as_tensor(pred)
    t = np.asarray(target, dtype=_dtype)
    diff = pred.data - t
    out = Tensor(np.abs(diff).mean(), _parents=(pred,))
    out._backward = lambda g: pred._accumulate(np.sign(diff) * (g / diff.size))
    return out
