"""Reverse-mode differentiable tensors on top of numpy.

Operations are recorded on the innermost active :class:`Tape` whenever at
least one operand requires a gradient.  Outside a tape nothing is recorded,
which is the fast path used for acting and target computation::

    x = Tensor(np.ones(3), requires_grad=True)
    with Tape() as tape:
        loss = sum(x * x)
    grads = tape.backward(loss)   # grads[x] == 2 * x.data
"""
from __future__ import annotations

import threading

import numpy as np

from .errors import ContractError, DimensionError, DomainError, NumericError

DTYPE = np.float64

_local = threading.local()


def _tape_stack():
    stack = getattr(_local, "stack", None)
    if stack is None:
        stack = _local.stack = []
    return stack


def active_tape():
    stack = _tape_stack()
    return stack[-1] if stack else None


class Tensor:
    """An n-dimensional float64 array with an optional gradient slot."""

    __slots__ = ("data", "requires_grad", "grad", "__weakref__")

    def __init__(self, data, requires_grad=False):
        arr = np.asarray(data, dtype=DTYPE)
        if any(d < 1 for d in arr.shape):
            raise DimensionError(f"tensor shape entries must be >= 1, got {arr.shape}")
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def detach(self):
        return Tensor(self.data)

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return take(self, index)

    @property
    def T(self):
        return transpose(self)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


class Tape:
    """Ordered record of primitive operations for one forward pass.

    Use as a context manager; tapes nest, and ops go to the innermost one.
    """

    def __init__(self):
        self.records = []

    def __enter__(self):
        _tape_stack().append(self)
        return self

    def __exit__(self, *exc):
        _tape_stack().pop()
        return False

    def __len__(self):
        return len(self.records)

    def record(self, out, inputs, backward_fn):
        self.records.append((out, inputs, backward_fn))

    def backward(self, loss):
        return backward(self, loss)


def backward(tape, loss):
    """Propagate d(loss)/d(.) through ``tape`` in reverse recording order.

    Gradients are accumulated into ``.grad`` of every requires_grad leaf and
    also returned as a dict keyed by tensor identity.  Recording order is a
    topological order, so the reverse sweep visits each op exactly once after
    all of its consumers.
    """
    if loss.data.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    grads = {id(loss): np.ones_like(loss.data)}
    owners = {id(loss): loss}
    for out, inputs, fn in reversed(tape.records):
        g = grads.pop(id(out), None)
        owners.pop(id(out), None)
        if g is None:
            continue
        in_grads = fn(g)
        for t, gi in zip(inputs, in_grads):
            if gi is None or not t.requires_grad:
                continue
            key = id(t)
            prev = grads.get(key)
            if prev is None:
                grads[key] = gi
                owners[key] = t
            else:
                grads[key] = prev + gi
    # what remains belongs to leaves: records are in topological order, so
    # every produced tensor was popped before any of its inputs were reached
    result = GradMap()
    for key, t in owners.items():
        g = grads[key]
        t.grad = g if t.grad is None else t.grad + g
        result[t] = g
    return result


class GradMap(dict):
    """dict Tensor -> ndarray; missing tensors have zero gradient."""

    def get_grad(self, t):
        g = self.get(t)
        return np.zeros_like(t.data) if g is None else g


def _record(out_data, inputs, backward_fn):
    stack = getattr(_local, "stack", None)
    tape = stack[-1] if stack else None
    needs = False
    if tape is not None:
        for t in inputs:
            if t.requires_grad:
                needs = True
                break
    out = Tensor.__new__(Tensor)
    out.data = out_data
    out.requires_grad = needs
    out.grad = None
    if needs:
        tape.record(out, inputs, backward_fn)
    return out


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    ndiff = g.ndim - len(shape)
    if ndiff > 0:
        g = g.sum(axis=tuple(range(ndiff)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _check_broadcast(a, b, name):
    if a.shape == b.shape:
        return
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise DimensionError(f"{name}: incompatible shapes {a.shape} and {b.shape}") from None


# ---------------------------------------------------------------- binary ops


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "add")
    sa, sb = a.shape, b.shape
    return _record(a.data + b.data, (a, b),
                   lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "sub")
    sa, sb = a.shape, b.shape
    return _record(a.data - b.data, (a, b),
                   lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)))


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "mul")
    ad, bd = a.data, b.data
    return _record(ad * bd, (a, b),
                   lambda g: (_unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)))


def matmul(a, b):
    """Matrix product of 2-D (or batched 3-D @ 2-D) operands."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 1 or b.ndim != 2 or a.shape[-1] != b.shape[0]:
        raise DimensionError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    ad, bd = a.data, b.data

    def fn(g):
        da = g @ bd.T if a.requires_grad else None
        db = None
        if b.requires_grad:
            db = ad.reshape(-1, ad.shape[-1]).T @ g.reshape(-1, g.shape[-1])
        return da, db

    return _record(ad @ bd, (a, b), fn)


# ---------------------------------------------------------------- unary ops


def neg(a):
    a = as_tensor(a)
    return _record(-a.data, (a,), lambda g: (-g,))


def scale(a, c):
    a = as_tensor(a)
    c = float(c)
    return _record(a.data * c, (a,), lambda g: (g * c,))


def tanh(a):
    a = as_tensor(a)
    y = np.tanh(a.data)
    return _record(y, (a,), lambda g: (g * (1.0 - y * y),))


def relu(a):
    a = as_tensor(a)
    mask = a.data > 0
    return _record(np.where(mask, a.data, 0.0), (a,), lambda g: (g * mask,))


def sigmoid(a):
    a = as_tensor(a)
    x = a.data
    # split on sign so neither branch overflows
    e = np.exp(-np.abs(x))
    y = np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    return _record(y, (a,), lambda g: (g * y * (1.0 - y),))


def exp(a):
    a = as_tensor(a)
    y = np.exp(a.data)
    return _record(y, (a,), lambda g: (g * y,))


def log(a):
    a = as_tensor(a)
    if np.any(a.data <= 0):
        raise DomainError("log of non-positive value")
    x = a.data
    return _record(np.log(x), (a,), lambda g: (g / x,))


def absolute(a):
    a = as_tensor(a)
    s = np.sign(a.data)
    return _record(np.abs(a.data), (a,), lambda g: (g * s,))


def clip(a, lo, hi):
    """Clamp values; gradient passes only where the value was not clipped."""
    a = as_tensor(a)
    x = a.data
    inside = (x >= lo) & (x <= hi)
    return _record(np.clip(x, lo, hi), (a,), lambda g: (g * inside,))


_ELEMENTWISE = {
    "add": add, "sub": sub, "mul": mul, "tanh": tanh, "relu": relu,
    "sigmoid": sigmoid, "log": log, "neg": neg, "scale": scale, "exp": exp,
    "abs": absolute,
}


def elementwise(op, *inputs):
    """Dispatch a pointwise op by name, e.g. ``elementwise("tanh", x)``."""
    try:
        fn = _ELEMENTWISE[op]
    except KeyError:
        raise ContractError(f"unknown elementwise op {op!r}") from None
    return fn(*inputs)


# ---------------------------------------------------------------- reductions and shape


def sum(a, axis=None, keepdims=False):  # noqa: A001 - mirrors numpy
    a = as_tensor(a)
    shape = a.shape
    y = a.data.sum(axis=axis, keepdims=keepdims)

    def fn(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return _record(np.asarray(y, dtype=DTYPE), (a,), fn)


def mean(a, axis=None, keepdims=False):
    a = as_tensor(a)
    n = a.size if axis is None else np.prod([a.shape[i] for i in np.atleast_1d(axis)])
    return scale(sum(a, axis=axis, keepdims=keepdims), 1.0 / n)


def reshape(a, shape):
    a = as_tensor(a)
    old = a.shape
    return _record(a.data.reshape(shape), (a,), lambda g: (g.reshape(old),))


def transpose(a, axes=None):
    a = as_tensor(a)
    inv = None if axes is None else np.argsort(axes)
    return _record(np.transpose(a.data, axes), (a,), lambda g: (np.transpose(g, inv),))


def take(a, index):
    """Basic or advanced indexing; repeated indices accumulate gradient."""
    a = as_tensor(a)
    shape = a.shape
    parts = index if isinstance(index, tuple) else (index,)
    basic = all(isinstance(i, (int, np.integer, slice)) or i is Ellipsis or i is None for i in parts)

    def fn(g):
        out = np.zeros(shape)
        if basic:
            out[index] = g
        else:
            np.add.at(out, index, g)
        return (out,)

    return _record(np.asarray(a.data[index], dtype=DTYPE), (a,), fn)


def concat(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    try:
        y = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as e:
        raise DimensionError(f"concat: {e}") from None
    splits = np.cumsum(sizes)[:-1]
    return _record(y, tuple(tensors), lambda g: tuple(np.split(g, splits, axis=axis)))


def stack(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    try:
        y = np.stack([t.data for t in tensors], axis=axis)
    except ValueError as e:
        raise DimensionError(f"stack: {e}") from None
    n = len(tensors)
    return _record(y, tuple(tensors),
                   lambda g: tuple(np.take(g, i, axis=axis) for i in range(n)))


def pad2d(a, pad):
    """Zero-pad the last two axes by ``pad`` on every side."""
    a = as_tensor(a)
    if pad == 0:
        return a
    widths = [(0, 0)] * (a.ndim - 2) + [(pad, pad), (pad, pad)]
    return _record(np.pad(a.data, widths), (a,), lambda g: (g[..., pad:-pad, pad:-pad],))


def upsample2d(a, factor=2):
    """Nearest-neighbour upsampling of the last two axes."""
    a = as_tensor(a)
    y = a.data.repeat(factor, axis=-2).repeat(factor, axis=-1)

    def fn(g):
        s = g.shape
        g = g.reshape(s[:-2] + (s[-2] // factor, factor, s[-1] // factor, factor))
        return (g.sum(axis=(-3, -1)),)

    return _record(y, (a,), fn)


def dropout(a, rate, rng):
    """Inverted dropout; mask drawn from ``rng``."""
    a = as_tensor(a)
    if rate <= 0:
        return a
    keep = (rng.random(a.shape) >= rate) / (1.0 - rate)
    return _record(a.data * keep, (a,), lambda g: (g * keep,))


def softmax(logits, axis=-1):
    """Numerically stable softmax along ``axis``."""
    x = as_tensor(logits)
    if not np.all(np.isfinite(x.data)):
        raise NumericError("softmax input contains NaN or Inf")
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=axis, keepdims=True)

    def fn(g):
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return _record(y, (x,), fn)


# ---------------------------------------------------------------- convolution


def conv2d(x, kernels, stride=1):
    """Valid cross-correlation.

    ``x`` is ``[C, H, W]`` or batched ``[B, C, H, W]``; ``kernels`` is
    ``[F, C, kh, kw]``.  Output is ``[F, H', W']`` (or ``[B, F, H', W']``)
    with ``H' = (H - kh) // stride + 1``.
    """
    x, k = as_tensor(x), as_tensor(kernels)
    if stride < 1:
        raise ContractError("stride must be a positive integer")
    unbatched = x.ndim == 3
    xd = x.data[None] if unbatched else x.data
    if xd.ndim != 4 or k.ndim != 4:
        raise DimensionError(f"conv2d: expected [B,C,H,W] and [F,C,kh,kw], got {x.shape} and {k.shape}")
    B, C, H, W = xd.shape
    F, Ck, kh, kw = k.shape
    if Ck != C:
        raise DimensionError(f"conv2d: input has {C} channels, kernels expect {Ck}")
    if kh > H or kw > W:
        raise DimensionError(f"conv2d: kernel {kh}x{kw} larger than input {H}x{W}")
    Ho = (H - kh) // stride + 1
    Wo = (W - kw) // stride + 1
    hs = stride * (Ho - 1) + 1
    ws = stride * (Wo - 1) + 1
    # Sum of kh*kw shifted matmuls in channel-last layout; much faster than
    # materialising the im2col matrix for the small kernels used here.
    xl = np.ascontiguousarray(xd.transpose(0, 2, 3, 1))
    kl = np.ascontiguousarray(k.data.transpose(2, 3, 1, 0))        # [kh, kw, C, F]
    yl = np.zeros((B, Ho, Wo, F))
    for i in range(kh):
        for j in range(kw):
            yl += xl[:, i:i + hs:stride, j:j + ws:stride, :] @ kl[i, j]
    y = yl.transpose(0, 3, 1, 2)
    if unbatched:
        y = y[0]

    def fn(g):
        g4 = g[None] if unbatched else g
        gl = np.ascontiguousarray(g4.transpose(0, 2, 3, 1))
        dk = None
        if k.requires_grad:
            dkl = np.empty_like(kl)
            for i in range(kh):
                for j in range(kw):
                    dkl[i, j] = np.tensordot(xl[:, i:i + hs:stride, j:j + ws:stride, :], gl,
                                             axes=([0, 1, 2], [0, 1, 2]))
            dk = dkl.transpose(3, 2, 0, 1)
        if not x.requires_grad:
            return None, dk
        dxl = np.zeros_like(xl)
        for i in range(kh):
            for j in range(kw):
                dxl[:, i:i + hs:stride, j:j + ws:stride, :] += gl @ kl[i, j].T
        dx = dxl.transpose(0, 3, 1, 2)
        return (dx[0] if unbatched else dx), dk

    return _record(np.ascontiguousarray(y), (x, k), fn)


def conv1d(x, kernels, stride=1):
    """Valid 1-D cross-correlation: ``[B, C, W]`` x ``[F, C, k]`` -> ``[B, F, W']``."""
    x, k = as_tensor(x), as_tensor(kernels)
    y = conv2d(reshape(x, x.shape[:-1] + (1, x.shape[-1])),
               reshape(k, k.shape[:2] + (1, k.shape[2])), stride)
    return reshape(y, y.shape[:-2] + (y.shape[-1],))


# ---------------------------------------------------------------- finite differences


def numerical_gradient(fn, t, h=1e-5):
    """Central differences of scalar ``fn()`` w.r.t. every entry of ``t``."""
    flat = t.data.reshape(-1)
    out = np.zeros_like(flat)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = float(fn().data)
        flat[i] = orig - h
        fm = float(fn().data)
        flat[i] = orig
        out[i] = (fp - fm) / (2 * h)
    return out.reshape(t.shape)


def relative_error(a, b):
    """``|a - b| / max(|a| + |b|, tiny)`` using Euclidean norms."""
    a = np.asarray(a, dtype=DTYPE).ravel()
    b = np.asarray(b, dtype=DTYPE).ravel()
    denom = max(np.linalg.norm(a) + np.linalg.norm(b), 1e-12)
    return float(np.linalg.norm(a - b) / denom)


def gradient_check(fn, tensors, h=1e-5):
    """Compare tape gradients of scalar ``fn()`` with central differences.

    Returns the worst relative error over ``tensors``.  ``fn`` must rebuild
    its graph from the current ``.data`` of the inputs on each call.
    """
    with Tape() as tape:
        loss = fn()
    grads = tape.backward(loss)
    worst = 0.0
    for t in tensors:
        num = numerical_gradient(fn, t, h)
        worst = max(worst, relative_error(grads.get_grad(t), num))
    return worst
