"""Dense float32 tensors with reverse-mode automatic differentiation.

Every op records its parents and a vector-Jacobian-product closure on the
output tensor; ``backward`` walks the graph in reverse topological order
and accumulates gradients into ``.grad`` of every tensor that requires
them.  All data is row-major float32, batch dimension leading.
"""

from __future__ import annotations

import numpy as np

from .errors import ContractError, DimensionError

_grad_enabled = True


class no_grad:
    """Context manager that disables graph recording (inference mode)."""

    def __enter__(self):
        global _grad_enabled
        self._prev = _grad_enabled
        _grad_enabled = False
        return self

    def __exit__(self, *exc):
        global _grad_enabled
        _grad_enabled = self._prev
        return False


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum gradient over broadcast dimensions back to the operand shape."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (gs, s) in enumerate(zip(g.shape, shape)) if s == 1 and gs != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_parents", "_vjp")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float32)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents = ()
        self._vjp = None

    # ---- basic introspection -------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}{flag})"

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = None

    # ---- graph plumbing ------------------------------------------------------

    def backward(self):
        """Reverse-mode sweep from a scalar.  Repeated calls accumulate."""
        if self.data.size != 1:
            raise ContractError(f"backward() requires a scalar, got shape {self.data.shape}")
        order = _toposort(self)
        pending = {id(self): np.ones_like(self.data)}
        for t in reversed(order):
            g = pending.pop(id(t), None)
            if g is None:
                continue
            if t.requires_grad:
                t.grad = g if t.grad is None else t.grad + g
            if t._vjp is None:
                continue
            for parent, pg in zip(t._parents, t._vjp(g)):
                if pg is None:
                    continue
                key = id(parent)
                if key in pending:
                    pending[key] = pending[key] + pg
                else:
                    pending[key] = pg

    # ---- operator sugar ------------------------------------------------------

    def __add__(self, other):
        return add(self, _coerce(other))

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, _coerce(other))

    def __rsub__(self, other):
        return sub(_coerce(other), self)

    def __mul__(self, other):
        return mul(self, _coerce(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, _coerce(other))

    def __rtruediv__(self, other):
        return div(_coerce(other), self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, p):
        return power(self, p)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return getitem(self, key)

    # method aliases used throughout the model code
    def reshape(self, *shape):
        return reshape(self, shape if len(shape) != 1 or isinstance(shape[0], int) else shape[0])

    def swapaxes(self, a, b):
        return swapaxes(self, a, b)

    def transpose(self, *axes):
        return transpose(self, axes or None)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean_(self, axis, keepdims)

    def max(self, axis, keepdims=False):
        return max_(self, axis, keepdims)


class Parameter(Tensor):
    """Trainable leaf tensor; name is assigned by the owning module tree."""

    __slots__ = ("name",)

    def __init__(self, data, name: str | None = None):
        super().__init__(data, requires_grad=True)
        self.name = name


def _coerce(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float32))


def _toposort(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        t, expanded = stack.pop()
        if expanded:
            order.append(t)
            continue
        if id(t) in seen:
            continue
        seen.add(id(t))
        stack.append((t, True))
        for p in t._parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


def _make(data: np.ndarray, parents: tuple, vjp) -> Tensor:
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._vjp = vjp
    return out


# ---- elementwise arithmetic --------------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    return _make(
        a.data + b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)),
    )


def sub(a: Tensor, b: Tensor) -> Tensor:
    return _make(
        a.data - b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.data.shape), _unbroadcast(-g, b.data.shape)),
    )


def mul(a: Tensor, b: Tensor) -> Tensor:
    return _make(
        a.data * b.data,
        (a, b),
        lambda g: (
            _unbroadcast(g * b.data, a.data.shape),
            _unbroadcast(g * a.data, b.data.shape),
        ),
    )


def div(a: Tensor, b: Tensor) -> Tensor:
    return _make(
        a.data / b.data,
        (a, b),
        lambda g: (
            _unbroadcast(g / b.data, a.data.shape),
            _unbroadcast(-g * a.data / (b.data * b.data), b.data.shape),
        ),
    )


def neg(a: Tensor) -> Tensor:
    return _make(-a.data, (a,), lambda g: (-g,))


def power(a: Tensor, p: float) -> Tensor:
    p = float(p)
    out = a.data**p
    return _make(out, (a,), lambda g: (g * p * a.data ** (p - 1.0),))


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return _make(out, (a,), lambda g: (g * out,))


def log(a: Tensor) -> Tensor:
    return _make(np.log(a.data), (a,), lambda g: (g / a.data,))


def sqrt(a: Tensor) -> Tensor:
    out = np.sqrt(a.data)
    return _make(out, (a,), lambda g: (g * (0.5 / out),))


def _sigmoid_raw(x: np.ndarray) -> np.ndarray:
    # two-branch form never exponentiates a positive argument
    t = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + t), t / (1.0 + t)).astype(np.float32)


def sigmoid(a: Tensor) -> Tensor:
    out = _sigmoid_raw(a.data)
    return _make(out, (a,), lambda g: (g * out * (1.0 - out),))


def softplus(a: Tensor) -> Tensor:
    """log(1 + e^x), evaluated with the stable branch at 0."""
    out = np.logaddexp(np.float32(0.0), a.data)
    return _make(out, (a,), lambda g: (g * _sigmoid_raw(a.data),))


def swish(a: Tensor) -> Tensor:
    """x * sigmoid(x)."""
    s = _sigmoid_raw(a.data)
    out = a.data * s
    return _make(out, (a,), lambda g: (g * (s + a.data * s * (1.0 - s)),))


# ---- linear algebra ----------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim < 2 or b.ndim < 2:
        raise DimensionError(f"matmul requires matrices, got {a.data.shape} @ {b.data.shape}")
    if a.data.shape[-1] != b.data.shape[-2]:
        raise DimensionError(f"matmul inner extents differ: {a.data.shape} @ {b.data.shape}")

    def vjp(g):
        ga = gb = None
        if a.requires_grad:
            ga = _unbroadcast(g @ b.data.swapaxes(-1, -2), a.data.shape)
        if b.requires_grad:
            gb = _unbroadcast(a.data.swapaxes(-1, -2) @ g, b.data.shape)
        return ga, gb

    return _make(a.data @ b.data, (a, b), vjp)


# ---- shape manipulation ------------------------------------------------------


def reshape(a: Tensor, shape) -> Tensor:
    return _make(a.data.reshape(shape), (a,), lambda g: (g.reshape(a.data.shape),))


def transpose(a: Tensor, axes=None) -> Tensor:
    axes = tuple(axes) if axes is not None else tuple(reversed(range(a.ndim)))
    inverse = np.argsort(axes)
    return _make(a.data.transpose(axes), (a,), lambda g: (g.transpose(inverse),))


def swapaxes(a: Tensor, ax1: int, ax2: int) -> Tensor:
    return _make(a.data.swapaxes(ax1, ax2), (a,), lambda g: (g.swapaxes(ax1, ax2),))


def getitem(a: Tensor, key) -> Tensor:
    def vjp(g):
        gx = np.zeros_like(a.data)
        np.add.at(gx, key, g)
        return (gx,)

    return _make(a.data[key], (a,), vjp)


def concat(tensors: list[Tensor], axis: int = 0) -> Tensor:
    datas = [t.data for t in tensors]
    sizes = np.cumsum([d.shape[axis] for d in datas])[:-1]

    def vjp(g):
        return tuple(np.split(g, sizes, axis=axis))

    return _make(np.concatenate(datas, axis=axis), tuple(tensors), vjp)


def gather_tokens(x: Tensor, idx: np.ndarray) -> Tensor:
    """Select rows per batch element: out[b, k] = x[b, idx[b, k]]."""
    if x.ndim != 3 or idx.ndim != 2 or idx.shape[0] != x.data.shape[0]:
        raise DimensionError(f"gather_tokens expects (B,L,d) and (B,K), got {x.data.shape}, {idx.shape}")
    rows = np.arange(x.data.shape[0])[:, None]

    def vjp(g):
        gx = np.zeros_like(x.data)
        np.add.at(gx, (rows, idx), g)
        return (gx,)

    return _make(x.data[rows, idx], (x,), vjp)


# ---- reductions --------------------------------------------------------------


def _restore_axes(g: np.ndarray, shape, axis, keepdims):
    if axis is None:
        return np.broadcast_to(g, shape)
    axes = (axis,) if isinstance(axis, int) else tuple(axis)
    if not keepdims:
        g = np.expand_dims(g, axes)
    return np.broadcast_to(g, shape)


def sum_(a: Tensor, axis=None, keepdims=False) -> Tensor:
    out = a.data.sum(axis=axis, keepdims=keepdims)
    return _make(out, (a,), lambda g: (_restore_axes(g, a.data.shape, axis, keepdims),))


def mean_(a: Tensor, axis=None, keepdims=False) -> Tensor:
    out = a.data.mean(axis=axis, keepdims=keepdims)
    scale = np.float32(out.size / a.data.size)

    def vjp(g):
        return (_restore_axes(g * scale, a.data.shape, axis, keepdims),)

    return _make(out, (a,), vjp)


def max_(a: Tensor, axis: int, keepdims=False) -> Tensor:
    """Max reduction along one axis; ties route gradient to the first hit."""
    idx = np.expand_dims(a.data.argmax(axis=axis), axis)
    out = np.take_along_axis(a.data, idx, axis=axis)

    def vjp(g):
        gx = np.zeros_like(a.data)
        gexp = g if keepdims else np.expand_dims(g, axis)
        np.put_along_axis(gx, idx, gexp, axis=axis)
        return (gx,)

    return _make(out if keepdims else out.squeeze(axis), (a,), vjp)


# ---- composite nn primitives -------------------------------------------------


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    """Max-stabilized softmax; slices along ``axis`` sum to 1."""
    shift = Tensor(a.data.max(axis=axis, keepdims=True))  # constant: softmax is shift-invariant
    e = exp(sub(a, shift))
    return div(e, sum_(e, axis=axis, keepdims=True))


def layernorm(a: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Per-row standardization over the last axis, then affine."""
    mu = mean_(a, axis=-1, keepdims=True)
    centered = sub(a, mu)
    var = mean_(mul(centered, centered), axis=-1, keepdims=True)
    normed = div(centered, sqrt(add(var, Tensor(np.float32(eps)))))
    return add(mul(normed, gain), bias)


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    out = matmul(x, w)
    return add(out, b) if b is not None else out


# ---- convolutions ------------------------------------------------------------


def conv2d(x: Tensor, w: Tensor, b: Tensor | None = None, stride: int = 1, padding: int = 0) -> Tensor:
    """2-D convolution (cross-correlation), NCHW x (O,C,kh,kw).

    Accepts a single (C,H,W) image or a (B,C,H,W) batch.  Output extent per
    spatial axis is floor((in + 2*pad - k)/stride) + 1.
    """
    squeeze = x.ndim == 3
    xd = x.data[None] if squeeze else x.data
    if xd.ndim != 4 or w.ndim != 4 or xd.shape[1] != w.data.shape[1]:
        raise DimensionError(f"conv2d shapes incompatible: {x.data.shape} with kernel {w.data.shape}")
    B, C, H, W = xd.shape
    O, _, kh, kw = w.data.shape
    s, p = int(stride), int(padding)
    if kh > H + 2 * p or kw > W + 2 * p:
        raise DimensionError(f"kernel {kh}x{kw} exceeds padded input {H + 2 * p}x{W + 2 * p}")
    Ho = (H + 2 * p - kh) // s + 1
    Wo = (W + 2 * p - kw) // s + 1

    xp = np.pad(xd, ((0, 0), (0, 0), (p, p), (p, p))) if p else xd
    win = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::s, ::s]
    # (B, C, Ho, Wo, kh, kw) -> (B, Ho*Wo, C*kh*kw)
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(B, Ho * Wo, C * kh * kw)
    wmat = w.data.reshape(O, -1).T
    out = (cols @ wmat).transpose(0, 2, 1).reshape(B, O, Ho, Wo)
    if b is not None:
        out = out + b.data.reshape(1, O, 1, 1)

    def vjp(g):
        if squeeze:
            g = g[None]
        g2 = g.reshape(B, O, Ho * Wo).transpose(0, 2, 1)  # (B, Ho*Wo, O)
        gx = gw = gb = None
        if w.requires_grad:
            gw = np.einsum("bnk,bno->ok", cols, g2, optimize=True).reshape(w.data.shape)
        if b is not None and b.requires_grad:
            gb = g.sum(axis=(0, 2, 3))
        if x.requires_grad:
            gcols = (g2 @ wmat.T).reshape(B, Ho, Wo, C, kh, kw)
            gxp = np.zeros_like(xp)
            for i in range(kh):
                for j in range(kw):
                    gxp[:, :, i : i + s * Ho : s, j : j + s * Wo : s] += gcols[:, :, :, :, i, j].transpose(
                        0, 3, 1, 2
                    )
            gx = gxp[:, :, p : p + H, p : p + W] if p else gxp
            if squeeze:
                gx = gx[0]
        return (gx, gw) if b is None else (gx, gw, gb)

    parents = (x, w) if b is None else (x, w, b)
    return _make(out[0] if squeeze else out, parents, vjp)


def depthwise_conv1d(x: Tensor, kernel: Tensor) -> Tensor:
    """Per-channel temporal convolution with same padding.

    x: (B, L, d) or (L, d); kernel: (k, d) with odd k.  Channel c of the
    output depends only on channel c of the input; length is preserved.
    """
    from .errors import ConfigError

    k = kernel.data.shape[0]
    if k % 2 == 0:
        raise ConfigError(f"depthwise kernel length must be odd, got {k}")
    squeeze = x.ndim == 2
    xd = x.data[None] if squeeze else x.data
    if xd.shape[-1] != kernel.data.shape[-1]:
        raise DimensionError(f"channel mismatch: {x.data.shape} vs kernel {kernel.data.shape}")
    L = xd.shape[1]
    p = (k - 1) // 2
    xp = np.pad(xd, ((0, 0), (p, p), (0, 0)))
    out = np.zeros_like(xd)
    for j in range(k):
        out += xp[:, j : j + L, :] * kernel.data[j]

    def vjp(g):
        if squeeze:
            g = g[None]
        gx = gk = None
        if kernel.requires_grad:
            gk = np.stack([(xp[:, j : j + L, :] * g).sum(axis=(0, 1)) for j in range(k)])
        if x.requires_grad:
            gxp = np.zeros_like(xp)
            for j in range(k):
                gxp[:, j : j + L, :] += g * kernel.data[j]
            gx = gxp[:, p : p + L, :]
            if squeeze:
                gx = gx[0]
        return (gx, gk)

    return _make(out[0] if squeeze else out, (x, kernel), vjp)
