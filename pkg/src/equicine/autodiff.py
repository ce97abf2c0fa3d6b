"""Minimal dense-tensor engine with reverse-mode automatic differentiation.

Values are float64 numpy arrays. Operations executed inside an active
:class:`Tape` context are recorded when at least one input requires a
gradient; outside a tape nothing is recorded, which is the cheap path used
for inference.

Complex quantities are carried as real tensors whose leading axis has
extent 2 (real part, imaginary part). The Fourier and complex-scaling
primitives act on that layout and back-propagate with the complex-linear
adjoint.
"""

from __future__ import annotations

import itertools
from typing import Callable, Iterable, Sequence

import numpy as np

__all__ = [
    "Tensor",
    "Tape",
    "NonFiniteError",
    "record",
    "backward",
    "finite_difference_gradient",
    "init_params",
    "as_tensor",
    "add",
    "sub",
    "mul",
    "scalar_mul",
    "correlate",
    "leaky_relu",
    "tsum",
    "tabs",
    "texp",
    "reshape",
    "permute",
    "take",
    "concat",
    "contract",
    "fft2c",
    "ifft2c",
    "cmul",
]


class NonFiniteError(FloatingPointError):
    """Raised when a primitive produces NaN or Inf."""


class Tensor:
    """A float64 array, optionally tracked by a tape."""

    __slots__ = ("data", "requires_grad", "tape", "node", "name", "__weakref__")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.array(data, dtype=np.float64) if not isinstance(data, np.ndarray) \
            else np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.tape: Tape | None = None
        self.node: int | None = None
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}{tag})"

    def __len__(self) -> int:
        return len(self.data)

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        if np.isscalar(other):
            return scalar_mul(self, float(other))
        return mul(self, other)

    def __rmul__(self, other):
        return self.__mul__(other)

    def __neg__(self):
        return scalar_mul(self, -1.0)

    def __truediv__(self, other):
        if not np.isscalar(other):
            raise TypeError("only division by a scalar is supported")
        return scalar_mul(self, 1.0 / float(other))

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


class _Node:
    __slots__ = ("kind", "inputs", "vjp", "output")

    def __init__(self, kind, inputs, vjp, output):
        self.kind = kind
        self.inputs = inputs
        self.vjp = vjp
        self.output = output


class Tape:
    """Append-only record of primitive applications.

    Nodes are appended as operations execute, so the list is already in
    topological order. Use as a context manager::

        with Tape() as tape:
            loss = model(x)
        grads = tape.backward(loss, params)
    """

    _stack: list["Tape"] = []

    def __init__(self):
        self.nodes: list[_Node] = []
        self._consumed = False

    def __enter__(self) -> "Tape":
        Tape._stack.append(self)
        return self

    def __exit__(self, *exc):
        Tape._stack.remove(self)
        return False

    @classmethod
    def active(cls) -> "Tape | None":
        return cls._stack[-1] if cls._stack else None

    def _append(self, kind, inputs, vjp, out: Tensor):
        out.tape = self
        out.node = len(self.nodes)
        out.requires_grad = True
        self.nodes.append(_Node(kind, inputs, vjp, out))

    def backward(self, loss: Tensor, params: Iterable[Tensor] | None = None) -> dict[Tensor, Tensor]:
        if loss.size != 1:
            raise ValueError(f"loss must be scalar, got shape {loss.shape}")
        if loss.tape is not self:
            raise ValueError("loss is not recorded on this tape (detached)")
        if self._consumed:
            raise RuntimeError("tape was already consumed by a backward pass")
        node_grads: dict[int, np.ndarray] = {loss.node: np.ones_like(loss.data)}
        leaf_grads: dict[int, tuple[Tensor, np.ndarray]] = {}
        for idx in range(loss.node, -1, -1):
            g = node_grads.pop(idx, None)
            if g is None:
                continue
            node = self.nodes[idx]
            in_grads = node.vjp(g)
            for t, gi in zip(node.inputs, in_grads):
                if gi is None or not t.requires_grad:
                    continue
                if t.tape is self and t.node is not None:
                    prev = node_grads.get(t.node)
                    node_grads[t.node] = gi if prev is None else prev + gi
                else:
                    key = id(t)
                    prev = leaf_grads.get(key)
                    leaf_grads[key] = (t, gi if prev is None else prev[1] + gi)
            node.vjp = None
        self._consumed = True
        # tensors point back at the tape, so drop the graph now instead of
        # waiting for the cycle collector
        self.nodes.clear()
        if params is None:
            return {t: Tensor(g) for t, g in leaf_grads.values()}
        out = {}
        for p in params:
            hit = leaf_grads.get(id(p))
            out[p] = Tensor(hit[1]) if hit is not None else Tensor(np.zeros_like(p.data))
        return out


def backward(loss: Tensor, params: Iterable[Tensor] | None = None) -> dict[Tensor, Tensor]:
    """Gradients of a scalar ``loss`` with respect to leaf tensors.

    Leaves listed in ``params`` that the loss does not depend on get zeros.
    """
    if loss.tape is None:
        raise ValueError("loss is not on a tape (detached)")
    return loss.tape.backward(loss, params)


# ---------------------------------------------------------------------------
# primitive registry

_PRIMITIVES: dict[str, Callable] = {}


def _primitive(name):
    def deco(fn):
        _PRIMITIVES[name] = fn
        return fn
    return deco


def record(op_kind: str, inputs: Sequence, **attrs) -> Tensor:
    """Apply primitive ``op_kind`` and, under an active tape, record it."""
    try:
        impl = _PRIMITIVES[op_kind]
    except KeyError:
        raise ValueError(f"unknown primitive {op_kind!r}") from None
    inputs = [as_tensor(t) for t in inputs]
    out_data, vjp = impl(*[t.data for t in inputs], **attrs)
    # a single reduction is cheaper than an elementwise test; a sum only
    # overflows when entries are already ~1e308, which is divergence anyway
    if not np.isfinite(np.sum(out_data)):
        raise NonFiniteError(f"primitive {op_kind!r} produced non-finite values")
    out = Tensor(out_data)
    tape = Tape.active()
    if tape is not None and any(t.requires_grad for t in inputs):
        tape._append(op_kind, inputs, vjp, out)
    return out


def _sum_to(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    lead = g.ndim - len(shape)
    if lead:
        g = g.sum(axis=tuple(range(lead)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


@_primitive("add")
def _add(a, b):
    try:
        out = a + b
    except ValueError as exc:
        raise ValueError(f"shape mismatch in add: {a.shape} vs {b.shape}") from exc
    return out, lambda g: (_sum_to(g, a.shape), _sum_to(g, b.shape))


@_primitive("sub")
def _sub(a, b):
    try:
        out = a - b
    except ValueError as exc:
        raise ValueError(f"shape mismatch in sub: {a.shape} vs {b.shape}") from exc
    return out, lambda g: (_sum_to(g, a.shape), _sum_to(-g, b.shape))


@_primitive("mul")
def _mul(a, b):
    try:
        out = a * b
    except ValueError as exc:
        raise ValueError(f"shape mismatch in mul: {a.shape} vs {b.shape}") from exc
    return out, lambda g: (_sum_to(g * b, a.shape), _sum_to(g * a, b.shape))


@_primitive("scalar-mul")
def _scalar_mul(a, c):
    return a * c, lambda g: (g * c,)


@_primitive("leaky-relu")
def _leaky_relu(x, slope):
    pos = x > 0
    return np.where(pos, x, slope * x), lambda g: (np.where(pos, g, slope * g),)


@_primitive("abs")
def _abs(x):
    # subgradient at 0 is 0
    return np.abs(x), lambda g: (g * np.sign(x),)


@_primitive("exp")
def _exp(x):
    with np.errstate(over="ignore"):
        out = np.exp(x)
    return out, lambda g: (g * out,)


@_primitive("sum")
def _sum(x, axis=None, keepdims=False):
    out = np.sum(x, axis=axis, keepdims=keepdims)

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)
    return np.asarray(out, dtype=np.float64), vjp


@_primitive("reshape")
def _reshape(x, shape):
    try:
        out = x.reshape(shape)
    except ValueError as exc:
        raise ValueError(f"cannot reshape {x.shape} to {shape}") from exc
    return out, lambda g: (g.reshape(x.shape),)


@_primitive("permute")
def _permute(x, axes):
    inv = np.argsort(axes)
    return np.ascontiguousarray(np.transpose(x, axes)), lambda g: (np.transpose(g, inv),)


@_primitive("take")
def _take(x, indices, axis):
    indices = np.asarray(indices)
    out = np.take(x, indices, axis=axis)

    def vjp(g):
        gx = np.zeros_like(x)
        gx_m = np.moveaxis(gx, axis, 0)
        g_m = np.moveaxis(g, tuple(range(axis, axis + indices.ndim)), tuple(range(indices.ndim)))
        np.add.at(gx_m, indices, g_m)
        return (gx,)
    return out, vjp


@_primitive("concat")
def _concat(*xs, axis=0):
    out = np.concatenate(xs, axis=axis)
    bounds = np.cumsum([x.shape[axis] for x in xs])[:-1]
    return out, lambda g: tuple(np.split(g, bounds, axis=axis))


@_primitive("contract")
def _contract(a, b, axes):
    out = np.tensordot(a, b, axes=axes)
    ax_a, ax_b = [list(ax) for ax in axes]
    free_a = [i for i in range(a.ndim) if i not in ax_a]
    free_b = [i for i in range(b.ndim) if i not in ax_b]
    na = len(free_a)

    def vjp(g):
        # g has axes free_a + free_b
        ga = np.tensordot(g, b, axes=(list(range(na, g.ndim)), free_b))
        order_a = free_a + [ax_a[ax_b.index(j)] for j in sorted(ax_b)]
        ga = np.transpose(ga, np.argsort(order_a))
        gb = np.tensordot(a, g, axes=(free_a, list(range(na))))
        order_b = [ax_b[ax_a.index(i)] for i in sorted(ax_a)] + free_b
        gb = np.transpose(gb, np.argsort(order_b))
        return ga, gb
    return out, vjp


def _pad(x, pads, circular):
    width = [(0, 0)] + [(r, r) for r in pads]
    xp = np.pad(x, width)
    for d, (r, circ) in enumerate(zip(pads, circular)):
        if circ and r:
            ax = d + 1
            n = x.shape[ax]
            lo = [slice(None)] * xp.ndim
            hi = [slice(None)] * xp.ndim
            lo[ax] = slice(0, r)
            hi[ax] = slice(n, n + r)
            xp[tuple(lo)] = xp[tuple(hi)]
            lo[ax] = slice(n + r, n + 2 * r)
            hi[ax] = slice(r, 2 * r)
            xp[tuple(lo)] = xp[tuple(hi)]
    return xp


def _unpad(gp, pads, circular, shape):
    if any(circular):
        gp = gp.copy()
    for d, (r, circ) in enumerate(zip(pads, circular)):
        if circ and r:
            ax = d + 1
            n = shape[ax]
            dst = [slice(None)] * gp.ndim
            src = [slice(None)] * gp.ndim
            dst[ax] = slice(n, n + r)
            src[ax] = slice(0, r)
            gp[tuple(dst)] += gp[tuple(src)]
            dst[ax] = slice(r, 2 * r)
            src[ax] = slice(n + r, n + 2 * r)
            gp[tuple(dst)] += gp[tuple(src)]
    core = (slice(None),) + tuple(slice(r, r + n) for r, n in zip(pads, shape[1:]))
    return gp[core]


@_primitive("correlate-nd")
def _correlate(x, w, support=None, circular=None):
    if w.ndim != x.ndim + 1:
        raise ValueError(f"kernel rank {w.ndim} does not match input rank {x.ndim}")
    c_out, c_in = w.shape[:2]
    ksize = w.shape[2:]
    spatial = x.shape[1:]
    if x.shape[0] != c_in:
        raise ValueError(f"input has {x.shape[0]} channels, kernel expects {c_in}")
    if any(k % 2 == 0 for k in ksize):
        raise ValueError(f"kernel extents must be odd, got {ksize}")
    pads = tuple(k // 2 for k in ksize)
    circular = tuple(circular) if circular is not None else (False,) * len(ksize)
    if support is None:
        taps = list(itertools.product(*[range(k) for k in ksize]))
    else:
        taps = [tuple(int(i) for i in t) for t in np.argwhere(np.asarray(support, bool))]
    n_pix = int(np.prod(spatial))
    tap_idx = tuple(np.array(t) for t in zip(*taps))

    def im2col(src, size, starts):
        cols = np.empty((src.shape[0], len(taps)) + size)
        for j, st in enumerate(starts):
            cols[:, j] = src[(slice(None),) + tuple(slice(a, a + n) for a, n in zip(st, size))]
        return cols.reshape(src.shape[0] * len(taps), -1)

    w_taps = w[(slice(None), slice(None)) + tap_idx].reshape(c_out, c_in * len(taps))
    xp = _pad(x, pads, circular)
    out = (w_taps @ im2col(xp, spatial, taps)).reshape((c_out,) + spatial)

    def vjp(g):
        g2 = g.reshape(c_out, n_pix)
        gw = np.zeros_like(w)
        gw_taps = (g2 @ im2col(xp, spatial, taps).T).reshape(c_out, c_in, len(taps))
        gw[(slice(None), slice(None)) + tap_idx] = gw_taps
        # the padded-grid gradient is g correlated with the mirrored kernel
        gpad = np.pad(g, [(0, 0)] + [(2 * r, 2 * r) for r in pads])
        mirrored = [tuple(2 * r - o for o, r in zip(t, pads)) for t in taps]
        w_t = w_taps.reshape(c_out, c_in, len(taps)).transpose(1, 0, 2).reshape(c_in, -1)
        gp = (w_t @ im2col(gpad, xp.shape[1:], mirrored)).reshape(xp.shape)
        return _unpad(gp, pads, circular, x.shape), gw
    return out, vjp


def _fft2c_np(z):
    return np.fft.fftshift(np.fft.fft2(np.fft.ifftshift(z, axes=(-2, -1)), norm="ortho"), axes=(-2, -1))


def _ifft2c_np(z):
    return np.fft.fftshift(np.fft.ifft2(np.fft.ifftshift(z, axes=(-2, -1)), norm="ortho"), axes=(-2, -1))


def _split(z):
    return np.stack([z.real, z.imag])


@_primitive("fft2c")
def _fft2c(x):
    if x.shape[0] != 2:
        raise ValueError("fft2c expects a leading (real, imag) axis of extent 2")
    out = _split(_fft2c_np(x[0] + 1j * x[1]))
    return out, lambda g: (_split(_ifft2c_np(g[0] + 1j * g[1])),)


@_primitive("ifft2c")
def _ifft2c(x):
    if x.shape[0] != 2:
        raise ValueError("ifft2c expects a leading (real, imag) axis of extent 2")
    out = _split(_ifft2c_np(x[0] + 1j * x[1]))
    return out, lambda g: (_split(_fft2c_np(g[0] + 1j * g[1])),)


@_primitive("cmul")
def _cmul(x, s_re, s_im, conj=False):
    s = s_re - 1j * s_im if conj else s_re + 1j * s_im
    z = x[0] + 1j * x[1]
    out = _split(s * z)

    def vjp(g):
        gz = np.conj(s) * (g[0] + 1j * g[1])
        return _sum_to(_split(gz), x.shape), None, None
    return out, vjp


# ---------------------------------------------------------------------------
# public wrappers

def add(a, b) -> Tensor:
    return record("add", [a, b])


def sub(a, b) -> Tensor:
    return record("sub", [a, b])


def mul(a, b) -> Tensor:
    return record("mul", [a, b])


def scalar_mul(a, c: float) -> Tensor:
    return record("scalar-mul", [a], c=float(c))


def leaky_relu(x, slope: float = 0.1) -> Tensor:
    return record("leaky-relu", [x], slope=float(slope))


def tabs(x) -> Tensor:
    return record("abs", [x])


def texp(x) -> Tensor:
    return record("exp", [x])


def tsum(x, axis=None, keepdims: bool = False) -> Tensor:
    return record("sum", [x], axis=axis, keepdims=keepdims)


def reshape(x, shape) -> Tensor:
    return record("reshape", [x], shape=tuple(shape))


def permute(x, axes) -> Tensor:
    return record("permute", [x], axes=tuple(axes))


def take(x, indices, axis: int = 0) -> Tensor:
    return record("take", [x], indices=np.asarray(indices), axis=axis)


def concat(xs, axis: int = 0) -> Tensor:
    return record("concat", list(xs), axis=axis)


def contract(a, b, axes) -> Tensor:
    """Tensor contraction with ``np.tensordot`` axis semantics."""
    if isinstance(axes, int):
        a_nd = as_tensor(a).ndim
        axes = (list(range(a_nd - axes, a_nd)), list(range(axes)))
    return record("contract", [a, b], axes=(tuple(axes[0]), tuple(axes[1])))


def correlate(x, w, support=None, circular=None) -> Tensor:
    """Multi-channel cross-correlation with zero 'same' padding.

    ``x`` is (C_in, *S) and ``w`` is (C_out, C_in, *K) with odd extents K.
    ``support`` (boolean, shape K) restricts the taps that are evaluated;
    taps outside it are treated as structurally zero. ``circular`` selects
    periodic instead of zero padding per axis.
    """
    return record("correlate-nd", [x, w], support=support, circular=circular)


def fft2c(x) -> Tensor:
    """Orthonormal centred 2D DFT over the two trailing axes."""
    return record("fft2c", [x])


def ifft2c(x) -> Tensor:
    return record("ifft2c", [x])


def cmul(x, s: np.ndarray, conj: bool = False) -> Tensor:
    """Multiply the complex tensor ``x`` by a constant complex array ``s``."""
    s = np.asarray(s)
    return record("cmul", [x, s.real.astype(np.float64), s.imag.astype(np.float64)], conj=conj)


# ---------------------------------------------------------------------------

def finite_difference_gradient(f: Callable[[Tensor], Tensor], params: Tensor, h: float = 1e-5) -> Tensor:
    """Central-difference estimate of d f / d params, one element at a time."""
    if h <= 0:
        raise ValueError("step h must be positive")
    base = params.data.copy()
    grad = np.zeros_like(base)
    flat = params.data.reshape(-1)
    for i in range(flat.size):
        flat[i] = base.flat[i] + h
        fp = as_tensor(f(params)).data
        flat[i] = base.flat[i] - h
        fm = as_tensor(f(params)).data
        flat[i] = base.flat[i]
        if fp.size != 1:
            raise ValueError("f must return a scalar")
        grad.flat[i] = (fp.item() - fm.item()) / (2 * h)
    params.data[...] = base
    return Tensor(grad)


def init_params(shape, scheme: str = "uniform-fan-in", seed: int = 0, c: float = 0.0,
                fan_in: int | None = None, requires_grad: bool = True) -> Tensor:
    """Deterministic parameter initialisation.

    ``uniform-fan-in`` draws from U[-1/sqrt(fan_in), 1/sqrt(fan_in)] where
    ``fan_in`` defaults to the product of all but the leading extent.
    """
    shape = tuple(int(s) for s in shape)
    if scheme == "zeros":
        data = np.zeros(shape)
    elif scheme == "constant":
        data = np.full(shape, float(c))
    elif scheme == "uniform-fan-in":
        if fan_in is None:
            fan_in = int(np.prod(shape[1:])) if len(shape) > 1 else 1
        bound = 1.0 / np.sqrt(max(fan_in, 1))
        data = np.random.default_rng(seed).uniform(-bound, bound, size=shape)
    else:
        raise ValueError(f"unknown init scheme {scheme!r}")
    return Tensor(data, requires_grad=requires_grad)
