"""Reverse-mode differentiation over numpy arrays, scoped to this package.

This is not a general autodiff system.  It supports exactly the operations
needed to express dense feed-forward networks, their closed-form input
Jacobians, and batched losses built from them, so that one reverse sweep
yields parameter gradients of losses that themselves contain first
input-derivatives of a network ("forward-over-reverse": the inner
derivative is an explicit forward-mode layer chain, the outer gradient is
a single tape sweep over that chain).

Every primitive below accepts either plain ndarrays (and returns an
ndarray) or :class:`Var` operands (and returns a node recording the
backward rule).  Code written against these primitives runs unchanged in
both worlds.  All arithmetic is float64.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np
from scipy.special import expit

__all__ = [
    "Var",
    "gradients",
    "matmul",
    "einsum",
    "softplus",
    "sigmoid",
    "tanh",
    "exp",
    "sqrt",
    "power",
    "vector_norm",
    "value_of",
]

NORM_GRAD_FLOOR = 1e-12  # below this residual norm the norm gradient is zero


def _asarray(x) -> np.ndarray:
    return np.asarray(x, dtype=np.float64)


def value_of(x) -> np.ndarray:
    """Underlying ndarray of a Var, or the array itself."""
    return x.value if isinstance(x, Var) else _asarray(x)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to ``shape``."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (gs, ss) in enumerate(zip(g.shape, shape)) if ss == 1 and gs != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


class Var:
    """A node in the computation graph: a float64 array plus backward rules.

    ``parents`` is a tuple of ``(Var, vjp)`` pairs where ``vjp`` maps the
    output cotangent to this parent's cotangent contribution.
    """

    __slots__ = ("value", "parents")

    # numpy must defer to the reflected operators below instead of trying
    # to coerce a Var into an array
    __array_ufunc__ = None

    def __init__(self, value, parents: tuple = ()):
        self.value = _asarray(value)
        self.parents = parents

    # ---- numpy-like surface -------------------------------------------------

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    @property
    def size(self):
        return self.value.size

    @property
    def T(self):
        return transpose(self)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def sum(self, axis=None, keepdims=False):
        return asum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return amean(self, axis=axis, keepdims=keepdims)

    def __repr__(self):
        return f"Var(shape={self.value.shape})"

    # ---- operators ----------------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __pow__(self, p):
        return power(self, p)

    def __getitem__(self, index):
        return getitem(self, index)


def _is_var(*xs) -> bool:
    return any(isinstance(x, Var) for x in xs)


def _parents(*pairs) -> tuple:
    return tuple((x, vjp) for x, vjp in pairs if isinstance(x, Var))


# ---- elementwise binary ops -------------------------------------------------


def add(a, b):
    if not _is_var(a, b):
        return np.add(_asarray(a), _asarray(b))
    av, bv = value_of(a), value_of(b)
    return Var(
        av + bv,
        _parents(
            (a, lambda g: _unbroadcast(g, av.shape)),
            (b, lambda g: _unbroadcast(g, bv.shape)),
        ),
    )


def sub(a, b):
    if not _is_var(a, b):
        return np.subtract(_asarray(a), _asarray(b))
    av, bv = value_of(a), value_of(b)
    return Var(
        av - bv,
        _parents(
            (a, lambda g: _unbroadcast(g, av.shape)),
            (b, lambda g: _unbroadcast(-g, bv.shape)),
        ),
    )


def mul(a, b):
    if not _is_var(a, b):
        return np.multiply(_asarray(a), _asarray(b))
    av, bv = value_of(a), value_of(b)
    return Var(
        av * bv,
        _parents(
            (a, lambda g: _unbroadcast(g * bv, av.shape)),
            (b, lambda g: _unbroadcast(g * av, bv.shape)),
        ),
    )


def div(a, b):
    if not _is_var(a, b):
        return np.divide(_asarray(a), _asarray(b))
    av, bv = value_of(a), value_of(b)
    return Var(
        av / bv,
        _parents(
            (a, lambda g: _unbroadcast(g / bv, av.shape)),
            (b, lambda g: _unbroadcast(-g * av / (bv * bv), bv.shape)),
        ),
    )


def neg(a):
    if not _is_var(a):
        return np.negative(_asarray(a))
    return Var(-a.value, ((a, lambda g: -g),))


# ---- matmul / einsum ----------------------------------------------------------


def _matmul_vjps(av: np.ndarray, bv: np.ndarray):
    """Backward rules for np.matmul covering the 1-D operand conventions."""
    if av.ndim == 1 and bv.ndim == 1:  # dot product
        return (lambda g: g * bv), (lambda g: g * av)
    if av.ndim == 1:  # (k,) @ (..., k, m) -> (..., m)
        def da(g):
            return _unbroadcast(np.matmul(bv, g[..., :, None])[..., 0], av.shape)

        def db(g):
            return _unbroadcast(av[..., :, None] * g[..., None, :], bv.shape)

        return da, db
    if bv.ndim == 1:  # (..., m, k) @ (k,) -> (..., m)
        def da(g):
            return _unbroadcast(g[..., :, None] * bv[..., None, :], av.shape)

        def db(g):
            return _unbroadcast(np.matmul(np.swapaxes(av, -1, -2), g[..., :, None])[..., 0], bv.shape)

        return da, db

    def da(g):
        return _unbroadcast(np.matmul(g, np.swapaxes(bv, -1, -2)), av.shape)

    def db(g):
        return _unbroadcast(np.matmul(np.swapaxes(av, -1, -2), g), bv.shape)

    return da, db


def matmul(a, b):
    if not _is_var(a, b):
        return np.matmul(_asarray(a), _asarray(b))
    av, bv = value_of(a), value_of(b)
    da, db = _matmul_vjps(av, bv)
    return Var(np.matmul(av, bv), _parents((a, da), (b, db)))


def _parse_einsum(subs: str):
    lhs, out = subs.replace(" ", "").split("->")
    ia, ib = lhs.split(",")
    for term in (ia, ib, out):
        if len(set(term)) != len(term):
            raise ValueError(f"repeated index within one einsum term: {subs!r}")
    if not (set(ia) <= set(out) | set(ib) and set(ib) <= set(out) | set(ia)):
        raise ValueError(f"einsum backward rule unavailable for {subs!r}")
    return ia, ib, out


def einsum(subs: str, a, b):
    """Two-operand einsum; every input index must appear in the output or
    the other operand (so the backward pass is itself an einsum)."""
    ia, ib, out = _parse_einsum(subs)
    if not _is_var(a, b):
        return np.einsum(subs, _asarray(a), _asarray(b))
    av, bv = value_of(a), value_of(b)
    return Var(
        np.einsum(subs, av, bv),
        _parents(
            (a, lambda g: np.einsum(f"{out},{ib}->{ia}", g, bv)),
            (b, lambda g: np.einsum(f"{out},{ia}->{ib}", g, av)),
        ),
    )


# ---- shape ops ----------------------------------------------------------------


def transpose(a, axes=None):
    if not _is_var(a):
        return np.transpose(_asarray(a), axes)
    av = a.value
    axes_t = tuple(range(av.ndim))[::-1] if axes is None else tuple(axes)
    inv = tuple(np.argsort(axes_t))
    return Var(np.transpose(av, axes_t), ((a, lambda g: np.transpose(g, inv)),))


def swap_last(a):
    """Transpose the last two axes (batched matrix transpose)."""
    if not _is_var(a):
        return np.swapaxes(_asarray(a), -1, -2)
    return Var(np.swapaxes(a.value, -1, -2), ((a, lambda g: np.swapaxes(g, -1, -2)),))


def reshape(a, shape):
    if not _is_var(a):
        return np.reshape(_asarray(a), shape)
    old = a.value.shape
    return Var(a.value.reshape(shape), ((a, lambda g: g.reshape(old)),))


def getitem(a, index):
    if not _is_var(a):
        return _asarray(a)[index]
    av = a.value

    def vjp(g):
        buf = np.zeros_like(av)
        np.add.at(buf, index, g)
        return buf

    return Var(av[index], ((a, vjp),))


# ---- reductions ----------------------------------------------------------------


def _expand_reduced(g: np.ndarray, shape: tuple[int, ...], axis, keepdims: bool) -> np.ndarray:
    if axis is None:
        return np.broadcast_to(g, shape).copy() if np.ndim(g) == 0 else np.full(shape, g)
    if not keepdims:
        axes = axis if isinstance(axis, tuple) else (axis,)
        axes = tuple(a % len(shape) for a in axes)
        for ax in sorted(axes):
            g = np.expand_dims(g, ax)
    return np.broadcast_to(g, shape).copy()


def asum(a, axis=None, keepdims=False):
    if not _is_var(a):
        return np.sum(_asarray(a), axis=axis, keepdims=keepdims)
    av = a.value
    return Var(
        av.sum(axis=axis, keepdims=keepdims),
        ((a, lambda g: _expand_reduced(g, av.shape, axis, keepdims)),),
    )


def amean(a, axis=None, keepdims=False):
    if not _is_var(a):
        return np.mean(_asarray(a), axis=axis, keepdims=keepdims)
    av = a.value
    count = av.size if axis is None else np.prod([av.shape[ax] for ax in (axis if isinstance(axis, tuple) else (axis,))])
    return Var(
        av.mean(axis=axis, keepdims=keepdims),
        ((a, lambda g: _expand_reduced(g, av.shape, axis, keepdims) / count),),
    )


# ---- smooth scalar functions ----------------------------------------------------


def exp(a):
    if not _is_var(a):
        return np.exp(_asarray(a))
    out = np.exp(a.value)
    return Var(out, ((a, lambda g: g * out),))


def sqrt(a):
    if not _is_var(a):
        return np.sqrt(_asarray(a))
    out = np.sqrt(a.value)
    return Var(out, ((a, lambda g: g * 0.5 / out),))


def power(a, p: float):
    if not _is_var(a):
        return np.power(_asarray(a), p)
    av = a.value
    return Var(np.power(av, p), ((a, lambda g: g * p * np.power(av, p - 1)),))


def softplus(a):
    """log(1 + e^x), evaluated stably."""
    if not _is_var(a):
        return np.logaddexp(0.0, _asarray(a))
    av = a.value
    return Var(np.logaddexp(0.0, av), ((a, lambda g: g * expit(av)),))


def sigmoid(a):
    if not _is_var(a):
        return expit(_asarray(a))
    out = expit(a.value)
    return Var(out, ((a, lambda g: g * out * (1.0 - out)),))


def tanh(a):
    if not _is_var(a):
        return np.tanh(_asarray(a))
    out = np.tanh(a.value)
    return Var(out, ((a, lambda g: g * (1.0 - out * out)),))


def vector_norm(a, floor: float = NORM_GRAD_FLOOR):
    """Euclidean norm over the last axis.

    The gradient is defined as zero wherever the norm falls below ``floor``
    (the norm itself is not differentiable at the origin).
    """
    if not _is_var(a):
        return np.linalg.norm(_asarray(a), axis=-1)
    av = a.value
    out = np.linalg.norm(av, axis=-1)

    def vjp(g):
        inv = np.where(out > floor, 1.0 / np.where(out > floor, out, 1.0), 0.0)
        return (g * inv)[..., None] * av

    return Var(out, ((a, vjp),))


# ---- backward sweep ----------------------------------------------------------


def _topo_order(root: Var) -> list[Var]:
    order: list[Var] = []
    seen: set[int] = set()
    stack: list[tuple[Var, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent, _ in node.parents:
            if id(parent) not in seen:
                stack.append((parent, False))
    return order


def gradients(output: Var, wrt: Sequence[Var] | Var) -> list[np.ndarray] | np.ndarray:
    """Gradients of a scalar Var with respect to one or more leaf Vars.

    Leaves not reachable from ``output`` get zero gradients.
    """
    single = isinstance(wrt, Var)
    leaves = [wrt] if single else list(wrt)
    if not isinstance(output, Var):
        out = [np.zeros_like(value_of(w)) for w in leaves]
        return out[0] if single else out
    if output.value.size != 1:
        raise ValueError("gradients() requires a scalar output")

    grads: dict[int, np.ndarray] = {id(output): np.ones_like(output.value)}
    for node in reversed(_topo_order(output)):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if any(id(node) == id(w) for w in leaves):
            grads[id(node)] = g  # keep leaf gradients
        for parent, vjp in node.parents:
            contrib = vjp(g)
            prev = grads.get(id(parent))
            grads[id(parent)] = contrib if prev is None else prev + contrib

    out = [grads.get(id(w), np.zeros_like(w.value)) for w in leaves]
    return out[0] if single else out
