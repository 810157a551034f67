"""Reverse-mode automatic differentiation over real and complex numpy arrays.

Every operation acts on whole arrays and records one node on a :class:`Tape`.
Gradients use the convention ``g = dL/dRe(z) + 1j * dL/dIm(z)`` for a complex
node ``z``, which is twice the conjugate Wirtinger derivative ``dL/dz*``. The
factor of two is what makes the gradient of a real leaf equal ``dL/dx``, so
leaf gradients plug straight into a descent step. Holomorphic maps ``w = f(z)``
propagate ``g_z = conj(f'(z)) * g_w``.

Operations whose inputs are all constants return constants and record
nothing, so the same code path serves both plain evaluation and training.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

from .errors import DomainError, IllConditionedError, ShapeError

COND_LIMIT = 1e12


class Var:
    """An array value, optionally tracked by a tape."""

    __slots__ = ("value", "tape", "index", "name", "__weakref__")
    __array_priority__ = 1000.0
    __array_ufunc__ = None

    def __init__(self, value, tape: Tape | None = None, index: int | None = None, name=None):
        self.value = value
        self.tape = tape
        self.index = index
        self.name = name

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    @property
    def dtype(self):
        return self.value.dtype

    @property
    def is_complex(self):
        return np.iscomplexobj(self.value)

    @property
    def tracked(self):
        return self.tape is not None

    def numpy(self):
        return self.value

    def __repr__(self):
        tag = f"node={self.index}" if self.tracked else "const"
        return f"Var(shape={self.shape}, dtype={self.dtype}, {tag})"

    def __len__(self):
        return len(self.value)

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return subtract(self, other)

    def __rsub__(self, other):
        return subtract(other, self)

    def __mul__(self, other):
        return multiply(self, other)

    def __rmul__(self, other):
        return multiply(other, self)

    def __truediv__(self, other):
        return divide(self, other)

    def __rtruediv__(self, other):
        return divide(other, self)

    def __neg__(self):
        return negative(self)

    def __pow__(self, exponent):
        return power(self, exponent)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, index):
        return getitem(self, index)

    @property
    def real(self):
        return real(self)

    @property
    def imag(self):
        return imag(self)

    @property
    def mT(self):
        return swapaxes(self, -1, -2)


@dataclass
class _Edge:
    parent: int
    vjp: Callable[[np.ndarray], np.ndarray]
    real: bool
    shape: tuple


class Tape:
    """Ordered record of operations; insertion order is a topological order."""

    def __init__(self):
        self._nodes: list[list[_Edge]] = []
        self._leaves: dict[int, Var] = {}
        self._params: dict = {}

    def __len__(self):
        return len(self._nodes)

    def reset(self):
        self._nodes.clear()
        self._leaves.clear()
        self._params.clear()

    def leaf(self, value, name=None) -> Var:
        arr = np.array(value, dtype=float)
        if np.iscomplexobj(value):
            raise DomainError("leaves must be real arrays")
        idx = self._push([])
        var = Var(arr, self, idx, name)
        self._leaves[idx] = var
        return var

    def param(self, key, value, name=None) -> Var:
        """Leaf for ``key``, created once per tape so shared parameters share a node."""
        if key not in self._params:
            self._params[key] = self.leaf(value, name=name)
        return self._params[key]

    @property
    def leaves(self) -> list[Var]:
        return list(self._leaves.values())

    def _push(self, edges) -> int:
        self._nodes.append(edges)
        return len(self._nodes) - 1

    def backward(self, loss: Var) -> dict[Var, np.ndarray]:
        """Gradient of a real scalar ``loss`` with respect to every leaf."""
        if not isinstance(loss, Var):
            raise DomainError("loss must be a Var")
        if loss.value.size != 1:
            raise DomainError(f"loss must be a scalar, got shape {loss.shape}")
        if np.iscomplexobj(loss.value):
            raise DomainError("loss must be real-valued")
        if loss.tape is None:
            return {}
        if loss.tape is not self:
            raise DomainError("loss was recorded on a different tape")

        adj: list = [None] * (loss.index + 1)
        adj[loss.index] = np.ones(loss.shape)
        for i in range(loss.index, -1, -1):
            g = adj[i]
            if g is None:
                continue
            for edge in self._nodes[i]:
                contrib = _unbroadcast(np.asarray(edge.vjp(g)), edge.shape)
                if edge.real and np.iscomplexobj(contrib):
                    contrib = contrib.real
                prev = adj[edge.parent]
                adj[edge.parent] = contrib if prev is None else prev + contrib

        grads = {}
        for idx, leaf in self._leaves.items():
            g = adj[idx] if idx < len(adj) else None
            if g is None:
                grads[leaf] = np.zeros(leaf.shape)
                continue
            if np.iscomplexobj(g):
                peak = np.max(np.abs(g), initial=0.0)
                assert np.max(np.abs(g.imag), initial=0.0) <= 1e-12 * max(peak, 1e-300)
                g = g.real
            grads[leaf] = np.array(g, dtype=float).reshape(leaf.shape)
        return grads


def backward(loss: Var) -> dict[Var, np.ndarray]:
    if not isinstance(loss, Var) or loss.tape is None:
        if isinstance(loss, Var) and (loss.value.size != 1 or np.iscomplexobj(loss.value)):
            raise DomainError("loss must be a real scalar")
        return {}
    return loss.tape.backward(loss)


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def as_var(x) -> Var:
    if isinstance(x, Var):
        return x
    arr = np.asarray(x)
    if arr.dtype.kind in "biu":
        arr = arr.astype(float)
    elif arr.dtype.kind == "c" and arr.dtype != np.complex128:
        arr = arr.astype(np.complex128)
    elif arr.dtype.kind == "f" and arr.dtype != np.float64:
        arr = arr.astype(float)
    return Var(arr)


def value_of(x):
    return x.value if isinstance(x, Var) else np.asarray(x)


def _common_tape(inputs: Sequence[Var]) -> Tape | None:
    tape = None
    for v in inputs:
        if v.tape is None:
            continue
        if tape is None:
            tape = v.tape
        elif v.tape is not tape:
            raise DomainError("operands belong to different tapes")
    return tape


def primitive(value, inputs: Sequence[Var], vjps: Sequence[Callable | None]) -> Var:
    """Record a new operation.

    ``vjps[i]`` maps the output gradient to the gradient of ``inputs[i]``
    (before broadcasting is undone); ``None`` marks a non-differentiable input.
    Exposed so callers can add their own operations.
    """
    value = np.asarray(value)
    tape = _common_tape(inputs)
    if tape is None:
        return Var(value)
    edges = [
        _Edge(v.index, fn, not np.iscomplexobj(v.value), v.shape)
        for v, fn in zip(inputs, vjps)
        if v.tape is not None and fn is not None
    ]
    if not edges:
        return Var(value)
    return Var(value, tape, tape._push(edges))


def _binary_shapes(a: Var, b: Var, op: str):
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: cannot broadcast shapes {a.shape} and {b.shape}") from None


# --- elementwise arithmetic -------------------------------------------------

def add(a, b) -> Var:
    a, b = as_var(a), as_var(b)
    _binary_shapes(a, b, "add")
    return primitive(a.value + b.value, [a, b], [lambda g: g, lambda g: g])


def subtract(a, b) -> Var:
    a, b = as_var(a), as_var(b)
    _binary_shapes(a, b, "subtract")
    return primitive(a.value - b.value, [a, b], [lambda g: g, lambda g: -g])


def multiply(a, b) -> Var:
    a, b = as_var(a), as_var(b)
    _binary_shapes(a, b, "multiply")
    av, bv = a.value, b.value
    return primitive(av * bv, [a, b], [lambda g: g * np.conj(bv), lambda g: g * np.conj(av)])


def divide(a, b) -> Var:
    a, b = as_var(a), as_var(b)
    _binary_shapes(a, b, "divide")
    bv = b.value
    out = a.value / bv
    return primitive(
        out,
        [a, b],
        [lambda g: g / np.conj(bv), lambda g: -g * np.conj(out / bv)],
    )


def negative(a) -> Var:
    a = as_var(a)
    return primitive(-a.value, [a], [lambda g: -g])


def power(a, exponent: float) -> Var:
    """``a ** exponent`` for a constant real exponent."""
    if isinstance(exponent, Var) or np.iscomplexobj(exponent):
        raise DomainError("power takes a constant real exponent")
    a = as_var(a)
    p = float(exponent)
    av = a.value
    out = av ** p
    return primitive(out, [a], [lambda g: g * np.conj(p * av ** (p - 1.0))])


def sqrt(a) -> Var:
    return power(a, 0.5)


def exp(a) -> Var:
    a = as_var(a)
    out = np.exp(a.value)
    return primitive(out, [a], [lambda g: g * np.conj(out)])


def log(a) -> Var:
    a = as_var(a)
    av = a.value
    return primitive(np.log(av), [a], [lambda g: g / np.conj(av)])


def sin(a) -> Var:
    a = as_var(a)
    av = a.value
    return primitive(np.sin(av), [a], [lambda g: g * np.conj(np.cos(av))])


def cos(a) -> Var:
    a = as_var(a)
    av = a.value
    return primitive(np.cos(av), [a], [lambda g: -g * np.conj(np.sin(av))])


def tan(a) -> Var:
    a = as_var(a)
    out = np.tan(a.value)
    return primitive(out, [a], [lambda g: g * np.conj(1.0 + out * out)])


def sigmoid(a) -> Var:
    a = as_var(a)
    out = 0.5 * (1.0 + np.tanh(0.5 * a.value))
    return primitive(out, [a], [lambda g: g * out * (1.0 - out)])


def softplus(a) -> Var:
    a = as_var(a)
    av = a.value
    slope = 0.5 * (1.0 + np.tanh(0.5 * av))
    return primitive(np.logaddexp(0.0, av), [a], [lambda g: g * slope])


# --- complex-to-real maps ---------------------------------------------------

def magnitude(a) -> Var:
    a = as_var(a)
    av = a.value
    out = np.abs(av)
    safe = np.where(out > 0, out, 1.0)
    unit = np.where(out > 0, av / safe, 0.0)
    return primitive(out, [a], [lambda g: g * unit])


def abs2(a) -> Var:
    """Squared magnitude."""
    a = as_var(a)
    av = a.value
    out = av.real ** 2 + av.imag ** 2 if np.iscomplexobj(av) else av * av
    return primitive(out, [a], [lambda g: 2.0 * g * av])


def real(a) -> Var:
    a = as_var(a)
    return primitive(np.real(a.value).copy(), [a], [lambda g: np.real(g)])


def imag(a) -> Var:
    a = as_var(a)
    return primitive(np.imag(a.value).copy(), [a], [lambda g: 1j * np.real(g)])


def conj(a) -> Var:
    a = as_var(a)
    return primitive(np.conj(a.value), [a], [lambda g: np.conj(g)])


# --- reductions and reshaping -----------------------------------------------

def _normalize_axes(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(ax % ndim for ax in axis)


def sum(a, axis=None, keepdims=False) -> Var:  # noqa: A001
    a = as_var(a)
    shape = a.shape
    axes = _normalize_axes(axis, a.ndim)

    def vjp(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return np.broadcast_to(g, shape)

    return primitive(np.sum(a.value, axis=axes, keepdims=keepdims), [a], [vjp])


def prod(a, axis: int) -> Var:
    """Product along one axis; the adjoint uses exclusive prefix and suffix
    products, so zero factors are handled without division."""
    a = as_var(a)
    ax = axis % a.ndim

    def vjp(g):
        x = np.moveaxis(a.value, ax, 0)
        ones = np.ones_like(x[:1])
        before = np.cumprod(np.concatenate([ones, x[:-1]]), axis=0)
        after = np.cumprod(np.concatenate([ones, x[:0:-1]]), axis=0)[::-1]
        others = before * after
        return np.moveaxis(np.expand_dims(g, 0) * np.conj(others), 0, ax)

    return primitive(np.prod(a.value, axis=ax), [a], [vjp])


def mean(a, axis=None, keepdims=False) -> Var:
    a = as_var(a)
    axes = _normalize_axes(axis, a.ndim)
    count = int(np.prod([a.shape[ax] for ax in axes])) if axes else 1
    return sum(a, axis=axes, keepdims=keepdims) * (1.0 / count)


def reshape(a, shape) -> Var:
    a = as_var(a)
    old = a.shape
    return primitive(a.value.reshape(shape), [a], [lambda g: g.reshape(old)])


def transpose(a, axes=None) -> Var:
    a = as_var(a)
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    inverse = np.argsort(axes)
    return primitive(np.transpose(a.value, axes), [a], [lambda g: np.transpose(g, inverse)])


def swapaxes(a, i, j) -> Var:
    a = as_var(a)
    return primitive(np.swapaxes(a.value, i, j), [a], [lambda g: np.swapaxes(g, i, j)])


def expand_dims(a, axis) -> Var:
    a = as_var(a)
    return reshape(a, np.expand_dims(a.value, axis).shape)


def getitem(a, index) -> Var:
    a = as_var(a)
    shape = a.shape

    def vjp(g):
        out = np.zeros(shape, dtype=g.dtype)
        np.add.at(out, index, g)
        return out

    return primitive(a.value[index], [a], [vjp])


def concatenate(items, axis=0) -> Var:
    items = [as_var(v) for v in items]
    if not items:
        raise ShapeError("concatenate needs at least one array")
    ref = items[0].shape
    ax = axis % len(ref)
    for v in items[1:]:
        if v.ndim != len(ref) or any(s != r for k, (s, r) in enumerate(zip(v.shape, ref)) if k != ax):
            raise ShapeError(f"concatenate: incompatible shapes {ref} and {v.shape}")
    bounds = np.cumsum([0] + [v.shape[ax] for v in items])

    def slicer(lo, hi):
        return lambda g: np.take(g, np.arange(lo, hi), axis=ax)

    out = np.concatenate([v.value for v in items], axis=ax)
    return primitive(out, items, [slicer(bounds[k], bounds[k + 1]) for k in range(len(items))])


def stack(items, axis=0) -> Var:
    items = [as_var(v) for v in items]
    out = np.stack([v.value for v in items], axis=axis)
    ax = axis % out.ndim
    return primitive(out, items, [(lambda k: lambda g: np.take(g, k, axis=ax))(k) for k in range(len(items))])


def diag_embed(a) -> Var:
    """Place the last axis of ``a`` on the diagonal of a trailing square matrix."""
    a = as_var(a)
    n = a.shape[-1]
    return expand_dims(a, -1) * np.eye(n)


# --- per-bin linear algebra -------------------------------------------------

def _hermitian(x):
    return np.conj(np.swapaxes(x, -1, -2))


def matmul(a, b) -> Var:
    a, b = as_var(a), as_var(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs matrices, got shapes {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: inner dimensions differ, shapes {a.shape} and {b.shape}")
    try:
        out = a.value @ b.value
    except ValueError:
        raise ShapeError(f"matmul: cannot broadcast shapes {a.shape} and {b.shape}") from None
    av, bv = a.value, b.value
    return primitive(out, [a, b], [lambda g: g @ _hermitian(bv), lambda g: _hermitian(av) @ g])


def check_conditioning(mat: np.ndarray, limit: float = COND_LIMIT, what="matrix"):
    """Raise :class:`IllConditionedError` naming the first bad batch index;
    otherwise return the largest condition number.

    Uses the 1-norm condition number from a batched inverse, which is within
    a factor ``n`` of the 2-norm one and much cheaper than per-bin SVDs.
    """
    if mat.shape[-1] == 1:
        cond = np.where(mat[..., 0, 0] != 0, 1.0, np.inf)
    else:
        with np.errstate(all="ignore"):
            try:
                norm_inv = np.abs(np.linalg.inv(mat)).sum(axis=-2).max(axis=-1)
                cond = np.abs(mat).sum(axis=-2).max(axis=-1) * norm_inv
            except np.linalg.LinAlgError:
                cond = np.linalg.cond(mat, 1)
    bad = ~(cond <= limit)
    if np.any(bad):
        first = np.argwhere(bad)[0]
        index = int(first[0]) if len(first) == 1 else tuple(int(i) for i in first)
        raise IllConditionedError(
            f"{what} at bin {index} is ill-conditioned (condition number "
            f"{float(cond[tuple(first)]):.3g} > {limit:.3g})",
            bin_index=index,
            condition=float(cond[tuple(first)]),
        )
    return float(np.max(cond))


def _check_square(a: Var, op):
    if a.ndim < 2 or a.shape[-1] != a.shape[-2]:
        raise ShapeError(f"{op} needs square matrices, got shape {a.shape}")


def inv(a, cond_limit: float = COND_LIMIT) -> Var:
    a = as_var(a)
    _check_square(a, "inv")
    check_conditioning(a.value, cond_limit)
    y = np.linalg.inv(a.value)
    yh = _hermitian(y)
    return primitive(y, [a], [lambda g: -(yh @ g @ yh)])


def solve(a, b, cond_limit: float = COND_LIMIT) -> Var:
    """Per-bin solution of ``a @ x = b`` with ``b`` given as matrices."""
    a, b = as_var(a), as_var(b)
    _check_square(a, "solve")
    if b.ndim < 2 or b.shape[-2] != a.shape[-1]:
        raise ShapeError(f"solve: shapes {a.shape} and {b.shape} are incompatible")
    check_conditioning(a.value, cond_limit)
    av = a.value
    batch = np.broadcast_shapes(av.shape[:-2], b.shape[:-2])
    x = np.linalg.solve(
        np.broadcast_to(av, batch + av.shape[-2:]), np.broadcast_to(b.value, batch + b.shape[-2:])
    )
    cache = {}

    def grad_b(g):
        if "gb" not in cache:
            ah = np.broadcast_to(_hermitian(av), g.shape[:-2] + av.shape[-2:])
            cache["gb"] = np.linalg.solve(ah, g)
        return cache["gb"]

    return primitive(x, [a, b], [lambda g: -(grad_b(g) @ _hermitian(x)), grad_b])


SHORT_FILTER_TAPS = 16


@lru_cache(maxsize=64)
def _power_basis(num_bins: int, radius: float, taps: int) -> np.ndarray:
    """``z_m^-k`` for ``m < num_bins``, ``k < taps``.

    The phase ``m*k`` is reduced modulo the frame length in integers and read
    from a table whose entries at 0, pi and +-pi/2 are exact, so DC and
    Nyquist rows are exactly real.
    """
    L = 2 * (num_bins - 1)
    table = np.exp(-1j * np.pi * np.arange(L) / (num_bins - 1))
    table[0], table[num_bins - 1] = 1.0, -1.0
    if L % 4 == 0:
        table[L // 4], table[3 * L // 4] = -1j, 1j
    k = np.arange(taps)
    phase = np.outer(np.arange(num_bins), k) % L
    return table[phase] * (float(radius) ** -k.astype(float))[None, :]


def dft_real(x, num_bins: int, radius: float = 1.0) -> Var:
    """Sample ``sum_k x[k] z^-k`` on ``z = radius * exp(1j*pi*m/(num_bins-1))``.

    ``x`` is real with taps on axis 0; trailing axes are channels. Short
    filters are evaluated directly against a cached power basis; longer ones
    by folding the taps modulo the frame length ``2*(num_bins-1)`` and taking
    a real FFT, which is exact for any tap count.
    """
    x = as_var(x)
    if np.iscomplexobj(x.value):
        raise DomainError("dft_real expects real coefficients")
    K = x.shape[0]
    L = 2 * (num_bins - 1)
    if K <= SHORT_FILTER_TAPS:
        basis = _power_basis(num_bins, float(radius), K)
        out = np.tensordot(basis, x.value, axes=(1, 0))
        return primitive(out, [x], [lambda g: np.tensordot(np.conj(basis), g, axes=(0, 0))])

    k = np.arange(K)
    scale = (float(radius) ** -k.astype(float)).reshape((K,) + (1,) * (x.ndim - 1))

    def fold(v):
        if K <= L:
            return v
        pad = (-K) % L
        v = np.concatenate([v, np.zeros((pad,) + v.shape[1:], dtype=v.dtype)], axis=0)
        return v.reshape((-1, L) + v.shape[1:]).sum(axis=0)

    out = np.fft.rfft(fold(x.value * scale), n=L, axis=0)

    def vjp(g):
        padded = np.concatenate([g, np.zeros((L - num_bins,) + g.shape[1:], dtype=g.dtype)], axis=0)
        back = np.fft.ifft(padded, axis=0) * L
        return np.take(back, k % L, axis=0) * scale

    return primitive(out, [x], [vjp])


# --- gradient checking ------------------------------------------------------

@dataclass
class ParamCheck:
    name: str
    max_rel_error: float
    analytic: np.ndarray
    numeric: np.ndarray
    message: str = ""

    @property
    def finite(self):
        return np.all(np.isfinite(self.numeric)) and np.all(np.isfinite(self.analytic))


@dataclass
class GradCheckReport:
    tol: float
    entries: list[ParamCheck] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(e.finite and e.max_rel_error < self.tol for e in self.entries)

    @property
    def max_rel_error(self) -> float:
        return max((e.max_rel_error for e in self.entries), default=0.0)

    def summary(self) -> str:
        lines = []
        for e in self.entries:
            flag = "ok" if e.finite and e.max_rel_error < self.tol else "FAIL"
            extra = f" ({e.message})" if e.message else ""
            lines.append(f"{e.name:>20s}  rel_err={e.max_rel_error:.2e}  {flag}{extra}")
        return "\n".join(lines)


def grad_check(builder, params, step: float = 1e-6, tol: float = 1e-4, names=None,
               order: int = 2) -> GradCheckReport:
    """Compare tape gradients against central finite differences.

    ``builder`` receives a list of :class:`Var` (one per array in ``params``)
    and returns a real scalar loss. The perturbation for entry ``p`` is
    ``step * max(1, |p|)``. ``order=4`` uses the five-point central stencil,
    which tolerates larger steps and so less round-off in losses that are
    only known to ~1e-10 (e.g. resonant filters near DC). Relative errors use the denominator
    ``max(|analytic|, |numeric|, 1e-6 * max|numeric| + 1e-12)`` so entries many
    orders below the largest gradient are compared on an absolute footing.
    """
    if order not in (2, 4):
        raise ValueError("order must be 2 or 4")
    params = [np.array(p, dtype=float) for p in params]
    names = list(names) if names is not None else [f"param{i}" for i in range(len(params))]
    tape = Tape()
    leaves = [tape.leaf(p, name=n) for p, n in zip(params, names)]
    report = GradCheckReport(tol=tol)
    try:
        loss = builder(leaves)
        grads = tape.backward(loss)
    except (ArithmeticError, FloatingPointError) as exc:
        for p, n in zip(params, names):
            report.entries.append(ParamCheck(n, np.inf, np.full(p.shape, np.nan), np.full(p.shape, np.nan), str(exc)))
        return report

    def evaluate(values):
        try:
            with np.errstate(all="ignore"):
                return float(value_of(builder([Var(v) for v in values])))
        except (ArithmeticError, FloatingPointError):
            return np.nan

    numerics = []
    for i, p in enumerate(params):
        numeric = np.zeros_like(p)
        for idx in np.ndindex(p.shape):
            eps = step * max(1.0, abs(p[idx]))

            def shifted(k):
                values = [q.copy() for q in params]
                values[i][idx] += k * eps
                return evaluate(values)

            if order == 2:
                numeric[idx] = (shifted(1) - shifted(-1)) / (2 * eps)
            else:
                numeric[idx] = (8 * (shifted(1) - shifted(-1)) - (shifted(2) - shifted(-2))) / (12 * eps)
        numerics.append(numeric)

    scale = max((np.max(np.abs(n), initial=0.0) for n in numerics), default=0.0)
    floor = 1e-6 * scale + 1e-12
    for leaf, numeric, n in zip(leaves, numerics, names):
        analytic = grads[leaf]
        msg = ""
        if not np.all(np.isfinite(numeric)):
            msg = "non-finite loss at perturbed point"
            err = np.inf
        else:
            denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
            err = float(np.max(np.abs(analytic - numeric) / denom, initial=0.0))
        report.entries.append(ParamCheck(n, err, analytic, numeric, msg))
    return report
