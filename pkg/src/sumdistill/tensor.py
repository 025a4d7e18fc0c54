"""Reverse-mode autodiff over float32 numpy arrays, plus Adam and a gradient checker.

Provides exactly the primitives the transformer students need: matmul, add,
mul, GELU, embedding lookup, layer normalization, softmax, next-token
cross-entropy, dropout, reshape/transpose, and sum. Graphs are built during
the forward pass and walked once by backward().
"""

from __future__ import annotations

import math
from contextlib import contextmanager
from typing import Callable, Sequence

import numpy as np


class TensorError(ValueError):
    """Shape, dtype, or graph misuse in the autodiff core."""


class NonFiniteError(ArithmeticError):
    """A loss or gradient became NaN/Inf."""


_grad_enabled = True


@contextmanager
def no_grad():
    """Disable graph construction (inference fast path)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    """Shape + flat float32 payload + optional gradient."""

    __slots__ = ("array", "grad", "requires_grad", "_parents", "_backward", "_scalar64")

    def __init__(self, array, requires_grad: bool = False):
        # An explicit float64 ndarray passes through so grad_check's numeric
        # oracle can run at double precision; everything else becomes float32.
        keep64 = isinstance(array, np.ndarray) and array.dtype == np.float64
        self.array = np.ascontiguousarray(array, dtype=np.float64 if keep64 else np.float32)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[], None] | None = None
        # Scalar reductions keep their float64 value so central differences
        # are not quantized by the float32 cast.
        self._scalar64: float | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.array.shape

    @property
    def data(self) -> np.ndarray:
        """Flat row-major float32 view of the payload."""
        return self.array.reshape(-1)

    def item(self) -> float:
        if self.array.size != 1:
            raise TensorError(f"item() on tensor of shape {self.shape}")
        return float(self.array.reshape(())[()])

    def zero_grad(self) -> None:
        self.grad = None

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.array)
        self.grad += g

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __matmul__(self, other):
        return matmul(self, other)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float32))


def _make(out_array: np.ndarray, parents: tuple[Tensor, ...], backward: Callable[[np.ndarray], None]) -> Tensor:
    """Wrap an op result, attaching the graph node when grads are live."""
    out = Tensor(out_array)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents

        def run():
            backward(out.grad)

        out._backward = run
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum gradient over axes that numpy broadcasting expanded."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = a.array + b.array

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g, b.shape))

    return _make(out, (a, b), backward)


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = a.array * b.array

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g * b.array, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g * a.array, b.shape))

    return _make(out, (a, b), backward)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.array.ndim < 2 or b.array.ndim < 2:
        raise TensorError("matmul needs rank >= 2 operands")
    out = a.array @ b.array

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g @ b.array.swapaxes(-1, -2), a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(a.array.swapaxes(-1, -2) @ g, b.shape))

    return _make(out, (a, b), backward)


_GELU_C = math.sqrt(2.0 / math.pi)


def gelu(x: Tensor) -> Tensor:
    """GELU, tanh approximation: 0.5x(1 + tanh(c(x + 0.044715 x^3)))."""
    x = _as_tensor(x)
    xa = x.array
    inner = np.float32(_GELU_C) * (xa + np.float32(0.044715) * xa * xa * xa)
    t = np.tanh(inner)
    out = np.float32(0.5) * xa * (1.0 + t)

    def backward(g):
        if x.requires_grad:
            # d/dx = 0.5(1+t) + 0.5x(1-t^2) * c(1 + 3*0.044715 x^2)
            dinner = np.float32(_GELU_C) * (1.0 + np.float32(3 * 0.044715) * xa * xa)
            dx = np.float32(0.5) * (1.0 + t) + np.float32(0.5) * xa * (1.0 - t * t) * dinner
            x._accumulate(g * dx)

    return _make(out, (x,), backward)


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean / unit variance, then scale and shift."""
    x, gamma, beta = _as_tensor(x), _as_tensor(gamma), _as_tensor(beta)
    mu = x.array.mean(axis=-1, keepdims=True)
    var = x.array.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + np.float32(eps))
    xhat = (x.array - mu) * inv
    out = xhat * gamma.array + beta.array

    def backward(g):
        if gamma.requires_grad:
            gamma._accumulate(_unbroadcast(g * xhat, gamma.shape))
        if beta.requires_grad:
            beta._accumulate(_unbroadcast(g, beta.shape))
        if x.requires_grad:
            dxhat = g * gamma.array
            m1 = dxhat.mean(axis=-1, keepdims=True)
            m2 = (dxhat * xhat).mean(axis=-1, keepdims=True)
            x._accumulate((dxhat - m1 - xhat * m2) * inv)

    return _make(out, (x, gamma, beta), backward)


def softmax_rows(x: Tensor) -> Tensor:
    """Softmax along the last axis, computed with max-subtraction."""
    x = _as_tensor(x)
    if x.array.ndim < 1 or x.shape[-1] == 0:
        raise TensorError("softmax needs a nonempty last dimension")
    z = x.array - x.array.max(axis=-1, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        if x.requires_grad:
            dot = (g * y).sum(axis=-1, keepdims=True)
            x._accumulate(y * (g - dot))

    return _make(y, (x,), backward)


def embedding(table: Tensor, ids: np.ndarray) -> Tensor:
    """Row lookup: out[..., :] = table[ids[...], :]."""
    table = _as_tensor(table)
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise TensorError(f"ids out of range for table with {table.shape[0]} rows")
    out = table.array[ids]

    def backward(g):
        if table.requires_grad:
            gt = np.zeros_like(table.array)
            np.add.at(gt, ids.reshape(-1), g.reshape(-1, table.shape[1]))
            table._accumulate(gt)

    return _make(out, (table,), backward)


def dropout(x: Tensor, p: float, rng: np.random.Generator, training: bool) -> Tensor:
    """Inverted dropout; identity in evaluation mode."""
    if not 0.0 <= p < 1.0:
        raise TensorError(f"dropout probability must be in [0, 1), got {p}")
    if not training or p == 0.0:
        return x
    x = _as_tensor(x)
    mask = (rng.random(x.shape) >= p).astype(np.float32) / np.float32(1.0 - p)
    out = x.array * mask

    def backward(g):
        if x.requires_grad:
            x._accumulate(g * mask)

    return _make(out, (x,), backward)


def reshape(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    x = _as_tensor(x)
    out = x.array.reshape(shape)

    def backward(g):
        if x.requires_grad:
            x._accumulate(g.reshape(x.shape))

    return _make(out, (x,), backward)


def transpose(x: Tensor, axes: tuple[int, ...]) -> Tensor:
    x = _as_tensor(x)
    out = np.ascontiguousarray(x.array.transpose(axes))
    inverse = np.argsort(axes)

    def backward(g):
        if x.requires_grad:
            x._accumulate(np.ascontiguousarray(g.transpose(inverse)))

    return _make(out, (x,), backward)


def sum_all(x: Tensor) -> Tensor:
    x = _as_tensor(x)
    exact = float(x.array.sum(dtype=np.float64))

    def backward(g):
        if x.requires_grad:
            x._accumulate(np.full_like(x.array, np.float32(g)))

    out = _make(np.asarray(np.float32(exact)), (x,), backward)
    out._scalar64 = exact
    return out


def cross_entropy_next_token(logits: Tensor, targets: np.ndarray, mask: np.ndarray) -> Tensor:
    """Mean negative log-probability of targets over unmasked positions.

    logits is T x V; targets and mask have length T. Masked positions carry
    no loss and no gradient.
    """
    logits = _as_tensor(logits)
    if logits.array.ndim != 2:
        raise TensorError(f"logits must be T x V, got shape {logits.shape}")
    T, V = logits.shape
    targets = np.asarray(targets, dtype=np.int64)
    mask = np.asarray(mask, dtype=bool)
    if targets.shape != (T,) or mask.shape != (T,):
        raise TensorError("targets and mask must have length T")
    if targets.size and (targets.min() < 0 or targets.max() >= V):
        raise TensorError(f"target ids out of range for vocab {V}")
    n = int(mask.sum())
    if n == 0:
        raise TensorError("all positions masked")

    m = logits.array.max(axis=-1, keepdims=True)
    z = logits.array - m
    lse = m[:, 0] + np.log(np.exp(z).sum(axis=-1))
    per_pos = lse - logits.array[np.arange(T), targets]
    exact = float((per_pos * mask).sum(dtype=np.float64) / n)

    def backward(g):
        if logits.requires_grad:
            p = np.exp(z)
            p /= p.sum(axis=-1, keepdims=True)
            p[np.arange(T), targets] -= 1.0
            p *= (mask.astype(np.float32) / np.float32(n))[:, None]
            logits._accumulate(np.float32(g) * p)

    out = _make(np.asarray(np.float32(exact)), (logits,), backward)
    out._scalar64 = exact
    return out


def backward(output: Tensor) -> None:
    """Populate .grad on every requires_grad ancestor of a scalar output."""
    if output.array.size != 1:
        raise TensorError(f"backward needs a scalar output, got shape {output.shape}")
    topo: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(output, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    output._accumulate(np.ones_like(output.array))
    for node in reversed(topo):
        if node._backward is not None and node.grad is not None:
            node._backward()


class AdamState:
    """First/second-moment accumulators plus the step counter."""

    def __init__(self, params: Sequence[Tensor], beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.m = [np.zeros_like(p.array) for p in params]
        self.v = [np.zeros_like(p.array) for p in params]
        self.t = 0
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps


def adam_step(params: Sequence[Tensor], grads: Sequence[np.ndarray], state: AdamState, lr: float) -> None:
    """One bias-corrected Adam update, in place on the parameter arrays."""
    if lr <= 0:
        raise TensorError(f"learning rate must be positive, got {lr}")
    if len(params) != len(grads) or len(params) != len(state.m):
        raise TensorError("params/grads/state length mismatch")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for i, (p, g) in enumerate(zip(params, grads)):
        if g is None:
            continue
        if g.shape != p.array.shape:
            raise TensorError(f"param {i}: grad shape {g.shape} != param shape {p.array.shape}")
        if not np.isfinite(g).all():
            raise NonFiniteError(f"param {i}: non-finite gradient")
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * g
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * g * g
        mhat = state.m[i] / c1
        vhat = state.v[i] / c2
        p.array -= (lr * mhat / (np.sqrt(vhat) + state.eps)).astype(np.float32)


def clip_global_norm(grads: Sequence[np.ndarray], max_norm: float) -> float:
    """Scale gradients in place so their global L2 norm is at most max_norm."""
    total = 0.0
    for g in grads:
        if g is not None:
            total += float((g.astype(np.float64) ** 2).sum())
    norm = math.sqrt(total)
    if norm > max_norm > 0:
        scale = np.float32(max_norm / norm)
        for g in grads:
            if g is not None:
                g *= scale
    return norm


def grad_check(f: Callable[[], Tensor], params: Sequence[Tensor], eps: float = 1e-3) -> float:
    """Max relative error between backward gradients and central differences.

    The backward pass under test runs at the parameters' own (float32)
    precision; the central-difference oracle re-evaluates the function with
    the parameters lifted to float64 so the comparison measures gradient
    correctness rather than probe rounding. Relative error per coordinate is
    |ga - gn| / max(|ga|, |gn|, 1). The function is re-evaluated twice per
    coordinate, so keep params small.
    """
    if eps <= 0:
        raise TensorError(f"eps must be positive, got {eps}")
    for p in params:
        p.zero_grad()
    out = f()
    if not np.isfinite(out.array).all():
        raise NonFiniteError("non-finite function value in grad_check")
    backward(out)
    analytic = [None if p.grad is None else p.grad.copy() for p in params]

    def scalar(t: Tensor) -> float:
        return t._scalar64 if t._scalar64 is not None else t.item()

    originals = [p.array for p in params]
    for p in params:
        p.array = p.array.astype(np.float64)
    try:
        worst = 0.0
        for pi, p in enumerate(params):
            flat = p.array.reshape(-1)
            ga = analytic[pi]
            ga_flat = np.zeros(flat.size) if ga is None else ga.reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + eps
                with no_grad():
                    f1 = scalar(f())
                flat[i] = orig - eps
                with no_grad():
                    f2 = scalar(f())
                flat[i] = orig
                if not (math.isfinite(f1) and math.isfinite(f2)):
                    raise NonFiniteError("non-finite evaluation in grad_check")
                gn = (f1 - f2) / (2.0 * eps)
                err = abs(float(ga_flat[i]) - gn) / max(abs(float(ga_flat[i])), abs(gn), 1.0)
                worst = max(worst, err)
    finally:
        for p, arr in zip(params, originals):
            p.array = arr
    return worst
