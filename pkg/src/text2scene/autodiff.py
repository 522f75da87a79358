"""Minimal reverse-mode autodiff over float64 numpy arrays.

Only the primitives the layout decoder needs: (stacked) matmul, broadcast
add/mul, tanh, sigmoid, masked softmax, concat, embedding lookup, dropout and
weighted negative log likelihood. Gradients are verified against central
finite differences in the test suite.
"""
from __future__ import annotations

import numpy as np


class DimensionError(ValueError):
    pass


_CLAMP_EPS = 1e-12
# running count of probability clamps inside nll (zero-probability targets)
clamp_count = 0


class Tensor:
    __slots__ = ("data", "grad", "parents", "backward_fn", "requires_grad")

    def __init__(self, data, requires_grad=False, parents=(), backward_fn=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.parents = parents
        self.backward_fn = backward_fn
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)

    @property
    def shape(self):
        return self.data.shape

    def item(self) -> float:
        return float(self.data)

    def check_finite(self, name: str = "tensor"):
        if not np.isfinite(self.data).all():
            raise FloatingPointError(f"{name} contains NaN/Inf")

    def backward(self):
        if self.data.size != 1:
            raise DimensionError("backward() requires a scalar output")
        order = _topo_order(self)
        for t in order:
            if t.requires_grad:
                t.grad = np.zeros_like(t.data)
        self.grad = np.ones_like(self.data)
        for t in reversed(order):
            if t.backward_fn is not None and t.requires_grad:
                t.backward_fn(t.grad)


def _topo_order(root: Tensor) -> list[Tensor]:
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum gradient over axes that numpy broadcasting expanded."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def constant(data) -> Tensor:
    return Tensor(data)


def parameter(data) -> Tensor:
    return Tensor(data, requires_grad=True)


def add(a: Tensor, b: Tensor) -> Tensor:
    try:
        out_data = a.data + b.data
    except ValueError:
        raise DimensionError(f"add: incompatible shapes {a.shape} and {b.shape}")

    def backward(g):
        if a.requires_grad:
            a.grad += _unbroadcast(g, a.shape)
        if b.requires_grad:
            b.grad += _unbroadcast(g, b.shape)

    return Tensor(out_data, parents=(a, b), backward_fn=backward)


def mul(a: Tensor, b: Tensor) -> Tensor:
    try:
        out_data = a.data * b.data
    except ValueError:
        raise DimensionError(f"mul: incompatible shapes {a.shape} and {b.shape}")

    def backward(g):
        if a.requires_grad:
            a.grad += _unbroadcast(g * b.data, a.shape)
        if b.requires_grad:
            b.grad += _unbroadcast(g * a.data, b.shape)

    return Tensor(out_data, parents=(a, b), backward_fn=backward)


def scale(a: Tensor, c: float) -> Tensor:
    def backward(g):
        if a.requires_grad:
            a.grad += g * c

    return Tensor(a.data * c, parents=(a,), backward_fn=backward)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Supports stacked (batched) operands through numpy matmul semantics."""
    try:
        out_data = np.matmul(a.data, b.data)
    except ValueError:
        raise DimensionError(f"matmul: incompatible shapes {a.shape} and {b.shape}")

    def backward(g):
        if a.requires_grad:
            ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
            a.grad += _unbroadcast(ga, a.shape)
        if b.requires_grad:
            gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
            b.grad += _unbroadcast(gb, b.shape)

    return Tensor(out_data, parents=(a, b), backward_fn=backward)


def tanh(a: Tensor) -> Tensor:
    out_data = np.tanh(a.data)

    def backward(g):
        if a.requires_grad:
            a.grad += g * (1.0 - out_data ** 2)

    return Tensor(out_data, parents=(a,), backward_fn=backward)


def sigmoid(a: Tensor) -> Tensor:
    out_data = 1.0 / (1.0 + np.exp(-a.data))

    def backward(g):
        if a.requires_grad:
            a.grad += g * out_data * (1.0 - out_data)

    return Tensor(out_data, parents=(a,), backward_fn=backward)


def softmax(a: Tensor, axis: int = -1, mask: np.ndarray | None = None) -> Tensor:
    """Softmax along `axis`; positions where `mask` is False get exact zeros."""
    z = a.data
    if mask is not None:
        if not mask.any(axis=axis).all():
            raise DimensionError("softmax: all positions masked along axis")
        z = np.where(mask, z, -np.inf)
    z = z - z.max(axis=axis, keepdims=True)
    e = np.exp(z)
    out_data = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        if a.requires_grad:
            dot = (g * out_data).sum(axis=axis, keepdims=True)
            a.grad += out_data * (g - dot)

    return Tensor(out_data, parents=(a,), backward_fn=backward)


def concat(tensors: list[Tensor], axis: int = -1) -> Tensor:
    out_data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                idx = [slice(None)] * g.ndim
                idx[axis] = slice(lo, hi)
                t.grad += g[tuple(idx)]

    return Tensor(out_data, parents=tuple(tensors), backward_fn=backward)


def embedding_lookup(table: Tensor, indices) -> Tensor:
    indices = np.asarray(indices)
    if indices.size and (indices.min() < 0 or indices.max() >= table.shape[0]):
        raise IndexError(
            f"embedding index out of range [0, {table.shape[0]}): "
            f"{indices.min()}..{indices.max()}")
    out_data = table.data[indices]

    def backward(g):
        if table.requires_grad:
            np.add.at(table.grad, indices, g)

    return Tensor(out_data, parents=(table,), backward_fn=backward)


def soft_lookup(table: Tensor, dist: Tensor) -> Tensor:
    """Distribution-weighted embedding: dist (..., K) @ table (K, E)."""
    return matmul(dist, table)


def dropout(a: Tensor, p: float, seed: int, train: bool) -> Tensor:
    if not train or p <= 0.0:
        return a
    rng = np.random.Generator(np.random.PCG64(seed & 0xFFFFFFFFFFFFFFFF))
    mask = (rng.random(a.shape) >= p) / (1.0 - p)

    def backward(g):
        if a.requires_grad:
            a.grad += g * mask

    return Tensor(a.data * mask, parents=(a,), backward_fn=backward)


def nll(dist: Tensor, targets, class_weights, sample_mask=None) -> Tensor:
    """Weighted negative log likelihood, summed over the batch.

    dist: (B, K) probabilities; targets: (B,) int; class_weights: (K,);
    sample_mask: (B,) float/bool selecting contributing rows.
    """
    global clamp_count
    targets = np.asarray(targets)
    w = np.asarray(class_weights, dtype=np.float64)
    b = dist.shape[0]
    if targets.shape != (b,):
        raise DimensionError(f"nll: targets shape {targets.shape} vs batch {b}")
    mask = np.ones(b) if sample_mask is None else np.asarray(sample_mask, dtype=np.float64)
    rows = np.arange(b)
    p = dist.data[rows, targets]
    clamped = p < _CLAMP_EPS
    if clamped.any():
        clamp_count += int(clamped.sum())
        p = np.maximum(p, _CLAMP_EPS)
    wt = w[targets] * mask
    out_data = np.array((-np.log(p) * wt).sum())

    def backward(g):
        if dist.requires_grad:
            gd = np.zeros_like(dist.data)
            gd[rows, targets] = -wt / p * float(g)
            dist.grad += gd

    return Tensor(out_data, parents=(dist,), backward_fn=backward)


def tsum(a: Tensor) -> Tensor:
    def backward(g):
        if a.requires_grad:
            a.grad += np.full(a.shape, float(g))

    return Tensor(np.array(a.data.sum()), parents=(a,), backward_fn=backward)


def reshape(a: Tensor, shape) -> Tensor:
    def backward(g):
        if a.requires_grad:
            a.grad += g.reshape(a.shape)

    return Tensor(a.data.reshape(shape), parents=(a,), backward_fn=backward)


def swap_last(a: Tensor) -> Tensor:
    """Transpose the last two axes."""
    def backward(g):
        if a.requires_grad:
            a.grad += np.swapaxes(g, -1, -2)

    return Tensor(np.swapaxes(a.data, -1, -2), parents=(a,), backward_fn=backward)


def grad_check(f, tensors: list[Tensor], eps: float = 1e-6) -> float:
    """Worst per-tensor relative error between tape gradients and central
    differences.

    Differences are taken coordinate-wise; the error for each tensor is the L2
    norm of the difference over the larger of the two gradient norms, which
    keeps coordinates whose true gradient sits below the finite-difference
    noise floor from dominating. `f` must rebuild the graph from `tensors`
    (a list or a name->Tensor dict) and return a scalar Tensor.
    """
    if isinstance(tensors, dict):
        tensors = list(tensors.values())
    out = f()
    if out.data.size != 1:
        raise DimensionError("grad_check requires a scalar-valued function")
    out.backward()
    analytic = [t.grad.copy() for t in tensors]
    worst = 0.0
    for t, grad in zip(tensors, analytic):
        flat = t.data.reshape(-1)
        num = np.zeros_like(flat)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            hi = float(f().data)
            flat[i] = orig - eps
            lo = float(f().data)
            flat[i] = orig
            num[i] = (hi - lo) / (2 * eps)
        num = num.reshape(t.data.shape)
        diff = float(np.linalg.norm(num - grad))
        denom = max(float(np.linalg.norm(num)), float(np.linalg.norm(grad)), 1e-12)
        worst = max(worst, diff / denom if denom > 1e-12 else diff)
    return worst
