"""Minimal reverse-mode autodiff over numpy arrays.

Tape-based: every op returns a Tensor holding its parents and a backward
closure; `backward(loss)` topologically sorts the recorded graph and
accumulates gradients, so a tensor feeding several consumers receives the
sum of all contributions. Parameters and activations are float32 by
default; the finite-difference oracle in `grad_check` runs in float64.

Only the operations the model needs are provided: matmul, add (with
row-broadcast bias), sigmoid, tanh, elementwise mul, sum, concat on the
last axis, embedding lookup, dropout with an externally supplied mask, and
softmax cross-entropy. Custom fused ops (the GRU sequence) hook into the
tape via `Tensor.from_op`.
"""

from __future__ import annotations

import numpy as np


class ShapeError(ValueError):
    pass


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "name")

    def __init__(self, data, requires_grad: bool = False, name: str = ""):
        data = np.asarray(data)
        if data.dtype not in (np.float32, np.float64):
            data = data.astype(np.float32)
        self.data = data
        self.requires_grad = requires_grad
        self.grad = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @classmethod
    def from_op(cls, data, parents, backward) -> "Tensor":
        """Create a graph node. `backward(grad)` must return one gradient
        array (or None) per parent."""
        out = cls(data)
        out._parents = tuple(parents)
        out._backward = backward
        out.requires_grad = any(p.requires_grad or p._parents for p in out._parents)
        return out

    def accumulate_grad(self, grad) -> None:
        if self.grad is None:
            self.grad = np.array(grad, dtype=self.data.dtype, copy=True)
        else:
            self.grad += grad

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        tag = f" {self.name!r}" if self.name else ""
        return f"Tensor{tag}(shape={self.shape}, dtype={self.dtype})"


def backward(loss: Tensor) -> None:
    """Populate .grad for every tensor reachable from a scalar loss."""
    if loss.data.shape != ():
        raise ShapeError(f"backward requires a scalar, got shape {loss.data.shape}")
    topo: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            topo.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in visited:
                stack.append((parent, False))
    loss.accumulate_grad(np.ones((), dtype=loss.data.dtype))
    for node in reversed(topo):
        if node._backward is None or node.grad is None:
            continue
        grads = node._backward(node.grad)
        for parent, grad in zip(node._parents, grads):
            if grad is not None and (parent.requires_grad or parent._parents):
                parent.accumulate_grad(grad)


# ---------------------------------------------------------------------------
# Ops
# ---------------------------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape[-1] != b.shape[0]:
        raise ShapeError(f"matmul: {a.shape} @ {b.shape}")
    out = a.data @ b.data

    def back(grad):
        ga = grad @ b.data.T
        if a.data.ndim == 1:
            gb = np.outer(a.data, grad)
        else:
            gb = a.data.T @ grad
        return ga, gb

    return Tensor.from_op(out, (a, b), back)


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise add; also supports adding a (D,) bias to (T, D) rows."""
    if a.shape != b.shape and not (
        len(b.shape) == 1 and a.shape[-1:] == b.shape
    ):
        raise ShapeError(f"add: {a.shape} + {b.shape}")
    out = a.data + b.data

    def back(grad):
        gb = grad
        if b.shape != a.shape:
            gb = grad.reshape(-1, b.shape[0]).sum(axis=0)
        return grad, gb

    return Tensor.from_op(out, (a, b), back)


def mul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError(f"mul: {a.shape} * {b.shape}")
    out = a.data * b.data

    def back(grad):
        return grad * b.data, grad * a.data

    return Tensor.from_op(out, (a, b), back)


def sigmoid(x: Tensor) -> Tensor:
    out = 1.0 / (1.0 + np.exp(-x.data))

    def back(grad):
        return (grad * out * (1.0 - out),)

    return Tensor.from_op(out, (x,), back)


def tanh(x: Tensor) -> Tensor:
    out = np.tanh(x.data)

    def back(grad):
        return (grad * (1.0 - out * out),)

    return Tensor.from_op(out, (x,), back)


def tsum(x: Tensor) -> Tensor:
    out = x.data.sum()

    def back(grad):
        return (np.full(x.shape, grad, dtype=x.dtype),)

    return Tensor.from_op(out, (x,), back)


def concat(a: Tensor, b: Tensor) -> Tensor:
    """Concatenate along the last axis."""
    if a.shape[:-1] != b.shape[:-1]:
        raise ShapeError(f"concat: {a.shape} ++ {b.shape}")
    out = np.concatenate([a.data, b.data], axis=-1)
    split = a.shape[-1]

    def back(grad):
        return grad[..., :split], grad[..., split:]

    return Tensor.from_op(out, (a, b), back)


def embedding_lookup(table: Tensor, indices) -> Tensor:
    """Row gather; the gradient scatter-adds only into the selected rows."""
    idx = np.asarray(indices)
    out = table.data[idx]

    def back(grad):
        gtable = np.zeros_like(table.data)
        np.add.at(gtable, idx, grad)
        return (gtable,)

    return Tensor.from_op(out, (table,), back)


def dropout_apply(x: Tensor, mask, rate: float) -> Tensor:
    """Inverted-scaling dropout with an externally sampled 0/1 mask.

    The mask may broadcast over leading axes (a per-sequence mask applied
    at every time-step). rate=0 with an all-ones mask is the identity.
    """
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate {rate} outside [0, 1)")
    mask = np.asarray(mask, dtype=x.dtype)
    scale = mask / (1.0 - rate)
    out = x.data * scale

    def back(grad):
        return (grad * scale,)

    return Tensor.from_op(out, (x,), back)


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_cross_entropy_each(logits: Tensor, targets) -> tuple[Tensor, np.ndarray]:
    """Mean cross-entropy over rows, plus the per-row losses.

    logits: (T, V) or (V,); targets: (T,) ints or a single int.
    """
    tgt = np.asarray(targets)
    data = logits.data
    squeeze = data.ndim == 1
    if squeeze:
        data = data[None, :]
        tgt = tgt.reshape(1)
    if tgt.shape[0] != data.shape[0]:
        raise ShapeError(f"cross_entropy: {data.shape} logits vs {tgt.shape} targets")
    shifted = data - data.max(axis=-1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=-1))
    rows = np.arange(data.shape[0])
    per_position = (log_z - shifted[rows, tgt]).astype(data.dtype)
    loss = per_position.mean()

    def back(grad):
        probs = softmax(data)
        probs[rows, tgt] -= 1.0
        g = probs * (grad / data.shape[0])
        return (g[0] if squeeze else g,)

    return Tensor.from_op(loss, (logits,), back), per_position


def softmax_cross_entropy(logits: Tensor, target_index) -> Tensor:
    """-log softmax(logits)[target]; mean over rows when batched."""
    loss, _ = softmax_cross_entropy_each(logits, target_index)
    return loss


# ---------------------------------------------------------------------------
# Gradient checking
# ---------------------------------------------------------------------------

def grad_check(f, inputs, eps: float = 1e-3, max_entries: int = 50, seed: int = 0):
    """Compare backward gradients of scalar-valued `f(*inputs)` against
    central finite differences computed in float64.

    Checks up to `max_entries` randomly chosen entries per input tensor and
    returns the maximum relative error, normalized by the largest gradient
    magnitude seen for that tensor.
    """
    inputs64 = [
        Tensor(t.data.astype(np.float64), requires_grad=t.requires_grad)
        for t in inputs
    ]
    loss = f(*inputs64)
    backward(loss)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for tensor in inputs64:
        if not tensor.requires_grad:
            continue
        analytic = tensor.grad
        if analytic is None:
            analytic = np.zeros_like(tensor.data)
        flat = tensor.data.reshape(-1)
        n = flat.shape[0]
        picks = rng.choice(n, size=min(n, max_entries), replace=False)
        denom = max(np.abs(analytic).max(), 1e-8)
        for k in picks:
            orig = flat[k]
            flat[k] = orig + eps
            up = float(f(*inputs64).data)
            flat[k] = orig - eps
            down = float(f(*inputs64).data)
            flat[k] = orig
            numeric = (up - down) / (2 * eps)
            err = abs(numeric - analytic.reshape(-1)[k]) / denom
            worst = max(worst, err)
    return worst
