"""Dense float64 tensors with reverse-mode gradients.

The op set is exactly what a small attention encoder needs: matmul, adds,
row softmax with masking, activations, layer norm, embedding lookups,
slicing, concatenation, cross-entropy, dropout, and two gather-style ops
that move relation codes in and out of attention matrices.

Every op builds a closure that scatters the output gradient into its
parents; backward() walks the recorded graph once in reverse topological
order.  Gradients accumulate until zeroed.
"""

from __future__ import annotations

import numpy as np


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad = np.zeros_like(self.data) if requires_grad else None
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    def zero_grad(self):
        if self.grad is not None:
            self.grad[...] = 0.0

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


def parameter(data) -> Tensor:
    return Tensor(data, requires_grad=True)


class ParamStore:
    """Ordered registry of named parameters with seeded initialization."""

    def __init__(self, rng):
        self.rng = rng
        self._params: dict[str, Tensor] = {}

    def _register(self, name: str, tensor: Tensor) -> Tensor:
        if name in self._params:
            raise ValueError(f"duplicate parameter name {name!r}")
        self._params[name] = tensor
        return tensor

    def normal(self, name: str, shape, std: float = 0.02) -> Tensor:
        return self._register(name, parameter(self.rng.normal(0.0, std, shape)))

    def zeros(self, name: str, shape) -> Tensor:
        return self._register(name, parameter(np.zeros(shape)))

    def ones(self, name: str, shape) -> Tensor:
        return self._register(name, parameter(np.ones(shape)))

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def names(self) -> list[str]:
        return list(self._params)

    def items(self):
        return self._params.items()

    def tensors(self) -> list[Tensor]:
        return list(self._params.values())

    def zero_grads(self) -> None:
        for p in self._params.values():
            p.zero_grad()

    def state_arrays(self) -> dict:
        return {name: p.data.copy() for name, p in self._params.items()}

    def load_state_arrays(self, arrays: dict) -> None:
        missing = set(self._params) - set(arrays)
        unexpected = set(arrays) - set(self._params)
        if missing or unexpected:
            raise ValueError(f"parameter set mismatch: missing={sorted(missing)} unexpected={sorted(unexpected)}")
        for name, p in self._params.items():
            incoming = np.asarray(arrays[name], dtype=np.float64)
            if incoming.shape != p.data.shape:
                raise ValueError(f"shape mismatch for {name}: {incoming.shape} vs {p.data.shape}")
            p.data = incoming.copy()


def constant(data) -> Tensor:
    return Tensor(data, requires_grad=False)


class ShapeError(ValueError):
    pass


_grad_enabled = True


class no_grad:
    """Context manager: ops inside do not record the backward tape."""

    def __enter__(self):
        global _grad_enabled
        self._prev = _grad_enabled
        _grad_enabled = False
        return self

    def __exit__(self, *exc):
        global _grad_enabled
        _grad_enabled = self._prev
        return False


def _from_op(data, parents, backward_fn) -> Tensor:
    out = Tensor(data)
    if _grad_enabled:
        for p in parents:
            if p.requires_grad:
                out.requires_grad = True
                out._parents = tuple(parents)
                out._backward = backward_fn
                break
    return out


def _accum(t: Tensor, delta) -> None:
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += delta


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum; b may be 1-D and broadcast across rows (bias add)."""
    broadcast = b.data.ndim == 1 and a.data.ndim == 2 and b.data.shape[0] == a.data.shape[1]
    if not broadcast and a.data.shape != b.data.shape:
        raise ShapeError(f"add: {a.data.shape} vs {b.data.shape}")
    out_data = a.data + b.data

    def backward(g):
        _accum(a, g)
        _accum(b, g.sum(axis=0) if broadcast else g)

    return _from_op(out_data, (a, b), backward)


def sub(a: Tensor, b: Tensor) -> Tensor:
    return add(a, scale(b, -1.0))


def scale(a: Tensor, c: float) -> Tensor:
    def backward(g):
        _accum(a, g * c)
    return _from_op(a.data * c, (a,), backward)


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise product; b may be a column (n,1) broadcast across columns."""
    column = b.data.ndim == 2 and b.data.shape == (a.data.shape[0], 1)
    if not column and a.data.shape != b.data.shape:
        raise ShapeError(f"mul: {a.data.shape} vs {b.data.shape}")

    def backward(g):
        _accum(a, g * b.data)
        _accum(b, (g * a.data).sum(axis=1, keepdims=True) if column else g * a.data)

    return _from_op(a.data * b.data, (a, b), backward)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise ShapeError(f"matmul: {a.data.shape} vs {b.data.shape}")

    def backward(g):
        _accum(a, g @ b.data.T)
        _accum(b, a.data.T @ g)

    return _from_op(a.data @ b.data, (a, b), backward)


def transpose(a: Tensor) -> Tensor:
    def backward(g):
        _accum(a, g.T)
    return _from_op(a.data.T, (a,), backward)


def tanh(a: Tensor) -> Tensor:
    y = np.tanh(a.data)

    def backward(g):
        _accum(a, g * (1.0 - y * y))

    return _from_op(y, (a,), backward)


def relu(a: Tensor) -> Tensor:
    y = np.maximum(a.data, 0.0)

    def backward(g):
        _accum(a, g * (a.data > 0.0))

    return _from_op(y, (a,), backward)


def sigmoid(a: Tensor) -> Tensor:
    y = 1.0 / (1.0 + np.exp(-a.data))

    def backward(g):
        _accum(a, g * y * (1.0 - y))

    return _from_op(y, (a,), backward)


def sum_all(a: Tensor) -> Tensor:
    def backward(g):
        _accum(a, np.full_like(a.data, float(g)))
    return _from_op(a.data.sum(), (a,), backward)


def _normalize_mask(mask, shape):
    if mask is None:
        return None
    m = np.asarray(mask, dtype=bool)
    if m.ndim == 1:
        m = np.broadcast_to(m, shape).copy()
    if m.shape != shape:
        raise ShapeError(f"mask shape {m.shape} does not match {shape}")
    return m


def softmax_rows(x: Tensor, mask=None) -> Tensor:
    """Row-wise softmax; masked entries are exactly zero in the output.

    Numerically stabilized by row-max subtraction.  A fully masked row is an
    error.
    """
    z = x.data
    if z.ndim != 2:
        raise ShapeError(f"softmax_rows expects a matrix, got {z.shape}")
    m = _normalize_mask(mask, z.shape)
    if m is None:
        shifted = z - z.max(axis=1, keepdims=True)
        e = np.exp(shifted)
    else:
        if not m.any(axis=1).all():
            raise ValueError("softmax_rows: fully masked row")
        neg = np.where(m, z, -np.inf)
        shifted = neg - neg.max(axis=1, keepdims=True)
        e = np.where(m, np.exp(shifted), 0.0)
    y = e / e.sum(axis=1, keepdims=True)

    def backward(g):
        inner = (g * y).sum(axis=1, keepdims=True)
        _accum(x, y * (g - inner))

    return _from_op(y, (x,), backward)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-12) -> Tensor:
    mu = x.data.mean(axis=1, keepdims=True)
    var = ((x.data - mu) ** 2).mean(axis=1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv
    y = xhat * gain.data + bias.data

    def backward(g):
        dxhat = g * gain.data
        dx = inv * (dxhat - dxhat.mean(axis=1, keepdims=True)
                    - xhat * (dxhat * xhat).mean(axis=1, keepdims=True))
        _accum(x, dx)
        _accum(gain, (g * xhat).sum(axis=0))
        _accum(bias, g.sum(axis=0))

    return _from_op(y, (x, gain, bias), backward)


def rows(table: Tensor, ids) -> Tensor:
    """Embedding lookup: stack table rows by integer id."""
    idx = np.asarray(ids, dtype=np.int64)
    if idx.ndim != 1:
        raise ShapeError("rows expects a flat id sequence")
    if idx.size and (idx.min() < 0 or idx.max() >= table.data.shape[0]):
        raise IndexError(f"id out of range for table of {table.data.shape[0]} rows")

    def backward(g):
        if table.requires_grad:
            if table.grad is None:
                table.grad = np.zeros_like(table.data)
            np.add.at(table.grad, idx, g)

    return _from_op(table.data[idx], (table,), backward)


def take_rows(x: Tensor, ids) -> Tensor:
    idx = np.asarray(ids, dtype=np.int64)

    def backward(g):
        if x.requires_grad:
            if x.grad is None:
                x.grad = np.zeros_like(x.data)
            np.add.at(x.grad, idx, g)

    return _from_op(x.data[idx], (x,), backward)


def take_cols(x: Tensor, lo: int, hi: int) -> Tensor:
    if x.data.ndim != 2 or not 0 <= lo < hi <= x.data.shape[1]:
        raise ShapeError(f"take_cols [{lo}:{hi}] of {x.data.shape}")

    def backward(g):
        if x.requires_grad:
            if x.grad is None:
                x.grad = np.zeros_like(x.data)
            x.grad[:, lo:hi] += g

    return _from_op(x.data[:, lo:hi].copy(), (x,), backward)


def concat(parts, axis: int = 0) -> Tensor:
    parts = list(parts)
    sizes = [p.data.shape[axis] for p in parts]
    out_data = np.concatenate([p.data for p in parts], axis=axis)

    def backward(g):
        offset = 0
        for p, size in zip(parts, sizes):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(offset, offset + size)
            _accum(p, g[tuple(sl)])
            offset += size

    return _from_op(out_data, tuple(parts), backward)


def dropout(x: Tensor, rate: float, rng, training: bool) -> Tensor:
    if not training or rate <= 0.0:
        return x
    keep = (rng.random(x.data.shape) >= rate) / (1.0 - rate)

    def backward(g):
        _accum(x, g * keep)

    return _from_op(x.data * keep, (x,), backward)


def cross_entropy(logits: Tensor, target: int, mask=None) -> Tensor:
    """Negative log-likelihood of `target` under a masked softmax of logits."""
    z = logits.data.reshape(-1)
    k = z.shape[0]
    m = np.ones(k, dtype=bool) if mask is None else np.asarray(mask, dtype=bool).reshape(-1)
    if m.shape[0] != k:
        raise ShapeError(f"cross_entropy mask length {m.shape[0]} vs {k} logits")
    if not m.any():
        raise ValueError("cross_entropy: all logits masked")
    if not m[target]:
        raise ValueError("cross_entropy: target is masked")
    zmax = z[m].max()
    lse = zmax + np.log(np.exp(z[m] - zmax).sum())
    loss = lse - z[target]

    def backward(g):
        p = np.zeros(k)
        p[m] = np.exp(z[m] - lse)
        p[target] -= 1.0
        _accum(logits, (g * p).reshape(logits.data.shape))

    return _from_op(loss, (logits,), backward)


def relation_gather(per_code: Tensor, codes) -> Tensor:
    """out[i, j] = per_code[i, codes[i, j]] for an integer code matrix."""
    c = np.asarray(codes, dtype=np.int64)
    n, k = per_code.data.shape
    if c.shape[0] != n:
        raise ShapeError(f"relation_gather: {per_code.data.shape} vs codes {c.shape}")

    def backward(g):
        if per_code.requires_grad:
            delta = np.empty((n, k))
            for code in range(k):
                delta[:, code] = (g * (c == code)).sum(axis=1)
            _accum(per_code, delta)

    return _from_op(np.take_along_axis(per_code.data, c, axis=1), (per_code,), backward)


def relation_mix(alpha: Tensor, codes, num_codes: int = 3) -> Tensor:
    """out[i, c] = sum_j alpha[i, j] * [codes[i, j] == c]."""
    c = np.asarray(codes, dtype=np.int64)
    if c.shape != alpha.data.shape:
        raise ShapeError(f"relation_mix: {alpha.data.shape} vs codes {c.shape}")
    out_data = np.stack([(alpha.data * (c == code)).sum(axis=1) for code in range(num_codes)], axis=1)

    def backward(g):
        _accum(alpha, np.take_along_axis(g, c, axis=1))

    return _from_op(out_data, (alpha,), backward)


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(t) into .grad for every reachable tensor."""
    if loss.data.size != 1:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.data.shape}")
    # iterative post-order: children recorded before their consumers
    topo: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, done = stack.pop()
        if done:
            topo.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in visited:
                stack.append((p, False))
    if loss.grad is None:
        loss.grad = np.zeros_like(loss.data)
    loss.grad += np.ones_like(loss.data)
    for node in reversed(topo):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)


def zero_grads(params) -> None:
    for p in params:
        p.zero_grad()


def finite_difference_check(f, params, eps: float = 1e-5, samples: int = 32,
                            rng=None, floor: float = 1e-3) -> float:
    """Worst relative error between analytic gradients and central differences.

    `f` must be a deterministic zero-argument callable returning a scalar
    Tensor built from `params`.  For each parameter, up to `samples` distinct
    coordinates are perturbed by +/-eps.  The relative error denominator is
    floored to keep near-zero gradients comparable at absolute scale.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    params = list(params)
    zero_grads(params)
    loss = f()
    backward(loss)
    analytic = [p.grad.copy() for p in params]

    worst = 0.0
    with no_grad():
        for p, grad in zip(params, analytic):
            flat = p.data.reshape(-1)
            size = flat.shape[0]
            count = min(samples, size)
            coords = rng.choice(size, size=count, replace=False) if size > count else np.arange(size)
            for c in coords:
                orig = flat[c]
                flat[c] = orig + eps
                f_plus = float(f().data)
                flat[c] = orig - eps
                f_minus = float(f().data)
                flat[c] = orig
                numeric = (f_plus - f_minus) / (2.0 * eps)
                an = grad.reshape(-1)[c]
                err = abs(numeric - an) / max(abs(numeric), abs(an), floor)
                worst = max(worst, err)
    return worst
