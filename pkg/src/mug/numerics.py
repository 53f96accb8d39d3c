"""Numerical substrate: sparse graph operators, Chebyshev graph convolution,
group normalization, a minimal reverse-mode tape, and Adam.

Everything is float64 and deterministic. Gradients are recorded at the
granularity of coarse array ops (matmul, sparse matmul, elementwise, reductions)
so the tape stays proportional to the number of layer applications, not scalars.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp

__all__ = [
    "SparseAdjacency",
    "Value",
    "as_value",
    "scaled_laplacian",
    "cheb_conv",
    "group_norm",
    "relu",
    "backward",
    "AdamState",
    "adam_step",
]


# ---------------------------------------------------------------------------
# Sparse adjacency
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SparseAdjacency:
    """Sparse square matrix stored as (src, dst, weight) triplets.

    Used both for raw adjacency matrices and for scaled Laplacians.
    """

    node_count: int
    edges: tuple = ()

    def __post_init__(self):
        seen = set()
        for s, d, w in self.edges:
            if not (0 <= s < self.node_count and 0 <= d < self.node_count):
                raise ValueError(f"edge ({s},{d}) out of range for {self.node_count} nodes")
            if (s, d) in seen:
                raise ValueError(f"duplicate edge ({s},{d})")
            if not np.isfinite(w):
                raise ValueError(f"non-finite weight on edge ({s},{d})")
            seen.add((s, d))

    @staticmethod
    def from_undirected(node_count: int, pairs, weight: float = 1.0) -> "SparseAdjacency":
        """Build a symmetric adjacency from undirected (i, j) pairs."""
        edges = []
        for i, j in pairs:
            edges.append((i, j, weight))
            edges.append((j, i, weight))
        return SparseAdjacency(node_count, tuple(edges))

    def to_csr(self) -> sp.csr_matrix:
        if not self.edges:
            return sp.csr_matrix((self.node_count, self.node_count), dtype=np.float64)
        src, dst, w = zip(*self.edges)
        return sp.csr_matrix(
            (np.asarray(w, dtype=np.float64), (src, dst)),
            shape=(self.node_count, self.node_count),
        )

    def is_symmetric(self, tol: float = 0.0) -> bool:
        a = self.to_csr()
        diff = (a - a.T).tocoo()
        if diff.nnz == 0:
            return True
        return bool(np.max(np.abs(diff.data)) <= tol)


def scaled_laplacian(adj: SparseAdjacency) -> SparseAdjacency:
    """Scaled symmetric-normalized Laplacian 2L/lambda_max - I with lambda_max = 2.

    Isolated nodes (zero degree) get a normalized-Laplacian entry of 0, hence a
    scaled entry of -1; no division by zero ever occurs.
    """
    if not adj.is_symmetric():
        raise ValueError("scaled_laplacian requires a symmetric adjacency")
    a = adj.to_csr()
    deg = np.asarray(a.sum(axis=1)).ravel()
    inv_sqrt = np.zeros_like(deg)
    nz = deg > 0
    inv_sqrt[nz] = 1.0 / np.sqrt(deg[nz])
    d_half = sp.diags(inv_sqrt)
    norm = (d_half @ a @ d_half).tocoo()
    # L = diag(e) - N with e_i = 1 iff deg_i > 0; scaled = L - I = diag(e - 1) - N
    diag = np.where(nz, 0.0, -1.0)
    edges = {}
    for i, v in enumerate(diag):
        if v != 0.0:
            edges[(i, i)] = v
    for s, d, w in zip(norm.row, norm.col, norm.data):
        key = (int(s), int(d))
        edges[key] = edges.get(key, 0.0) - w
    triplets = tuple((s, d, w) for (s, d), w in sorted(edges.items()) if w != 0.0)
    return SparseAdjacency(adj.node_count, triplets)


# ---------------------------------------------------------------------------
# Reverse-mode tape
# ---------------------------------------------------------------------------


class Value:
    """A node in the recorded computation graph wrapping a float64 ndarray."""

    __slots__ = ("data", "grad", "_parents", "_bwd", "name")

    def __init__(self, data, parents=(), bwd=None, name=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self._parents = parents
        self._bwd = bwd
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Value(shape={self.data.shape}, name={self.name})"

    # -- elementwise arithmetic (numpy broadcasting semantics) --

    def __add__(self, other):
        other = as_value(other)
        out = Value(self.data + other.data, (self, other))
        out._bwd = lambda g: (_unbroadcast(g, self.shape), _unbroadcast(g, other.shape))
        return out

    __radd__ = __add__

    def __neg__(self):
        out = Value(-self.data, (self,))
        out._bwd = lambda g: (-g,)
        return out

    def __sub__(self, other):
        return self + (-as_value(other))

    def __rsub__(self, other):
        return as_value(other) + (-self)

    def __mul__(self, other):
        other = as_value(other)
        out = Value(self.data * other.data, (self, other))
        out._bwd = lambda g: (
            _unbroadcast(g * other.data, self.shape),
            _unbroadcast(g * self.data, other.shape),
        )
        return out

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = as_value(other)
        out = Value(self.data / other.data, (self, other))
        out._bwd = lambda g: (
            _unbroadcast(g / other.data, self.shape),
            _unbroadcast(-g * self.data / other.data**2, other.shape),
        )
        return out

    def __rtruediv__(self, other):
        return as_value(other) / self

    def __matmul__(self, other):
        other = as_value(other)
        out = Value(self.data @ other.data, (self, other))
        out._bwd = lambda g: (g @ other.data.T, self.data.T @ g)
        return out

    # -- shaping and reductions --

    def reshape(self, *shape):
        orig = self.shape
        out = Value(self.data.reshape(*shape), (self,))
        out._bwd = lambda g: (g.reshape(orig),)
        return out

    def sum(self, axis=None, keepdims=False):
        out = Value(self.data.sum(axis=axis, keepdims=keepdims), (self,))

        def bwd(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            return (np.broadcast_to(g, self.shape).copy(),)

        out._bwd = bwd
        return out

    def mean(self, axis=None, keepdims=False):
        n = self.data.size if axis is None else self.data.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) / float(n)

    def take_rows(self, idx):
        idx = np.asarray(idx, dtype=np.intp)
        out = Value(self.data[idx], (self,))

        def bwd(g):
            full = np.zeros_like(self.data)
            np.add.at(full, idx, g)
            return (full,)

        out._bwd = bwd
        return out


def as_value(x) -> Value:
    return x if isinstance(x, Value) else Value(x)


def _unbroadcast(grad, shape):
    """Sum a broadcast gradient back down to the original shape."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for i, s in enumerate(shape):
        if s == 1 and grad.shape[i] != 1:
            grad = grad.sum(axis=i, keepdims=True)
    return grad


def relu(x: Value) -> Value:
    x = as_value(x)
    out = Value(np.maximum(x.data, 0.0), (x,))
    out._bwd = lambda g: (g * (x.data > 0.0),)
    return out


def absolute(x: Value) -> Value:
    """|x| with subgradient 0 at x = 0 (np.sign convention)."""
    x = as_value(x)
    out = Value(np.abs(x.data), (x,))
    out._bwd = lambda g: (g * np.sign(x.data),)
    return out


def sqrt(x: Value) -> Value:
    x = as_value(x)
    root = np.sqrt(x.data)
    out = Value(root, (x,))
    out._bwd = lambda g: (g * 0.5 / root,)
    return out


def spmm(mat: sp.spmatrix, x: Value) -> Value:
    """Constant sparse matrix times a tracked dense matrix."""
    x = as_value(x)
    mat = mat.tocsr()
    out = Value(mat @ x.data, (x,))
    out._bwd = lambda g: (mat.T @ g,)
    return out


def backward(loss: Value, params: dict | None = None):
    """Accumulate gradients of a scalar loss into every reachable node.

    Returns a dict of gradients (zero-filled for unreachable entries) when
    `params` maps names to Values; otherwise returns None and leaves gradients
    on the nodes.
    """
    if loss.data.size != 1:
        raise ValueError("backward requires a scalar loss")
    order = []
    visited = set()
    stack = [(loss, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in visited:
                stack.append((p, False))
    for node in order:
        node.grad = None
    loss.grad = np.ones_like(loss.data)
    for node in reversed(order):
        if node.grad is None or node._bwd is None:
            continue
        for parent, g in zip(node._parents, node._bwd(node.grad)):
            if parent.grad is None:
                parent.grad = np.zeros_like(parent.data)
            parent.grad = parent.grad + g
    if params is not None:
        return {
            k: (v.grad if v.grad is not None else np.zeros_like(v.data))
            for k, v in params.items()
        }
    return None


# ---------------------------------------------------------------------------
# Layers
# ---------------------------------------------------------------------------


def cheb_conv(features, lap: SparseAdjacency | sp.spmatrix, weights, order: int | None = None):
    """Chebyshev spectral convolution sum_k T_k(L) X W_k.

    T_0 = I, T_1 = L, T_k = 2 L T_{k-1} - T_{k-2}. `weights` is one
    (in_dim x out_dim) matrix per polynomial order.
    """
    x = as_value(features)
    if order is None:
        order = len(weights)
    if len(weights) != order:
        raise ValueError(f"expected {order} weight matrices, got {len(weights)}")
    lap_csr = lap.to_csr() if isinstance(lap, SparseAdjacency) else lap.tocsr()
    if x.shape[0] != lap_csr.shape[0]:
        raise ValueError(
            f"features rows ({x.shape[0]}) do not match laplacian nodes ({lap_csr.shape[0]})"
        )
    in_dim = x.shape[1]
    for k, w in enumerate(weights):
        wd = as_value(w)
        if wd.shape[0] != in_dim:
            raise ValueError(f"weight {k} has in_dim {wd.shape[0]}, features have {in_dim}")
    t_prev, t_cur = None, x
    out = t_cur @ as_value(weights[0])
    for k in range(1, order):
        if k == 1:
            t_next = spmm(lap_csr, x)
        else:
            t_next = spmm(lap_csr, t_cur) * 2.0 - t_prev
        t_prev, t_cur = t_cur, t_next
        out = out + t_cur @ as_value(weights[k])
    return out


def group_norm(features, groups: int, gain, bias, eps: float = 1e-5):
    """Per-node group normalization followed by the learned affine."""
    x = as_value(features)
    n, d = x.shape
    if d % groups != 0:
        raise ValueError(f"feature dim {d} not divisible by {groups} groups")
    c = d // groups
    xg = x.reshape(n, groups, c)
    mu = xg.mean(axis=2, keepdims=True)
    centered = xg - mu
    var = (centered * centered).mean(axis=2, keepdims=True)
    normed = centered / sqrt(var + eps)
    return normed.reshape(n, d) * as_value(gain) + as_value(bias)


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AdamState:
    step: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params: dict, grads: dict, state: AdamState):
    """One Adam update with bias correction. Pure: returns new params/state."""
    t = state.step + 1
    new_params, new_m, new_v = {}, {}, {}
    for name in params:
        g = np.asarray(grads[name], dtype=np.float64)
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient for parameter '{name}'")
        p = params[name]
        m = state.m.get(name, np.zeros_like(p))
        v = state.v.get(name, np.zeros_like(p))
        m = state.beta1 * m + (1.0 - state.beta1) * g
        v = state.beta2 * v + (1.0 - state.beta2) * g * g
        m_hat = m / (1.0 - state.beta1**t)
        v_hat = v / (1.0 - state.beta2**t)
        new_params[name] = p - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
        new_m[name], new_v[name] = m, v
    return new_params, replace(state, step=t, m=new_m, v=new_v)
