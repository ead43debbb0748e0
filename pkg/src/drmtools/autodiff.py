# drmtools/autodiff.py
"""
Reverse-mode automatic differentiation over dense 2-D float64 matrices.

A ``Graph`` is an append-only tape. Every op computes its forward value on
insertion (define-by-run) and caches it on the node, so parents always precede
children and the backward pass is a single reverse sweep over the tape.

    g = Graph()
    W = g.param("W", [[1.0, -1.0]])
    x = g.const([[2.0], [3.0]])
    out = (W @ x).relu().sum()
    value, grads = evaluate_with_grad(g, out)    # grads["W"] -> [[0., 0.]]

Op set: matmul, add, bias_add, mul, neg, relu, exp, log, reciprocal, sum, mean,
maximum (against a constant), clip. ``-``, ``/`` and scalar arithmetic are sugar
over these.

Also here: ``finite_diff_grad`` (gradient oracle), ``adam_step`` and
``spectral_normalize``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, List, Mapping, Optional, Tuple, Union

import numpy as np

from .errors import NonFiniteValue, NonScalarOutput, ShapeMismatch, ZeroMatrix

__all__ = [
    "as_tensor",
    "Node",
    "Var",
    "Graph",
    "evaluate_with_grad",
    "finite_diff_grad",
    "AdamState",
    "adam_step",
    "SpectralState",
    "init_spectral_state",
    "power_iteration",
    "spectral_normalize",
    "spectral_weight",
]

ArrayLike = Union[np.ndarray, float, int, list, tuple]


def as_tensor(x: ArrayLike) -> np.ndarray:
    """Coerce to a 2-D float64 array: scalars -> 1x1, vectors -> 1xk rows."""
    arr = np.array(x, dtype=np.float64)
    if arr.ndim == 0:
        return arr.reshape(1, 1)
    if arr.ndim == 1:
        return arr.reshape(1, -1)
    if arr.ndim != 2:
        raise ShapeMismatch(f"tensors are 2-D, got shape {arr.shape}")
    return arr


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, int]) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` along broadcast (size-1) axes."""
    if grad.shape == shape:
        return grad
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _broadcast_shape(a: Tuple[int, int], b: Tuple[int, int], kind: str) -> Tuple[int, int]:
    out = []
    for x, y in zip(a, b):
        if x == y or y == 1:
            out.append(x)
        elif x == 1:
            out.append(y)
        else:
            raise ShapeMismatch(f"{kind}: cannot broadcast {a} with {b}")
    return tuple(out)  # type: ignore[return-value]


# ---------- tape ----------

@dataclass
class Node:
    kind: str
    parents: Tuple[int, ...]
    value: np.ndarray
    name: Optional[str] = None      # parameter leaves only
    extra: Tuple[float, ...] = ()   # op constants (clip bounds, maximum floor)


@dataclass(frozen=True, eq=False)
class Var:
    """Handle to one node of a Graph; arithmetic appends new nodes."""

    graph: "Graph" = field(repr=False)
    id: int = 0

    @property
    def value(self) -> np.ndarray:
        return self.graph.nodes[self.id].value

    @property
    def shape(self) -> Tuple[int, int]:
        return self.value.shape  # type: ignore[return-value]

    def _lift(self, other) -> "Var":
        return other if isinstance(other, Var) else self.graph.const(other)

    def __add__(self, other):
        return self.graph.add(self, self._lift(other))

    __radd__ = __add__

    def __sub__(self, other):
        return self.graph.add(self, self.graph.neg(self._lift(other)))

    def __rsub__(self, other):
        return self.graph.add(self._lift(other), self.graph.neg(self))

    def __mul__(self, other):
        return self.graph.mul(self, self._lift(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return self.graph.mul(self, self.graph.reciprocal(self._lift(other)))

    def __rtruediv__(self, other):
        return self.graph.mul(self._lift(other), self.graph.reciprocal(self))

    def __neg__(self):
        return self.graph.neg(self)

    def __matmul__(self, other):
        return self.graph.matmul(self, self._lift(other))

    def relu(self):
        return self.graph.relu(self)

    def exp(self):
        return self.graph.exp(self)

    def log(self):
        return self.graph.log(self)

    def sum(self):
        return self.graph.sum(self)

    def mean(self):
        return self.graph.mean(self)


class Graph:
    """Append-only computation tape. Leaves are parameters or constants."""

    def __init__(self) -> None:
        self.nodes: List[Node] = []

    def __len__(self) -> int:
        return len(self.nodes)

    def _push(self, kind: str, parents: Tuple[Var, ...], value: np.ndarray, *,
              name: Optional[str] = None, extra: Tuple[float, ...] = ()) -> Var:
        for p in parents:
            if p.graph is not self:
                raise ValueError("cannot mix nodes from different graphs")
        if not np.all(np.isfinite(value)):
            raise NonFiniteValue(f"non-finite forward value in op {kind!r}")
        self.nodes.append(Node(kind, tuple(p.id for p in parents), value, name, extra))
        return Var(self, len(self.nodes) - 1)

    # leaves
    def param(self, name: str, value: ArrayLike) -> Var:
        return self._push("param", (), as_tensor(value), name=name)

    def const(self, value: ArrayLike) -> Var:
        return self._push("const", (), as_tensor(value))

    # ops
    def matmul(self, a: Var, b: Var) -> Var:
        if a.shape[1] != b.shape[0]:
            raise ShapeMismatch(f"matmul: {a.shape} @ {b.shape}")
        return self._push("matmul", (a, b), a.value @ b.value)

    def add(self, a: Var, b: Var) -> Var:
        _broadcast_shape(a.shape, b.shape, "add")
        return self._push("add", (a, b), a.value + b.value)

    def bias_add(self, a: Var, bias: Var) -> Var:
        if bias.shape != (1, a.shape[1]):
            raise ShapeMismatch(f"bias_add: bias {bias.shape} for input {a.shape}")
        return self._push("add", (a, bias), a.value + bias.value)

    def mul(self, a: Var, b: Var) -> Var:
        _broadcast_shape(a.shape, b.shape, "mul")
        return self._push("mul", (a, b), a.value * b.value)

    def neg(self, a: Var) -> Var:
        return self._push("neg", (a,), -a.value)

    def relu(self, a: Var) -> Var:
        return self._push("relu", (a,), np.maximum(a.value, 0.0))

    def exp(self, a: Var) -> Var:
        with np.errstate(over="ignore"):
            return self._push("exp", (a,), np.exp(a.value))

    def log(self, a: Var) -> Var:
        with np.errstate(divide="ignore", invalid="ignore"):
            return self._push("log", (a,), np.log(a.value))

    def reciprocal(self, a: Var) -> Var:
        with np.errstate(divide="ignore"):
            return self._push("reciprocal", (a,), 1.0 / a.value)

    def sum(self, a: Var) -> Var:
        return self._push("sum", (a,), np.array([[a.value.sum()]]))

    def mean(self, a: Var) -> Var:
        return self._push("mean", (a,), np.array([[a.value.mean()]]))

    def maximum(self, a: Var, floor: float = 0.0) -> Var:
        """Elementwise max(a, floor) against a constant."""
        return self._push("maximum", (a,), np.maximum(a.value, floor), extra=(float(floor),))

    def clip(self, a: Var, lo: float, hi: float) -> Var:
        """Hard clamp to [lo, hi]; gradient is zero outside the interval."""
        return self._push("clip", (a,), np.clip(a.value, lo, hi), extra=(float(lo), float(hi)))


# ---------- backward ----------

def _vjp_matmul(node, pv, g):
    a, b = pv
    return g @ b.T, a.T @ g


def _vjp_add(node, pv, g):
    a, b = pv
    return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)


def _vjp_mul(node, pv, g):
    a, b = pv
    return _unbroadcast(g * b, a.shape), _unbroadcast(g * a, b.shape)


def _vjp_clip(node, pv, g):
    lo, hi = node.extra
    (a,) = pv
    return (g * ((a >= lo) & (a <= hi)),)


_VJP: Dict[str, Callable] = {
    "matmul": _vjp_matmul,
    "add": _vjp_add,
    "mul": _vjp_mul,
    "neg": lambda node, pv, g: (-g,),
    "relu": lambda node, pv, g: (g * (pv[0] > 0.0),),
    "exp": lambda node, pv, g: (g * node.value,),
    "log": lambda node, pv, g: (g / pv[0],),
    "reciprocal": lambda node, pv, g: (-g * node.value * node.value,),
    "sum": lambda node, pv, g: (np.full(pv[0].shape, g[0, 0]),),
    "mean": lambda node, pv, g: (np.full(pv[0].shape, g[0, 0] / pv[0].size),),
    "maximum": lambda node, pv, g: (g * (pv[0] > node.extra[0]),),
    "clip": _vjp_clip,
}


def evaluate_with_grad(graph: Graph, output: Var) -> Tuple[np.ndarray, Dict[str, np.ndarray]]:
    """
    Value of ``output`` and d(output)/d(param) for every parameter leaf.

    Parameters that ``output`` does not depend on get zero gradients; constants get
    nothing. Raises NonScalarOutput unless ``output`` is 1x1.
    """
    if output.graph is not graph:
        raise ValueError("output node belongs to another graph")
    out_node = graph.nodes[output.id]
    if out_node.value.shape != (1, 1):
        raise NonScalarOutput(f"gradient needs a 1x1 output, got {out_node.value.shape}")

    adj: List[Optional[np.ndarray]] = [None] * (output.id + 1)
    adj[output.id] = np.ones((1, 1))
    for i in range(output.id, -1, -1):
        g = adj[i]
        node = graph.nodes[i]
        if g is None or not node.parents:
            continue
        pvals = tuple(graph.nodes[p].value for p in node.parents)
        for p, pg in zip(node.parents, _VJP[node.kind](node, pvals, g)):
            adj[p] = pg if adj[p] is None else adj[p] + pg

    grads: Dict[str, np.ndarray] = {}
    for i, node in enumerate(graph.nodes):
        if node.kind != "param":
            continue
        g = adj[i] if i <= output.id else None
        grads[node.name] = np.zeros_like(node.value) if g is None else g
    return out_node.value.copy(), grads


def finite_diff_grad(f: Callable[[np.ndarray], float], x: ArrayLike, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of scalar ``f`` at ``x``, one coordinate at a time."""
    if h <= 0:
        raise ValueError("step h must be positive")
    x0 = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x0)
    flat = grad.reshape(-1)
    for i in range(x0.size):
        up = x0.copy().reshape(-1)
        down = x0.copy().reshape(-1)
        up[i] += h
        down[i] -= h
        fu = float(f(up.reshape(x0.shape)))
        fd = float(f(down.reshape(x0.shape)))
        if not (np.isfinite(fu) and np.isfinite(fd)):
            raise NonFiniteValue(f"f diverges near coordinate {i}")
        flat[i] = (fu - fd) / (2.0 * h)
    return grad


# ---------- Adam ----------

@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(
    params: Mapping[str, np.ndarray],
    grads: Mapping[str, np.ndarray],
    state: AdamState,
) -> Tuple[Dict[str, np.ndarray], AdamState]:
    """
    One bias-corrected Adam descent step. Pure: inputs are not modified.
    Callers ascend by passing negated gradients.
    """
    if state.t < 0:
        raise ValueError("Adam step counter must be >= 0")
    t = state.t + 1
    bc1 = 1.0 - state.beta1 ** t
    bc2 = 1.0 - state.beta2 ** t

    new_params: Dict[str, np.ndarray] = {}
    new_m: Dict[str, np.ndarray] = dict(state.m)
    new_v: Dict[str, np.ndarray] = dict(state.v)
    for key, p in params.items():
        if key not in grads:
            raise ShapeMismatch(f"no gradient for parameter {key!r}")
        g = grads[key]
        if g.shape != p.shape:
            raise ShapeMismatch(f"{key}: gradient {g.shape} vs parameter {p.shape}")
        m_prev = state.m.get(key, np.zeros_like(p))
        v_prev = state.v.get(key, np.zeros_like(p))
        if m_prev.shape != p.shape:
            raise ShapeMismatch(f"{key}: moment {m_prev.shape} vs parameter {p.shape}")
        m = state.beta1 * m_prev + (1.0 - state.beta1) * g
        v = state.beta2 * v_prev + (1.0 - state.beta2) * (g * g)
        m_hat = m / bc1
        v_hat = v / bc2
        new_params[key] = p - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
        new_m[key] = m
        new_v[key] = v

    new_state = AdamState(state.lr, state.beta1, state.beta2, state.eps, t, new_m, new_v)
    return new_params, new_state


# ---------- spectral normalization ----------

@dataclass
class SpectralState:
    u: np.ndarray            # unit left singular vector estimate, length rows(W)
    n_power_iters: int = 1


def init_spectral_state(rows: int, rng: np.random.Generator, n_power_iters: int = 1) -> SpectralState:
    if n_power_iters < 1:
        raise ValueError("n_power_iters must be >= 1")
    u = rng.standard_normal(rows)
    return SpectralState(u / np.linalg.norm(u), n_power_iters)


def _unit(x: np.ndarray) -> np.ndarray:
    norm = np.linalg.norm(x)
    return x / max(norm, 1e-300)


def power_iteration(W: np.ndarray, s: SpectralState) -> Tuple[np.ndarray, np.ndarray, float]:
    """Run ``s.n_power_iters`` iterations from ``s.u``; returns (u, v, sigma)."""
    W = np.asarray(W, dtype=np.float64)
    if W.ndim != 2:
        raise ShapeMismatch(f"spectral normalization needs a 2-D weight, got {W.shape}")
    if s.u.shape != (W.shape[0],):
        raise ShapeMismatch(f"u has length {s.u.shape}, weight has {W.shape[0]} rows")
    if not np.any(W):
        raise ZeroMatrix("weight matrix has zero Frobenius norm")
    if s.n_power_iters < 1:
        raise ValueError("n_power_iters must be >= 1")
    u, v = s.u, None
    for _ in range(s.n_power_iters):
        v = _unit(W.T @ u)
        u = _unit(W @ v)
    sigma = float(u @ W @ v)
    return u, v, sigma


def spectral_normalize(W: np.ndarray, s: SpectralState) -> Tuple[np.ndarray, float, SpectralState]:
    """W / sigma(W) with sigma from power iteration; the updated u is returned for reuse."""
    u, v, sigma = power_iteration(W, s)
    return np.asarray(W, dtype=np.float64) / sigma, sigma, SpectralState(u, s.n_power_iters)


def spectral_weight(graph: Graph, W: Var, s: SpectralState, *, update: bool = True) -> Tuple[Var, SpectralState]:
    """
    Graph-level spectral normalization of parameter node ``W``.

    sigma = u^T W v is built on the tape with u, v held constant, so gradients
    flow through W / sigma only via the bilinear form. With ``update=False`` the
    stored u is used as-is (evaluation) and v = normalize(W^T u).
    """
    if update:
        u, v, _ = power_iteration(W.value, s)
        new_state = SpectralState(u, s.n_power_iters)
    else:
        if not np.any(W.value):
            raise ZeroMatrix("weight matrix has zero Frobenius norm")
        u = s.u
        v = _unit(W.value.T @ u)
        new_state = s
    sigma = graph.sum(graph.mul(W, graph.const(np.outer(u, v))))
    return graph.mul(W, graph.reciprocal(sigma)), new_state
