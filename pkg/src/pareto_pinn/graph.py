"""Static computation graph with input-derivative jets and reverse-mode gradients.

A graph is built once from :class:`Node` objects and re-evaluated with new
bindings every optimizer step.  Input derivatives of the network are carried
forward as *jets*: arrays of shape ``(features, components, points)`` where
component 0 is the value, components ``1..D`` the first derivatives with
respect to each input and the trailing components the pure second derivatives
listed in :class:`JetLayout`.  A single reverse sweep then differentiates any
scalar built from those jets with respect to the parameters.

Mixed second derivatives are not supported.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Sequence

import numba
import numpy as np

__all__ = [
    "GraphError",
    "ShapeError",
    "UnboundError",
    "NonFiniteError",
    "JetLayout",
    "Node",
    "InputJet",
    "input",
    "parameter",
    "constant",
    "matvec",
    "tanh",
    "tanh_jet",
    "scale_by",
    "component",
    "seed_jet",
    "evaluate",
    "parameter_gradient",
]


class GraphError(Exception):
    """Base class for graph evaluation failures."""


class UnboundError(GraphError, KeyError):
    pass


class ShapeError(GraphError, ValueError):
    """Operand shapes do not fit the operation."""


class NonFiniteError(GraphError, FloatingPointError):
    """A node produced NaN or Inf.  ``node`` identifies the offender."""

    def __init__(self, node: "Node", stage: str):
        self.node = node
        self.stage = stage
        super().__init__(f"non-finite {stage} at {node!r}")


@dataclass(frozen=True)
class JetLayout:
    """Component layout of a jet over ``n_inputs`` input dimensions."""

    n_inputs: int
    second_dims: tuple[int, ...] = ()
    first: bool = True

    def __post_init__(self):
        if self.n_inputs < 1:
            raise ValueError("n_inputs must be >= 1")
        if self.second_dims and not self.first:
            raise ValueError("second derivatives need the first-derivative components")
        if len(set(self.second_dims)) != len(self.second_dims):
            raise ValueError("duplicate second-derivative dimension")
        for d in self.second_dims:
            if not 0 <= d < self.n_inputs:
                raise ValueError(f"second-derivative dimension {d} out of range")

    @classmethod
    def full(cls, n_inputs: int) -> "JetLayout":
        return cls(n_inputs, tuple(range(n_inputs)))

    @classmethod
    def values_only(cls, n_inputs: int) -> "JetLayout":
        return cls(n_inputs, (), first=False)

    @property
    def n_first(self) -> int:
        return self.n_inputs if self.first else 0

    @property
    def n_components(self) -> int:
        return 1 + self.n_first + len(self.second_dims)

    def first_index(self, dim: int) -> int:
        return 1 + dim

    def second_index(self, dim: int) -> int:
        return 1 + self.n_first + self.second_dims.index(dim)


def seed_jet(points: np.ndarray, layout: JetLayout | None) -> np.ndarray:
    """Jet of the identity map at ``points`` (shape ``(N, D)``).

    With ``layout=None`` only the value component is produced, which is what
    a plain forward pass needs.
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2:
        raise ValueError("points must have shape (N, D)")
    n, d = points.shape
    layout = layout or JetLayout.values_only(d)
    if layout.n_inputs != d:
        raise ValueError(f"points have {d} dims, layout expects {layout.n_inputs}")
    out = np.zeros((d, layout.n_components, n))
    out[:, 0, :] = points.T
    if layout.first:
        for i in range(d):
            out[i, 1 + i, :] = 1.0
    return out


_ids = itertools.count()


class Node:
    """One vertex of the graph.  ``value`` holds the last forward result."""

    __slots__ = ("op", "children", "attrs", "name", "value", "cache", "id", "_order")

    def __init__(self, op: str, children: Sequence["Node"] = (), name: str | None = None, **attrs):
        if op not in _OPS and op not in _LEAVES:
            raise ValueError(f"unknown op {op!r}")
        self.op = op
        self.children = tuple(children)
        self.attrs = attrs
        self.name = name
        self.value = None
        self.cache = None
        self.id = next(_ids)
        self._order = None

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ""
        return f"Node#{self.id}<{self.op}{label}>"

    def __add__(self, other):
        return Node("add", (self, _as_node(other)))

    __radd__ = __add__

    def __sub__(self, other):
        return Node("sub", (self, _as_node(other)))

    def __rsub__(self, other):
        return Node("sub", (_as_node(other), self))

    def __mul__(self, other):
        if isinstance(other, Node):
            return Node("mul", (self, other))
        return Node("scale", (self,), factor=float(other))

    __rmul__ = __mul__

    def __neg__(self):
        return Node("scale", (self,), factor=-1.0)

    def square(self) -> "Node":
        return Node("square", (self,))

    def mean(self) -> "Node":
        return Node("mean", (self,))

    def sum(self) -> "Node":
        return Node("sum", (self,))


def _as_node(x) -> Node:
    return x if isinstance(x, Node) else constant(x)


def input(name: str) -> Node:  # noqa: A001 - mirrors the node kind
    return Node("input", name=name)


def parameter(name: str) -> Node:
    return Node("parameter", name=name)


def constant(value) -> Node:
    node = Node("constant")
    node.value = np.asarray(value, dtype=np.float64)
    return node


def matvec(weight: Node, jet: Node, bias: Node | None = None) -> Node:
    """Affine map ``W @ a + b`` applied to every jet component.

    The bias only enters the value component since it is constant in the
    inputs.
    """
    children = (weight, jet) if bias is None else (weight, jet, bias)
    return Node("matvec", children)


def tanh(x: Node) -> Node:
    return Node("tanh", (x,))


def tanh_jet(jet: Node, layout: JetLayout) -> Node:
    """tanh applied to a jet, propagating first and pure second derivatives."""
    return Node("tanh_jet", (jet,), layout=layout)


def scale_by(x: Node, factor: Node) -> Node:
    """Multiply an array node by a scalar node."""
    return Node("scale_by", (x, factor))


def component(jet: Node, index: int, row: int) -> Node:
    """Vector over points of one jet component of one output row."""
    return Node("component", (jet,), index=index, row=row)


@dataclass
class InputJet:
    """Value and input derivatives of one network output, as graph nodes.

    ``second[i]`` is ``None`` when the layout did not request that pure second
    derivative.
    """

    value: Node
    first: tuple[Node, ...]
    second: tuple[Node | None, ...]

    @classmethod
    def from_jet(cls, jet: Node, layout: JetLayout, row: int) -> "InputJet":
        d = layout.n_first
        return cls(
            value=component(jet, 0, row),
            first=tuple(component(jet, layout.first_index(i), row) for i in range(d)),
            second=tuple(
                component(jet, layout.second_index(i), row) if i in layout.second_dims else None
                for i in range(layout.n_inputs)
            ) if layout.first else (),
        )

    def nodes(self) -> list[Node]:
        return [self.value, *self.first, *(s for s in self.second if s is not None)]


# ---------------------------------------------------------------------------
# fused kernels

_FAST = {"contract", "arcp", "nsz"}


@numba.njit(cache=True, fastmath={"reassoc", "contract", "arcp"})
def _all_finite(a):
    # x * 0 is NaN exactly for non-finite x; no nnan/ninf flags so this survives
    flat = a.ravel()
    acc = 0.0
    for i in range(flat.size):
        acc += flat[i] * 0.0
    return acc == 0.0


@numba.njit(cache=True, fastmath=_FAST)
def _tanh_jet_fwd(z, s, n_inputs, second_dims, out):
    # s = tanh of the value component, computed by numpy's vectorized tanh
    nf, _, npts = z.shape
    s1 = np.empty(npts)
    s2 = np.empty(npts)
    for f in range(nf):
        sf = s[f]
        o0 = out[f, 0]
        for p in range(npts):
            sv = sf[p]
            o0[p] = sv
            s1[p] = 1.0 - sv * sv
            s2[p] = -2.0 * sv * s1[p]
        for i in range(n_inputs):
            zi = z[f, 1 + i]
            oi = out[f, 1 + i]
            for p in range(npts):
                oi[p] = s1[p] * zi[p]
        for k in range(second_dims.size):
            zi = z[f, 1 + second_dims[k]]
            zz = z[f, 1 + n_inputs + k]
            oo = out[f, 1 + n_inputs + k]
            for p in range(npts):
                oo[p] = s2[p] * zi[p] * zi[p] + s1[p] * zz[p]


@numba.njit(cache=True, fastmath=_FAST)
def _tanh_jet_bwd(z, h, g, n_inputs, second_dims, gz):
    nf, _, npts = z.shape
    s1 = np.empty(npts)
    s2 = np.empty(npts)
    s3 = np.empty(npts)
    for f in range(nf):
        sf = h[f, 0]
        g0 = g[f, 0]
        acc = gz[f, 0]
        for p in range(npts):
            sv = sf[p]
            a1 = 1.0 - sv * sv
            a2 = -2.0 * sv * a1
            s1[p] = a1
            s2[p] = a2
            s3[p] = -2.0 * (a1 * a1 + sv * a2)
            acc[p] = g0[p] * a1
        for i in range(n_inputs):
            gi = g[f, 1 + i]
            zi = z[f, 1 + i]
            out = gz[f, 1 + i]
            for p in range(npts):
                acc[p] += gi[p] * s2[p] * zi[p]
                out[p] = gi[p] * s1[p]
        for k in range(second_dims.size):
            c = 1 + n_inputs + k
            gg = g[f, c]
            zi = z[f, 1 + second_dims[k]]
            zz = z[f, c]
            gd = gz[f, 1 + second_dims[k]]
            out = gz[f, c]
            for p in range(npts):
                acc[p] += gg[p] * (s3[p] * zi[p] * zi[p] + s2[p] * zz[p])
                gd[p] += 2.0 * gg[p] * s2[p] * zi[p]
                out[p] = gg[p] * s1[p]


# ---------------------------------------------------------------------------
# op registry: forward(node, *child_values) -> value,
#              backward(node, grad, needs, *child_values) -> child grads

def _small_matmul(w, a2):
    # BLAS handles an inner dimension of 1-3 poorly; sum outer products instead
    out = np.multiply.outer(w[:, 0], a2[0])
    for k in range(1, w.shape[1]):
        out += np.multiply.outer(w[:, k], a2[k])
    return out


def _fwd_matvec(node, w, a, b=None):
    nin, nc, npts = a.shape
    if w.ndim != 2 or w.shape[1] != nin:
        raise ShapeError(f"{node!r}: weight {w.shape} does not match jet {a.shape}")
    a2 = a.reshape(nin, nc * npts)
    z2 = w @ a2
    z = z2.reshape(w.shape[0], nc, npts)
    if b is not None:
        z[:, 0, :] += b[:, None]
    return z


def _bwd_matvec(node, g, needs, w, a, b=None):
    nin, nc, npts = a.shape
    nout = g.shape[0]
    g2 = g.reshape(nout, nc * npts)
    gw = g2 @ a.reshape(nin, nc * npts).T if needs[0] else None
    ga = None
    if needs[1]:
        ga2 = _small_matmul(w.T, g2) if nout <= 3 else w.T @ g2
        ga = ga2.reshape(a.shape)
    if b is None:
        return gw, ga
    gb = g[:, 0, :].sum(axis=1) if needs[2] else None
    return gw, ga, gb


def _fwd_tanh_jet(node, z):
    layout = node.attrs["layout"]
    if z.ndim != 3 or z.shape[1] != layout.n_components:
        raise ShapeError(f"{node!r}: jet shape {z.shape} does not match {layout}")
    out = np.empty_like(z)
    _tanh_jet_fwd(z, np.tanh(z[:, 0, :]), layout.n_first,
                  np.asarray(layout.second_dims, dtype=np.int64), out)
    return out


def _bwd_tanh_jet(node, g, needs, z):
    layout = node.attrs["layout"]
    gz = np.empty_like(z)
    _tanh_jet_bwd(z, node.value, np.ascontiguousarray(g), layout.n_first,
                  np.asarray(layout.second_dims, dtype=np.int64), gz)
    return (gz,)


def _fwd_component(node, a):
    return a[node.attrs["row"], node.attrs["index"], :].copy()


def _bwd_component(node, g, needs, a):
    ga = np.zeros_like(a)
    ga[node.attrs["row"], node.attrs["index"], :] = g
    return (ga,)


def _same_shape(node, x, y):
    if np.shape(x) != np.shape(y):
        raise ShapeError(f"{node!r}: shape mismatch {np.shape(x)} vs {np.shape(y)}")


def _fwd_add(node, x, y):
    _same_shape(node, x, y)
    return x + y


def _fwd_sub(node, x, y):
    _same_shape(node, x, y)
    return x - y


def _fwd_mul(node, x, y):
    _same_shape(node, x, y)
    return x * y


def _fwd_scale_by(node, x, c):
    if np.ndim(c) != 0:
        raise ShapeError(f"{node!r}: scale factor must be a scalar")
    return x * c


_OPS: dict[str, tuple[Callable, Callable]] = {
    "add": (_fwd_add, lambda n, g, needs, x, y: (g, g)),
    "sub": (_fwd_sub, lambda n, g, needs, x, y: (g, -g)),
    "mul": (_fwd_mul, lambda n, g, needs, x, y: (g * y, g * x)),
    "scale": (lambda n, x: n.attrs["factor"] * x,
              lambda n, g, needs, x: (n.attrs["factor"] * g,)),
    "scale_by": (_fwd_scale_by,
                 lambda n, g, needs, x, c: (g * c, np.asarray(np.vdot(g, x)))),
    "square": (lambda n, x: x * x, lambda n, g, needs, x: (2.0 * g * x,)),
    "mean": (lambda n, x: np.asarray(np.mean(x)),
             lambda n, g, needs, x: (np.full(np.shape(x), g / np.size(x)),)),
    "sum": (lambda n, x: np.asarray(np.sum(x)),
            lambda n, g, needs, x: (np.full(np.shape(x), g),)),
    "tanh": (lambda n, x: np.tanh(x), lambda n, g, needs, x: (g * (1.0 - n.value ** 2),)),
    "tanh_jet": (_fwd_tanh_jet, _bwd_tanh_jet),
    "matvec": (_fwd_matvec, _bwd_matvec),
    "component": (_fwd_component, _bwd_component),
}
_LEAVES = frozenset({"input", "parameter", "constant"})


# ---------------------------------------------------------------------------
# evaluation

def _topological_order(roots: Sequence[Node]) -> list[Node]:
    order: list[Node] = []
    state: dict[int, int] = {}  # 1 = on stack, 2 = done
    for root in roots:
        stack = [(root, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                state[node.id] = 2
                order.append(node)
                continue
            mark = state.get(node.id)
            if mark == 2:
                continue
            if mark == 1:
                raise GraphError(f"cycle through {node!r}")
            state[node.id] = 1
            stack.append((node, True))
            for child in reversed(node.children):
                if state.get(child.id) != 2:
                    if state.get(child.id) == 1:
                        raise GraphError(f"cycle through {child!r}")
                    stack.append((child, False))
    return order


def _order_for(root: Node) -> list[Node]:
    if root._order is None:
        root._order = _topological_order([root])
    return root._order


def _check_finite(node: Node, value, stage: str):
    arr = np.asarray(value)
    ok = np.isfinite(arr) if arr.ndim == 0 else _all_finite(arr)
    if not ok:
        raise NonFiniteError(node, stage)


# non-finite values are detected explicitly, so numpy's warnings are redundant
_quiet = np.errstate(over="ignore", invalid="ignore", divide="ignore")


@_quiet
def evaluate(roots: Node | Sequence[Node], bindings: Mapping[str, np.ndarray]):
    """Run the forward pass.

    Every node reachable from ``roots`` afterwards holds its value in
    ``node.value``.  Returns the root value (or a list of them).
    """
    single = isinstance(roots, Node)
    root_list = [roots] if single else list(roots)
    if single:
        order = _order_for(roots)
    else:
        order = _topological_order(root_list)
    for node in order:
        if node.op in ("input", "parameter"):
            try:
                value = bindings[node.name]
            except KeyError:
                raise UnboundError(f"no binding for {node.op} {node.name!r}") from None
            node.value = np.asarray(value, dtype=np.float64)
            _check_finite(node, node.value, "binding")
        elif node.op == "constant":
            continue
        else:
            fwd = _OPS[node.op][0]
            node.value = fwd(node, *(c.value for c in node.children))
            _check_finite(node, node.value, "value")
    values = [r.value for r in root_list]
    return values[0] if single else values


@_quiet
def parameter_gradient(loss: Node, bindings: Mapping[str, np.ndarray] | None = None) -> dict[str, np.ndarray]:
    """Gradient of a scalar ``loss`` with respect to every parameter node.

    Parameters not reached by ``loss`` are reported with zero gradient.
    When ``bindings`` is given the forward pass is run first; otherwise the
    values left by the last :func:`evaluate` are used.
    """
    if bindings is not None:
        evaluate(loss, bindings)
    order = _order_for(loss)
    if loss.value is None:
        raise GraphError("loss has not been evaluated")
    if np.ndim(loss.value) != 0:
        raise GraphError(f"loss must be scalar, got shape {np.shape(loss.value)}")

    # nodes that depend on at least one parameter
    live: set[int] = set()
    for node in order:
        if node.op == "parameter" or any(c.id in live for c in node.children):
            live.add(node.id)

    grads: dict[int, np.ndarray] = {loss.id: np.asarray(1.0)}
    result: dict[str, np.ndarray] = {}
    for node in reversed(order):
        g = grads.pop(node.id, None)
        if node.op == "parameter":
            if g is None:
                g = np.zeros_like(node.value)
            _check_finite(node, g, "gradient")
            if node.name in result:
                result[node.name] = result[node.name] + g
            else:
                result[node.name] = np.asarray(g, dtype=np.float64).reshape(np.shape(node.value))
            continue
        if g is None or node.op in _LEAVES:
            continue
        needs = tuple(c.id in live for c in node.children)
        if not any(needs):
            continue
        child_grads = _OPS[node.op][1](node, g, needs, *(c.value for c in node.children))
        for child, need, cg in zip(node.children, needs, child_grads):
            if not need or cg is None:
                continue
            prev = grads.get(child.id)
            grads[child.id] = cg if prev is None else prev + cg
    return result


def parameters_of(root: Node) -> list[Node]:
    """Parameter nodes reachable from ``root`` in topological order."""
    seen = set()
    out = []
    for node in _order_for(root):
        if node.op == "parameter" and node.name not in seen:
            seen.add(node.name)
            out.append(node)
    return out


def iter_nodes(root: Node) -> Iterable[Node]:
    return iter(_order_for(root))
