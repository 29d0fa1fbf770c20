"""Scalar computational graph with forward-mode tangents and reverse-mode adjoints.

Every node holds a scalar quantity.  Node values may also be numpy arrays, in
which case each array element is an independent scalar evaluation of the same
graph (one per collocation point); operations stay elementwise, so no tensor
algebra is involved.

Building the graph evaluates it eagerly as long as all leaf values are known::

    tape = Tape()
    x = tape.input(2.0)
    y = tape.param(3.0)
    f = x * y
    tape.mark_output(f)
    tape.backward(f.id)          # -> [2.0]  (d f / d y)

"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ArgumentError, EvaluationError, StateError

OPS = frozenset(
    {"add", "mul", "div", "neg", "pow", "exp", "sqrt", "tanh", "sigmoid",
     "constant", "input", "param"}
)
_LEAVES = frozenset({"constant", "input", "param"})


@dataclass(slots=True)
class Node:
    id: int
    op: str
    parents: tuple[int, ...]
    value: object = None
    tangent: object = 0.0
    adjoint: object = 0.0
    arg: float | None = None


def _all_finite(v) -> bool:
    return bool(np.all(np.isfinite(v)))


def _unbroadcast(adj, value):
    """Sum an adjoint down to the shape of the node value it belongs to."""
    if np.ndim(adj) == np.ndim(value):
        return adj
    if np.ndim(value) == 0:
        return np.sum(adj)
    return np.sum(adj, axis=tuple(range(np.ndim(adj) - np.ndim(value))))


class Tape:
    """Append-only node list.  Node ids double as a topological order."""

    def __init__(self):
        self.nodes: list[Node] = []
        self.input_ids: list[int] = []
        self.param_ids: list[int] = []
        self.output_ids: list[int] = []

    # -- construction -------------------------------------------------------

    def _leaf(self, op, value) -> Var:
        node = Node(len(self.nodes), op, (), value)
        self.nodes.append(node)
        if value is not None and not _all_finite(value):
            raise EvaluationError(f"non-finite {op} value", node.id)
        return Var(self, node.id)

    def input(self, value=None) -> Var:
        v = self._leaf("input", value)
        self.input_ids.append(v.id)
        return v

    def param(self, value=None) -> Var:
        v = self._leaf("param", value)
        self.param_ids.append(v.id)
        return v

    def constant(self, value) -> Var:
        if value is None:
            raise ArgumentError("constant needs a value")
        return self._leaf("constant", value)

    def mark_output(self, var: Var) -> None:
        self._check_owner(var)
        self.output_ids.append(var.id)

    def _check_owner(self, var) -> None:
        if var.tape is not self:
            raise ArgumentError("variable belongs to a different tape")

    def push(self, op: str, parents: Sequence[int], arg: float | None = None) -> Var:
        if op not in OPS or op in _LEAVES:
            raise ArgumentError(f"unknown operation {op!r}")
        node = Node(len(self.nodes), op, tuple(parents), arg=arg)
        self.nodes.append(node)
        if all(self.nodes[p].value is not None for p in node.parents):
            self._evaluate(node)
        else:
            node.value = None
        return Var(self, node.id)

    # -- evaluation ---------------------------------------------------------

    def _evaluate(self, node: Node) -> None:
        p = [self.nodes[i] for i in node.parents]
        op = node.op
        if op == "add":
            val = p[0].value + p[1].value
        elif op == "mul":
            val = p[0].value * p[1].value
        elif op == "div":
            if np.any(p[1].value == 0):
                raise EvaluationError("division by zero", node.id)
            val = p[0].value / p[1].value
        elif op == "neg":
            val = -p[0].value
        elif op == "pow":
            with np.errstate(all="ignore"):
                val = np.power(p[0].value, node.arg)
        elif op == "exp":
            with np.errstate(over="ignore"):
                val = np.exp(p[0].value)
        elif op == "sqrt":
            if np.any(p[0].value <= 0):
                raise EvaluationError("sqrt of non-positive value", node.id)
            val = np.sqrt(p[0].value)
        elif op == "tanh":
            val = np.tanh(p[0].value)
        elif op == "sigmoid":
            val = _sigmoid(p[0].value)
        else:  # pragma: no cover - guarded in push
            raise ArgumentError(op)
        if not _all_finite(val):
            raise EvaluationError(f"non-finite value in {op}", node.id)
        node.value = val
        partials = self._partials(node)
        tan = 0.0
        for parent, d in zip(p, partials):
            if np.any(parent.tangent != 0):
                tan = tan + d * parent.tangent
        node.tangent = tan

    def _partials(self, node: Node) -> list:
        p = [self.nodes[i].value for i in node.parents]
        op = node.op
        if op == "add":
            return [1.0, 1.0]
        if op == "mul":
            return [p[1], p[0]]
        if op == "div":
            return [1.0 / p[1], -p[0] / (p[1] * p[1])]
        if op == "neg":
            return [-1.0]
        if op == "pow":
            return [node.arg * np.power(p[0], node.arg - 1.0)]
        if op == "exp":
            return [node.value]
        if op == "sqrt":
            return [0.5 / node.value]
        if op == "tanh":
            return [1.0 - node.value * node.value]
        if op == "sigmoid":
            return [node.value * (1.0 - node.value)]
        raise ArgumentError(op)

    def forward(self, input_values, param_values=(), input_tangents=None) -> list:
        """Re-evaluate every node for new leaf values; returns declared outputs."""
        input_values = list(input_values)
        param_values = list(param_values)
        if len(input_values) != len(self.input_ids):
            raise ArgumentError(
                f"expected {len(self.input_ids)} inputs, got {len(input_values)}")
        if len(param_values) != len(self.param_ids):
            raise ArgumentError(
                f"expected {len(self.param_ids)} params, got {len(param_values)}")
        if input_tangents is None:
            input_tangents = [0.0] * len(input_values)
        for i, v, d in zip(self.input_ids, input_values, input_tangents):
            self._set_leaf(i, v, d)
        for i, v in zip(self.param_ids, param_values):
            self._set_leaf(i, v, 0.0)
        for node in self.nodes:
            if node.op in _LEAVES:
                if node.value is None:
                    raise StateError(f"leaf {node.id} has no value")
                if node.op == "constant":
                    node.tangent = 0.0
                continue
            self._evaluate(node)
        self.zero_adjoints()
        return [self.nodes[i].value for i in self.output_ids]

    def _set_leaf(self, i, value, tangent) -> None:
        node = self.nodes[i]
        if not _all_finite(value):
            raise EvaluationError("non-finite leaf value", i)
        node.value = value
        node.tangent = tangent

    def zero_adjoints(self) -> None:
        for node in self.nodes:
            node.adjoint = 0.0

    def backward_seeded(self, seeds: dict[int, object]) -> None:
        """Vector-Jacobian sweep from several nodes at once."""
        if any(n.value is None for n in self.nodes):
            raise StateError("backward called before forward")
        self.zero_adjoints()
        top = 0
        for nid, seed in seeds.items():
            if not 0 <= nid < len(self.nodes):
                raise ArgumentError(f"node id {nid} out of range")
            self.nodes[nid].adjoint = self.nodes[nid].adjoint + seed
            top = max(top, nid)
        for node in reversed(self.nodes[: top + 1]):
            if node.op in _LEAVES or not np.any(node.adjoint != 0):
                continue
            for pid, d in zip(node.parents, self._partials(node)):
                parent = self.nodes[pid]
                parent.adjoint = parent.adjoint + _unbroadcast(node.adjoint * d, parent.value)

    def backward(self, output_id: int) -> list:
        """Gradient of one node with respect to every parameter, in declaration order."""
        self.backward_seeded({output_id: 1.0})
        return [self.nodes[i].adjoint for i in self.param_ids]

    def time_derivative(self, input_values, param_values, time_index: int) -> list:
        """Forward-mode derivative of every declared output w.r.t. one input."""
        if not 0 <= time_index < len(self.input_ids):
            raise ArgumentError(f"time index {time_index} out of range")
        seeds = [0.0] * len(self.input_ids)
        seeds[time_index] = 1.0
        self.forward(input_values, param_values, seeds)
        return [self.nodes[i].tangent for i in self.output_ids]


def _sigmoid(x):
    # branch-free and overflow-safe
    e = np.exp(-np.abs(x))
    out = np.where(np.asarray(x) >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    return out if np.ndim(out) else float(out)


class Var:
    """Handle to a tape node with arithmetic operator overloads."""

    __slots__ = ("tape", "id")
    __array_ufunc__ = None  # make numpy defer to the reflected operators

    def __init__(self, tape: Tape, node_id: int):
        self.tape = tape
        self.id = node_id

    @property
    def node(self) -> Node:
        return self.tape.nodes[self.id]

    @property
    def value(self):
        return self.node.value

    @property
    def tangent(self):
        return self.node.tangent

    @property
    def adjoint(self):
        return self.node.adjoint

    def __repr__(self):
        return f"Var(id={self.id}, op={self.node.op}, value={self.value!r})"

    def _lift(self, other) -> Var:
        if isinstance(other, Var):
            self.tape._check_owner(other)
            return other
        return self.tape.constant(other)

    def __add__(self, other):
        return self.tape.push("add", (self.id, self._lift(other).id))

    __radd__ = __add__

    def __mul__(self, other):
        return self.tape.push("mul", (self.id, self._lift(other).id))

    __rmul__ = __mul__

    def __neg__(self):
        return self.tape.push("neg", (self.id,))

    def __sub__(self, other):
        return self + (-self._lift(other))

    def __rsub__(self, other):
        return self._lift(other) + (-self)

    def __truediv__(self, other):
        return self.tape.push("div", (self.id, self._lift(other).id))

    def __rtruediv__(self, other):
        return self.tape.push("div", (self._lift(other).id, self.id))

    def __pow__(self, exponent):
        if isinstance(exponent, Var):
            raise ArgumentError("only constant exponents are supported")
        return self.tape.push("pow", (self.id,), arg=float(exponent))


# Generic elementary functions: tape ops for Vars, numpy otherwise.

def exp(x):
    return x.tape.push("exp", (x.id,)) if isinstance(x, Var) else np.exp(x)


def sqrt(x):
    return x.tape.push("sqrt", (x.id,)) if isinstance(x, Var) else np.sqrt(x)


def tanh(x):
    return x.tape.push("tanh", (x.id,)) if isinstance(x, Var) else np.tanh(x)


def sigmoid(x):
    return x.tape.push("sigmoid", (x.id,)) if isinstance(x, Var) else _sigmoid(x)


def forward(tape: Tape, input_values, param_values=()) -> list:
    return tape.forward(input_values, param_values)


def backward(tape: Tape, output_id: int) -> list:
    return tape.backward(output_id)


def time_derivative(tape: Tape, input_values, param_values, time_index: int) -> list:
    return tape.time_derivative(input_values, param_values, time_index)
