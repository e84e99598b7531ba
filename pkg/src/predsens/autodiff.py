"""Tape-based reverse-mode automatic differentiation.

A :class:`Tape` records a straight-line program over float64 numpy arrays.
Every recorded op stores its vector-Jacobian products at record time, so the
backward sweep is a single reverse walk over the node list.

Only the handful of primitives needed by a ReLU/sigmoid MLP are provided.
``matvec`` also accepts a batch of row vectors ``x`` of shape ``(B, n)``,
in which case it computes ``x @ W.T``; each row is an independent matvec.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ContractError, DomainError, ShapeError

WEIGHT = "weight"
INPUT = "input"
CONST = "const"

Vjp = Callable[[np.ndarray], np.ndarray]


def sigmoid(z) -> np.ndarray:
    """Logistic function, split on sign so ``exp`` never overflows."""
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def softplus(z) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    return np.maximum(z, 0.0) + np.log1p(np.exp(-np.abs(z)))


def _frozen(value) -> np.ndarray:
    arr = np.array(value, dtype=np.float64)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class Node:
    op: str
    inputs: tuple[int, ...]
    value: np.ndarray
    vjps: tuple[Vjp, ...]
    requires_grad: bool
    kind: str | None = None  # leaf marker; None for interior nodes


class Tape:
    """Append-only record of a computation.

    Node ids are list indices, so every node's inputs precede it. A tape is
    owned by one thread while recording.
    """

    def __init__(self) -> None:
        self.nodes: list[Node] = []

    def __len__(self) -> int:
        return len(self.nodes)

    def _push(self, node: Node) -> int:
        self.nodes.append(node)
        return len(self.nodes) - 1

    def value(self, node_id: int) -> np.ndarray:
        return self.nodes[node_id].value

    def _op(self, op: str, inputs: tuple[int, ...], value, vjps: tuple[Vjp, ...]) -> int:
        requires_grad = any(self.nodes[i].requires_grad for i in inputs)
        return self._push(Node(op, inputs, _frozen(value), vjps, requires_grad))

    # leaves

    def leaf(self, value, kind: str = WEIGHT) -> int:
        if kind not in (WEIGHT, INPUT):
            raise ValueError(f"leaf kind must be {WEIGHT!r} or {INPUT!r}, got {kind!r}")
        return self._push(Node("leaf", (), _frozen(value), (), True, kind))

    def constant(self, value) -> int:
        """A leaf that never receives an adjoint."""
        return self._push(Node("const", (), _frozen(value), (), False, CONST))

    # primitives

    def matvec(self, w: int, x: int) -> int:
        W = self.value(w)
        xv = self.value(x)
        if W.ndim != 2 or xv.ndim not in (1, 2) or xv.shape[-1] != W.shape[1]:
            raise ShapeError(f"matvec: cannot apply matrix of shape {W.shape} to operand of shape {xv.shape}")
        if xv.ndim == 1:
            out = W @ xv
            vjps = (lambda g: np.outer(g, xv), lambda g: W.T @ g)
        else:
            out = xv @ W.T
            vjps = (lambda g: g.T @ xv, lambda g: g @ W)
        return self._op("matvec", (w, x), out, vjps)

    def add(self, a: int, b: int) -> int:
        av, bv = self.value(a), self.value(b)
        if av.shape == bv.shape:
            vjps = (lambda g: g, lambda g: g)
        elif av.ndim == 2 and bv.ndim == 1 and av.shape[1] == bv.shape[0]:
            # bias broadcast over batch rows
            vjps = (lambda g: g, lambda g: g.sum(axis=0))
        else:
            raise ShapeError(f"add: shapes {av.shape} and {bv.shape} differ")
        return self._op("add", (a, b), av + bv, vjps)

    def relu(self, a: int) -> int:
        av = self.value(a)
        mask = (av > 0).astype(np.float64)
        return self._op("relu", (a,), av * mask, (lambda g: g * mask,))

    def sigmoid(self, a: int) -> int:
        s = sigmoid(self.value(a))
        local = s * (1.0 - s)
        return self._op("sigmoid", (a,), s, (lambda g: g * local,))

    def sum(self, a: int) -> int:
        shape = self.value(a).shape
        return self._op("sum", (a,), self.value(a).sum(), (lambda g: np.full(shape, g),))

    def scale(self, a: int, c: float) -> int:
        c = float(c)
        return self._op("scale", (a,), c * self.value(a), (lambda g: c * g,))

    def bce(self, p: int, y: float) -> int:
        """Binary cross-entropy on a probability. Raises at p == 0 or p == 1."""
        pv = self.value(p)
        if pv.size != 1:
            raise ShapeError(f"bce expects a scalar probability, got shape {pv.shape}")
        pf = float(pv.reshape(()))
        if not 0.0 < pf < 1.0:
            raise DomainError(f"bce: probability {pf!r} outside the open interval (0, 1); use bce_with_logits")
        y = float(y)
        loss = -(y * np.log(pf) + (1.0 - y) * np.log1p(-pf))
        dp = -y / pf + (1.0 - y) / (1.0 - pf)
        shape = pv.shape
        return self._op("bce", (p,), loss, (lambda g: np.full(shape, g * dp),))

    def bce_with_logits(self, z: int, y) -> int:
        """Mean binary cross-entropy of sigmoid(z) against labels, in logit space."""
        zv = self.value(z)
        yv = np.asarray(y, dtype=np.float64).reshape(-1)
        if zv.size != yv.size:
            raise ShapeError(f"bce_with_logits: {zv.size} logits for {yv.size} labels")
        flat = zv.reshape(-1)
        n = flat.size
        loss = np.mean(softplus(flat) - yv * flat)
        local = ((sigmoid(flat) - yv) / n).reshape(zv.shape)
        return self._op("bce_logits", (z,), loss, (lambda g: g * local,))

    # reverse sweep

    def backward(self, output: int) -> dict[int, np.ndarray]:
        """Adjoints of ``output`` with respect to every weight and input leaf.

        Leaves with no path to ``output`` get a zero adjoint.
        """
        out_val = self.value(output)
        if out_val.size != 1:
            raise ContractError(f"backward needs a scalar output, node {output} has shape {out_val.shape}")
        adj: list[np.ndarray | None] = [None] * (output + 1)
        adj[output] = np.ones_like(out_val)
        for i in range(output, -1, -1):
            g = adj[i]
            node = self.nodes[i]
            if g is None or not node.requires_grad:
                continue
            for j, vjp in zip(node.inputs, node.vjps):
                if not self.nodes[j].requires_grad:
                    continue
                contrib = vjp(g)
                adj[j] = contrib if adj[j] is None else adj[j] + contrib
        grads = {}
        for i, node in enumerate(self.nodes):
            if node.kind in (WEIGHT, INPUT):
                g = adj[i] if i <= output else None
                grads[i] = np.zeros_like(node.value) if g is None else np.asarray(g, dtype=np.float64)
        return grads
