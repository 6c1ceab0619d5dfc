"""Dense complex tensors, pairwise contraction and a small reverse-mode tape.

Tensors are plain ``numpy.ndarray`` objects of dtype ``complex128`` stored in
C (row-major) order. The tape records a handful of primitives (einsum-style
contractions, conjugation, real part, gathers, elementwise arithmetic and
reductions) and applies their adjoint rules in reverse.

Gradient convention: for a real scalar ``f`` and a complex leaf ``z`` the
reported gradient is ``df/dRe(z) + 1j * df/dIm(z)``. For real leaves it is the
ordinary real gradient. With this convention the cotangent of an operand of a
holomorphic primitive ``y = h(x)`` is ``conj(dh/dx)^T`` applied to the
cotangent of ``y``; for a multilinear contraction that is simply the
contraction of the upstream cotangent with the conjugated other operands.
"""

from __future__ import annotations

import functools
import json
import math
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "DimensionError",
    "ContractViolation",
    "contract",
    "naive_contract",
    "Tape",
    "Var",
    "backward",
    "einsum",
    "conj",
    "real",
    "take",
    "reshape",
    "tsum",
    "tensor_to_record",
    "tensor_from_record",
    "dumps_tensor",
    "loads_tensor",
]


class DimensionError(ValueError):
    """Raised when paired axes of a contraction have different extents."""


class ContractViolation(RuntimeError):
    """Raised when an operation is called outside its contract."""


def _check_pairs(a_shape, b_shape, axis_pairs):
    bad = [(i, j) for i, j in axis_pairs if a_shape[i] != b_shape[j]]
    if bad:
        desc = ", ".join(f"a[{i}]={a_shape[i]} vs b[{j}]={b_shape[j]}" for i, j in bad)
        raise DimensionError(f"contracted axes differ in extent: {desc}")


def contract(a, b, axis_pairs: Sequence[tuple[int, int]]) -> np.ndarray:
    """Sum over paired axes of ``a`` and ``b``.

    The result carries the uncontracted axes of ``a`` (in order) followed by
    the uncontracted axes of ``b``.
    """
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    axis_pairs = [(int(i), int(j)) for i, j in axis_pairs]
    _check_pairs(a.shape, b.shape, axis_pairs)
    axes_a = [i for i, _ in axis_pairs]
    axes_b = [j for _, j in axis_pairs]
    return np.tensordot(a, b, axes=(axes_a, axes_b))


def naive_contract(a, b, axis_pairs) -> np.ndarray:
    """Reference contraction by explicit index loops (slow, for testing)."""
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    _check_pairs(a.shape, b.shape, axis_pairs)
    ca = [i for i, _ in axis_pairs]
    cb = [j for _, j in axis_pairs]
    free_a = [i for i in range(a.ndim) if i not in ca]
    free_b = [j for j in range(b.ndim) if j not in cb]
    summed = [a.shape[i] for i in ca]
    out_shape = tuple(a.shape[i] for i in free_a) + tuple(b.shape[j] for j in free_b)
    out = np.zeros(out_shape, dtype=complex)
    for out_idx in np.ndindex(*out_shape):
        ia = [0] * a.ndim
        ib = [0] * b.ndim
        for k, ax in enumerate(free_a):
            ia[ax] = out_idx[k]
        for k, ax in enumerate(free_b):
            ib[ax] = out_idx[len(free_a) + k]
        acc = 0j
        for s in np.ndindex(*summed):
            for k, (i, j) in enumerate(axis_pairs):
                ia[i] = s[k]
                ib[j] = s[k]
            acc += a[tuple(ia)] * b[tuple(ib)]
        out[out_idx] = acc
    return out


# ---------------------------------------------------------------------------
# reverse-mode tape


class Var:
    """A value recorded on a :class:`Tape`."""

    __slots__ = ("tape", "index", "value", "requires_grad")

    def __init__(self, tape: "Tape", index: int, value: np.ndarray, requires_grad: bool):
        self.tape = tape
        self.index = index
        self.value = value
        self.requires_grad = requires_grad

    @property
    def shape(self):
        return self.value.shape

    @property
    def is_real(self) -> bool:
        return not np.iscomplexobj(self.value)

    def __add__(self, other):
        return _binary("add", self, other)

    def __radd__(self, other):
        return _binary("add", other, self)

    def __sub__(self, other):
        return _binary("sub", self, other)

    def __rsub__(self, other):
        return _binary("sub", other, self)

    def __mul__(self, other):
        return _binary("mul", self, other)

    def __rmul__(self, other):
        return _binary("mul", other, self)

    def __truediv__(self, other):
        return _binary("div", self, other)

    def __rtruediv__(self, other):
        return _binary("div", other, self)

    def __neg__(self):
        return _binary("mul", -1.0, self)

    def __repr__(self):
        return f"Var(#{self.index}, shape={self.value.shape}, dtype={self.value.dtype})"


class _Node:
    __slots__ = ("op", "parents", "forward", "vjp", "meta")

    def __init__(self, op, parents, forward, vjp, meta=None):
        self.op = op
        self.parents = parents
        self.forward = forward
        self.vjp = vjp
        self.meta = meta


class Tape:
    """Ordered record of primitive operations.

    Leaves are created with :meth:`leaf` (differentiable) or :meth:`constant`.
    The last recorded node is the output used by :func:`backward`.
    """

    def __init__(self):
        self._nodes: list[_Node] = []
        self._vars: list[Var] = []

    def __len__(self):
        return len(self._nodes)

    def leaf(self, value, name=None) -> Var:
        return self._push(_Node("leaf", (), None, None, name), np.asarray(value), True)

    def constant(self, value) -> Var:
        return self._push(_Node("const", (), None, None), np.asarray(value), False)

    @property
    def leaves(self) -> list[Var]:
        return [v for v, n in zip(self._vars, self._nodes) if n.op == "leaf"]

    @property
    def output(self) -> Var:
        if not self._vars:
            raise ContractViolation("empty tape has no output")
        return self._vars[-1]

    def ops(self) -> list[str]:
        return [n.op for n in self._nodes]

    def _push(self, node: _Node, value: np.ndarray, requires_grad: bool) -> Var:
        if value.dtype.kind in "fc" and not np.all(np.isfinite(value)):
            raise FloatingPointError(f"non-finite value produced by '{node.op}'")
        var = Var(self, len(self._nodes), value, requires_grad)
        self._nodes.append(node)
        self._vars.append(var)
        return var

    def record(self, op: str, parents: Sequence[Var], forward: Callable, vjp: Callable, meta=None) -> Var:
        value = forward(*[p.value for p in parents])
        rg = any(p.requires_grad for p in parents)
        return self._push(_Node(op, tuple(p.index for p in parents), forward, vjp, meta), value, rg)

    def replay(self, leaf_values: dict[int, np.ndarray] | None = None) -> np.ndarray:
        """Re-run the recorded forward computation.

        ``leaf_values`` maps leaf indices to replacement values; leaves not
        listed keep their recorded values. Returns the output value.
        """
        leaf_values = leaf_values or {}
        values: list[np.ndarray] = []
        for var, node in zip(self._vars, self._nodes):
            if node.forward is None:
                values.append(np.asarray(leaf_values.get(var.index, var.value)))
            else:
                values.append(node.forward(*[values[i] for i in node.parents]))
        return values[-1]


def _as_var(tape: Tape, x) -> Var:
    return x if isinstance(x, Var) else tape.constant(np.asarray(x))


def _tape_of(*xs) -> Tape:
    for x in xs:
        if isinstance(x, Var):
            return x.tape
    raise ContractViolation("operation needs at least one recorded operand")


def _fit_cotangent(g: np.ndarray, like: np.ndarray) -> np.ndarray:
    """Reduce a broadcast cotangent to ``like``'s shape and field."""
    if g.shape != like.shape:
        extra = g.ndim - like.ndim
        if extra > 0:
            g = g.sum(axis=tuple(range(extra)))
        axes = tuple(i for i, n in enumerate(like.shape) if n == 1 and g.shape[i] != 1)
        if axes:
            g = g.sum(axis=axes, keepdims=True)
    if not np.iscomplexobj(like):
        g = np.real(g)
    return g


def _binary(op: str, x, y) -> Var:
    tape = _tape_of(x, y)
    x = _as_var(tape, x)
    y = _as_var(tape, y)
    if op == "add":
        fwd = np.add

        def vjp(g, a, b, out):
            return _fit_cotangent(g, a), _fit_cotangent(g, b)
    elif op == "sub":
        fwd = np.subtract

        def vjp(g, a, b, out):
            return _fit_cotangent(g, a), _fit_cotangent(-g, b)
    elif op == "mul":
        fwd = np.multiply

        def vjp(g, a, b, out):
            return _fit_cotangent(g * np.conj(b), a), _fit_cotangent(g * np.conj(a), b)
    elif op == "div":
        fwd = np.divide

        def vjp(g, a, b, out):
            ga = g / np.conj(b)
            gb = -g * np.conj(out / b)
            return _fit_cotangent(ga, a), _fit_cotangent(gb, b)
    else:  # pragma: no cover
        raise ValueError(op)
    return tape.record(op, (x, y), fwd, vjp)


def conj(x: Var) -> Var:
    return x.tape.record("conj", (x,), np.conj, lambda g, a, out: (np.conj(g),))


def real(x: Var) -> Var:
    return x.tape.record(
        "real", (x,), lambda a: np.real(a).copy(), lambda g, a, out: (g.astype(a.dtype),)
    )


def reshape(x: Var, shape) -> Var:
    shape = tuple(shape)
    return x.tape.record(
        "reshape", (x,), lambda a: a.reshape(shape), lambda g, a, out: (g.reshape(a.shape),)
    )


def tsum(x: Var) -> Var:
    """Sum of all entries (0-d result)."""
    return x.tape.record(
        "sum", (x,), lambda a: np.asarray(a.sum()), lambda g, a, out: (np.broadcast_to(g, a.shape).copy(),)
    )


def take(x: Var, indices, axis: int = 0) -> Var:
    """Gather along ``axis``; the adjoint scatter-adds."""
    indices = np.asarray(indices, dtype=np.intp)

    def fwd(a):
        return np.take(a, indices, axis=axis)

    def vjp(g, a, out):
        acc = np.zeros(a.shape, dtype=np.result_type(a, g))
        moved = np.moveaxis(acc, axis, 0)
        np.add.at(moved, indices, np.moveaxis(g, axis, 0))
        return (_fit_cotangent(acc, a),)

    return x.tape.record("take", (x,), fwd, vjp)


def _parse_subscripts(subscripts: str, n: int):
    if "..." in subscripts or "->" not in subscripts:
        raise ContractViolation("einsum needs explicit output subscripts and no ellipsis")
    lhs, out = subscripts.replace(" ", "").split("->")
    ins = lhs.split(",")
    if len(ins) != n:
        raise ContractViolation(f"{len(ins)} operand subscripts for {n} operands")
    for s in ins:
        if len(set(s)) != len(s):
            raise ContractViolation(f"repeated index within one operand: {s!r}")
    return ins, out


@functools.lru_cache(maxsize=4096)
def _pair_lowering(spec: str, shape_a: tuple, shape_b: tuple):
    ins, out = spec.split("->")
    sa, sb = ins.split(",")
    # indices private to one operand and absent from the output are summed first
    keep_a = "".join(c for c in sa if c in sb or c in out)
    keep_b = "".join(c for c in sb if c in sa or c in out)
    pre_a = f"{sa}->{keep_a}" if keep_a != sa else None
    pre_b = f"{sb}->{keep_b}" if keep_b != sb else None
    dims = dict(zip(sa, shape_a))
    dims.update(zip(sb, shape_b))
    sa, sb = keep_a, keep_b
    batch = [c for c in out if c in sa and c in sb]
    summed = [c for c in sa if c in sb and c not in out]
    free_a = [c for c in sa if c not in sb]
    free_b = [c for c in sb if c not in sa]

    def size(cs):
        return math.prod(dims[c] for c in cs)

    perm_a = [sa.index(c) for c in batch + free_a + summed]
    shape_am = (size(batch), size(free_a), size(summed))
    perm_b = [sb.index(c) for c in batch + summed + free_b]
    shape_bm = (size(batch), size(summed), size(free_b))
    order = batch + free_a + free_b
    res_shape = tuple(dims[c] for c in order)
    perm_out = [order.index(c) for c in out]
    return pre_a, pre_b, perm_a, shape_am, perm_b, shape_bm, res_shape, perm_out


def _pair_einsum(spec: str, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Two-operand einsum lowered to a batched matrix product."""
    pre_a, pre_b, perm_a, shape_am, perm_b, shape_bm, res_shape, perm_out = _pair_lowering(
        spec, a.shape, b.shape)
    if pre_a:
        a = np.einsum(pre_a, a)
    if pre_b:
        b = np.einsum(pre_b, b)
    am = a.transpose(perm_a).reshape(shape_am)
    bm = b.transpose(perm_b).reshape(shape_bm)
    return np.matmul(am, bm).reshape(res_shape).transpose(perm_out)


def _einsum(spec: str, *vals) -> np.ndarray:
    if len(vals) == 2:
        return _pair_einsum(spec, *vals)
    return np.einsum(spec, *vals, optimize=len(vals) > 2)


def einsum(subscripts: str, *operands) -> Var:
    """Recorded multilinear contraction.

    The adjoint for operand ``i`` is the contraction of the upstream
    cotangent with the conjugates of all other operands, producing operand
    ``i``'s subscripts. Indices that appear only in operand ``i`` are summed
    in the forward pass, so their cotangent is broadcast back.
    """
    tape = _tape_of(*operands)
    xs = [_as_var(tape, o) for o in operands]
    ins, out = _parse_subscripts(subscripts, len(xs))
    for k, s in enumerate(ins):
        if len(s) != xs[k].value.ndim:
            raise DimensionError(f"operand {k} has {xs[k].value.ndim} axes, subscripts {s!r}")
    extents: dict[str, int] = {}
    for k, s in enumerate(ins):
        for c, n in zip(s, xs[k].value.shape):
            if extents.setdefault(c, n) != n:
                raise DimensionError(f"index {c!r} has extents {extents[c]} and {n}")
    spec = ",".join(ins) + "->" + out

    def fwd(*vals):
        return _einsum(spec, *vals)

    def vjp(g, *args):
        vals = args[:-1]
        grads = []
        for i, s in enumerate(ins):
            others = [ins[j] for j in range(len(ins)) if j != i]
            avail = set(out).union(*others) if others else set(out)
            kept = "".join(c for c in s if c in avail)
            sub = ",".join([out] + others) + "->" + kept
            gi = _einsum(sub, g, *[np.conj(vals[j]) for j in range(len(ins)) if j != i])
            if kept != s:
                shape = [extents[c] if c in kept else 1 for c in s]
                order = [kept.index(c) for c in s if c in kept]
                gi = np.transpose(gi, order).reshape(shape)
                gi = np.broadcast_to(gi, tuple(extents[c] for c in s)).copy()
            grads.append(_fit_cotangent(gi, vals[i]))
        return tuple(grads)

    return tape.record("einsum", xs, fwd, vjp, meta=spec)


def tape_contract(a, b, axis_pairs) -> Var:
    """:func:`contract` recorded on a tape."""
    tape = _tape_of(a, b)
    a = _as_var(tape, a)
    b = _as_var(tape, b)
    _check_pairs(a.shape, b.shape, axis_pairs)
    letters = iter("abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ")
    sa = [next(letters) for _ in range(a.value.ndim)]
    sb = [next(letters) for _ in range(b.value.ndim)]
    for i, j in axis_pairs:
        sb[j] = sa[i]
    ca = {i for i, _ in axis_pairs}
    cb = {j for _, j in axis_pairs}
    out = [c for k, c in enumerate(sa) if k not in ca] + [c for k, c in enumerate(sb) if k not in cb]
    return einsum("".join(sa) + "," + "".join(sb) + "->" + "".join(out), a, b)


def backward(tape: Tape, seed: float = 1.0) -> dict[int, np.ndarray]:
    """Reverse sweep from the tape's last node.

    Returns a mapping from leaf index to gradient (same shape as the leaf).
    Leaves that do not influence the output get zero gradients.
    """
    out = tape.output
    if out.value.size != 1 or np.iscomplexobj(out.value):
        raise ContractViolation(
            f"backward needs a real scalar output, got shape {out.value.shape} dtype {out.value.dtype}"
        )
    cot: list[np.ndarray | None] = [None] * len(tape._nodes)
    cot[-1] = np.full(out.value.shape, float(seed))
    for idx in range(len(tape._nodes) - 1, -1, -1):
        node = tape._nodes[idx]
        g = cot[idx]
        if g is None or node.vjp is None or not tape._vars[idx].requires_grad:
            continue
        parent_vals = [tape._vars[p].value for p in node.parents]
        grads = node.vjp(g, *parent_vals, tape._vars[idx].value)
        for p, gp in zip(node.parents, grads):
            if not tape._vars[p].requires_grad:
                continue
            cot[p] = gp if cot[p] is None else cot[p] + gp
    result = {}
    for var, node in zip(tape._vars, tape._nodes):
        if node.op == "leaf":
            g = cot[var.index]
            result[var.index] = np.zeros_like(var.value) if g is None else np.asarray(g).reshape(var.value.shape)
    return result


# ---------------------------------------------------------------------------
# serialization
#
# A tensor is stored as {"kind": ..., "shape": [...], "data": [re0, im0, re1,
# im1, ...]} with entries in row-major order. Python's float repr round-trips
# doubles exactly, so JSON encoding is lossless.


def tensor_to_record(t, kind: str = "tensor") -> dict:
    t = np.ascontiguousarray(np.asarray(t, dtype=complex))
    inter = np.empty(2 * t.size)
    flat = t.ravel(order="C")
    inter[0::2] = flat.real
    inter[1::2] = flat.imag
    return {"kind": kind, "shape": list(t.shape), "data": inter.tolist()}


def tensor_from_record(rec: dict) -> np.ndarray:
    shape = tuple(int(n) for n in rec["shape"])
    inter = np.asarray(rec["data"], dtype=float)
    if inter.size != 2 * int(np.prod(shape, dtype=int)):
        raise DimensionError(f"data length {inter.size} does not match shape {shape}")
    return (inter[0::2] + 1j * inter[1::2]).reshape(shape)


def dumps_tensor(t, kind: str = "tensor") -> str:
    return json.dumps(tensor_to_record(t, kind))


def loads_tensor(s: str) -> np.ndarray:
    return tensor_from_record(json.loads(s))
