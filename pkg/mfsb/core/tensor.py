"""
Dense float64 tensors with define-by-run reverse-mode differentiation.

Operations executed while a ``Tape`` is active record a node whenever one of
their inputs requires a gradient. ``Tape.backward`` walks the recorded nodes
in reverse order, visits each node once and accumulates leaf gradients into
``Tensor.grad``. Outside a tape every op is a plain numpy computation.
"""

from __future__ import annotations

import contextvars
from dataclasses import dataclass
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from mfsb.utils.errors import (
    ContractError,
    DegenerateInputError,
    DeterminismError,
    NumericError,
    ShapeError,
    TapeError,
    TargetIndexError,
)

ArrayLike = Union["Tensor", np.ndarray, float, int, Sequence]
BackwardFn = Callable[[np.ndarray], Tuple[Optional[np.ndarray], ...]]

_ACTIVE_TAPE: contextvars.ContextVar[Optional["Tape"]] = contextvars.ContextVar(
    "mfsb_active_tape", default=None
)


class Tensor:
    """Real n-dimensional array that can take part in a gradient tape."""

    __slots__ = ("data", "requires_grad", "grad", "node_id", "_tape", "name")

    def __init__(self, data, requires_grad: bool = False, name: Optional[str] = None):
        self.data = np.array(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self.node_id: Optional[int] = None
        self._tape: Optional[Tape] = None
        self.name = name

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return int(self.data.size)

    @property
    def values(self) -> np.ndarray:
        """Flat row-major view of the data"""
        return self.data.reshape(-1)

    @property
    def is_leaf(self) -> bool:
        return self.node_id is None

    def item(self) -> float:
        if self.size != 1:
            raise ContractError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    # Operators
    def __add__(self, other): return add(self, other)
    def __radd__(self, other): return add(other, self)
    def __sub__(self, other): return sub(self, other)
    def __rsub__(self, other): return sub(other, self)
    def __mul__(self, other): return mul(self, other)
    def __rmul__(self, other): return mul(other, self)
    def __truediv__(self, other): return div(self, other)
    def __rtruediv__(self, other): return div(other, self)
    def __neg__(self): return neg(self)
    def __matmul__(self, other): return matmul(self, other)
    def __getitem__(self, index): return getitem(self, index)

    def sum(self, axis=None, keepdims: bool = False): return tensor_sum(self, axis, keepdims)
    def mean(self, axis=None, keepdims: bool = False): return mean(self, axis, keepdims)
    def reshape(self, *shape): return reshape(self, shape[0] if len(shape) == 1 and isinstance(shape[0], tuple) else shape)
    def tanh(self): return tanh(self)


@dataclass
class TapeNode:
    """One recorded operation: inputs, output and the local gradient rule"""
    inputs: Tuple[Tensor, ...]
    output: Tensor
    backward: BackwardFn
    op: str


class Tape:
    """Ordered record of differentiable operations for one forward pass."""

    def __init__(self):
        self.nodes: List[TapeNode] = []
        self.consumed = False
        self._token: Optional[contextvars.Token] = None

    def __enter__(self) -> "Tape":
        self._token = _ACTIVE_TAPE.set(self)
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        if self._token is not None:
            _ACTIVE_TAPE.reset(self._token)
            self._token = None

    def __len__(self) -> int:
        return len(self.nodes)

    def record(self, output: Tensor, inputs: Tuple[Tensor, ...], backward: BackwardFn, op: str) -> None:
        if self.consumed:
            raise TapeError()
        output.node_id = len(self.nodes)
        output._tape = self
        self.nodes.append(TapeNode(inputs=inputs, output=output, backward=backward, op=op))

    def backward(self, loss: Tensor) -> Dict[Tensor, np.ndarray]:
        """
        Propagate d(loss)/d(.) to every requires_grad leaf reachable from ``loss``.

        Returns:
            Map from leaf tensor to its gradient (same shape as the leaf)

        Raises:
            ContractError: loss is not scalar or was not recorded on this tape
            TapeError: the tape was already consumed
        """
        if self.consumed:
            raise TapeError()
        if loss.size != 1:
            raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
        if loss._tape is not self or loss.node_id is None:
            raise ContractError("Loss was not recorded on this tape")

        grads: Dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
        leaves: Dict[int, Tensor] = {}

        for node in reversed(self.nodes[: loss.node_id + 1]):
            g_out = grads.pop(id(node.output), None)
            if g_out is None:
                continue
            input_grads = node.backward(g_out)
            for inp, g in zip(node.inputs, input_grads):
                if g is None or not inp.requires_grad:
                    continue
                key = id(inp)
                grads[key] = grads[key] + g if key in grads else g
                if inp.is_leaf:
                    leaves[key] = inp

        self.consumed = True

        result: Dict[Tensor, np.ndarray] = {}
        for key, leaf in leaves.items():
            g = np.asarray(grads[key], dtype=np.float64).reshape(leaf.shape)
            leaf.grad = g.copy() if leaf.grad is None else leaf.grad + g
            result[leaf] = g
        return result


def active_tape() -> Optional[Tape]:
    return _ACTIVE_TAPE.get()


def backward(loss: Tensor) -> Dict[Tensor, np.ndarray]:
    """Run backward on the tape that recorded ``loss``"""
    if loss._tape is None:
        raise ContractError("Loss is not on an active tape")
    return loss._tape.backward(loss)


def as_tensor(value: ArrayLike) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _result(data: np.ndarray, inputs: Tuple[Tensor, ...], backward_fn: BackwardFn, op: str) -> Tensor:
    tape = _ACTIVE_TAPE.get()
    needs_grad = tape is not None and any(t.requires_grad for t in inputs)
    out = Tensor(data, requires_grad=needs_grad)
    if needs_grad:
        tape.record(out, inputs, backward_fn, op)
    return out


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to ``shape``"""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


def _broadcast_shape(a: Tensor, b: Tensor, op: str) -> Tuple[int, ...]:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} do not broadcast", [a.shape, b.shape])


# Elementwise arithmetic

def add(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "add")
    return _result(
        a.data + b.data, (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
        "add",
    )


def sub(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "sub")
    return _result(
        a.data - b.data, (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)),
        "sub",
    )


def mul(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "mul")
    return _result(
        a.data * b.data, (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
        "mul",
    )


def div(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "div")
    return _result(
        a.data / b.data, (a, b),
        lambda g: (
            _unbroadcast(g / b.data, a.shape),
            _unbroadcast(-g * a.data / (b.data * b.data), b.shape),
        ),
        "div",
    )


def neg(a: ArrayLike) -> Tensor:
    a = as_tensor(a)
    return _result(-a.data, (a,), lambda g: (-g,), "neg")


def tanh(a: ArrayLike) -> Tensor:
    a = as_tensor(a)
    y = np.tanh(a.data)
    return _result(y, (a,), lambda g: (g * (1.0 - y * y),), "tanh")


def exp(a: ArrayLike) -> Tensor:
    a = as_tensor(a)
    y = np.exp(a.data)
    return _result(y, (a,), lambda g: (g * y,), "exp")


def log(a: ArrayLike) -> Tensor:
    a = as_tensor(a)
    return _result(np.log(a.data), (a,), lambda g: (g / a.data,), "log")


# Shape manipulation

def matmul(a: ArrayLike, b: ArrayLike) -> Tensor:
    """
    Matrix product over the last two axes; leading batch axes broadcast.

    Raises:
        ShapeError: inner dimensions differ or an operand is not a matrix
    """
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(
            f"matmul: cannot multiply shapes {a.shape} and {b.shape}", [a.shape, b.shape]
        )
    try:
        np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
    except ValueError:
        raise ShapeError(
            f"matmul: batch dimensions of {a.shape} and {b.shape} do not broadcast",
            [a.shape, b.shape],
        )

    def backward_fn(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _result(np.matmul(a.data, b.data), (a, b), backward_fn, "matmul")


def transpose(a: ArrayLike) -> Tensor:
    """Swap the last two axes"""
    a = as_tensor(a)
    return _result(
        np.swapaxes(a.data, -1, -2), (a,), lambda g: (np.swapaxes(g, -1, -2),), "transpose"
    )


def reshape(a: ArrayLike, shape: Sequence[int]) -> Tensor:
    a = as_tensor(a)
    return _result(a.data.reshape(tuple(shape)), (a,), lambda g: (g.reshape(a.shape),), "reshape")


def broadcast_to(a: ArrayLike, shape: Sequence[int]) -> Tensor:
    a = as_tensor(a)
    shape = tuple(shape)
    try:
        data = np.broadcast_to(a.data, shape).copy()
    except ValueError:
        raise ShapeError(f"broadcast_to: {a.shape} -> {shape}", [a.shape, shape])
    return _result(data, (a,), lambda g: (_unbroadcast(g, a.shape),), "broadcast_to")


def getitem(a: ArrayLike, index) -> Tensor:
    a = as_tensor(a)

    items = index if isinstance(index, tuple) else (index,)
    fancy = any(isinstance(i, (list, np.ndarray)) for i in items)

    def backward_fn(g):
        full = np.zeros_like(a.data)
        if fancy:
            # repeated indices must accumulate
            np.add.at(full, index, g)
        else:
            full[index] += g
        return (full,)

    return _result(np.array(a.data[index]), (a,), backward_fn, "getitem")


def concat(tensors: Sequence[ArrayLike], axis: int = 0) -> Tensor:
    parts = tuple(as_tensor(t) for t in tensors)
    try:
        data = np.concatenate([t.data for t in parts], axis=axis)
    except ValueError:
        raise ShapeError("concat: incompatible shapes", [t.shape for t in parts])
    bounds = np.cumsum([t.shape[axis] for t in parts])[:-1]

    def backward_fn(g):
        return tuple(np.split(g, bounds, axis=axis))

    return _result(data, parts, backward_fn, "concat")


def stack(tensors: Sequence[ArrayLike], axis: int = 0) -> Tensor:
    parts = tuple(as_tensor(t) for t in tensors)
    try:
        data = np.stack([t.data for t in parts], axis=axis)
    except ValueError:
        raise ShapeError("stack: tensors differ in shape", [t.shape for t in parts])

    def backward_fn(g):
        return tuple(np.take(g, i, axis=axis) for i in range(len(parts)))

    return _result(data, parts, backward_fn, "stack")


# Reductions

def tensor_sum(a: ArrayLike, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)

    def backward_fn(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _result(np.sum(a.data, axis=axis, keepdims=keepdims), (a,), backward_fn, "sum")


def mean(a: ArrayLike, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    count = a.size if axis is None else int(np.prod([a.shape[ax] for ax in np.atleast_1d(axis)]))
    return tensor_sum(a, axis=axis, keepdims=keepdims) / float(count)


def l2_norm(a: ArrayLike, axis: int = -1, keepdims: bool = True) -> Tensor:
    """Euclidean norm along ``axis``; gradient undefined at zero (callers guard)"""
    a = as_tensor(a)
    norm = np.sqrt(np.sum(a.data * a.data, axis=axis, keepdims=True))

    def backward_fn(g):
        if not keepdims:
            g = np.expand_dims(g, axis)
        with np.errstate(divide="ignore", invalid="ignore"):
            return (np.where(norm > 0, g * a.data / norm, 0.0),)

    out = norm if keepdims else np.squeeze(norm, axis=axis)
    return _result(out, (a,), backward_fn, "l2_norm")


def dot(a: ArrayLike, b: ArrayLike) -> Tensor:
    return tensor_sum(mul(a, b), axis=-1)


# Probability and similarity

def _check_finite(x: np.ndarray, op: str) -> None:
    if not np.all(np.isfinite(x)):
        raise NumericError(f"{op} received non-finite input", op=op)


def softmax_last_dim(x: ArrayLike) -> Tensor:
    """Softmax over the trailing axis, computed with max subtraction"""
    x = as_tensor(x)
    if x.ndim == 0 or x.shape[-1] < 1:
        raise ShapeError("softmax_last_dim needs a non-empty trailing axis", [x.shape])
    _check_finite(x.data, "softmax_last_dim")
    shifted = x.data - np.max(x.data, axis=-1, keepdims=True)
    e = np.exp(shifted)
    y = e / np.sum(e, axis=-1, keepdims=True)

    def backward_fn(g):
        return (y * (g - np.sum(g * y, axis=-1, keepdims=True)),)

    return _result(y, (x,), backward_fn, "softmax")


def cosine_similarity(a: ArrayLike, b: ArrayLike) -> Tensor:
    """
    dot(a, b) / (|a| |b|) along the last axis.

    Raises:
        ShapeError: trailing dimensions differ
        DegenerateInputError: either input has zero norm
    """
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim == 0 or b.ndim == 0 or a.shape[-1] != b.shape[-1]:
        raise ShapeError(f"cosine_similarity: shapes {a.shape} and {b.shape}", [a.shape, b.shape])
    na = l2_norm(a, axis=-1, keepdims=False)
    nb = l2_norm(b, axis=-1, keepdims=False)
    if np.any(na.data == 0.0) or np.any(nb.data == 0.0):
        raise DegenerateInputError("cosine_similarity on a zero-norm vector")
    return dot(a, b) / (na * nb)


def normalize_rows(a: ArrayLike) -> Tensor:
    """Scale every trailing-axis slice to unit norm"""
    a = as_tensor(a)
    norm = l2_norm(a, axis=-1, keepdims=True)
    if np.any(norm.data == 0.0):
        raise DegenerateInputError("Cannot normalize a zero-norm vector")
    return a / norm


def cross_entropy_from_logits(logits: ArrayLike, target) -> Tensor:
    """
    Mean of -log softmax(logits)[target] over leading axes, log-sum-exp form.

    ``logits`` is [n_classes] with an int target, or [..., n_classes] with an
    integer array of targets matching the leading shape.

    Raises:
        TargetIndexError: a target is outside [0, n_classes)
    """
    logits = as_tensor(logits)
    n_classes = logits.shape[-1]
    targets = np.asarray(target, dtype=np.int64)
    if targets.shape != logits.shape[:-1]:
        raise ShapeError(
            f"cross_entropy: targets {targets.shape} vs logits {logits.shape}",
            [targets.shape, logits.shape],
        )
    bad = (targets < 0) | (targets >= n_classes)
    if np.any(bad):
        raise TargetIndexError(int(targets[bad].reshape(-1)[0]), n_classes)
    _check_finite(logits.data, "cross_entropy_from_logits")

    x = logits.data.reshape(-1, n_classes)
    t = targets.reshape(-1)
    m = np.max(x, axis=-1, keepdims=True)
    e = np.exp(x - m)
    lse = m[:, 0] + np.log(np.sum(e, axis=-1))
    rows = np.arange(x.shape[0])
    losses = lse - x[rows, t]
    count = x.shape[0]

    def backward_fn(g):
        p = e / np.sum(e, axis=-1, keepdims=True)
        p[rows, t] -= 1.0
        return ((g * p / count).reshape(logits.shape),)

    return _result(np.array(losses.mean()), (logits,), backward_fn, "cross_entropy")


# Gradient checking

def check_gradients(
    f: Callable[[], Tensor],
    params: Iterable[Tensor],
    h: float = 1e-5,
    max_coords: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
) -> float:
    """
    Compare tape gradients of ``f`` against central finite differences.

    ``f`` takes no arguments and reads ``params`` (mutated in place while
    probing). Parameters with ``requires_grad=False`` are skipped. With
    ``max_coords`` only that many coordinates per parameter are probed.

    Returns:
        Worst |analytic - numeric| / max(|analytic|, |numeric|, 1e-8)

    Raises:
        DeterminismError: two baseline evaluations of ``f`` differ
    """
    if h <= 0:
        raise ContractError("Finite-difference step must be positive")
    params = [p for p in params if p.requires_grad]

    first, second = f().item(), f().item()
    if first != second:
        raise DeterminismError(first, second)

    for p in params:
        p.zero_grad()
    with Tape() as tape:
        loss = f()
    grads = tape.backward(loss) if loss._tape is tape else {}

    rng = rng or np.random.default_rng(0)
    worst = 0.0
    for p in params:
        analytic = grads.get(p, np.zeros_like(p.data)).reshape(-1)
        flat = p.data.reshape(-1)
        coords = np.arange(flat.size)
        if max_coords is not None and flat.size > max_coords:
            coords = np.sort(rng.choice(flat.size, size=max_coords, replace=False))
        for i in coords:
            original = flat[i]
            flat[i] = original + h
            f_plus = f().item()
            flat[i] = original - h
            f_minus = f().item()
            flat[i] = original
            numeric = (f_plus - f_minus) / (2.0 * h)
            denom = max(abs(analytic[i]), abs(numeric), 1e-8)
            worst = max(worst, abs(analytic[i] - numeric) / denom)
    return worst
