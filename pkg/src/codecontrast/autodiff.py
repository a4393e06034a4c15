"""A small reverse-mode autodiff engine over float64 numpy arrays.

Operations record themselves on the active :class:`Tape` whenever one of
their inputs requires a gradient.  :func:`backward` walks the tape in reverse
once and then marks it consumed.  Only the primitives the encoder and the
training losses need are provided; shapes are checked explicitly and the only
implicit broadcast is a trailing bias add.
"""

from __future__ import annotations

import contextlib
import threading
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.special import erf

from .errors import DegenerateMask, NonDistributionTarget, NotScalar, ShapeMismatch, TapeConsumed

_SQRT2 = np.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_tape", "_index", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self._tape: Tape | None = None
        self._index = -1
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def is_leaf(self) -> bool:
        return self._tape is None

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        label = f" {self.name}" if self.name else ""
        return f"Tensor{label}(shape={self.shape}, requires_grad={self.requires_grad})"


class Tape:
    """Ordered record of primitive applications (already topologically sorted)."""

    def __init__(self) -> None:
        self.records: list[tuple[Tensor, tuple[Tensor, ...], Callable]] = []
        self.consumed = False

    def __len__(self) -> int:
        return len(self.records)

    def __enter__(self) -> "Tape":
        _state().stack.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _state().stack.pop()


class _State(threading.local):
    def __init__(self) -> None:
        self.stack: list[Tape] = []
        self.default = Tape()
        self.enabled = True


_STATE = _State()


def _state() -> _State:
    return _STATE


def current_tape() -> Tape:
    st = _state()
    if st.stack:
        return st.stack[-1]
    if st.default.consumed:
        st.default = Tape()
    return st.default


@contextlib.contextmanager
def no_grad():
    """Evaluate without recording anything (inference, finite differences)."""
    st = _state()
    prev = st.enabled
    st.enabled = False
    try:
        yield
    finally:
        st.enabled = prev


def reset_tape() -> None:
    """Drop any records on the default tape (e.g. after an aborted forward)."""
    _state().default = Tape()


def _record(out: np.ndarray, inputs: tuple[Tensor, ...], pullback: Callable) -> Tensor:
    st = _state()
    track = st.enabled and any(t.requires_grad for t in inputs)
    result = Tensor(out, requires_grad=track)
    if track:
        tape = current_tape()
        if tape.consumed:
            raise TapeConsumed("cannot record on a consumed tape")
        result._tape = tape
        result._index = len(tape.records)
        tape.records.append((result, inputs, pullback))
    return result


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into ``.grad`` of every leaf that requires it."""
    if loss.data.size != 1:
        raise NotScalar(f"backward needs a scalar, got shape {loss.shape}")
    if loss.is_leaf:
        if loss.requires_grad:
            loss.grad = np.ones_like(loss.data) + (0 if loss.grad is None else loss.grad)
        return
    tape = loss._tape
    if tape.consumed:
        raise TapeConsumed("tape already consumed; run the forward pass again")
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for out, inputs, pullback in reversed(tape.records[: loss._index + 1]):
        g = grads.pop(id(out), None)
        if g is None:
            continue
        in_grads = pullback(g)
        for t, gi in zip(inputs, in_grads):
            if gi is None or not t.requires_grad:
                continue
            if t.is_leaf:
                t.grad = gi.copy() if t.grad is None else t.grad + gi
            else:
                key = id(t)
                grads[key] = gi if key not in grads else grads[key] + gi
    tape.consumed = True
    tape.records = []


# -- primitives ---------------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """``a @ b`` for (.., m, k) x (k, n) (shared right operand) or equal batch dims."""
    a, b = as_tensor(a), as_tensor(b)
    A, B = a.data, b.data
    if A.ndim < 1 or B.ndim < 2 or A.shape[-1] != B.shape[-2]:
        raise ShapeMismatch(f"matmul {A.shape} x {B.shape}")
    shared = B.ndim == 2
    if not shared and (A.ndim != B.ndim or A.shape[:-2] != B.shape[:-2]):
        raise ShapeMismatch(f"matmul batch dims differ: {A.shape} x {B.shape}")
    out = A @ B

    def pullback(g):
        ga = g @ np.ascontiguousarray(np.swapaxes(B, -1, -2)) if a.requires_grad else None
        gb = None
        if b.requires_grad:
            if shared:
                gb = A.reshape(-1, A.shape[-1]).T @ g.reshape(-1, g.shape[-1])
            else:
                gb = np.ascontiguousarray(np.swapaxes(A, -1, -2)) @ g
        return ga, gb

    return _record(out, (a, b), pullback)


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum; ``b`` may also be a bias over the last axis of ``a``."""
    a, b = as_tensor(a), as_tensor(b)
    if a.shape == b.shape:
        bias = False
    elif b.data.ndim == 1 and a.data.ndim >= 1 and a.shape[-1] == b.shape[0]:
        bias = True
    else:
        raise ShapeMismatch(f"add {a.shape} + {b.shape}")

    def pullback(g):
        gb = g.reshape(-1, g.shape[-1]).sum(axis=0) if bias else g
        return g, gb

    return _record(a.data + b.data, (a, b), pullback)


def sub(a: Tensor, b: Tensor) -> Tensor:
    return add(a, scale(b, -1.0))


def scale(a: Tensor, c: float) -> Tensor:
    a = as_tensor(a)
    c = float(c)
    return _record(a.data * c, (a,), lambda g: (g * c,))


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise product of equal shapes."""
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise ShapeMismatch(f"mul {a.shape} * {b.shape}")
    A, B = a.data, b.data
    return _record(A * B, (a, b), lambda g: (g * B, g * A))


def gelu(a: Tensor) -> Tensor:
    """Exact GELU, ``x * Phi(x)``."""
    a = as_tensor(a)
    x = a.data
    cdf = 0.5 * (1.0 + erf(x / _SQRT2))

    def pullback(g):
        pdf = _INV_SQRT_2PI * np.exp(-0.5 * x * x)
        return (g * (cdf + x * pdf),)

    return _record(x * cdf, (a,), pullback)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalise over the last axis, then apply per-feature gain and bias."""
    x, gain, bias = as_tensor(x), as_tensor(gain), as_tensor(bias)
    d = x.shape[-1]
    if gain.shape != (d,) or bias.shape != (d,):
        raise ShapeMismatch(f"layer_norm params {gain.shape}, {bias.shape} for width {d}")
    X = x.data
    mu = X.mean(axis=-1, keepdims=True)
    xc = X - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + eps)
    xhat = xc * inv
    out = xhat * gain.data + bias.data

    def pullback(g):
        gx = None
        if x.requires_grad:
            gh = g * gain.data
            gx = inv * (gh - gh.mean(axis=-1, keepdims=True) - xhat * (gh * xhat).mean(axis=-1, keepdims=True))
        flat_g = g.reshape(-1, d)
        ggain = (flat_g * xhat.reshape(-1, d)).sum(axis=0) if gain.requires_grad else None
        gbias = flat_g.sum(axis=0) if bias.requires_grad else None
        return gx, ggain, gbias

    return _record(out, (x, gain, bias), pullback)


def embedding_lookup(table: Tensor, ids: np.ndarray) -> Tensor:
    """Rows of ``table`` (V, d) selected by an integer array of any shape."""
    table = as_tensor(table)
    ids = np.asarray(ids)
    if table.data.ndim != 2:
        raise ShapeMismatch(f"embedding table must be 2-d, got {table.shape}")
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise ShapeMismatch("embedding id out of range")

    def pullback(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, ids.reshape(-1), g.reshape(-1, table.shape[1]))
        return (gt,)

    return _record(table.data[ids], (table,), pullback)


def masked_mean_pool(x: Tensor, mask: np.ndarray) -> Tensor:
    """Average (B, T, d) over positions where ``mask`` (B, T) is 1."""
    x = as_tensor(x)
    m = np.asarray(mask, dtype=np.float64)
    if x.data.ndim != 3 or m.shape != x.shape[:2]:
        raise ShapeMismatch(f"masked_mean_pool {x.shape} with mask {m.shape}")
    counts = m.sum(axis=1, keepdims=True)
    if np.any(counts == 0):
        raise DegenerateMask("mask selects no positions in some row")
    w = m / counts
    out = np.einsum("bt,btd->bd", w, x.data)
    return _record(out, (x,), lambda g: (w[:, :, None] * g[:, None, :],))


def _masked_logits(X: np.ndarray, mask) -> np.ndarray:
    if mask is None:
        return X
    m = np.asarray(mask, dtype=bool)
    if m.ndim != X.ndim:
        raise ShapeMismatch(f"mask rank {m.ndim} vs logits rank {X.ndim}")
    return X + np.where(m, 0.0, -np.inf)


def softmax_rows(x: Tensor, mask: np.ndarray | None = None) -> Tensor:
    """Softmax over the last axis; positions with ``mask == 0`` get probability 0."""
    x = as_tensor(x)
    Z = _masked_logits(x.data, mask)
    Z = Z - Z.max(axis=-1, keepdims=True)
    E = np.exp(Z)
    Y = E / E.sum(axis=-1, keepdims=True)

    def pullback(g):
        return (Y * (g - (g * Y).sum(axis=-1, keepdims=True)),)

    return _record(Y, (x,), pullback)


def log_softmax_rows(x: Tensor) -> Tensor:
    """Numerically stable ``log(softmax(x))`` over the last axis."""
    x = as_tensor(x)
    Z = x.data - x.data.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(Z).sum(axis=-1, keepdims=True))
    out = Z - lse
    P = np.exp(out)
    return _record(out, (x,), lambda g: (g - P * g.sum(axis=-1, keepdims=True),))


def log(x: Tensor) -> Tensor:
    x = as_tensor(x)
    X = x.data
    return _record(np.log(X), (x,), lambda g: (g / X,))


def concat_rows(parts: Sequence[Tensor]) -> Tensor:
    """Concatenate along the first axis (1-d pieces join into one vector)."""
    parts = [as_tensor(p) for p in parts]
    if not parts:
        raise ShapeMismatch("concat_rows of nothing")
    tail = parts[0].shape[1:]
    if any(p.shape[1:] != tail or p.data.ndim == 0 for p in parts):
        raise ShapeMismatch("concat_rows parts disagree on trailing shape")
    sizes = np.cumsum([p.shape[0] for p in parts])[:-1]
    out = np.concatenate([p.data for p in parts], axis=0)
    return _record(out, tuple(parts), lambda g: tuple(np.split(g, sizes, axis=0)))


def dot(a: Tensor, b: Tensor) -> Tensor:
    """Full contraction of two equally shaped tensors to a scalar."""
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise ShapeMismatch(f"dot {a.shape} . {b.shape}")
    A, B = a.data, b.data
    return _record(np.asarray(np.sum(A * B)), (a, b), lambda g: (g * B, g * A))


def reshape(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    x = as_tensor(x)
    old = x.shape
    try:
        out = x.data.reshape(shape)
    except ValueError as exc:
        raise ShapeMismatch(str(exc)) from None
    return _record(out, (x,), lambda g: (g.reshape(old),))


def transpose(x: Tensor, axes: tuple[int, ...]) -> Tensor:
    x = as_tensor(x)
    inv = tuple(np.argsort(axes))
    return _record(np.ascontiguousarray(np.transpose(x.data, axes)), (x,), lambda g: (np.ascontiguousarray(np.transpose(g, inv)),))


def take(x: Tensor, index) -> Tensor:
    """Basic/advanced indexing ``x[index]`` with a scatter-add pullback."""
    x = as_tensor(x)

    def pullback(g):
        gx = np.zeros_like(x.data)
        np.add.at(gx, index, g)
        return (gx,)

    return _record(np.asarray(x.data[index]), (x,), pullback)


def sum_all(x: Tensor) -> Tensor:
    x = as_tensor(x)
    return _record(np.asarray(x.data.sum()), (x,), lambda g: (np.broadcast_to(g, x.shape).copy(),))


def mean_all(x: Tensor) -> Tensor:
    return scale(sum_all(x), 1.0 / as_tensor(x).data.size)


# -- losses -------------------------------------------------------------------

def check_distribution(target: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    t = np.asarray(target, dtype=np.float64)
    if np.any(t < 0) or np.any(np.abs(t.sum(axis=-1) - 1.0) > tol):
        raise NonDistributionTarget("target rows must be non-negative and sum to 1")
    return t


def cross_entropy_soft(logits: Tensor, target) -> Tensor:
    """Mean over rows of ``-sum(target * log_softmax(logits))``."""
    logits = as_tensor(logits)
    t = check_distribution(target.data if isinstance(target, Tensor) else target)
    if t.shape != logits.shape:
        raise ShapeMismatch(f"target {t.shape} vs logits {logits.shape}")
    rows = 1 if t.ndim == 1 else int(np.prod(t.shape[:-1]))
    return scale(dot(log_softmax_rows(logits), Tensor(t)), -1.0 / rows)


def entropy(target) -> float:
    t = check_distribution(target)
    rows = 1 if t.ndim == 1 else int(np.prod(t.shape[:-1]))
    nz = t > 0
    return float(-(t[nz] * np.log(t[nz])).sum() / rows)


def kl_divergence(target, logits: Tensor) -> Tensor:
    """``KL(target || softmax(logits))`` averaged over rows."""
    ce = cross_entropy_soft(logits, target)
    return add(ce, Tensor(-entropy(target)))


# -- optimiser ----------------------------------------------------------------

class AdamW:
    """Adam with decoupled weight decay, state kept per parameter name."""

    def __init__(self, params: dict[str, Tensor], lr: float = 1e-3, betas=(0.9, 0.999), eps: float = 1e-8, weight_decay: float = 0.0):
        self.params = params
        self.lr = lr
        self.betas = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.state: dict[str, dict] = {}

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def step(self) -> None:
        grads = {k: p.grad for k, p in self.params.items() if p.grad is not None}
        adamw_step(self.params, grads, self.state, lr=self.lr, betas=self.betas, eps=self.eps, weight_decay=self.weight_decay)


def adamw_step(params: dict[str, Tensor], grads: dict[str, np.ndarray], state: dict, *, lr: float, betas=(0.9, 0.999), eps: float = 1e-8, weight_decay: float = 0.0) -> None:
    """In-place AdamW update of ``params`` that appear in ``grads``."""
    b1, b2 = betas
    for name in sorted(grads):
        p = params[name]
        g = grads[name]
        st = state.get(name)
        if st is None:
            st = state[name] = {"step": 0, "m": np.zeros_like(p.data), "v": np.zeros_like(p.data)}
        st["step"] += 1
        t = st["step"]
        st["m"] = b1 * st["m"] + (1 - b1) * g
        st["v"] = b2 * st["v"] + (1 - b2) * g * g
        mhat = st["m"] / (1 - b1**t)
        vhat = st["v"] / (1 - b2**t)
        if weight_decay:
            p.data *= 1 - lr * weight_decay
        p.data -= lr * mhat / (np.sqrt(vhat) + eps)


# -- checkpoints ----------------------------------------------------------------

CHECKPOINT_MAGIC = "codecontrast-tensors v1"


def save_tensors(path, tensors: dict[str, np.ndarray | Tensor], meta: dict[str, str] | None = None) -> None:
    """Write a text dump: magic line, ``meta`` lines, then per tensor a header
    ``tensor <name> <ndim> <dims...>`` followed by one line of row-major values
    in shortest round-trip ``repr`` form.  Names are written in sorted order."""
    lines = [CHECKPOINT_MAGIC]
    for key, value in sorted((meta or {}).items()):
        lines.append(f"meta {key} {value}")
    for name in sorted(tensors):
        arr = tensors[name].data if isinstance(tensors[name], Tensor) else np.asarray(tensors[name], dtype=np.float64)
        lines.append(" ".join(["tensor", name, str(arr.ndim), *map(str, arr.shape)]))
        lines.append(" ".join(repr(float(v)) for v in arr.reshape(-1)))
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")


def load_tensors(path) -> tuple[dict[str, np.ndarray], dict[str, str]]:
    with open(path, encoding="ascii") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not a tensor dump")
    tensors: dict[str, np.ndarray] = {}
    meta: dict[str, str] = {}
    i = 1
    while i < len(lines):
        head = lines[i].split()
        if head[0] == "meta":
            meta[head[1]] = " ".join(head[2:])
            i += 1
            continue
        if head[0] != "tensor":
            raise ValueError(f"{path}:{i + 1}: unexpected line")
        name, ndim = head[1], int(head[2])
        shape = tuple(int(s) for s in head[3 : 3 + ndim])
        values = np.array([float(v) for v in lines[i + 1].split()], dtype=np.float64)
        tensors[name] = values.reshape(shape)
        i += 2
    return tensors, meta


