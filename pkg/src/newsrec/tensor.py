"""A small dense-tensor library with reverse-mode automatic differentiation.

Tensors wrap numpy arrays. Operations on tensors that require gradients
record a node holding the parents and a closure mapping the output gradient
to one gradient per parent. :func:`backward` walks the recorded graph in
reverse topological order and frees it afterwards, so a graph lives for
exactly one forward/backward pass.

Values are float32 by default; reductions and softmax denominators
accumulate in float64.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import ConfigError, EmptyAttentionError, FlakinessError, ShapeError
from .rng import RngState

_DTYPE = np.dtype(np.float32)
_GRAD_ENABLED = True


def default_dtype() -> np.dtype:
    return _DTYPE


@contextlib.contextmanager
def precision(dtype):
    """Temporarily change the dtype used for new tensors."""
    global _DTYPE
    previous, _DTYPE = _DTYPE, np.dtype(dtype)
    try:
        yield
    finally:
        _DTYPE = previous


@contextlib.contextmanager
def no_grad():
    """Disable graph recording, e.g. for inference over frozen parameters."""
    global _GRAD_ENABLED
    previous, _GRAD_ENABLED = _GRAD_ENABLED, False
    try:
        yield
    finally:
        _GRAD_ENABLED = previous


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=_DTYPE)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def values(self) -> np.ndarray:
        """Flat row-major view of the data."""
        return self.data.reshape(-1)

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"expected a scalar tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return take(self, index)

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        return tmean(self, axis, keepdims)

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes) -> "Tensor":
        return transpose(self, axes or None)

    @property
    def T(self) -> "Tensor":
        return transpose(self, None)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data: np.ndarray, parents: Sequence[Tensor], backward: Callable) -> Tensor:
    out = Tensor(data)
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` after numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)), dtype=np.float64)
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True, dtype=np.float64)
    return grad.reshape(shape)


# ---------------------------------------------------------------- elementwise


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _make(a.data + b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _make(a.data - b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _make(a.data * b.data, (a, b),
                 lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)))


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data / b.data
    return _make(out, (a, b),
                 lambda g: (_unbroadcast(g / b.data, a.shape),
                            _unbroadcast(-g * out / b.data, b.shape)))


def exp(x: Tensor) -> Tensor:
    out = np.exp(x.data)
    return _make(out, (x,), lambda g: (g * out,))


def log(x: Tensor) -> Tensor:
    return _make(np.log(x.data), (x,), lambda g: (g / x.data,))


def tanh(x: Tensor) -> Tensor:
    out = np.tanh(x.data)
    return _make(out, (x,), lambda g: (g * (1.0 - out * out),))


def sigmoid(x: Tensor) -> Tensor:
    # split by sign so exp never overflows
    z = np.exp(-np.abs(x.data))
    out = np.where(x.data >= 0, 1.0 / (1.0 + z), z / (1.0 + z)).astype(x.data.dtype)
    return _make(out, (x,), lambda g: (g * out * (1.0 - out),))


def relu(x: Tensor) -> Tensor:
    active = x.data > 0
    return _make(np.where(active, x.data, 0).astype(x.data.dtype), (x,), lambda g: (g * active,))


# ------------------------------------------------------------------ reductions


def tsum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = np.sum(x.data, axis=axis, keepdims=keepdims, dtype=np.float64).astype(x.data.dtype)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape),)

    return _make(out, (x,), backward)


def tmean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    count = x.size if axis is None else np.prod([x.shape[a] for a in np.atleast_1d(axis)])
    return tsum(x, axis, keepdims) * (1.0 / float(count))


# ---------------------------------------------------------------- structural


def reshape(x: Tensor, shape) -> Tensor:
    return _make(x.data.reshape(shape), (x,), lambda g: (g.reshape(x.shape),))


def transpose(x: Tensor, axes=None) -> Tensor:
    inverse = None if axes is None else tuple(np.argsort(axes))
    return _make(np.transpose(x.data, axes), (x,), lambda g: (np.transpose(g, inverse),))


def take(x: Tensor, index) -> Tensor:
    """Numpy-style indexing; the gradient scatters back with accumulation."""
    if isinstance(index, Tensor):
        index = index.data.astype(np.int64)

    parts = index if isinstance(index, tuple) else (index,)
    basic = all(isinstance(i, (int, slice, type(Ellipsis))) or i is None for i in parts)

    def backward(g):
        full = np.zeros(x.shape, dtype=x.data.dtype)
        if basic:
            full[index] = g
        else:
            np.add.at(full, index, g)
        return (full,)

    return _make(x.data[index], (x,), backward)


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]
    return _make(np.concatenate([t.data for t in tensors], axis=axis), tensors,
                 lambda g: tuple(np.split(g, splits, axis=axis)))


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]

    def backward(g):
        return tuple(np.take(g, i, axis=axis) for i in range(len(tensors)))

    return _make(np.stack([t.data for t in tensors], axis=axis), tensors, backward)


# -------------------------------------------------------------- linear algebra


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product with numpy batching rules; 1-D operands are promoted."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim == 0 or b.ndim == 0 or a.shape[-1] != b.shape[-2 if b.ndim > 1 else 0]:
        raise ShapeError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    if a.ndim == 1:
        return reshape(matmul(reshape(a, (1, a.shape[0])), b), b.shape[:-2] + b.shape[-1:])
    if b.ndim == 1:
        return reshape(matmul(a, reshape(b, (b.shape[0], 1))), a.shape[:-1])

    def backward(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _make(np.matmul(a.data, b.data), (a, b), backward)


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """``x @ weight.T + bias`` with ``weight`` laid out [out x in]."""
    out = matmul(x, transpose(weight))
    return out if bias is None else out + bias


def embedding_lookup(table: Tensor, ids) -> Tensor:
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size:
        bad = ids[(ids < 0) | (ids >= table.shape[0])]
        if bad.size:
            raise IndexError(f"embedding id {int(bad[0])} out of range [0, {table.shape[0]})")
    return take(table, ids)


def conv1d_same(x: Tensor, filters: Tensor, bias: Tensor) -> Tensor:
    """Zero-padded 1-D convolution over the second-to-last axis.

    ``x`` is [..., L, d_in], ``filters`` is [d_out, 2k+1, d_in]; output is
    [..., L, d_out]. Filter tap ``j`` reads position ``i - k + j``.
    """
    d_out, width, d_in = filters.shape
    if width % 2 != 1:
        raise ConfigError(f"convolution window must be odd, got {width}")
    if x.shape[-1] != d_in:
        raise ShapeError(f"conv1d input {x.shape} does not match filters {filters.shape}")
    k = width // 2
    length = x.shape[-2]
    lead = x.shape[:-2]
    pad = [(0, 0)] * len(lead) + [(k, k), (0, 0)]
    padded = np.pad(x.data, pad)
    cols = np.stack([padded[..., j:j + length, :] for j in range(width)], axis=-2)
    cols = cols.reshape(lead + (length, width * d_in))
    fmat = filters.data.reshape(d_out, width * d_in)
    out = np.matmul(cols, fmat.T) + bias.data

    def backward(g):
        g2 = g.reshape(-1, d_out)
        gf = (g2.T @ cols.reshape(-1, width * d_in)).reshape(filters.shape)
        gb = g2.sum(axis=0, dtype=np.float64)
        gcols = np.matmul(g, fmat).reshape(lead + (length, width, d_in))
        gpad = np.zeros(padded.shape, dtype=x.data.dtype)
        for j in range(width):
            gpad[..., j:j + length, :] += gcols[..., j, :]
        return gpad[..., k:k + length, :], gf, gb

    return _make(out, (x, filters, bias), backward)


# ------------------------------------------------------------------- softmax


def masked_softmax(logits: Tensor, mask=None, axis: int = -1,
                   allow_empty: bool = False) -> Tensor:
    """Softmax over ``axis`` with masked-out entries forced to exactly zero.

    A row with no unmasked entry raises :class:`EmptyAttentionError` unless
    ``allow_empty`` is set, in which case the whole row is zero.
    """
    z = logits.data.astype(np.float64)
    if mask is None:
        mask = np.ones(z.shape, dtype=bool)
    mask = np.broadcast_to(np.asarray(mask, dtype=bool), z.shape)
    any_valid = mask.any(axis=axis, keepdims=True)
    if not allow_empty and not any_valid.all():
        raise EmptyAttentionError("softmax over a fully masked input")
    shift = np.max(np.where(mask, z, -np.inf), axis=axis, keepdims=True)
    shift = np.where(any_valid, shift, 0.0)
    e = np.where(mask, np.exp(np.where(mask, z - shift, 0.0)), 0.0)
    denom = e.sum(axis=axis, keepdims=True)
    p64 = e / np.where(denom > 0, denom, 1.0)
    out = p64.astype(logits.data.dtype)

    def backward(g):
        dot = (g * p64).sum(axis=axis, keepdims=True)
        return ((p64 * (g - dot)).astype(logits.data.dtype),)

    return _make(out, (logits,), backward)


def log_softmax(logits: Tensor, axis: int = -1) -> Tensor:
    z = logits.data.astype(np.float64)
    shift = z.max(axis=axis, keepdims=True)
    lse = shift + np.log(np.exp(z - shift).sum(axis=axis, keepdims=True))
    out = z - lse
    p = np.exp(out)

    def backward(g):
        return ((g - p * g.sum(axis=axis, keepdims=True)).astype(logits.data.dtype),)

    return _make(out.astype(logits.data.dtype), (logits,), backward)


# ------------------------------------------------------------------- dropout


def dropout(x: Tensor, p: float, mode: str, rng: RngState | None) -> Tensor:
    """Inverted dropout. ``mode`` is ``"train"`` or ``"eval"``."""
    if not 0.0 <= p < 1.0:
        raise ConfigError(f"dropout probability must lie in [0, 1), got {p}")
    if mode not in ("train", "eval"):
        raise ConfigError(f"unknown mode {mode!r}")
    if mode == "eval" or p == 0.0:
        return x
    keep = (rng.random(x.shape) >= p).astype(x.data.dtype) / (1.0 - p)
    return _make(x.data * keep, (x,), lambda g: (g * keep,))


# ---------------------------------------------------------------------- LSTM


class LSTMWeights:
    """Input weights [4h x d], recurrent weights [4h x h], bias [4h].

    Gate blocks are ordered input, forget, cell candidate, output.
    """

    def __init__(self, w_input: Tensor, w_hidden: Tensor, bias: Tensor):
        self.w_input, self.w_hidden, self.bias = w_input, w_hidden, bias
        self.hidden_size = w_hidden.shape[1]


def lstm_step(x: Tensor, h: Tensor, c: Tensor, w: LSTMWeights) -> tuple[Tensor, Tensor]:
    n = w.hidden_size
    gates = linear(x, w.w_input) + linear(h, w.w_hidden) + w.bias
    i = sigmoid(take(gates, (..., slice(0, n))))
    f = sigmoid(take(gates, (..., slice(n, 2 * n))))
    g = tanh(take(gates, (..., slice(2 * n, 3 * n))))
    o = sigmoid(take(gates, (..., slice(3 * n, 4 * n))))
    c = f * c + i * g
    return o * tanh(c), c


def lstm_sequence(inputs: Sequence[Tensor], h0: Tensor, c0: Tensor,
                  weights: LSTMWeights) -> tuple[Tensor, list[Tensor]]:
    """Run the recurrence; an empty sequence returns ``h0`` unchanged."""
    if inputs and len({t.shape[-1] for t in inputs}) != 1:
        raise ShapeError("all LSTM inputs must share one feature dimension")
    h, c = h0, c0
    all_h = []
    for x in inputs:
        h, c = lstm_step(x, h, c, weights)
        all_h.append(h)
    return h, all_h


def lstm_masked(inputs: Tensor, mask: np.ndarray, h0: Tensor, c0: Tensor,
                weights: LSTMWeights) -> Tensor:
    """Batched LSTM over [B, T, d] where ``mask`` [B, T] marks real steps.

    Real steps must form a prefix of each row; the state stops updating at
    the first padded step, so the result is each row's last real hidden state.
    """
    mask = np.asarray(mask, dtype=bool)
    h, c = h0, c0
    for t in range(inputs.shape[1]):
        m = mask[:, t]
        if not m.any():
            break
        h_new, c_new = lstm_step(take(inputs, (slice(None), t)), h, c, weights)
        if m.all():
            h, c = h_new, c_new
        else:
            keep = m[:, None].astype(inputs.data.dtype)
            h = h_new * keep + h * (1.0 - keep)
            c = c_new * keep + c * (1.0 - keep)
    return h


# ------------------------------------------------------------- param storage


class ParamStore:
    """Named parameters, iterated in lexicographic order.

    Frozen tensors (``requires_grad=False``) may live here too so they are
    checkpointed; the optimizer and gradient checks skip them.
    """

    def __init__(self):
        self._params: dict[str, Tensor] = {}

    def add(self, name: str, value, requires_grad: bool = True) -> Tensor:
        if name in self._params:
            raise KeyError(f"duplicate parameter {name!r}")
        t = Tensor(value, requires_grad=requires_grad)
        self._params[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def names(self) -> list[str]:
        return sorted(self._params)

    def items(self) -> list[tuple[str, Tensor]]:
        return [(n, self._params[n]) for n in self.names()]

    def trainable(self) -> list[tuple[str, Tensor]]:
        return [(n, t) for n, t in self.items() if t.requires_grad]

    def zero_grad(self) -> None:
        for _, t in self.items():
            t.grad = np.zeros_like(t.data) if t.requires_grad else None

    def state_dict(self) -> dict[str, np.ndarray]:
        return {n: t.data.copy() for n, t in self.items()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        missing = set(self._params) ^ set(state)
        if missing:
            raise KeyError(f"parameter sets differ: {sorted(missing)}")
        for n, t in self._params.items():
            if state[n].shape != t.shape:
                raise ShapeError(f"{n}: stored shape {state[n].shape} != {t.shape}")
            t.data = np.array(state[n], dtype=t.data.dtype)


# ------------------------------------------------------------------ backward


def _topo_order(root: Tensor) -> list[Tensor]:
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss: Tensor, store: ParamStore | None = None) -> None:
    """Fill ``.grad`` on every leaf reachable from the scalar ``loss``.

    Parameters of ``store`` are zeroed first, so unreachable ones end with a
    zero gradient. The graph is released afterwards.
    """
    if loss.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    if store is not None:
        store.zero_grad()
    if not loss.requires_grad:
        return
    order = _topo_order(loss)
    grads = {id(loss): np.ones(loss.shape, dtype=loss.data.dtype)}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            g = np.asarray(g, dtype=node.data.dtype)
            node.grad = g.copy() if node.grad is None else node.grad + g
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            pg = np.asarray(pg, dtype=parent.data.dtype)
            grads[key] = pg if key not in grads else grads[key] + pg
    for node in order:
        if node._backward is not None:
            node._parents, node._backward = (), None


def grad_check(f: Callable[[], Tensor], store: ParamStore, eps: float = 1e-3,
               rng: RngState | None = None, max_coords: int = 200,
               floor: float = 1e-6, names: Iterable[str] | None = None,
               dtype=np.float64) -> float:
    """Max relative error between analytic and central-difference gradients.

    Relative error is ``|a - n| / max(|a|, |n|, floor)``. At most
    ``max_coords`` coordinates are sampled per parameter. The closure is
    evaluated with parameters promoted to ``dtype`` (float64 by default) so
    rounding noise in the differences does not swamp the comparison.
    """
    report = grad_check_report(f, store, eps, rng, max_coords, floor, names, dtype)
    return max(report.values(), default=0.0)


def grad_check_report(f: Callable[[], Tensor], store: ParamStore, eps: float = 1e-3,
                      rng: RngState | None = None, max_coords: int = 200,
                      floor: float = 1e-6, names: Iterable[str] | None = None,
                      dtype=np.float64) -> dict[str, float]:
    """Per-parameter max relative error; see :func:`grad_check`."""
    rng = rng or RngState(0, "grad_check")
    saved = {name: t.data for name, t in store.items()}
    try:
        for name, t in store.items():
            t.data = saved[name].astype(dtype)
        with precision(dtype):
            return _grad_check(f, store, eps, rng, max_coords, floor, names)
    finally:
        for name, t in store.items():
            t.data = saved[name]
            if t.grad is not None:
                t.grad = t.grad.astype(saved[name].dtype)


def _grad_check(f, store, eps, rng, max_coords, floor, names):
    first, second = float(f().data.sum()), float(f().data.sum())
    if first != second:
        raise FlakinessError(f"closure is not deterministic: {first!r} != {second!r}")
    backward(f(), store)
    wanted = set(names) if names is not None else None
    report = {}
    for name, param in store.trainable():
        if wanted is not None and name not in wanted:
            continue
        analytic = param.grad.reshape(-1).astype(np.float64)
        flat = param.data.reshape(-1)
        if flat.size <= max_coords:
            coords = np.arange(flat.size)
        else:
            coords = np.sort(rng.choice(flat.size, max_coords, replace=False))
        worst = 0.0
        for i in coords:
            original = flat[i]
            flat[i] = original + eps
            hi = float(flat[i])
            up = float(f().data.astype(np.float64).sum())
            flat[i] = original - eps
            lo = float(flat[i])
            down = float(f().data.astype(np.float64).sum())
            flat[i] = original
            # divide by the step actually representable in the parameter dtype
            numeric = (up - down) / (hi - lo)
            a = analytic[i]
            worst = max(worst, abs(a - numeric) / max(abs(a), abs(numeric), floor))
        report[name] = worst
    return report
