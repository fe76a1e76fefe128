"""Minimal reverse-mode autodiff over numpy float64 arrays.

Every op does a plain numpy forward pass and, when a tape is active and some
input requires gradients, records a backward closure on the tape. Calling
``Tape.backward(loss)`` walks the recorded nodes in reverse creation order,
which is a valid reverse topological order because operands always exist
before their results.
"""

from __future__ import annotations

import logging

import numpy as np

log = logging.getLogger(__name__)

COSINE_NORM_EPS = 1e-12


class Tensor:
    """A float64 ndarray plus an accumulated gradient.

    Data is treated as immutable once written; the optimizer, which owns the
    parameters exclusively during training, is the one sanctioned mutator.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # Convenience arithmetic used in loss assembly.
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, float(other))
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)


_ACTIVE_TAPE: "Tape | None" = None


class Tape:
    """Ordered record of op applications for one forward pass."""

    def __init__(self):
        self.nodes: list[Tensor] = []

    def __enter__(self):
        global _ACTIVE_TAPE
        if _ACTIVE_TAPE is not None:
            raise RuntimeError("nested tapes are not supported")
        _ACTIVE_TAPE = self
        return self

    def __exit__(self, *exc):
        global _ACTIVE_TAPE
        _ACTIVE_TAPE = None
        return False

    def backward(self, loss: Tensor) -> None:
        """Accumulate d(loss)/d(x) into ``.grad`` of every reachable tensor."""
        if loss.grad is None:
            loss.grad = np.ones_like(loss.data)
        for node in reversed(self.nodes):
            if node.grad is None or node._backward is None:
                continue
            node._backward(node.grad)


def _as_tensor(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(x)


def _accum(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.array(g, dtype=np.float64, copy=True)
    else:
        t.grad += g


def _record(out: Tensor, parents: tuple[Tensor, ...], backward) -> Tensor:
    tape = _ACTIVE_TAPE
    if tape is not None and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward
        tape.nodes.append(out)
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to an operand's shape."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g.reshape(shape)


# ---------------------------------------------------------------------------
# elementwise / arithmetic


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = Tensor(a.data + b.data)

    def backward(g):
        _accum(a, _unbroadcast(g, a.data.shape))
        _accum(b, _unbroadcast(g, b.data.shape))

    return _record(out, (a, b), backward)


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = Tensor(a.data - b.data)

    def backward(g):
        _accum(a, _unbroadcast(g, a.data.shape))
        _accum(b, _unbroadcast(-g, b.data.shape))

    return _record(out, (a, b), backward)


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = Tensor(a.data * b.data)

    def backward(g):
        _accum(a, _unbroadcast(g * b.data, a.data.shape))
        _accum(b, _unbroadcast(g * a.data, b.data.shape))

    return _record(out, (a, b), backward)


def neg(x) -> Tensor:
    x = _as_tensor(x)
    out = Tensor(-x.data)

    def backward(g):
        _accum(x, -g)

    return _record(out, (x,), backward)


def scale(x, c: float) -> Tensor:
    x = _as_tensor(x)
    c = float(c)
    out = Tensor(x.data * c)

    def backward(g):
        _accum(x, g * c)

    return _record(out, (x,), backward)


def matmul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim not in (1, 2):
        raise ValueError(f"matmul expects 2-d @ 1/2-d, got {a.data.shape} @ {b.data.shape}")
    if a.data.shape[1] != b.data.shape[0]:
        raise ValueError(f"matmul shape mismatch: {a.data.shape} @ {b.data.shape}")
    out = Tensor(a.data @ b.data)

    def backward(g):
        if b.data.ndim == 1:
            _accum(a, np.outer(g, b.data))
            _accum(b, a.data.T @ g)
        else:
            _accum(a, g @ b.data.T)
            _accum(b, a.data.T @ g)

    return _record(out, (a, b), backward)


def sigmoid(x) -> Tensor:
    """Elementwise logistic function; saturates instead of overflowing."""
    x = _as_tensor(x)
    out = Tensor(_sigmoid_np(x.data))

    def backward(g):
        y = out.data
        _accum(x, g * y * (1.0 - y))

    return _record(out, (x,), backward)


def _sigmoid_np(x: np.ndarray) -> np.ndarray:
    pos = x >= 0
    z = np.empty_like(x)
    z[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    z[~pos] = ex / (1.0 + ex)
    return z


def softplus(x) -> Tensor:
    """log(1 + exp(x)), computed stably. Gradient is sigmoid(x)."""
    x = _as_tensor(x)
    out = Tensor(np.maximum(x.data, 0.0) + np.log1p(np.exp(-np.abs(x.data))))

    def backward(g):
        _accum(x, g * _sigmoid_np(x.data))

    return _record(out, (x,), backward)


def relu(x) -> Tensor:
    x = _as_tensor(x)
    out = Tensor(np.maximum(x.data, 0.0))

    def backward(g):
        _accum(x, g * (x.data > 0.0))

    return _record(out, (x,), backward)


# ---------------------------------------------------------------------------
# reductions


def tsum(x) -> Tensor:
    x = _as_tensor(x)
    out = Tensor(x.data.sum())

    def backward(g):
        _accum(x, np.full_like(x.data, float(g)))

    return _record(out, (x,), backward)


def tmean(x) -> Tensor:
    x = _as_tensor(x)
    n = x.data.size
    out = Tensor(x.data.mean())

    def backward(g):
        _accum(x, np.full_like(x.data, float(g) / n))

    return _record(out, (x,), backward)


# ---------------------------------------------------------------------------
# shape plumbing


def reshape(x, shape) -> Tensor:
    x = _as_tensor(x)
    out = Tensor(x.data.reshape(shape))

    def backward(g):
        _accum(x, g.reshape(x.data.shape))

    return _record(out, (x,), backward)


def stack_cols(cols: list[Tensor]) -> Tensor:
    """Stack 1-d tensors of equal length into the columns of a matrix."""
    cols = [_as_tensor(c) for c in cols]
    out = Tensor(np.stack([c.data for c in cols], axis=1))

    def backward(g):
        for j, c in enumerate(cols):
            _accum(c, g[:, j])

    return _record(out, tuple(cols), backward)


def take_col(x, j: int) -> Tensor:
    x = _as_tensor(x)
    out = Tensor(x.data[:, j].copy())

    def backward(g):
        buf = np.zeros_like(x.data)
        buf[:, j] = g
        _accum(x, buf)

    return _record(out, (x,), backward)


def gather_rows(x, idx: np.ndarray) -> Tensor:
    """Row lookup x[idx]; backward scatter-adds into the source rows."""
    x = _as_tensor(x)
    idx = np.asarray(idx, dtype=np.int64)
    out = Tensor(x.data[idx])

    def backward(g):
        buf = np.zeros_like(x.data)
        np.add.at(buf, idx, g)
        _accum(x, buf)

    return _record(out, (x,), backward)


def gather_elements(x, row_idx: np.ndarray) -> Tensor:
    """Per-column row selection: out[r, j] = x[row_idx[r, j], j].

    row_idx is a constant (r, d) int array; the backward pass scatter-adds
    each output cell's gradient into the selected source cell. Used for
    coordinatewise max pooling where the argmax rows are picked outside
    the tape.
    """
    x = _as_tensor(x)
    row_idx = np.asarray(row_idx, dtype=np.int64)
    if x.data.ndim != 2 or row_idx.ndim != 2 or row_idx.shape[1] != x.data.shape[1]:
        raise ValueError(f"bad shapes for gather_elements: {x.shape} vs {row_idx.shape}")
    cols = np.broadcast_to(np.arange(x.data.shape[1]), row_idx.shape)
    out = Tensor(x.data[row_idx, cols])

    def backward(g):
        buf = np.zeros_like(x.data)
        np.add.at(buf, (row_idx, cols), g)
        _accum(x, buf)

    return _record(out, (x,), backward)


# ---------------------------------------------------------------------------
# rowwise geometry


def rowwise_dot(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.shape != b.data.shape:
        raise ValueError(f"rowwise_dot shape mismatch: {a.data.shape} vs {b.data.shape}")
    out = Tensor((a.data * b.data).sum(axis=1))

    def backward(g):
        _accum(a, g[:, None] * b.data)
        _accum(b, g[:, None] * a.data)

    return _record(out, (a, b), backward)


def cosine_rows(a, b) -> Tensor:
    """Rowwise cosine similarity in [-1, 1].

    Rows where either norm is below COSINE_NORM_EPS yield similarity 0 and
    pass no gradient to either side.
    """
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.shape != b.data.shape:
        raise ValueError(f"cosine_rows shape mismatch: {a.data.shape} vs {b.data.shape}")
    na = np.linalg.norm(a.data, axis=1)
    nb = np.linalg.norm(b.data, axis=1)
    ok = (na >= COSINE_NORM_EPS) & (nb >= COSINE_NORM_EPS)
    if not ok.all():
        log.debug("cosine_rows: %d degenerate row(s) clamped to 0", int((~ok).sum()))
    denom = np.where(ok, na * nb, 1.0)
    cos = np.where(ok, (a.data * b.data).sum(axis=1) / denom, 0.0)
    out = Tensor(cos)

    def backward(g):
        gm = np.where(ok, g, 0.0)[:, None]
        na_ = np.where(ok, na, 1.0)[:, None]
        nb_ = np.where(ok, nb, 1.0)[:, None]
        c = cos[:, None]
        _accum(a, gm * (b.data / (na_ * nb_) - c * a.data / (na_ * na_)))
        _accum(b, gm * (a.data / (na_ * nb_) - c * b.data / (nb_ * nb_)))

    return _record(out, (a, b), backward)


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    """Plain-number cosine of two vectors; 0.0 when either is near zero."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"cosine_similarity shape mismatch: {a.shape} vs {b.shape}")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na < COSINE_NORM_EPS or nb < COSINE_NORM_EPS:
        log.debug("cosine_similarity: degenerate input, returning 0")
        return 0.0
    return float(a @ b / (na * nb))


# ---------------------------------------------------------------------------
# softmax family


def softmax_rows(x, tau: float = 1.0) -> Tensor:
    """Row softmax of x / tau, with a row-max shift for stability."""
    if tau <= 0:
        raise ValueError(f"temperature must be positive, got {tau}")
    x = _as_tensor(x)
    z = x.data / tau
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=1, keepdims=True)
    out = Tensor(p)

    def backward(g):
        inner = (p * g).sum(axis=1, keepdims=True)
        _accum(x, p * (g - inner) / tau)

    return _record(out, (x,), backward)


def segment_softmax(scores, segment_ids: np.ndarray, n_segments: int) -> Tensor:
    """Softmax of a 1-d score vector within each segment.

    Empty segments are fine (they simply contribute no entries).
    """
    scores = _as_tensor(scores)
    seg = np.asarray(segment_ids, dtype=np.int64)
    mx = np.full(n_segments, -np.inf)
    np.maximum.at(mx, seg, scores.data)
    e = np.exp(scores.data - mx[seg])
    den = np.zeros(n_segments)
    np.add.at(den, seg, e)
    p = e / den[seg]
    out = Tensor(p)

    def backward(g):
        dot = np.zeros(n_segments)
        np.add.at(dot, seg, p * g)
        _accum(scores, p * (g - dot[seg]))

    return _record(out, (scores,), backward)


def segment_sum(x, segment_ids: np.ndarray, n_segments: int) -> Tensor:
    """Sum rows of x into n_segments buckets given per-row segment ids."""
    x = _as_tensor(x)
    seg = np.asarray(segment_ids, dtype=np.int64)
    shape = (n_segments,) + x.data.shape[1:]
    y = np.zeros(shape)
    np.add.at(y, seg, x.data)
    out = Tensor(y)

    def backward(g):
        _accum(x, g[seg])

    return _record(out, (x,), backward)


# ---------------------------------------------------------------------------
# sparse


def spmm(csr, x, csr_t=None) -> Tensor:
    """Sparse (CSR) times dense; the sparse factor is a constant.

    Backward scatters through the sparsity pattern via the transpose, which
    the caller can pass precomputed to avoid rebuilding it every step.
    """
    x = _as_tensor(x)
    if csr.shape[1] != x.data.shape[0]:
        raise ValueError(f"spmm shape mismatch: {csr.shape} @ {x.data.shape}")
    out = Tensor(csr @ x.data)
    at = csr_t

    def backward(g):
        nonlocal at
        if at is None:
            at = csr.T.tocsr()
        _accum(x, at @ g)

    return _record(out, (x,), backward)


def straight_through(soft: Tensor, hard: np.ndarray) -> Tensor:
    """Forward the hard values, route gradients to the soft ones unchanged."""
    soft = _as_tensor(soft)
    if soft.data.shape != hard.shape:
        raise ValueError("straight_through shape mismatch")
    out = Tensor(np.asarray(hard, dtype=np.float64))

    def backward(g):
        _accum(soft, g)

    return _record(out, (soft,), backward)


# ---------------------------------------------------------------------------
# gradient checking


def finite_difference_check(loss_fn, params: list[Tensor], h: float = 1e-5,
                            max_coords: int = 16, rng=None) -> float:
    """Max relative error between tape gradients and central differences.

    ``loss_fn`` must build the loss from scratch on each call (deterministic
    under any frozen noise) and return a scalar Tensor when run under a tape.
    Checks up to ``max_coords`` coordinates per parameter, sampled with
    ``rng`` when given, else a fixed spread.
    """
    for p in params:
        p.grad = None
    with Tape() as tape:
        loss = loss_fn()
        tape.backward(loss)
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in params]

    worst = 0.0
    for p, ga in zip(params, analytic):
        n = p.data.size
        if n <= max_coords:
            coords = np.arange(n)
        elif rng is not None:
            coords = rng.choice(n, size=max_coords, replace=False)
        else:
            coords = np.linspace(0, n - 1, max_coords).astype(np.int64)
        for c in coords:
            ix = np.unravel_index(c, p.data.shape)
            orig = p.data[ix]
            p.data[ix] = orig + h
            up = float(loss_fn().data)
            p.data[ix] = orig - h
            down = float(loss_fn().data)
            p.data[ix] = orig
            fd = (up - down) / (2.0 * h)
            an = float(ga[ix])
            err = abs(an - fd) / (abs(an) + abs(fd) + 1e-12)
            worst = max(worst, err)
    return worst
