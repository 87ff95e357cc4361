"""Minimal dense-matrix reverse-mode gradient engine, Adam, and an FD checker.

Only the fixed primitive set the models need is provided. Every primitive
takes an optional Tape as its first argument; with a tape the backward
contribution is recorded, with None it is a plain forward evaluation. All
math is float64. Reductions keep a fixed summation order, so forward and
backward are bitwise deterministic for fixed inputs.
"""

from dataclasses import dataclass, field

import numpy as np

from . import kernels


class Tape:
    """Record of primitive ops; backward() replays them in reverse order."""

    def __init__(self):
        self._ops = []

    def record(self, fn):
        self._ops.append(fn)

    def backward(self, out):
        """Seed d(out)/d(out) = 1 and sweep the tape in reverse."""
        out.grad = out.grad + np.ones_like(out.value)
        for fn in reversed(self._ops):
            fn()


class Var:
    """Value plus gradient accumulator."""

    __slots__ = ("value", "grad")

    def __init__(self, value):
        self.value = np.ascontiguousarray(value, dtype=np.float64)
        if not np.isfinite(self.value).all():
            raise ValueError("non-finite input")
        self.grad = np.zeros_like(self.value)


def _record(tape, fn):
    if tape is not None:
        tape.record(fn)


def matmul(tape, a: Var, b: Var) -> Var:
    if a.value.ndim != 2 or b.value.ndim != 2 or a.value.shape[1] != b.value.shape[0]:
        raise ValueError(f"matmul shape mismatch: {a.value.shape} x {b.value.shape}")
    out = Var(a.value @ b.value)

    def backward():
        a.grad += out.grad @ b.value.T
        b.grad += a.value.T @ out.grad

    _record(tape, backward)
    return out


def add_bias(tape, a: Var, b: Var) -> Var:
    """Add a length-d bias row to every row of a (n x d)."""
    bias = b.value.reshape(-1)
    if a.value.ndim != 2 or bias.shape[0] != a.value.shape[1]:
        raise ValueError(f"add_bias shape mismatch: {a.value.shape} + {b.value.shape}")
    out = Var(a.value + bias[None, :])

    def backward():
        a.grad += out.grad
        b.grad += out.grad.sum(axis=0).reshape(b.value.shape)

    _record(tape, backward)
    return out


def relu(tape, a: Var) -> Var:
    mask = a.value > 0  # gradient at exactly 0 is 0
    out = Var(np.where(mask, a.value, 0.0))

    def backward():
        a.grad += np.where(mask, out.grad, 0.0)

    _record(tape, backward)
    return out


def row_scale(tape, a: Var, s) -> Var:
    """Scale row i of a by constant s[i]."""
    s = np.asarray(s, dtype=np.float64).reshape(-1)
    if a.value.shape[0] != s.shape[0]:
        raise ValueError(f"row_scale shape mismatch: {a.value.shape} rows vs {s.shape[0]} scales")
    out = Var(a.value * s[:, None])

    def backward():
        a.grad += out.grad * s[:, None]

    _record(tape, backward)
    return out


def sparse_neighbor_aggregate(tape, a: Var, indptr, indices, weights) -> Var:
    """out[i] = sum_k weights[k] * a[indices[k]] over row i's CSR slice."""
    indptr, indices, weights = kernels.as_csr(indptr, indices, weights)
    if indices.size and indices.max() >= a.value.shape[0]:
        raise ValueError("neighbor index out of range")
    num_in = a.value.shape[0]
    out = Var(kernels.aggregate_rows(a.value, indptr, indices, weights))

    def backward():
        a.grad += kernels.scatter_rows(out.grad, indptr, indices, weights, num_in)

    _record(tape, backward)
    return out


def concat_rows(tape, a: Var, b: Var) -> Var:
    """Concatenate matching rows side by side: (n x p), (n x q) -> (n x p+q)."""
    if a.value.ndim != 2 or b.value.ndim != 2 or a.value.shape[0] != b.value.shape[0]:
        raise ValueError(f"concat_rows shape mismatch: {a.value.shape} | {b.value.shape}")
    p = a.value.shape[1]
    out = Var(np.concatenate([a.value, b.value], axis=1))

    def backward():
        a.grad += out.grad[:, :p]
        b.grad += out.grad[:, p:]

    _record(tape, backward)
    return out


def add(tape, a: Var, b: Var) -> Var:
    if a.value.shape != b.value.shape:
        raise ValueError(f"add shape mismatch: {a.value.shape} + {b.value.shape}")
    out = Var(a.value + b.value)

    def backward():
        a.grad += out.grad
        b.grad += out.grad

    _record(tape, backward)
    return out


def scale(tape, a: Var, alpha: float) -> Var:
    alpha = float(alpha)
    out = Var(a.value * alpha)

    def backward():
        a.grad += out.grad * alpha

    _record(tape, backward)
    return out


def softmax_cross_entropy(tape, logits: Var, labels) -> Var:
    """Mean cross entropy of row-softmax against integer labels."""
    labels = np.asarray(labels, dtype=np.int64)
    if logits.value.ndim != 2 or labels.shape != (logits.value.shape[0],):
        raise ValueError("softmax_cross_entropy shape mismatch")
    if labels.size and (labels.min() < 0 or labels.max() >= logits.value.shape[1]):
        raise ValueError("label out of range")
    n = logits.value.shape[0]
    z = logits.value - logits.value.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1))
    losses = lse - z[np.arange(n), labels]
    out = Var(losses.sum() / n)

    def backward():
        probs = np.exp(z - lse[:, None])
        probs[np.arange(n), labels] -= 1.0
        logits.grad += probs * (out.grad / n)

    _record(tape, backward)
    return out


def softplus(x):
    return np.log1p(np.exp(-np.abs(x))) + np.maximum(x, 0.0)


def sigmoid(x):
    """Overflow-safe logistic function."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def bernoulli_log_likelihood(tape, logits: Var, chosen) -> Var:
    """Sum of log sigmoid(z_i) over chosen entries plus log(1 - sigmoid(z_i))
    over the rest. Computed from logits via softplus so saturated scores stay
    finite."""
    z = logits.value.reshape(-1)
    chosen = np.asarray(chosen, dtype=bool).reshape(-1)
    if chosen.shape != z.shape:
        raise ValueError("bernoulli_log_likelihood mask shape mismatch")
    terms = np.where(chosen, -softplus(-z), -softplus(z))
    out = Var(terms.sum())

    def backward():
        d = (chosen.astype(np.float64) - sigmoid(z)) * out.grad
        logits.grad += d.reshape(logits.value.shape)

    _record(tape, backward)
    return out


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    t: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)


def init_adam(params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8, weight_decay=0.0):
    return AdamState(
        lr=lr,
        beta1=beta1,
        beta2=beta2,
        eps=eps,
        weight_decay=weight_decay,
        m=[np.zeros_like(p) for p in params],
        v=[np.zeros_like(p) for p in params],
    )


def adam_step(params, grads, state: AdamState):
    """Standard Adam with bias correction; updates params in place."""
    if len(params) != len(state.m) or len(params) != len(grads):
        raise ValueError("adam_step parameter count mismatch")
    state.t += 1
    c1 = 1.0 - state.beta1**state.t
    c2 = 1.0 - state.beta2**state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape:
            raise ValueError(f"adam_step shape mismatch: {p.shape} vs {g.shape}")
        if state.weight_decay:
            g = g + state.weight_decay * p
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params, state


def finite_difference_check(loss_fn, params, h=1e-6):
    """Compare loss_fn's tape gradient against central differences.

    loss_fn maps the parameter list to (scalar loss, gradient list) and must
    be pure. Returns the max over coordinates of |a-b| / max(1e-12, |a|+|b|).
    """
    loss, grads = loss_fn(params)
    if not np.isfinite(loss):
        raise ValueError("non-finite loss")
    worst = 0.0
    for p, g in zip(params, grads):
        if not p.flags["C_CONTIGUOUS"]:
            raise ValueError("params must be C-contiguous for in-place perturbation")
        flat_p = p.reshape(-1)
        flat_g = g.reshape(-1)
        for i in range(flat_p.size):
            keep = flat_p[i]
            flat_p[i] = keep + h
            up, _ = loss_fn(params)
            flat_p[i] = keep - h
            down, _ = loss_fn(params)
            flat_p[i] = keep
            numeric = (up - down) / (2.0 * h)
            analytic = flat_g[i]
            err = abs(analytic - numeric) / max(1e-12, abs(analytic) + abs(numeric))
            worst = max(worst, err)
    return worst
