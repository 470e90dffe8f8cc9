"""Small float64 numerical kernel: LSTM cell, dense layers, hinge loss,
a reverse-mode tape over exactly those ops, Adam, and a finite-difference
gradient oracle.

Forward functions are pure and work on plain numpy arrays. The ``t_*``
variants do the same computation on :class:`Node` values and record a
backward closure on the owning :class:`Tape`.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError, StateError

DTYPE = np.float64


def _vec(x, name):
    a = np.asarray(x, dtype=DTYPE)
    if a.ndim != 1:
        raise InvalidArgumentError(f"{name} must be a vector, got shape {a.shape}")
    return a


def _check_len(a, n, name):
    if a.shape[0] != n:
        raise InvalidArgumentError(f"{name} has length {a.shape[0]}, expected {n}")


def sigmoid(z):
    # tanh form cannot overflow for any finite z
    return 0.5 * (1.0 + np.tanh(0.5 * z))


@dataclass
class LstmCellParams:
    """LSTM weights with the four gates stacked row-wise in the order
    input, forget, output, candidate. ``W`` acts on ``[x; h_prev]``."""

    W: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        self.W = np.asarray(self.W, dtype=DTYPE)
        self.b = np.asarray(self.b, dtype=DTYPE)
        if self.W.ndim != 2 or self.W.shape[0] % 4 != 0:
            raise InvalidArgumentError(f"LSTM W must be (4*d_h, d_in+d_h), got {self.W.shape}")
        d_h = self.W.shape[0] // 4
        if self.W.shape[1] <= d_h:
            raise InvalidArgumentError(f"LSTM W has no input columns: {self.W.shape}")
        if self.b.shape != (4 * d_h,):
            raise InvalidArgumentError(f"LSTM b must have shape ({4 * d_h},), got {self.b.shape}")

    @property
    def d_h(self):
        return self.W.shape[0] // 4

    @property
    def d_in(self):
        return self.W.shape[1] - self.d_h

    def gate(self, name):
        k = "ifog".index(name)
        h = self.d_h
        return self.W[k * h:(k + 1) * h], self.b[k * h:(k + 1) * h]

    @classmethod
    def from_gates(cls, Wi, Wf, Wo, Wg, bi, bf, bo, bg):
        return cls(np.vstack([Wi, Wf, Wo, Wg]), np.concatenate([bi, bf, bo, bg]))


@dataclass
class TwoLayerParams:
    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray

    def __post_init__(self):
        self.W1 = np.asarray(self.W1, dtype=DTYPE)
        self.b1 = np.asarray(self.b1, dtype=DTYPE)
        self.W2 = np.asarray(self.W2, dtype=DTYPE)
        self.b2 = np.asarray(self.b2, dtype=DTYPE)
        if self.W1.ndim != 2:
            raise InvalidArgumentError(f"W1 must be a matrix, got shape {self.W1.shape}")
        hidden = self.W1.shape[0]
        if self.b1.shape != (hidden,):
            raise InvalidArgumentError(f"b1 must have shape ({hidden},), got {self.b1.shape}")
        if self.W2.shape != (1, hidden):
            raise InvalidArgumentError(f"W2 must have shape (1, {hidden}), got {self.W2.shape}")
        if self.b2.shape != (1,):
            raise InvalidArgumentError(f"b2 must have shape (1,), got {self.b2.shape}")


def linear_forward(W, b, x):
    W = np.asarray(W, dtype=DTYPE)
    b = _vec(b, "b")
    x = _vec(x, "x")
    if W.ndim != 2:
        raise InvalidArgumentError(f"W must be a matrix, got shape {W.shape}")
    _check_len(x, W.shape[1], "x")
    _check_len(b, W.shape[0], "b")
    return W @ x + b


def lstm_cell_forward(params, x, h_prev, c_prev):
    h, c, _ = _lstm_cell(params, x, h_prev, c_prev)
    return h, c


def _lstm_cell(params, x, h_prev, c_prev):
    x = _vec(x, "x")
    h_prev = _vec(h_prev, "h_prev")
    c_prev = _vec(c_prev, "c_prev")
    _check_len(x, params.d_in, "x")
    _check_len(h_prev, params.d_h, "h_prev")
    _check_len(c_prev, params.d_h, "c_prev")
    d = params.d_h
    xh = np.concatenate([x, h_prev])
    z = params.W @ xh + params.b
    i = sigmoid(z[:d])
    f = sigmoid(z[d:2 * d])
    o = sigmoid(z[2 * d:3 * d])
    g = np.tanh(z[3 * d:])
    c = f * c_prev + i * g
    tc = np.tanh(c)
    h = o * tc
    return h, c, (xh, c_prev, i, f, o, g, tc)


def two_layer_forward(params, x):
    hidden = np.tanh(linear_forward(params.W1, params.b1, x))
    return float(linear_forward(params.W2, params.b2, hidden)[0])


def margin_ranking_loss(s_pos, s_neg, margin=1.0):
    if margin < 0:
        raise InvalidArgumentError(f"margin must be >= 0, got {margin}")
    return max(0.0, float(s_neg) - float(s_pos) + float(margin))


def margin_ranking_grad(s_pos, s_neg, margin=1.0):
    """Subgradient (d/ds_pos, d/ds_neg); zero at the kink."""
    if margin < 0:
        raise InvalidArgumentError(f"margin must be >= 0, got {margin}")
    if float(s_neg) - float(s_pos) + float(margin) > 0.0:
        return -1.0, 1.0
    return 0.0, 0.0


# ---------------------------------------------------------------------------
# reverse mode


class Node:
    __slots__ = ("value", "grad", "name")

    def __init__(self, value, name=None):
        self.value = value
        self.grad = None
        self.name = name

    def accumulate(self, g):
        if self.grad is None:
            self.grad = np.zeros_like(self.value)
        self.grad += g


class Tape:
    """Records backward closures of ``t_*`` ops in execution order."""

    def __init__(self):
        self._ops = []
        self.params = {}

    def param(self, name, value):
        node = Node(np.asarray(value, dtype=DTYPE), name)
        self.params[name] = node
        return node

    def constant(self, value):
        return Node(np.asarray(value, dtype=DTYPE))

    def record(self, fn):
        self._ops.append(fn)

    def __len__(self):
        return len(self._ops)


class GradStore:
    """Gradients keyed by parameter name, shapes tied to the parameters."""

    def __init__(self, params):
        self.grads = {k: np.zeros_like(np.asarray(v, dtype=DTYPE)) for k, v in params.items()}

    def zero(self):
        for g in self.grads.values():
            g.fill(0.0)

    def __getitem__(self, name):
        return self.grads[name]

    def __iter__(self):
        return iter(self.grads)

    def items(self):
        return self.grads.items()


def backward(tape, loss, grads):
    """Fill ``grads`` with d(loss)/d(param) for every parameter on ``tape``."""
    if len(tape) == 0 or loss is None:
        raise StateError("backward called before any forward pass was recorded")
    for node in tape.params.values():
        node.grad = None
    grads.zero()
    loss.accumulate(np.ones_like(loss.value))
    for fn in reversed(tape._ops):
        fn()
    for name, node in tape.params.items():
        if name not in grads.grads:
            raise InvalidArgumentError(f"gradient store has no slot for parameter {name!r}")
        if node.grad is not None:
            if node.grad.shape != grads[name].shape:
                raise InvalidArgumentError(f"gradient shape mismatch for {name!r}")
            grads[name][...] = node.grad
    return grads


def t_linear(tape, W, b, x):
    out = Node(linear_forward(W.value, b.value, x.value))

    def back():
        if out.grad is None:
            return
        W.accumulate(np.outer(out.grad, x.value))
        b.accumulate(out.grad)
        x.accumulate(W.value.T @ out.grad)

    tape.record(back)
    return out


def t_tanh(tape, x):
    y = np.tanh(x.value)
    out = Node(y)

    def back():
        if out.grad is not None:
            x.accumulate(out.grad * (1.0 - y * y))

    tape.record(back)
    return out


def t_concat(tape, parts):
    out = Node(np.concatenate([p.value for p in parts]))
    sizes = [p.value.shape[0] for p in parts]

    def back():
        if out.grad is None:
            return
        start = 0
        for p, n in zip(parts, sizes):
            p.accumulate(out.grad[start:start + n])
            start += n

    tape.record(back)
    return out


def t_mean_rows(tape, table, rows):
    """Mean of ``table[rows]``; repeated rows count with multiplicity."""
    rows = np.asarray(rows, dtype=np.intp)
    if rows.size == 0:
        raise InvalidArgumentError("need at least one row to average")
    out = Node(table.value[rows].mean(axis=0))

    def back():
        if out.grad is None:
            return
        # scatter straight into the table gradient; a dense temporary per
        # phrase dominates the step cost for large tables
        if table.grad is None:
            table.grad = np.zeros_like(table.value)
        np.add.at(table.grad, rows, out.grad / rows.size)

    tape.record(back)
    return out


def t_lstm_cell(tape, W, b, x, h_prev, c_prev):
    params = LstmCellParams(W.value, b.value)
    h, c, cache = _lstm_cell(params, x.value, h_prev.value, c_prev.value)
    h_node, c_node = Node(h), Node(c)
    d = params.d_h
    d_in = params.d_in

    def back():
        xh, cp, i, f, o, g, tc = cache
        dh = h_node.grad if h_node.grad is not None else np.zeros(d)
        dc = c_node.grad.copy() if c_node.grad is not None else np.zeros(d)
        dc += dh * o * (1.0 - tc * tc)
        dz = np.concatenate([
            dc * g * i * (1.0 - i),
            dc * cp * f * (1.0 - f),
            dh * tc * o * (1.0 - o),
            dc * i * (1.0 - g * g),
        ])
        W.accumulate(np.outer(dz, xh))
        b.accumulate(dz)
        dxh = W.value.T @ dz
        x.accumulate(dxh[:d_in])
        h_prev.accumulate(dxh[d_in:])
        c_prev.accumulate(dc * f)

    tape.record(back)
    return h_node, c_node


def t_two_layer(tape, W1, b1, W2, b2, x):
    hidden = t_tanh(tape, t_linear(tape, W1, b1, x))
    return t_linear(tape, W2, b2, hidden)


def t_margin_loss(tape, s_pos, s_neg, margin):
    value = margin_ranking_loss(s_pos.value[0], s_neg.value[0], margin)
    gp, gn = margin_ranking_grad(s_pos.value[0], s_neg.value[0], margin)
    out = Node(np.array([value]))

    def back():
        if out.grad is None:
            return
        s_pos.accumulate(gp * out.grad)
        s_neg.accumulate(gn * out.grad)

    tape.record(back)
    return out


# ---------------------------------------------------------------------------


def finite_diff_grad(f, p, h=1e-6):
    """Central differences of scalar ``f`` at array ``p``.

    ``p`` is perturbed in place and restored, so ``f`` may close over it.
    """
    if h <= 0:
        raise InvalidArgumentError(f"step must be positive, got {h}")
    p = np.asarray(p)
    grad = np.zeros(p.shape, dtype=DTYPE)
    flat = p.reshape(-1)
    gflat = grad.reshape(-1)
    for k in range(flat.size):
        orig = flat[k]
        flat[k] = orig + h
        fp = f(p)
        flat[k] = orig - h
        fm = f(p)
        flat[k] = orig
        gflat[k] = (fp - fm) / (2.0 * h)
    return grad


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(state, params, grads):
    """One bias-corrected Adam update. Returns a new parameter dict;
    moments and the step counter in ``state`` are updated in place."""
    for name in params:
        g = grads[name]
        if np.shape(g) != np.shape(params[name]):
            raise InvalidArgumentError(
                f"gradient for {name!r} has shape {np.shape(g)}, parameter has {np.shape(params[name])}")
    state.step += 1
    bc1 = 1.0 - state.beta1 ** state.step
    bc2 = 1.0 - state.beta2 ** state.step
    new = {}
    for name, p in params.items():
        g = np.asarray(grads[name], dtype=DTYPE)
        if name not in state.m:
            state.m[name] = np.zeros_like(p, dtype=DTYPE)
            state.v[name] = np.zeros_like(p, dtype=DTYPE)
        m = state.m[name]
        v = state.v[name]
        buf = np.empty_like(m)
        m *= state.beta1
        np.multiply(g, 1.0 - state.beta1, out=buf)
        m += buf
        v *= state.beta2
        np.multiply(g, g, out=buf)
        buf *= 1.0 - state.beta2
        v += buf
        # buf <- lr * m_hat / (sqrt(v_hat) + eps)
        np.multiply(v, 1.0 / bc2, out=buf)
        np.sqrt(buf, out=buf)
        buf += state.eps
        np.divide(m, buf, out=buf)
        buf *= state.lr / bc1
        new[name] = p - buf
    return new, state
