"""Independent reference evaluations in plain ``math``; nothing here calls
the package's numerical code."""

import math


def sig(z):
    return 1.0 / (1.0 + math.exp(-z))


def scalar_lstm(x, h, c, w):
    """d_in = d_h = 1. ``w`` maps gate -> (w_x, w_h, bias)."""
    def pre(k):
        wx, wh, b = w[k]
        return wx * x + wh * h + b

    i = sig(pre("i"))
    f = sig(pre("f"))
    o = sig(pre("o"))
    g = math.tanh(pre("g"))
    c_new = f * c + i * g
    return o * math.tanh(c_new), c_new


def lstm_list(W, b, x, h, c):
    """Straight-line LSTM on python lists; W rows stacked i, f, o, g."""
    d = len(h)
    xh = list(x) + list(h)
    z = [sum(W[r][k] * xh[k] for k in range(len(xh))) + b[r] for r in range(4 * d)]
    i = [sig(v) for v in z[:d]]
    f = [sig(v) for v in z[d:2 * d]]
    o = [sig(v) for v in z[2 * d:3 * d]]
    g = [math.tanh(v) for v in z[3 * d:]]
    c_new = [f[k] * c[k] + i[k] * g[k] for k in range(d)]
    h_new = [o[k] * math.tanh(c_new[k]) for k in range(d)]
    return h_new, c_new


def two_layer_list(W1, b1, W2, b2, x):
    hidden = [math.tanh(sum(W1[r][k] * x[k] for k in range(len(x))) + b1[r]) for r in range(len(W1))]
    return sum(W2[0][r] * hidden[r] for r in range(len(hidden))) + b2[0]


def adam_trace(grads, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8, p=0.0):
    """Scalar Adam; returns the parameter after each step."""
    m = v = 0.0
    out = []
    for t, g in enumerate(grads, 1):
        m = beta1 * m + (1 - beta1) * g
        v = beta2 * v + (1 - beta2) * g * g
        m_hat = m / (1 - beta1 ** t)
        v_hat = v / (1 - beta2 ** t)
        p = p - lr * m_hat / (math.sqrt(v_hat) + eps)
        out.append(p)
    return out
