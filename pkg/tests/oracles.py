"""Straight-line reference transcriptions used as test oracles.

These use plain Python loops and ``math`` so they share no code with the
vectorized implementations under test.
"""

import math

import numpy as np


def sigmoid(z):
    return 1.0 / (1.0 + math.exp(-z))


def lstm_cell(p, h, c, w, u, b):
    """One step for a single vector; ``w, u, b`` are dicts keyed by gate letter."""
    hidden = len(h)

    def pre(g, r):
        s = b[g][r]
        for j in range(len(p)):
            s += w[g][r][j] * p[j]
        for j in range(hidden):
            s += u[g][r][j] * h[j]
        return s

    h_new, c_new = [], []
    for r in range(hidden):
        f = sigmoid(pre("f", r))
        i = sigmoid(pre("i", r))
        cand = math.tanh(pre("c", r))
        o = sigmoid(pre("o", r))
        cr = f * c[r] + i * cand
        c_new.append(cr)
        h_new.append(o * math.tanh(cr))
    return np.array(h_new), np.array(c_new)


def lstm_sequence(x, w, u, b, reverse=False):
    hidden = len(b["f"])
    h, c = [0.0] * hidden, [0.0] * hidden
    out = [None] * len(x)
    order = range(len(x) - 1, -1, -1) if reverse else range(len(x))
    for t in order:
        h, c = lstm_cell(x[t], h, c, w, u, b)
        out[t] = h
    return np.array(out)


def attention(q, k, v, mask=None):
    """Softmax(Q K^T / sqrt(d_k)) V for one sequence, masked logits set to -1e9."""
    tq, dk = len(q), len(q[0])
    out = []
    for i in range(tq):
        logits = []
        for j in range(len(k)):
            s = 0.0
            for d in range(dk):
                s += q[i][d] * k[j][d]
            s /= math.sqrt(dk)
            if mask is not None and not mask[i][j]:
                s = -1e9
            logits.append(s)
        top = max(logits)
        e = [math.exp(s - top) for s in logits]
        z = sum(e)
        row = [0.0] * len(v[0])
        for j, ej in enumerate(e):
            for d in range(len(v[0])):
                row[d] += ej / z * v[j][d]
        out.append(row)
    return np.array(out)


def multi_head(x_q, x_kv, w_q, w_k, w_v, w_out, heads, mask=None):
    dk = w_q.shape[1] // heads
    parts = []
    for i in range(heads):
        cols = slice(i * dk, (i + 1) * dk)
        parts.append(attention(x_q @ w_q[:, cols], x_kv @ w_k[:, cols], x_kv @ w_v[:, cols], mask))
    return np.concatenate(parts, axis=1) @ w_out


def mse_l2(pred, target, weights, eta):
    flat_p, flat_t = np.ravel(pred), np.ravel(target)
    sq = 0.0
    for a, b in zip(flat_p, flat_t):
        sq += (a - b) ** 2
    penalty = 0.0
    for w in weights:
        for v in np.ravel(w):
            penalty += v * v
    return sq / len(flat_p) + eta / 2.0 * penalty


def sgd(w, g, lr):
    return [wi - lr * gi for wi, gi in zip(np.ravel(w), np.ravel(g))]


def spearman(a, b):
    def ranks(x):
        out = []
        for v in x:
            below = sum(1 for y in x if y < v)
            ties = sum(1 for y in x if y == v)
            out.append(below + (ties + 1) / 2.0)
        return out

    ra, rb = ranks(list(a)), ranks(list(b))
    m = len(ra)
    return 1.0 - 6.0 * sum((x - y) ** 2 for x, y in zip(ra, rb)) / (m * (m * m - 1))


def cell_dicts(params):
    """Split an ``LstmCellParams`` into the gate dicts used above."""
    w = {g: getattr(params, f"w_{g}").data.tolist() for g in "fico"}
    u = {g: getattr(params, f"u_{g}").data.tolist() for g in "fico"}
    b = {g: getattr(params, f"b_{g}").data.tolist() for g in "fico"}
    return w, u, b
