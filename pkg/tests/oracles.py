"""Independent reference implementations used by the tests.

Everything here is written as plain loops over nodes, edges or entries and
shares no code with the package under test.
"""

from __future__ import annotations

import math
from fractions import Fraction

import numpy as np


def naive_matmul(a, b):
    a, b = np.asarray(a, float), np.asarray(b, float)
    m, k = a.shape
    k2, n = b.shape
    assert k == k2
    out = np.zeros((m, n))
    for i in range(m):
        for j in range(n):
            s = 0.0
            for t in range(k):
                s += a[i, t] * b[t, j]
            out[i, j] = s
    return out


def neighbour_lists(num_nodes, src, dst):
    """In-neighbours of every node, one entry per stored arc."""
    nbrs = [[] for _ in range(num_nodes)]
    for u, v in zip(src, dst):
        nbrs[int(v)].append(int(u))
    return nbrs


def relu(x):
    return np.maximum(x, 0.0)


def gcn_vanilla(h, num_nodes, src, dst, w):
    """ReLU of the symmetric-normalised sum over N(v) and v itself."""
    nbrs = neighbour_lists(num_nodes, src, dst)
    dhat = [1 + len(nbrs[v]) for v in range(num_nodes)]
    out = np.zeros((num_nodes, w.shape[1]))
    for v in range(num_nodes):
        acc = np.zeros(w.shape[1])
        for u in nbrs[v] + [v]:
            acc += (1.0 / math.sqrt(dhat[u] * dhat[v])) * (h[u] @ w)
        out[v] = relu(acc)
    return out


def gin_vanilla(h, num_nodes, src, dst, w1, b1, w2, b2, eps=0.0):
    nbrs = neighbour_lists(num_nodes, src, dst)
    out = np.zeros((num_nodes, w2.shape[1]))
    for v in range(num_nodes):
        agg = (1.0 + eps) * h[v]
        for u in nbrs[v]:
            agg = agg + h[u]
        hidden = relu(agg @ w1 + b1)
        out[v] = relu(hidden @ w2 + b2)
    return out


def sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def gatedgcn_vanilla(h, num_nodes, src, dst, w1, w2, w3, w4, gate_eps=1e-6):
    """Gated aggregation with the gate-sum normalisation, then ReLU."""
    nbrs = neighbour_lists(num_nodes, src, dst)
    out = np.zeros((num_nodes, w1.shape[1]))
    for v in range(num_nodes):
        num = np.zeros(w1.shape[1])
        den = np.zeros(w1.shape[1])
        for u in nbrs[v]:
            eta = sigmoid(h[v] @ w3 + h[u] @ w4)
            num += eta * (h[u] @ w2)
            den += eta
        out[v] = relu(h[v] @ w1 + num / (den + gate_eps))
    return out


def dense_rwse(num_nodes, src, dst, k):
    a = np.zeros((num_nodes, num_nodes))
    for u, v in zip(src, dst):
        a[u, v] += 1.0
    p = np.zeros_like(a)
    for i in range(num_nodes):
        deg = a[i].sum()
        if deg > 0:
            p[i] = a[i] / deg
    out = np.zeros((num_nodes, k))
    power = np.eye(num_nodes)
    for s in range(k):
        power = power @ p
        out[:, s] = np.diag(power)
    return out


def triangles_brute(num_nodes, edges):
    adj = set()
    for u, v in edges:
        if u != v:
            adj.add((min(u, v), max(u, v)))
    count = 0
    for a in range(num_nodes):
        for b in range(a + 1, num_nodes):
            for c in range(b + 1, num_nodes):
                if (a, b) in adj and (b, c) in adj and (a, c) in adj:
                    count += 1
    return count


# ---------------------------------------------------------------------------
# metrics


def auroc_pairs(scores, labels) -> Fraction:
    """Fraction of (positive, negative) pairs ranked correctly, ties count 1/2."""
    pos = [s for s, y in zip(scores, labels) if y == 1]
    neg = [s for s, y in zip(scores, labels) if y == 0]
    total = Fraction(0)
    for p in pos:
        for n in neg:
            if p > n:
                total += 1
            elif p == n:
                total += Fraction(1, 2)
    return total / (len(pos) * len(neg))


def ap_rank_walk(scores, labels) -> Fraction:
    """Walk tie groups from the highest score, adding precision * recall gain."""
    pairs = sorted(zip(scores, labels), key=lambda t: -t[0])
    positives = sum(labels)
    total = Fraction(0)
    seen = tp = 0
    i = 0
    while i < len(pairs):
        j = i
        group_pos = 0
        while j < len(pairs) and pairs[j][0] == pairs[i][0]:
            group_pos += pairs[j][1]
            j += 1
        seen += j - i
        tp += group_pos
        if group_pos:
            total += Fraction(tp, seen) * Fraction(group_pos, positives)
        i = j
    return total


def f1_macro_loop(pred, labels, num_classes) -> Fraction:
    total = Fraction(0)
    for c in range(num_classes):
        tp = sum(1 for p, y in zip(pred, labels) if p == c and y == c)
        fp = sum(1 for p, y in zip(pred, labels) if p == c and y != c)
        fn = sum(1 for p, y in zip(pred, labels) if p != c and y == c)
        if tp + fp + fn:
            total += Fraction(2 * tp, 2 * tp + fp + fn)
    return total / num_classes


def adam_reference(theta, grads, lr, b1=0.9, b2=0.999, eps=1e-8):
    """Textbook Adam over a list of gradient arrays."""
    theta = np.array(theta, dtype=float)
    m = np.zeros_like(theta)
    v = np.zeros_like(theta)
    for t, g in enumerate(grads, start=1):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        mhat = m / (1 - b1 ** t)
        vhat = v / (1 - b2 ** t)
        theta = theta - lr * mhat / (np.sqrt(vhat) + eps)
    return theta
