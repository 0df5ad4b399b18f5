"""Brute-force loop oracles, deliberately naive and independent of the package."""

import numpy as np


def conv2d_loops(x, w, b):
    h, wd, cin = x.shape
    k = w.shape[0]
    cout = w.shape[3]
    ho, wo = h - k + 1, wd - k + 1
    out = np.zeros((ho, wo, cout), dtype=np.float64)
    for i in range(ho):
        for j in range(wo):
            for o in range(cout):
                acc = float(b[o])
                for u in range(k):
                    for v in range(k):
                        for c in range(cin):
                            acc += float(x[i + u, j + v, c]) * float(w[u, v, c, o])
                out[i, j, o] = acc
    return out


def maxpool2_loops(x):
    h, w, c = x.shape
    h2, w2 = h // 2, w // 2
    out = np.zeros((h2, w2, c), dtype=np.float64)
    arg = np.zeros((h2, w2, c, 2), dtype=np.int64)
    for i in range(h2):
        for j in range(w2):
            for ch in range(c):
                best = None
                for u in range(2):
                    for v in range(2):
                        val = float(x[2 * i + u, 2 * j + v, ch])
                        if best is None or val > best:
                            best = val
                            arg[i, j, ch] = (2 * i + u, 2 * j + v)
                out[i, j, ch] = best
    return out, arg


def maxpool2_backward_loops(x, grad_out):
    _, arg = maxpool2_loops(x)
    grad = np.zeros_like(x, dtype=np.float64)
    h2, w2, c = grad_out.shape
    for i in range(h2):
        for j in range(w2):
            for ch in range(c):
                gi, gj = arg[i, j, ch]
                grad[gi, gj, ch] += float(grad_out[i, j, ch])
    return grad


def dense_loops(x, w, b):
    out = np.zeros(w.shape[1], dtype=np.float64)
    for o in range(w.shape[1]):
        acc = float(b[o])
        for i in range(w.shape[0]):
            acc += float(x[i]) * float(w[i, o])
        out[o] = acc
    return out
