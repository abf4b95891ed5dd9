"""Independent reference implementations used only by the tests.

Built from explicit 2x2 matrices, Kronecker products and basis permutations,
without going through the simulator.
"""

from functools import lru_cache

import numpy as np


def ry(a):
    return np.array([[np.cos(a / 2), -np.sin(a / 2)], [np.sin(a / 2), np.cos(a / 2)]])


def single(mat, q, n):
    out = np.eye(1)
    for j in range(n):
        out = np.kron(out, mat if j == q else np.eye(2))
    return out


@lru_cache(maxsize=None)
def cnot(c, t, n):
    dim = 2**n
    out = np.zeros((dim, dim))
    for i in range(dim):
        bits = [(i >> (n - 1 - j)) & 1 for j in range(n)]
        if bits[c]:
            bits[t] ^= 1
        out[int("".join(map(str, bits)), 2), i] = 1
    return out


def client_unitary(theta_b, theta_p, n, k):
    """Full unitary of the base layers followed by the personal layer, gate by gate."""
    u = np.eye(2**n)
    it = iter(theta_b)
    for _ in range(k):
        for q in range(n):
            for _ in range(2):
                u = single(ry(next(it)), q, n) @ u
        for i in range(n):
            j = (i + 1) % n
            a, b = next(it), next(it)
            u = cnot(i, j, n) @ u
            u = single(ry(a), j, n) @ u
            u = single(ry(b), (j + 1) % n, n) @ u
            u = cnot(i, j, n) @ u
    for q in range(n):
        for r in range(2):
            u = single(ry(theta_p[2 * q + r]), q, n) @ u if len(theta_p) else u
    return u


def z_scores(u, x, n):
    """<Z_0>, <Z_1> of u|x> for normalized x."""
    probs = np.abs(u @ x) ** 2
    idx = np.arange(2**n)
    return tuple(float(np.sum(probs * (1 - 2 * ((idx >> (n - 1 - q)) & 1)))) for q in (0, 1))


def cross_entropy(scores, labels):
    scores = np.asarray(scores, dtype=float)
    out = 0.0
    for (e0, e1), y in zip(scores, labels):
        m = max(e0, e1)
        lse = m + np.log(np.exp(e0 - m) + np.exp(e1 - m))
        out += lse - (e0, e1)[y]
    return out / len(labels)
