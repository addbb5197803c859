"""Space-filling curve ordering of point sets."""

import numpy as np


def hilbert_keys(points, bits=None):
    """Hilbert curve index of each point after quantizing its bounding box.

    Uses Skilling's transpose form, vectorized over the points.
    """
    P = np.asarray(points, float)
    m, d = P.shape
    if bits is None:
        bits = max(1, min(20, 62 // d))
    lo = P.min(axis=0)
    span = float((P.max(axis=0) - lo).max())
    if span <= 0:
        return np.zeros(m, np.int64)
    top = (1 << bits) - 1
    X = np.clip(((P - lo) / span * top).round(), 0, top).astype(np.int64)
    # inverse undo
    Q = 1 << (bits - 1)
    while Q > 1:
        Pm = Q - 1
        for i in range(d):
            hit = (X[:, i] & Q) != 0
            X[hit, 0] ^= Pm
            t = (X[~hit, 0] ^ X[~hit, i]) & Pm
            X[~hit, 0] ^= t
            X[np.flatnonzero(~hit), i] ^= t
        Q >>= 1
    # Gray encode
    for i in range(1, d):
        X[:, i] ^= X[:, i - 1]
    t = np.zeros(m, np.int64)
    Q = 1 << (bits - 1)
    while Q > 1:
        hit = (X[:, d - 1] & Q) != 0
        t[hit] ^= Q - 1
        Q >>= 1
    X ^= t[:, None]
    # interleave the transposed bits, most significant first
    key = np.zeros(m, np.int64)
    for b in range(bits - 1, -1, -1):
        for i in range(d):
            key = (key << 1) | ((X[:, i] >> b) & 1)
    return key


def hilbert_order(points):
    return np.argsort(hilbert_keys(points), kind="stable")
