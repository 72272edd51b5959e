"""Pure numpy fallback for :mod:`tango._ckernels`.

Same signatures, same summation order: reductions over the feature axis are
unrolled as a Python loop of vectorized adds so the result is bitwise equal
to the compiled sequential loop (numpy's own ``sum`` uses pairwise blocks).
"""
import math

import numpy as np


def sqdist_rows(x, out, start, stop):
    rows = x[start:stop]
    acc = np.zeros((stop - start, x.shape[0]))
    for c in range(x.shape[1]):
        diff = rows[:, c, None] - x[None, :, c]
        acc += diff * diff
    out[start:stop] = acc


def knn_density_rows(dist, k, out, start, stop):
    if k <= 0:
        out[start:stop] = 1.0
        return
    block = np.array(dist[start:stop], dtype=np.float64)
    idx = np.arange(start, stop)
    block[idx - start, idx] = np.inf
    order = np.argsort(block, axis=1, kind="stable")[:, :k]
    nearest = np.take_along_axis(block, order, axis=1)
    acc = np.zeros(stop - start)
    for m in range(k):
        acc += nearest[:, m] * nearest[:, m]
    # math.exp shares libm with the compiled path; numpy's SIMD exp may not
    out[start:stop] = [math.exp(-(a / k)) for a in acc.tolist()]


def delta_rows(dist, rho, out, start, stop):
    n = dist.shape[0]
    block = np.asarray(dist[start:stop])
    idx = np.arange(start, stop)[:, None]
    cols = np.arange(n)[None, :]
    r_i = np.asarray(rho[start:stop])[:, None]
    r_j = np.asarray(rho)[None, :]
    higher = (r_j > r_i) | ((r_j == r_i) & (cols < idx))
    found = higher.any(axis=1)
    best = np.where(higher, block, np.inf).min(axis=1)
    off_diag = np.where(cols == idx, 0.0, block)
    mx = off_diag.max(axis=1) if n > 0 else np.zeros(stop - start)
    out[start:stop] = np.where(found, best, np.maximum(mx, 0.0))


def assign_rows(dist, centers, out, start, stop):
    sub = np.asarray(dist[start:stop])[:, np.asarray(centers)]
    out[start:stop] = np.argmin(sub, axis=1)


def adjacent_cosine_rows(frames, out, start, stop):
    a = frames[start:stop]
    b = frames[start + 1 : stop + 1]
    shape = a.shape[:2]
    dot = np.zeros(shape)
    na = np.zeros(shape)
    nb = np.zeros(shape)
    for c in range(frames.shape[2]):
        ac = a[:, :, c]
        bc = b[:, :, c]
        dot += ac * bc
        na += ac * ac
        nb += bc * bc
    zero = (na == 0.0) | (nb == 0.0)
    with np.errstate(invalid="ignore", divide="ignore"):
        cos = dot / (np.sqrt(na) * np.sqrt(nb))
    out[start:stop] = np.where(zero, 0.0, cos)
