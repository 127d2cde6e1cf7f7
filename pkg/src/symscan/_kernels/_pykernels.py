"""Pure-numpy fallback kernels.

Same contract as the compiled module: squared distances, nearest-neighbor
ties broken toward the lowest index, ICP updates from an SVD rigid fit with
the determinant corrected to +1.
"""

import numpy as np


def _sq_dists(a, b):
    # |a|^2 + |b|^2 - 2 a.b can go slightly negative by cancellation; clamp.
    d2 = (
        np.einsum("ij,ij->i", a, a)[:, None]
        + np.einsum("ij,ij->i", b, b)[None, :]
        - 2.0 * (a @ b.T)
    )
    return np.maximum(d2, 0.0, out=d2)


def chamfer(a, b):
    d2 = _sq_dists(a, b)
    return float(np.mean(np.min(d2, axis=1)) + np.mean(np.min(d2, axis=0)))


def _fit_rigid(src, dst):
    ca = src.mean(axis=0)
    cb = dst.mean(axis=0)
    h = (src - ca).T @ (dst - cb)
    u, _, vt = np.linalg.svd(h)
    d = np.sign(np.linalg.det(vt.T @ u.T))
    if d == 0:
        d = 1.0
    ri = vt.T @ np.diag([1.0, 1.0, d]) @ u.T
    ti = cb - ri @ ca
    return ri, ti


def register(a, b, max_iters, tol):
    """Rigid ICP of a onto b from the identity pose; see compiled register."""
    cur = np.array(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    r_total = np.eye(3)
    t_total = np.zeros(3)
    d2 = _sq_dists(cur, b)
    corr = np.argmin(d2, axis=1)
    ch = float(np.mean(np.min(d2, axis=1)) + np.mean(np.min(d2, axis=0)))
    iters = 0
    for it in range(1, max_iters + 1):
        ri, ti = _fit_rigid(cur, b[corr])
        cur = cur @ ri.T + ti
        r_total = ri @ r_total
        t_total = ri @ t_total + ti
        iters = it
        prev = ch
        d2 = _sq_dists(cur, b)
        corr = np.argmin(d2, axis=1)
        ch = float(np.mean(np.min(d2, axis=1)) + np.mean(np.min(d2, axis=0)))
        if prev - ch <= tol * prev:
            break
    return r_total, t_total, ch, iters
