# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled nearest-neighbor / ICP kernels. See _pykernels for the reference
implementation of the same contract."""

import numpy as np

from libc.math cimport INFINITY
from libc.stdlib cimport free, malloc
from scipy.linalg.cython_lapack cimport dgesvd

cdef extern from "nnpass.h":
    double symscan_nn_pass(const double *ax, const double *ay, const double *az, int n,
                           const double *bx, const double *by, const double *bz, int m,
                           int *corr, double *colmin) nogil


cdef int _svd3(double *h, double *u, double *s, double *vt) nogil:
    # h, u, vt are 3x3 row-major; LAPACK works column-major, so transpose on
    # the way in and out.
    cdef double a[9]
    cdef double uu[9]
    cdef double vv[9]
    cdef double work[64]
    cdef int info = 0, lwork = 64, three = 3
    cdef int i, j
    for i in range(3):
        for j in range(3):
            a[j * 3 + i] = h[i * 3 + j]
    dgesvd('A', 'A', &three, &three, a, &three, s, uu, &three, vv, &three,
           work, &lwork, &info)
    for i in range(3):
        for j in range(3):
            u[i * 3 + j] = uu[j * 3 + i]
            vt[i * 3 + j] = vv[j * 3 + i]
    return info


cdef void _mul_nt(double *A, double *B, double *C) nogil:
    # C = A @ B.T for 3x3 row-major
    cdef int i, j
    for i in range(3):
        for j in range(3):
            C[i * 3 + j] = A[i * 3] * B[j * 3] + A[i * 3 + 1] * B[j * 3 + 1] + A[i * 3 + 2] * B[j * 3 + 2]


cdef void _fit_rotation(double *H, double *Ri) nogil:
    # Least-squares rotation from the cross-covariance H via SVD(H) = U S V^T,
    # Ri = V diag(1, 1, s) U^T with s chosen so det(Ri) = +1.
    cdef double U[9]
    cdef double S[3]
    cdef double Vt[9]
    cdef double V[9]
    cdef double det
    cdef int i, j
    if _svd3(H, U, S, Vt) != 0:
        for i in range(9):
            Ri[i] = 0.0
        Ri[0] = Ri[4] = Ri[8] = 1.0
        return
    for i in range(3):
        for j in range(3):
            V[i * 3 + j] = Vt[j * 3 + i]
    _mul_nt(V, U, Ri)
    det = (Ri[0] * (Ri[4] * Ri[8] - Ri[5] * Ri[7])
           - Ri[1] * (Ri[3] * Ri[8] - Ri[5] * Ri[6])
           + Ri[2] * (Ri[3] * Ri[7] - Ri[4] * Ri[6]))
    if det < 0.0:
        for i in range(3):
            V[i * 3 + 2] = -V[i * 3 + 2]
        _mul_nt(V, U, Ri)


def chamfer(double[:, ::1] a, double[:, ::1] b):
    """Two-sided mean of squared nearest-neighbor distances."""
    cdef int n = a.shape[0], m = b.shape[0]
    cdef double *buf = <double *> malloc((3 * n + 3 * m + m) * sizeof(double))
    cdef int *corr = <int *> malloc(n * sizeof(int))
    if buf == NULL or corr == NULL:
        free(buf); free(corr)
        raise MemoryError
    cdef double *ax = buf
    cdef double *ay = ax + n
    cdef double *az = ax + 2 * n
    cdef double *bx = az + n
    cdef double *by = bx + m
    cdef double *bz = bx + 2 * m
    cdef double *colmin = bz + m
    cdef double ch
    cdef int i, j
    with nogil:
        for i in range(n):
            ax[i] = a[i, 0]; ay[i] = a[i, 1]; az[i] = a[i, 2]
        for j in range(m):
            bx[j] = b[j, 0]; by[j] = b[j, 1]; bz[j] = b[j, 2]
        ch = symscan_nn_pass(ax, ay, az, n, bx, by, bz, m, corr, colmin)
    free(buf)
    free(corr)
    return ch


def register(double[:, ::1] a, double[:, ::1] b, int max_iters, double tol):
    """Rigid ICP of a onto b starting from the identity pose.

    Returns (R, t, chamfer, iters): the transform maps a to its aligned
    position, chamfer is the two-sided value at that pose, iters the number
    of applied updates.
    """
    cdef int n = a.shape[0], m = b.shape[0]
    cdef double *buf = <double *> malloc((3 * n + 3 * m + m) * sizeof(double))
    cdef int *corr = <int *> malloc(n * sizeof(int))
    if buf == NULL or corr == NULL:
        free(buf); free(corr)
        raise MemoryError
    cdef double *ax = buf
    cdef double *ay = ax + n
    cdef double *az = ax + 2 * n
    cdef double *bx = az + n
    cdef double *by = bx + m
    cdef double *bz = bx + 2 * m
    cdef double *colmin = bz + m
    cdef double R[9]
    cdef double t[3]
    cdef double Ri[9]
    cdef double ti[3]
    cdef double Rn[9]
    cdef double H[9]
    cdef double ca[3]
    cdef double cb[3]
    cdef double ch, prev, nx, ny, nz
    cdef int i, j, k, it, iters = 0
    with nogil:
        for i in range(n):
            ax[i] = a[i, 0]; ay[i] = a[i, 1]; az[i] = a[i, 2]
        for j in range(m):
            bx[j] = b[j, 0]; by[j] = b[j, 1]; bz[j] = b[j, 2]
        for i in range(9):
            R[i] = 0.0
        R[0] = R[4] = R[8] = 1.0
        t[0] = t[1] = t[2] = 0.0
        ch = symscan_nn_pass(ax, ay, az, n, bx, by, bz, m, corr, colmin)
        for it in range(1, max_iters + 1):
            # rigid fit from current correspondences
            ca[0] = ca[1] = ca[2] = cb[0] = cb[1] = cb[2] = 0.0
            for i in range(n):
                j = corr[i]
                ca[0] += ax[i]; ca[1] += ay[i]; ca[2] += az[i]
                cb[0] += bx[j]; cb[1] += by[j]; cb[2] += bz[j]
            for k in range(3):
                ca[k] /= n
                cb[k] /= n
            for k in range(9):
                H[k] = 0.0
            for i in range(n):
                j = corr[i]
                nx = ax[i] - ca[0]; ny = ay[i] - ca[1]; nz = az[i] - ca[2]
                H[0] += nx * (bx[j] - cb[0]); H[1] += nx * (by[j] - cb[1]); H[2] += nx * (bz[j] - cb[2])
                H[3] += ny * (bx[j] - cb[0]); H[4] += ny * (by[j] - cb[1]); H[5] += ny * (bz[j] - cb[2])
                H[6] += nz * (bx[j] - cb[0]); H[7] += nz * (by[j] - cb[1]); H[8] += nz * (bz[j] - cb[2])
            _fit_rotation(H, Ri)
            ti[0] = cb[0] - (Ri[0] * ca[0] + Ri[1] * ca[1] + Ri[2] * ca[2])
            ti[1] = cb[1] - (Ri[3] * ca[0] + Ri[4] * ca[1] + Ri[5] * ca[2])
            ti[2] = cb[2] - (Ri[6] * ca[0] + Ri[7] * ca[1] + Ri[8] * ca[2])
            for i in range(n):
                nx = Ri[0] * ax[i] + Ri[1] * ay[i] + Ri[2] * az[i] + ti[0]
                ny = Ri[3] * ax[i] + Ri[4] * ay[i] + Ri[5] * az[i] + ti[1]
                nz = Ri[6] * ax[i] + Ri[7] * ay[i] + Ri[8] * az[i] + ti[2]
                ax[i] = nx; ay[i] = ny; az[i] = nz
            for i in range(3):
                for j in range(3):
                    Rn[i * 3 + j] = Ri[i * 3] * R[j] + Ri[i * 3 + 1] * R[3 + j] + Ri[i * 3 + 2] * R[6 + j]
                ti[i] = Ri[i * 3] * t[0] + Ri[i * 3 + 1] * t[1] + Ri[i * 3 + 2] * t[2] + ti[i]
            for i in range(3):
                t[i] = ti[i]
                for j in range(3):
                    R[i * 3 + j] = Rn[i * 3 + j]
            iters = it
            prev = ch
            ch = symscan_nn_pass(ax, ay, az, n, bx, by, bz, m, corr, colmin)
            if prev - ch <= tol * prev:
                break
    free(buf)
    free(corr)
    R_out = np.empty((3, 3))
    t_out = np.empty(3)
    for i in range(3):
        t_out[i] = t[i]
        for j in range(3):
            R_out[i, j] = R[i * 3 + j]
    return R_out, t_out, ch, iters
