# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
# cython: language_level=3
"""Compiled inner HFPI loops (LAPACK/BLAS through scipy's Cython bindings).

Contract identical to ``_kernels_py``.
"""
import numpy as np
from libc.math cimport sqrt, log1p, fabs, INFINITY
from scipy.linalg.cython_lapack cimport zpotrf, zpotrs, zgesv
from scipy.linalg.cython_blas cimport zherk, zgemm

BACKEND = "cython"


cdef inline double _abs2(double complex z) noexcept nogil:
    return z.real * z.real + z.imag * z.imag


cdef class _Policy:
    # adaptive rho bookkeeping shared by both loops
    cdef public double rho, best, ref, shrink
    cdef public int since, window, doublings

    def __init__(self, double rho, int window, double shrink):
        self.rho = rho
        self.window = window
        self.shrink = shrink
        self.best = INFINITY
        self.ref = INFINITY
        self.since = 0
        self.doublings = 0

    cdef void guard(self, double[::1] g0):
        cdef Py_ssize_t k
        cdef bint bad = True
        while bad:
            bad = False
            for k in range(g0.shape[0]):
                if g0[k] + self.rho <= 0:
                    bad = True
            if bad:
                self.rho = 2.0 * self.rho if self.rho > 0 else 1e-3
                self.doublings += 1

    cdef void track(self, double change):
        if change < self.best:
            self.best = change
        self.since += 1
        if self.since == self.window:
            if self.best > self.shrink * self.ref:
                self.rho = 2.0 * self.rho if self.rho > 0 else 1e-3
                self.doublings += 1
                self.best = INFINITY
                self.ref = INFINITY
            else:
                self.ref = self.best
            self.since = 0


cdef double _step(double[::1] lam, double *mu, double[::1] g0, double q,
                  double P, double rho):
    # in-place dual update; returns l1 change
    cdef Py_ssize_t K = lam.shape[0], k, m = 0
    cdef double r, moved = 0.0, change = 0.0, mun
    for k in range(1, K):
        if g0[k] < g0[m]:
            m = k
    for k in range(K):
        if k == m:
            continue
        r = (g0[m] + rho) / (g0[k] + rho)
        moved += (1.0 - r) * lam[k]
        change += fabs((r - 1.0) * lam[k])
        lam[k] = r * lam[k]
    lam[m] = lam[m] + moved
    change += fabs(moved)
    mun = mu[0] * (q + rho) / (P + rho)
    change += fabs(mun - mu[0])
    mu[0] = mun
    return change


def hfpi_loop(H, noise, delta, double P, a0, ap, b0, bp, lam, double mu, double rho,
              double eps2, int max_iter, int window=50, double shrink=0.9, Phi=None):
    cdef int L = H.shape[0], K = H.shape[1], Kp1 = K + 1, info = 0
    cdef int one = 1
    cdef Py_ssize_t i, j, k, it = 0
    cdef double complex[::1, :] Hm = np.asfortranarray(H, dtype=complex)
    cdef double complex[::1, :] Hs = np.empty((L, K), complex, order="F")
    cdef double complex[::1, :] Ac = np.empty((L, L), complex, order="F")
    cdef double complex[::1, :] Ap = np.empty((L, L), complex, order="F")
    cdef double complex[::1, :] W = np.empty((L, Kp1), complex, order="F")
    cdef double complex[::1, :] G = np.empty((K, Kp1), complex, order="F")
    cdef double complex[::1, :] V = np.empty((L, Kp1), complex, order="F")
    cdef double complex[::1, :, :] Ph
    cdef bint has_phi = Phi is not None
    if has_phi:
        Ph = np.asfortranarray(np.transpose(np.asarray(Phi, complex), (1, 2, 0)))
    cdef double[::1] nz = np.ascontiguousarray(noise, dtype=float)
    cdef double[::1] dl = np.ascontiguousarray(delta, dtype=float)
    cdef double[::1] va0 = np.ascontiguousarray(a0, dtype=float)
    cdef double[::1] vap = np.ascontiguousarray(ap, dtype=float)
    cdef double complex[::1] vb0 = np.ascontiguousarray(b0, dtype=complex)
    cdef double complex[::1] vbp = np.ascontiguousarray(bp, dtype=complex)
    cdef double[::1] lm = np.array(lam, dtype=float)
    cdef double[::1] g0 = np.empty(K)
    cdef double[::1] t0 = np.empty(K)
    cdef double[::1] tp = np.empty(K)
    cdef double complex[::1] dc = np.empty(K, complex)
    cdef double complex zone = 1.0, zzero = 0.0, acc, s
    cdef double done = 1.0, dzero = 0.0, q, change = INFINITY, d0
    cdef char uplo = b'L', tn = b'N', tc = b'C'
    cdef bint converged = False
    cdef _Policy pol = _Policy(rho, window, shrink)

    while it < max_iter:
        # coefficient vectors
        for k in range(K):
            t0[k] = lm[k] * _abs2(vb0[k])
            tp[k] = dl[k] * _abs2(vbp[k]) + t0[k]
            dc[k] = sqrt(1.0 + va0[k]) * vb0[k] * lm[k]
        # common system
        for k in range(K):
            s = sqrt(t0[k])
            for i in range(L):
                Hs[i, k] = Hm[i, k] * s
        zherk(&uplo, &tn, &L, &K, &done, &Hs[0, 0], &L, &dzero, &Ac[0, 0], &L)
        for k in range(K):
            s = sqrt(tp[k])
            for i in range(L):
                Hs[i, k] = Hm[i, k] * s
        zherk(&uplo, &tn, &L, &K, &done, &Hs[0, 0], &L, &dzero, &Ap[0, 0], &L)
        for i in range(L):
            Ac[i, i] = Ac[i, i] + mu
            Ap[i, i] = Ap[i, i] + mu
        if has_phi:
            for k in range(K):
                for j in range(L):
                    for i in range(j, L):
                        Ac[i, j] = Ac[i, j] + t0[k] * Ph[i, j, k]
                        Ap[i, j] = Ap[i, j] + tp[k] * Ph[i, j, k]
        # right-hand sides
        for i in range(L):
            acc = 0.0
            for k in range(K):
                acc = acc + Hm[i, k] * dc[k]
            W[i, 0] = acc
        for k in range(K):
            s = sqrt(1.0 + vap[k]) * vbp[k] * dl[k]
            for i in range(L):
                W[i, k + 1] = Hm[i, k] * s
        zpotrf(&uplo, &L, &Ac[0, 0], &L, &info)
        if info != 0:
            raise np.linalg.LinAlgError(f"common system not positive definite (info={info})")
        zpotrs(&uplo, &L, &one, &Ac[0, 0], &L, &W[0, 0], &L, &info)
        zpotrf(&uplo, &L, &Ap[0, 0], &L, &info)
        if info != 0:
            raise np.linalg.LinAlgError(f"private system not positive definite (info={info})")
        zpotrs(&uplo, &L, &K, &Ap[0, 0], &L, &W[0, 1], &L, &info)
        # G = H^H W
        zgemm(&tc, &tn, &K, &Kp1, &L, &zone, &Hm[0, 0], &L, &W[0, 0], &L, &zzero, &G[0, 0], &K)
        q = 0.0
        for j in range(Kp1):
            for i in range(L):
                q += _abs2(W[i, j])
        for k in range(K):
            d0 = nz[k]
            for j in range(Kp1):
                d0 += _abs2(G[k, j])
            if has_phi:
                zgemm(&tn, &tn, &L, &Kp1, &L, &zone, &Ph[0, 0, k], &L, &W[0, 0], &L,
                      &zzero, &V[0, 0], &L)
                for j in range(Kp1):
                    for i in range(L):
                        d0 += (W[i, j].conjugate() * V[i, j]).real
            g0[k] = (2.0 * sqrt(1.0 + va0[k]) * (vb0[k].conjugate() * G[k, 0]).real
                     - _abs2(vb0[k]) * d0 + log1p(va0[k]) - va0[k])
        pol.guard(g0)
        change = _step(lm, &mu, g0, q, P, pol.rho)
        it += 1
        if change < eps2:
            converged = True
            break
        pol.track(change)
    return np.asarray(lm).copy(), mu, it, pol.rho, pol.doublings, change, converged


def hfpi_loop_reduced(F, noise, delta, double P, a0, ap, b0, bp, lam, double mu,
                      double rho, double eps2, int max_iter, int window=50,
                      double shrink=0.9):
    cdef int K = F.shape[0], Kp1 = K + 1, info = 0, one = 1
    cdef Py_ssize_t i, j, k, it = 0
    cdef double complex[::1, :] Fm = np.asfortranarray(F, dtype=complex)
    cdef double complex[::1, :] M = np.empty((K, K), complex, order="F")
    cdef double complex[::1, :] Y = np.empty((K, Kp1), complex, order="F")
    cdef double complex[::1, :] G = np.empty((K, Kp1), complex, order="F")
    cdef int[::1] piv = np.empty(K, dtype=np.intc)
    cdef double[::1] nz = np.ascontiguousarray(noise, dtype=float)
    cdef double[::1] dl = np.ascontiguousarray(delta, dtype=float)
    cdef double[::1] va0 = np.ascontiguousarray(a0, dtype=float)
    cdef double[::1] vap = np.ascontiguousarray(ap, dtype=float)
    cdef double complex[::1] vb0 = np.ascontiguousarray(b0, dtype=complex)
    cdef double complex[::1] vbp = np.ascontiguousarray(bp, dtype=complex)
    cdef double[::1] lm = np.array(lam, dtype=float)
    cdef double[::1] g0 = np.empty(K)
    cdef double[::1] t0 = np.empty(K)
    cdef double complex zone = 1.0, zzero = 0.0
    cdef double q, change = INFINITY, d0, tk
    cdef char tn = b'N'
    cdef bint converged = False
    cdef _Policy pol = _Policy(rho, window, shrink)

    while it < max_iter:
        for k in range(K):
            t0[k] = lm[k] * _abs2(vb0[k])
        # (Theta_c F + mu I) y0 = d_c
        for j in range(K):
            for i in range(K):
                M[i, j] = t0[i] * Fm[i, j]
            M[j, j] = M[j, j] + mu
        for k in range(K):
            Y[k, 0] = sqrt(1.0 + va0[k]) * vb0[k] * lm[k]
        zgesv(&K, &one, &M[0, 0], &K, &piv[0], &Y[0, 0], &K, &info)
        if info != 0:
            raise np.linalg.LinAlgError(f"reduced common system singular (info={info})")
        # (Theta_p F + mu I) Yp = diag(d_p)
        for j in range(K):
            for i in range(K):
                tk = dl[i] * _abs2(vbp[i]) + t0[i]
                M[i, j] = tk * Fm[i, j]
                Y[i, j + 1] = 0.0
            M[j, j] = M[j, j] + mu
            Y[j, j + 1] = sqrt(1.0 + vap[j]) * vbp[j] * dl[j]
        zgesv(&K, &K, &M[0, 0], &K, &piv[0], &Y[0, 1], &K, &info)
        if info != 0:
            raise np.linalg.LinAlgError(f"reduced private system singular (info={info})")
        zgemm(&tn, &tn, &K, &Kp1, &K, &zone, &Fm[0, 0], &K, &Y[0, 0], &K, &zzero, &G[0, 0], &K)
        q = 0.0
        for j in range(Kp1):
            for i in range(K):
                q += (Y[i, j].conjugate() * G[i, j]).real
        for k in range(K):
            d0 = nz[k]
            for j in range(Kp1):
                d0 += _abs2(G[k, j])
            g0[k] = (2.0 * sqrt(1.0 + va0[k]) * (vb0[k].conjugate() * G[k, 0]).real
                     - _abs2(vb0[k]) * d0 + log1p(va0[k]) - va0[k])
        pol.guard(g0)
        change = _step(lm, &mu, g0, q, P, pol.rho)
        it += 1
        if change < eps2:
            converged = True
            break
        pol.track(change)
    return np.asarray(lm).copy(), mu, it, pol.rho, pol.doublings, change, converged
