"""Pure-numpy inner HFPI loops. Same contract as the compiled ``_kernels``.

Both loops return ``(lam, mu, iters, rho, doublings, change, converged)``.
``rho`` doubles (from 1e-3 if it starts at zero) when some ``g0k + rho <= 0`` and when the dual step fails
to shrink by the factor ``shrink`` over ``window`` iterations.
"""
import numpy as np
from scipy.linalg import cho_factor, cho_solve

BACKEND = "python"


def _double(rho):
    return 2.0 * rho if rho > 0 else 1e-3


def _step(lam, mu, g0, q, P, rho):
    m = int(np.argmin(g0))
    r = (g0[m] + rho) / (g0 + rho)
    new = r * lam
    new[m] = lam[m] + np.sum((1.0 - r) * lam)
    return new, mu * (q + rho) / (P + rho)


def _loop(solve, lam, mu, P, rho, eps2, max_iter, window, shrink):
    lam = np.array(lam, dtype=float)
    mu = float(mu)
    best = ref = np.inf
    since = doublings = it = 0
    change = np.inf
    converged = False
    while it < max_iter:
        g0, q = solve(lam, mu)
        while np.any(g0 + rho <= 0):
            rho = _double(rho)
            doublings += 1
        new, mun = _step(lam, mu, g0, q, P, rho)
        change = float(np.abs(new - lam).sum() + abs(mun - mu))
        lam, mu = new, mun
        it += 1
        if change < eps2:
            converged = True
            break
        best = min(best, change)
        since += 1
        if since == window:
            if best > shrink * ref:
                rho = _double(rho)
                doublings += 1
                best = ref = np.inf
            else:
                ref = best
            since = 0
    return lam, mu, it, rho, doublings, change, converged


def hfpi_loop(H, noise, delta, P, a0, ap, b0, bp, lam, mu, rho, eps2, max_iter,
              window=50, shrink=0.9, Phi=None):
    L, K = H.shape
    Hc = H.conj().T
    sa0 = np.sqrt(1 + a0)
    ab0 = np.abs(b0) ** 2
    c0 = np.log1p(a0) - a0
    dp = np.sqrt(1 + ap) * bp * delta
    tpb = delta * np.abs(bp) ** 2
    Bp = H * dp
    eye = np.eye(L)

    def solve(lam, mu):
        t0 = lam * ab0
        tp = tpb + t0
        Ac = (H * t0) @ Hc + mu * eye
        Ap = (H * tp) @ Hc + mu * eye
        if Phi is not None:
            Ac = Ac + np.tensordot(t0, Phi, 1)
            Ap = Ap + np.tensordot(tp, Phi, 1)
        w0 = cho_solve(cho_factor(Ac, lower=True), H @ (sa0 * b0 * lam))
        Wp = cho_solve(cho_factor(Ap, lower=True), Bp)
        W = np.column_stack([w0, Wp])
        G = Hc @ W
        D0 = (np.abs(G) ** 2).sum(1) + noise
        if Phi is not None:
            D0 = D0 + np.einsum("lj,klm,mj->k", W.conj(), Phi, W).real
        g0 = 2 * sa0 * np.real(b0.conj() * G[:, 0]) - ab0 * D0 + c0
        return g0, float(np.vdot(W, W).real)

    return _loop(solve, lam, mu, P, rho, eps2, max_iter, window, shrink)


def hfpi_loop_reduced(F, noise, delta, P, a0, ap, b0, bp, lam, mu, rho, eps2, max_iter,
                      window=50, shrink=0.9):
    K = F.shape[0]
    sa0 = np.sqrt(1 + a0)
    ab0 = np.abs(b0) ** 2
    c0 = np.log1p(a0) - a0
    Dp = np.diag(np.sqrt(1 + ap) * bp * delta)
    tpb = delta * np.abs(bp) ** 2
    eye = np.eye(K)

    def solve(lam, mu):
        t0 = lam * ab0
        tp = tpb + t0
        y0 = np.linalg.solve(t0[:, None] * F + mu * eye, sa0 * b0 * lam)
        Yp = np.linalg.solve(tp[:, None] * F + mu * eye, Dp)
        Y = np.column_stack([y0, Yp])
        G = F @ Y
        D0 = (np.abs(G) ** 2).sum(1) + noise
        g0 = 2 * sa0 * np.real(b0.conj() * G[:, 0]) - ab0 * D0 + c0
        return g0, float(np.real(np.vdot(Y, G)))

    return _loop(solve, lam, mu, P, rho, eps2, max_iter, window, shrink)
