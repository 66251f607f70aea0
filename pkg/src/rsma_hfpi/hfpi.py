"""Closed-form beamformers from duals and the hyperplane fixed-point iteration."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from . import _backend
from .channel_model import ChannelRealization, ImperfectChannel
from .errors import NumericalDomainError, ParameterError
from .fp_transform import AuxiliaryState, g_from_terms
from .rsma_core import error_quadratics, stream_terms


@dataclass
class DualState:
    lam: np.ndarray
    mu: float

    def __post_init__(self):
        self.lam = np.asarray(self.lam, dtype=float)
        if np.any(self.lam < 0) or not np.all(np.isfinite(self.lam)):
            raise ParameterError("lambda must be nonnegative and finite")
        self.mu = float(self.mu)

    def copy(self) -> "DualState":
        return DualState(self.lam.copy(), self.mu)


def initial_duals(weights, power_budget: float) -> DualState:
    """Uniform lambda on the hyperplane, mu = K max(delta) / P."""
    w = np.asarray(weights, float)
    K = w.size
    return DualState(np.full(K, w.max() / K), K * w.max() / power_budget)


def random_duals(weights, power_budget: float, rng: np.random.Generator) -> DualState:
    w = np.asarray(weights, float)
    lam = rng.dirichlet(np.ones(w.size)) * w.max()
    return DualState(lam, w.size * w.max() / power_budget * np.exp(rng.uniform(-2, 2)))


@dataclass
class SolverCoefficients:
    d_common: np.ndarray
    d_private: np.ndarray
    theta_common: np.ndarray
    theta_private: np.ndarray


@dataclass
class HfpiConfig:
    rho: float = 0.5
    eps2: float = 1e-3
    max_inner_iters: int = 2000
    tie_break: str = "smallest_index"
    # rho doubles if the dual step has not shrunk by adapt_shrink within adapt_window
    adapt_window: int = 50
    adapt_shrink: float = 0.9
    backend: Optional[str] = None

    def __post_init__(self):
        if self.rho < 0:
            raise ParameterError("rho must be nonnegative")
        if self.eps2 <= 0:
            raise ParameterError("eps2 must be positive")
        if self.tie_break != "smallest_index":
            raise ParameterError("only smallest_index tie-break is implemented")


@dataclass
class KktResidual:
    stationarity_common: float
    stationarity_private: float
    hyperplane: float
    comp_slack_lambda: float
    comp_slack_mu: float
    scale: float = 1.0  # ||H||_F

    def normalized(self) -> "KktResidual":
        s = self.scale
        return KktResidual(self.stationarity_common / s, self.stationarity_private / s,
                           self.hyperplane / s, self.comp_slack_lambda / s,
                           self.comp_slack_mu / s, 1.0)

    def max(self) -> float:
        return max(self.stationarity_common, self.stationarity_private, self.hyperplane,
                   self.comp_slack_lambda, self.comp_slack_mu)


@dataclass
class HfpiResult:
    W: Optional[np.ndarray]
    duals: DualState
    iterations: int
    kkt: KktResidual
    converged: bool
    rho: float
    rho_doublings: int
    last_change: float
    Y: Optional[np.ndarray] = field(default=None)


def compute_coefficients(aux: AuxiliaryState, duals: DualState, weights) -> SolverCoefficients:
    a0, ap, b0, bp = aux.arrays()
    w = np.asarray(weights, float)
    lam = duals.lam
    t0 = lam * np.abs(b0) ** 2
    return SolverCoefficients(
        d_common=np.sqrt(1 + a0) * b0 * lam,
        d_private=np.sqrt(1 + ap) * bp * w,
        theta_common=t0,
        theta_private=w * np.abs(bp) ** 2 + t0,
    )


def _system(H, theta, mu, Phi):
    A = (H * theta) @ H.conj().T + mu * np.eye(H.shape[0])
    if Phi is not None:
        A = A + np.tensordot(theta, Phi, 1)
    return A


def _beamform(H, coeffs: SolverCoefficients, mu: float, Phi=None) -> np.ndarray:
    if mu <= 0:
        raise ParameterError("mu must be positive")
    Ac = cho_factor(_system(H, coeffs.theta_common, mu, Phi), lower=True)
    Ap = cho_factor(_system(H, coeffs.theta_private, mu, Phi), lower=True)
    w0 = cho_solve(Ac, H @ coeffs.d_common)
    Wp = cho_solve(Ap, H * coeffs.d_private)
    return np.column_stack([w0, Wp])


def beamform_from_duals(coeffs: SolverCoefficients, duals: DualState,
                        ch: ChannelRealization, Phi=None) -> np.ndarray:
    """W with w0 = (H Tc H^H + mu I)^-1 H d_c and w_k = d_kk (H Tp H^H + mu I)^-1 h_k."""
    return _beamform(ch.H, coeffs, duals.mu, Phi)


def beamform_from_duals_imperfect(coeffs: SolverCoefficients, duals: DualState,
                                  imch: ImperfectChannel) -> np.ndarray:
    return _beamform(imch.H_hat, coeffs, duals.mu, imch.error_covariances)


def beamform_from_duals_reduced(coeffs: SolverCoefficients, duals: DualState, F: np.ndarray,
                                ch: Optional[ChannelRealization] = None):
    """Coefficients Y (K x K+1) with W = H Y; only K x K systems are solved.

    Returns ``(Y, W)``; ``W`` is None when ``ch`` is not given.
    """
    mu = duals.mu
    if mu <= 0:
        raise ParameterError("mu must be positive")
    K = F.shape[0]
    eye = np.eye(K)
    y0 = np.linalg.solve(coeffs.theta_common[:, None] * F + mu * eye, coeffs.d_common)
    Yp = np.linalg.solve(coeffs.theta_private[:, None] * F + mu * eye, np.diag(coeffs.d_private))
    Y = np.column_stack([y0, Yp])
    return Y, (None if ch is None else ch.H @ Y)


def hfpi_step(duals: DualState, h0, q: float, P: float, rho: float, weights=None) -> DualState:
    """One hyperplane fixed-point update of (lambda, mu).

    The smallest-h0 user absorbs the mass removed from the others, so the
    sum of lambda is preserved.
    """
    h0 = np.asarray(h0, float)
    if np.any(h0 + rho <= 0):
        raise NumericalDomainError("h0 + rho must be positive for every user")
    lam = duals.lam
    m = int(np.argmin(h0))
    r = (h0[m] + rho) / (h0 + rho)
    new = r * lam
    new[m] = lam[m] + np.sum((1.0 - r) * lam)
    return DualState(new, duals.mu * (q + rho) / (P + rho))


def _kkt_from(G, power, res_c, res_p, duals, aux, ch, scale, E=None) -> KktResidual:
    g0, _ = g_from_terms(G, stream_terms(G, ch.noise_powers, E), aux)
    lam = duals.lam
    return KktResidual(
        stationarity_common=float(res_c),
        stationarity_private=float(res_p),
        hyperplane=float(abs(lam.sum() - ch.weights.max())),
        comp_slack_lambda=float(np.sum(np.abs(lam * (g0.min() - g0)))),
        comp_slack_mu=float(abs(duals.mu * (power - ch.power_budget))),
        scale=scale,
    )


def kkt_residual(W, duals: DualState, aux: AuxiliaryState, ch: ChannelRealization,
                 Phi=None) -> KktResidual:
    """Residuals of the optimality system of the convex subproblem."""
    H = ch.H
    co = compute_coefficients(aux, duals, ch.weights)
    Ac = _system(H, co.theta_common, duals.mu, Phi)
    Ap = _system(H, co.theta_private, duals.mu, Phi)
    rc = np.linalg.norm(Ac @ W[:, 0] - H @ co.d_common)
    rp = np.linalg.norm(Ap @ W[:, 1:] - H * co.d_private)
    E = None if Phi is None else error_quadratics(W, Phi)
    return _kkt_from(H.conj().T @ W, float(np.vdot(W, W).real), rc, rp, duals, aux, ch,
                     float(np.linalg.norm(H)), E)


def kkt_residual_reduced(Y, duals: DualState, aux: AuxiliaryState, F: np.ndarray,
                         ch: ChannelRealization) -> KktResidual:
    """Same residuals computed in coefficient space (||H r||^2 = r^H F r)."""
    co = compute_coefficients(aux, duals, ch.weights)
    K = F.shape[0]
    rc = (co.theta_common[:, None] * F + duals.mu * np.eye(K)) @ Y[:, 0] - co.d_common
    rp = (co.theta_private[:, None] * F + duals.mu * np.eye(K)) @ Y[:, 1:] - np.diag(co.d_private)
    nc = np.sqrt(max(np.vdot(rc, F @ rc).real, 0.0))
    npv = np.sqrt(max(np.vdot(rp, F @ rp).real, 0.0))
    G = F @ Y
    return _kkt_from(G, float(np.vdot(Y, G).real), nc, npv, duals, aux, ch,
                     float(np.sqrt(np.trace(F).real)))


def hfpi_solve(aux: AuxiliaryState, ch: ChannelRealization, duals_init: DualState,
               config: HfpiConfig = HfpiConfig(), Phi=None, F=None) -> HfpiResult:
    """Iterate closed-form beamforming and the dual update until the l1 dual step < eps2.

    Pass ``F = H^H H`` to run in the K-dimensional coefficient space; the
    result then carries ``Y`` and ``W = H Y``. A cap on iterations returns
    ``converged=False`` with the last step size in ``last_change``.
    """
    if not (np.any(aux.beta_common != 0) or np.any(aux.beta_private != 0)):
        raise ParameterError("all beta are zero; the subproblem is degenerate")
    kern = _backend.get_kernels(config.backend)
    args = (ch.noise_powers, ch.weights, ch.power_budget, *aux.arrays(),
            duals_init.lam, duals_init.mu, config.rho, config.eps2,
            int(config.max_inner_iters), int(config.adapt_window), float(config.adapt_shrink))
    if F is not None:
        if Phi is not None:
            raise ParameterError("reduced path does not support error covariances")
        lam, mu, it, rho, nd, change, ok = kern.hfpi_loop_reduced(F, *args)
    else:
        lam, mu, it, rho, nd, change, ok = kern.hfpi_loop(ch.H, *args, Phi=Phi)
    duals = DualState(lam, mu)
    co = compute_coefficients(aux, duals, ch.weights)
    if F is not None:
        Y, _ = beamform_from_duals_reduced(co, duals, F)
        kkt = kkt_residual_reduced(Y, duals, aux, F, ch)
        return HfpiResult(None, duals, it, kkt, ok, rho, nd, change, Y=Y)
    W = _beamform(ch.H, co, mu, Phi)
    kkt = kkt_residual(W, duals, aux, ch, Phi)
    return HfpiResult(W, duals, it, kkt, ok, rho, nd, change)
