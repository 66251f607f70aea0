"""Fractional-programming surrogates and their closed-form auxiliaries.

Every function takes an optional ``Phi`` stack (K, L, L) of channel-error
covariances; with ``Phi`` the estimate-based lower-bound rates are used and
``ch.H`` is read as the estimate.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .channel_model import ChannelRealization
from .rsma_core import as_array, error_quadratics, stream_terms


@dataclass
class AuxiliaryState:
    alpha_common: np.ndarray
    alpha_private: np.ndarray
    beta_common: np.ndarray
    beta_private: np.ndarray

    def __post_init__(self):
        for name in ("alpha_common", "alpha_private"):
            a = np.asarray(getattr(self, name), float)
            assert np.all(np.isfinite(a)) and np.all(a >= 0), name
            setattr(self, name, a)
        self.beta_common = np.asarray(self.beta_common, complex)
        self.beta_private = np.asarray(self.beta_private, complex)

    def arrays(self):
        return self.alpha_common, self.alpha_private, self.beta_common, self.beta_private


def _terms(W, ch, Phi):
    W = as_array(W)
    G = ch.H.conj().T @ W
    E = None if Phi is None else error_quadratics(W, Phi)
    return G, stream_terms(G, ch.noise_powers, E)


def alpha_from_terms(terms):
    s0, i0, sp, ip = terms
    return s0 / i0, sp / ip


def beta_from_terms(G, terms, a0, ap):
    s0, i0, sp, ip = terms
    K = G.shape[0]
    gp = G[np.arange(K), np.arange(1, K + 1)]
    b0 = np.sqrt(1 + a0) * G[:, 0] / (i0 + s0)
    bp = np.sqrt(1 + ap) * gp / (ip + sp)
    return b0, bp


def g_from_terms(G, terms, aux: AuxiliaryState):
    a0, ap, b0, bp = aux.arrays()
    s0, i0, sp, ip = terms
    K = G.shape[0]
    gp = G[np.arange(K), np.arange(1, K + 1)]
    g0 = (2 * np.sqrt(1 + a0) * np.real(b0.conj() * G[:, 0])
          - np.abs(b0) ** 2 * (i0 + s0) + np.log1p(a0) - a0)
    gk = (2 * np.sqrt(1 + ap) * np.real(bp.conj() * gp)
          - np.abs(bp) ** 2 * (ip + sp) + np.log1p(ap) - ap)
    return g0, gk


def aux_from_gram(G, noise, E=None) -> AuxiliaryState:
    """Tight auxiliaries given G = H^H W (used by the reduced path too)."""
    terms = stream_terms(G, noise, E)
    a0, ap = alpha_from_terms(terms)
    b0, bp = beta_from_terms(G, terms, a0, ap)
    return AuxiliaryState(a0, ap, b0, bp)


def update_alpha(W, ch: ChannelRealization, Phi: Optional[np.ndarray] = None):
    """alpha* equals the (lower-bound) SINR of each stream."""
    _, terms = _terms(W, ch, Phi)
    return alpha_from_terms(terms)


def update_beta(W, alpha, ch: ChannelRealization, Phi: Optional[np.ndarray] = None):
    a0, ap = (np.asarray(a, float) for a in alpha)
    G, terms = _terms(W, ch, Phi)
    return beta_from_terms(G, terms, a0, ap)


def tight_aux(W, ch: ChannelRealization, Phi: Optional[np.ndarray] = None) -> AuxiliaryState:
    a0, ap = update_alpha(W, ch, Phi)
    b0, bp = update_beta(W, (a0, ap), ch, Phi)
    return AuxiliaryState(a0, ap, b0, bp)


def surrogate_g(W, aux: AuxiliaryState, ch: ChannelRealization,
                Phi: Optional[np.ndarray] = None):
    """Quadratic-transform surrogates ``(g_common, g_private)``, shape (K,) each."""
    G, terms = _terms(W, ch, Phi)
    return g_from_terms(G, terms, aux)


def surrogate_f(W, alpha, ch: ChannelRealization, Phi: Optional[np.ndarray] = None):
    """Lagrangian-dual-transform surrogates ``(f_common, f_private)``."""
    gam0, gamp = update_alpha(W, ch, Phi)
    out = []
    for a, g in zip(alpha, (gam0, gamp)):
        a = np.asarray(a, float)
        out.append(np.log1p(a) - a + (1 + a) * g / (1 + g))
    return tuple(out)


def surrogate_objective(W, aux: AuxiliaryState, ch: ChannelRealization,
                        Phi: Optional[np.ndarray] = None) -> float:
    """max(delta) * min_k g0k + sum_k delta_k gkk."""
    g0, gk = surrogate_g(W, aux, ch, Phi)
    d = ch.weights
    return float(d.max() * g0.min() + d @ gk)
