"""SINRs, rates, common-rate allocation, WSR and power.

Beamformers are plain complex arrays ``W`` of shape (L, K+1); column 0 is
the common stream. ``BeamformingMatrix`` is a thin named wrapper used in
reports.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .channel_model import ChannelRealization, ImperfectChannel
from .errors import FeasibilityError, ParameterError, StructuralError

FEAS_RTOL = 1e-8
LN2 = np.log(2.0)


@dataclass
class BeamformingMatrix:
    W: np.ndarray

    @property
    def common(self) -> np.ndarray:
        return self.W[:, 0]

    @property
    def private(self) -> np.ndarray:
        return self.W[:, 1:]


@dataclass
class RateProfile:
    common_rates: np.ndarray
    private_rates: np.ndarray
    log_base: str = "natural"

    def __post_init__(self):
        if self.log_base not in ("natural", "base2"):
            raise ParameterError("log_base must be 'natural' or 'base2'")

    def to(self, base: str) -> "RateProfile":
        if base == self.log_base:
            return self
        f = 1 / LN2 if base == "base2" else LN2
        return RateProfile(self.common_rates * f, self.private_rates * f, base)


@dataclass
class CommonAllocation:
    c: np.ndarray


def as_array(W) -> np.ndarray:
    return np.asarray(W.W if isinstance(W, BeamformingMatrix) else W, dtype=complex)


def _check(W: np.ndarray, H: np.ndarray) -> None:
    L, K = H.shape
    if W.shape != (L, K + 1):
        raise StructuralError(f"W has shape {W.shape}, expected {(L, K + 1)}")


def error_quadratics(W: np.ndarray, Phi: np.ndarray) -> np.ndarray:
    """E[k, j] = w_j^H Phi_k w_j."""
    return np.einsum("lj,klm,mj->kj", W.conj(), Phi, W).real


def stream_terms(G: np.ndarray, noise: np.ndarray, E: Optional[np.ndarray] = None):
    """Signal and interference-plus-noise powers from G = H^H W.

    Returns ``(s0, i0, sp, ip)``, each of shape (K,).
    """
    A = np.abs(G) ** 2
    Ap = A[:, 1:]
    s0 = A[:, 0]
    sp = np.diag(Ap).copy()
    off = Ap.copy()
    np.fill_diagonal(off, 0.0)
    i0 = Ap.sum(axis=1) + noise
    ip = off.sum(axis=1) + noise
    if E is not None:
        i0 = i0 + E.sum(axis=1)
        ip = ip + E[:, 1:].sum(axis=1)
    return s0, i0, sp, ip


def sinr_all(W, ch: ChannelRealization, Phi: Optional[np.ndarray] = None):
    """(gamma_common, gamma_private) for every user."""
    W = as_array(W)
    _check(W, ch.H)
    G = ch.H.conj().T @ W
    E = None if Phi is None else error_quadratics(W, Phi)
    s0, i0, sp, ip = stream_terms(G, ch.noise_powers, E)
    return s0 / i0, sp / ip


def sinr(W, ch: ChannelRealization, stream: int, user: int) -> float:
    """SINR of stream ``stream`` (0 common, k private) at user ``user`` (0-based).

    Private streams are numbered 1..K to match columns of W.
    """
    g0, gp = sinr_all(W, ch)
    if stream == 0:
        return float(g0[user])
    if stream - 1 != user:
        raise StructuralError("private stream k is decoded only by user k")
    return float(gp[user])


def _profile(g0, gp, log_base):
    rp = RateProfile(np.log1p(g0), np.log1p(gp), "natural")
    return rp.to(log_base)


def rate_profile(W, ch: ChannelRealization, log_base: str = "natural") -> RateProfile:
    return _profile(*sinr_all(W, ch), log_base)


def lower_bound_rate_profile(W, imch: ImperfectChannel, noise_powers,
                             log_base: str = "natural") -> RateProfile:
    """Rates with estimation error treated as extra noise."""
    W = as_array(W)
    _check(W, imch.H_hat)
    noise = np.broadcast_to(np.asarray(noise_powers, float), (imch.K,))
    G = imch.H_hat.conj().T @ W
    E = error_quadratics(W, imch.error_covariances)
    s0, i0, sp, ip = stream_terms(G, noise, E)
    return _profile(s0 / i0, sp / ip, log_base)


def optimal_common_allocation(rates: RateProfile, weights) -> CommonAllocation:
    """All of min_k r0k to the largest weight (first index on ties)."""
    r0 = np.asarray(rates.common_rates, float)
    w = np.asarray(weights, float)
    c = np.zeros_like(r0)
    c[int(np.argmax(w))] = r0.min()
    return CommonAllocation(c)


def wsr_from_rates(rates: RateProfile, c: CommonAllocation, weights) -> float:
    w = np.asarray(weights, float)
    cap = rates.common_rates.min()
    cc = np.asarray(c.c, float)
    if np.any(cc < 0) or cc.sum() > cap + FEAS_RTOL * max(1.0, abs(cap)):
        raise FeasibilityError("common allocation exceeds the common-rate cap")
    return float(w @ (cc + rates.private_rates))


def wsr(W, c: CommonAllocation, ch: ChannelRealization) -> float:
    return wsr_from_rates(rate_profile(W, ch), c, ch.weights)


def optimal_wsr(W, ch: ChannelRealization, Phi: Optional[np.ndarray] = None) -> float:
    """WSR in nats with the closed-form common allocation."""
    g0, gp = sinr_all(W, ch, Phi)
    return wsr_value(np.log1p(g0), np.log1p(gp), ch.weights)


def wsr_value(r0, rp, weights) -> float:
    return float(np.max(weights) * np.min(r0) + weights @ rp)


def transmit_power(W) -> float:
    W = as_array(W)
    return float(np.vdot(W, W).real)
