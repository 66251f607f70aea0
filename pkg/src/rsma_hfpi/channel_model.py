"""Problem instances: Rayleigh channels, one-ring correlation, imperfect CSIT.

All sampling goes through ``numpy.random.default_rng(seed)`` (PCG64), which
is portable across platforms for a given numpy major version.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy import integrate
from scipy.linalg import toeplitz

from .errors import ParameterError, StructuralError

HERMITIAN_TOL = 1e-10


def _broadcast_positive(value, K: int, name: str) -> np.ndarray:
    arr = np.broadcast_to(np.asarray(value, dtype=float), (K,)).copy()
    if not np.all(np.isfinite(arr)) or np.any(arr <= 0):
        raise ParameterError(f"{name} must be positive and finite")
    return arr


@dataclass
class ChannelRealization:
    """One problem instance.

    Attributes
    ----------
    H : ndarray, shape (L, K)
        Column ``k`` is the channel of user ``k``.
    noise_powers, weights : ndarray, shape (K,)
    power_budget : float
    """

    H: np.ndarray
    noise_powers: np.ndarray
    weights: np.ndarray
    power_budget: float

    def __post_init__(self):
        H = np.asarray(self.H, dtype=complex)
        if H.ndim != 2 or min(H.shape) < 1:
            raise StructuralError("H must be a nonempty L x K matrix")
        if not np.all(np.isfinite(H)):
            raise ParameterError("H contains non-finite entries")
        self.H = H
        K = H.shape[1]
        self.noise_powers = _broadcast_positive(self.noise_powers, K, "noise_powers")
        self.weights = _broadcast_positive(self.weights, K, "weights")
        P = float(self.power_budget)
        if not np.isfinite(P) or P <= 0:
            raise ParameterError("power_budget must be positive")
        self.power_budget = P

    @property
    def L(self) -> int:
        return self.H.shape[0]

    @property
    def K(self) -> int:
        return self.H.shape[1]


@dataclass
class CorrelationModel:
    """One-ring parameters for a uniform linear array.

    ``eigen_floor`` is relative to the largest eigenvalue of each covariance.
    """

    mean_angles: np.ndarray
    angle_spread: float = np.pi / 18
    antenna_spacing: float = 0.5
    eigen_floor: float = 1e-8

    def __post_init__(self):
        self.mean_angles = np.atleast_1d(np.asarray(self.mean_angles, dtype=float))
        if self.angle_spread <= 0:
            raise ParameterError("angle_spread must be positive")
        if self.antenna_spacing <= 0:
            raise ParameterError("antenna_spacing must be positive")
        if self.eigen_floor < 0:
            raise ParameterError("eigen_floor must be nonnegative")


@dataclass
class ImperfectChannel:
    """Channel estimate plus per-user error covariances ``Phi[k]`` (L x L)."""

    H_hat: np.ndarray
    error_covariances: np.ndarray
    kappa: float
    H_true: Optional[np.ndarray] = field(default=None)

    def __post_init__(self):
        self.H_hat = np.asarray(self.H_hat, dtype=complex)
        Phi = np.asarray(self.error_covariances, dtype=complex)
        L, K = self.H_hat.shape
        if Phi.shape != (K, L, L):
            raise StructuralError(f"error_covariances must have shape {(K, L, L)}")
        self.error_covariances = Phi
        if not 0.0 <= self.kappa <= 1.0:
            raise ParameterError("kappa must lie in [0, 1]")
        if self.H_true is not None:
            self.H_true = np.asarray(self.H_true, dtype=complex)
            if self.H_true.shape != (L, K):
                raise StructuralError("H_true shape differs from H_hat")

    @property
    def L(self) -> int:
        return self.H_hat.shape[0]

    @property
    def K(self) -> int:
        return self.H_hat.shape[1]

    def estimate_problem(self, noise_powers, weights, power_budget) -> ChannelRealization:
        """The estimate viewed as a perfect-CSIT instance (errors dropped)."""
        return ChannelRealization(self.H_hat, noise_powers, weights, power_budget)

    def true_problem(self, noise_powers, weights, power_budget) -> ChannelRealization:
        if self.H_true is None:
            raise ParameterError("no true channel stored")
        return ChannelRealization(self.H_true, noise_powers, weights, power_budget)


def _cscg(rng: np.random.Generator, shape) -> np.ndarray:
    # unit variance: real and imaginary parts each with variance 1/2
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def sample_iid_rayleigh(L: int, K: int, noise_powers=1.0, weights=1.0,
                        power_budget: float = 100.0, seed: int = 0) -> ChannelRealization:
    """Draw H with i.i.d. CN(0, 1) entries."""
    if int(L) != L or int(K) != K or L < 1 or K < 1:
        raise ParameterError("L and K must be positive integers")
    rng = np.random.default_rng(seed)
    H = _cscg(rng, (int(L), int(K)))
    return ChannelRealization(H, noise_powers, weights, power_budget)


def _one_ring_lag(d: int, theta: float, spread: float, spacing: float) -> complex:
    if d == 0:
        return 1.0 + 0.0j
    w = 2 * np.pi * spacing * d
    re, _ = integrate.quad(lambda t: np.cos(w * np.sin(t)), theta - spread, theta + spread,
                           epsabs=1e-10, epsrel=1e-12, limit=200)
    im, _ = integrate.quad(lambda t: np.sin(w * np.sin(t)), theta - spread, theta + spread,
                           epsabs=1e-10, epsrel=1e-12, limit=200)
    return complex(re, im) / (2 * spread)


def build_one_ring_covariance(params: CorrelationModel, L: int, k: int) -> np.ndarray:
    """Toeplitz covariance R[m, n] averaged over angles theta_k +- spread."""
    if L < 1:
        raise ParameterError("L must be positive")
    if not 0 <= k < len(params.mean_angles):
        raise ParameterError(f"user index {k} out of range")
    theta = params.mean_angles[k]
    col = np.array([_one_ring_lag(d, theta, params.angle_spread, params.antenna_spacing)
                    for d in range(L)])
    # toeplitz(c) with a single complex argument uses conj(c) for the first row
    return toeplitz(col)


def steering_vector(L: int, theta: float, spacing: float = 0.5) -> np.ndarray:
    return np.exp(1j * 2 * np.pi * spacing * np.arange(L) * np.sin(theta))


def karhunen_loeve_factor(R: np.ndarray, eigen_floor: Optional[float] = None):
    """Eigen-factor a Hermitian PSD matrix, dropping eigenvalues <= floor.

    Parameters
    ----------
    R : ndarray (L, L)
    eigen_floor : float, optional
        Absolute threshold. Default is ``1e-8 * max eigenvalue``.

    Returns
    -------
    U : ndarray (L, r)
    lam : ndarray (r,)
    """
    R = np.asarray(R, dtype=complex)
    if R.ndim != 2 or R.shape[0] != R.shape[1]:
        raise StructuralError("R must be square")
    scale = max(1.0, np.max(np.abs(R)))
    if np.max(np.abs(R - R.conj().T)) > HERMITIAN_TOL * scale:
        raise StructuralError("R is not Hermitian")
    lam, U = np.linalg.eigh(0.5 * (R + R.conj().T))
    if eigen_floor is None:
        eigen_floor = 1e-8 * max(lam.max(), 0.0)
    keep = lam > eigen_floor
    order = np.argsort(lam[keep])[::-1]
    return U[:, keep][:, order], lam[keep][order]


def one_ring_factors(params: CorrelationModel, L: int) -> list:
    """(U, lam) per user for the one-ring model."""
    out = []
    for k in range(len(params.mean_angles)):
        R = build_one_ring_covariance(params, L, k)
        floor = params.eigen_floor * np.linalg.eigvalsh(R).max()
        out.append(karhunen_loeve_factor(R, floor))
    return out


def sample_imperfect_csit(model: Sequence, kappa: float, seed: int = 0) -> ImperfectChannel:
    """Sample true channels and quantized estimates from per-user (U, lam).

    ``h = U lam^(1/2) g`` and ``h_hat = U lam^(1/2) (sqrt(1-kappa^2) g + kappa g_e)``.
    """
    if not 0.0 <= kappa <= 1.0:
        raise ParameterError("kappa must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    L = np.asarray(model[0][0]).shape[0]
    K = len(model)
    s = np.sqrt(1.0 - kappa ** 2)
    H = np.empty((L, K), complex)
    Hh = np.empty((L, K), complex)
    Phi = np.empty((K, L, L), complex)
    for k, (U, lam) in enumerate(model):
        U = np.asarray(U, dtype=complex)
        root = U * np.sqrt(np.asarray(lam, dtype=float))
        g = _cscg(rng, root.shape[1])
        ge = _cscg(rng, root.shape[1])
        H[:, k] = root @ g
        Hh[:, k] = root @ (s * g + kappa * ge)
        Phi[k] = (2.0 - 2.0 * s) * (root @ root.conj().T)
    return ImperfectChannel(Hh, Phi, float(kappa), H)


# --- channel dump: JSON lines, one realization per line ---------------------

def dump_channels(path, records: Iterable) -> None:
    """Write ``(seed, H)`` pairs as JSON lines.

    Each line holds ``{"L", "K", "seed", "H"}`` where ``H`` lists the entries
    row-major as ``[re, im]`` pairs.
    """
    with open(path, "w", encoding="utf-8") as fh:
        for seed, H in records:
            H = np.asarray(H, dtype=complex)
            rec = {"L": H.shape[0], "K": H.shape[1], "seed": int(seed),
                   "H": [[float(z.real), float(z.imag)] for z in H.ravel(order="C")]}
            fh.write(json.dumps(rec) + "\n")


def load_channels(path) -> list:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            flat = np.array([complex(a, b) for a, b in rec["H"]])
            if flat.size != rec["L"] * rec["K"]:
                raise StructuralError("channel dump entry count mismatch")
            out.append((rec["seed"], flat.reshape(rec["L"], rec["K"])))
    return out
