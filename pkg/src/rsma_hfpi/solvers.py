"""Outer FP loops: FP-HFPI, its reduced and "-s" variants, the oracle-based
reference loop and the imperfect-CSIT driver.

Every outer iteration refreshes the auxiliaries at the current beamformer,
solves the convex subproblem, rescales the result onto the power sphere and
accepts it only if the WSR did not drop. A non-ascending step is first
retried with a tighter inner tolerance (warm-started); if that still fails
the previous beamformer is kept and the loop ends.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from typing import Callable, List, Optional

import numpy as np

from .channel_model import ChannelRealization, ImperfectChannel
from .errors import ParameterError
from .fp_transform import aux_from_gram
from .hfpi import (DualState, HfpiConfig, KktResidual, hfpi_solve, initial_duals)
from .oracle import OracleConfig, subproblem_oracle_solve
from .rsma_core import (CommonAllocation, RateProfile, error_quadratics,
                        optimal_common_allocation, optimal_wsr, stream_terms)

VARIANTS = ("fp_hfpi", "fp_hfpi_s", "rfp_hfpi", "rfp_hfpi_s", "fp_reference")


@dataclass
class OuterConfig:
    eps1: float = 1e-4
    max_outer_iters: int = 500
    variant: str = "fp_hfpi"
    hfpi: HfpiConfig = field(default_factory=HfpiConfig)
    init_policy: str = "mrt_split"
    seed: int = 0
    oracle: OracleConfig = field(default_factory=OracleConfig)
    W_init: Optional[np.ndarray] = None  # used by init_policy="user_supplied"
    retry_factor: float = 1e-3
    min_eps2: float = 1e-12

    def __post_init__(self):
        if self.eps1 <= 0:
            raise ParameterError("eps1 must be positive")
        if self.variant not in VARIANTS:
            raise ParameterError(f"unknown variant {self.variant!r}")
        if self.init_policy not in ("mrt_split", "random", "user_supplied"):
            raise ParameterError(f"unknown init policy {self.init_policy!r}")

    def inner_config(self, weights) -> HfpiConfig:
        if self.variant.endswith("_s"):
            return replace(self.hfpi, eps2=2.0 * float(np.max(weights)))
        return self.hfpi


@dataclass
class SolveReport:
    variant: str
    wsr_trajectory: np.ndarray  # nats, entry 0 is the initial point
    final_wsr: float
    final_W: np.ndarray
    final_allocation: CommonAllocation
    final_duals: Optional[DualState]
    outer_iters: int
    total_inner_iters: int
    wall_time: float
    final_kkt: Optional[KktResidual]
    power_used: float
    converged: bool
    inner_iters_trajectory: List[int] = field(default_factory=list)
    power_trajectory: List[float] = field(default_factory=list)
    kkt_history: List[KktResidual] = field(default_factory=list)
    retries: int = 0
    rejected_steps: int = 0
    inner_cap_hits: int = 0
    rho_doublings: int = 0
    true_channel_wsr: Optional[float] = None

    @property
    def final_wsr_bits(self) -> float:
        return self.final_wsr / np.log(2.0)


def initialize_beamformers(ch: ChannelRealization, P_t: Optional[float] = None,
                           policy: str = "mrt_split", seed: int = 0,
                           W: Optional[np.ndarray] = None) -> np.ndarray:
    """Starting beamformer with total power exactly P_t."""
    P = ch.power_budget if P_t is None else float(P_t)
    H = ch.H
    L, K = H.shape
    if policy == "mrt_split":
        U, _, _ = np.linalg.svd(H, full_matrices=False)
        out = np.empty((L, K + 1), complex)
        out[:, 0] = U[:, 0] * np.sqrt(P / 2)
        out[:, 1:] = H / np.linalg.norm(H, axis=0) * np.sqrt(P / (2 * K))
        return out
    if policy == "random":
        rng = np.random.default_rng(seed)
        out = (rng.standard_normal((L, K + 1)) + 1j * rng.standard_normal((L, K + 1))) / np.sqrt(2)
        return out * np.sqrt(P / np.vdot(out, out).real)
    if policy == "user_supplied":
        if W is None:
            raise ParameterError("user_supplied policy needs W")
        W = np.asarray(W, complex)
        if W.shape != (L, K + 1):
            raise ParameterError("initial W has the wrong shape")
        return W.copy()
    raise ParameterError(f"unknown init policy {policy!r}")


# --- geometry of the iterate: full W or coefficients Y with W = H Y -----------

class _Full:
    def __init__(self, ch, Phi=None):
        self.ch, self.Phi = ch, Phi

    def gram(self, X):
        return self.ch.H.conj().T @ X

    def power(self, X, G):
        return float(np.vdot(X, X).real)

    def errors(self, X):
        return None if self.Phi is None else error_quadratics(X, self.Phi)

    def to_W(self, X):
        return X


class _Reduced(_Full):
    def __init__(self, ch):
        super().__init__(ch)
        self.F = ch.H.conj().T @ ch.H

    def gram(self, X):
        return self.F @ X

    def power(self, X, G):
        return float(np.vdot(X, G).real)

    def to_W(self, X):
        return self.ch.H @ X


def _rates(geom, X):
    G = geom.gram(X)
    s0, i0, sp, ip = stream_terms(G, geom.ch.noise_powers, geom.errors(X))
    return G, RateProfile(np.log1p(s0 / i0), np.log1p(sp / ip))


def _wsr(rates: RateProfile, w) -> float:
    return float(w.max() * rates.common_rates.min() + w @ rates.private_rates)


def _outer(ch: ChannelRealization, config: OuterConfig, geom, X0, inner: Callable,
           variant: str) -> SolveReport:
    w = ch.weights
    P = ch.power_budget
    X = X0
    G, rates = _rates(geom, X)
    current = _wsr(rates, w)
    traj = [current]
    inner_traj, power_traj, kkts = [], [geom.power(X, G)], []
    total_inner = retries = rejected = caps = doublings = 0
    state = None
    last = None
    converged = False
    t0 = time.perf_counter()
    n = 0
    for n in range(1, config.max_outer_iters + 1):
        aux = aux_from_gram(G, ch.noise_powers, geom.errors(X))
        res, Xn, tol = inner(aux, state, None)
        spent = res.iterations
        caps += not res.converged
        Gn, rn = _rates(geom, Xn)
        value = _wsr(rn, w)
        while value < current and tol > config.min_eps2:
            tol = max(tol * config.retry_factor, config.min_eps2)
            res, Xn, tol = inner(aux, res.state, tol)
            spent += res.iterations
            caps += not res.converged
            retries += 1
            Gn, rn = _rates(geom, Xn)
            value = _wsr(rn, w)
        total_inner += spent
        doublings += res.doublings
        if res.kkt is not None:
            kkts.append(res.kkt)
        if value < current:
            rejected += 1
            traj.append(current)
            inner_traj.append(spent)
            power_traj.append(geom.power(X, G))
            converged = True
            break
        X, G, state, last = Xn, Gn, res.state, res
        previous, current = current, value
        traj.append(current)
        inner_traj.append(spent)
        power_traj.append(geom.power(X, G))
        if abs(current - previous) < config.eps1:
            converged = True
            break
    wall = time.perf_counter() - t0
    _, rates = _rates(geom, X)
    W = geom.to_W(X)
    return SolveReport(
        variant=variant,
        wsr_trajectory=np.array(traj),
        final_wsr=current,
        final_W=W,
        final_allocation=optimal_common_allocation(rates, w),
        final_duals=None if last is None else last.duals,
        outer_iters=n,
        total_inner_iters=total_inner,
        wall_time=wall,
        final_kkt=None if last is None else last.kkt,
        power_used=power_traj[-1],
        converged=converged and caps == 0,
        inner_iters_trajectory=inner_traj,
        power_trajectory=power_traj,
        kkt_history=kkts,
        retries=retries,
        rejected_steps=rejected,
        inner_cap_hits=caps,
        rho_doublings=doublings,
    )


@dataclass
class _InnerOut:
    iterations: int
    converged: bool
    state: object
    kkt: Optional[KktResidual]
    duals: Optional[DualState]
    doublings: int = 0


def _to_sphere(X, power, P):
    return X * np.sqrt(P / power) if power > 0 else X


def _hfpi_inner(ch, cfg: HfpiConfig, geom, Phi=None, reduced=False):
    P = ch.power_budget

    def inner(aux, duals, tol):
        d0 = initial_duals(ch.weights, P) if duals is None else duals
        c = cfg if tol is None else replace(cfg, eps2=tol)
        r = hfpi_solve(aux, ch, d0, c, Phi=Phi, F=geom.F if reduced else None)
        X = r.Y if reduced else r.W
        X = _to_sphere(X, geom.power(X, geom.gram(X)), P)
        out = _InnerOut(r.iterations, r.converged, r.duals, r.kkt, r.duals, r.rho_doublings)
        return out, X, c.eps2
    return inner


def _oracle_inner(ch, cfg: OracleConfig, geom, Phi=None):
    P = ch.power_budget

    def inner(aux, pi, tol):
        c = cfg if tol is None else replace(cfg, tol=tol)
        r = subproblem_oracle_solve(aux, ch, config=c, Phi=Phi, pi0=pi)
        X = _to_sphere(r.W, geom.power(r.W, None), P)
        return _InnerOut(r.iterations, r.converged, r.pi, None, None), X, c.tol
    return inner


def fp_hfpi_solve(ch: ChannelRealization, config: OuterConfig = OuterConfig()) -> SolveReport:
    """FP outer loop with the HFPI inner solver (variants fp_hfpi, fp_hfpi_s)."""
    W0 = initialize_beamformers(ch, policy=config.init_policy, seed=config.seed, W=config.W_init)
    geom = _Full(ch)
    cfg = config.inner_config(ch.weights)
    variant = config.variant if config.variant in ("fp_hfpi", "fp_hfpi_s") else "fp_hfpi"
    return _outer(ch, config, geom, W0, _hfpi_inner(ch, cfg, geom), variant)


def rfp_hfpi_solve(ch: ChannelRealization, config: OuterConfig = OuterConfig()) -> SolveReport:
    """Same loop in the K-dimensional coefficient space W = H Y."""
    W0 = initialize_beamformers(ch, policy=config.init_policy, seed=config.seed, W=config.W_init)
    geom = _Reduced(ch)
    Y0 = np.linalg.lstsq(ch.H, W0, rcond=None)[0]
    cfg = config.inner_config(ch.weights)
    variant = "rfp_hfpi_s" if config.variant.endswith("_s") else "rfp_hfpi"
    return _outer(ch, config, geom, Y0, _hfpi_inner(ch, cfg, geom, reduced=True), variant)


def fp_reference_solve(ch: ChannelRealization, config: OuterConfig = OuterConfig()) -> SolveReport:
    """FP outer loop with the subproblem solved by the independent oracle."""
    W0 = initialize_beamformers(ch, policy=config.init_policy, seed=config.seed, W=config.W_init)
    geom = _Full(ch)
    return _outer(ch, config, geom, W0, _oracle_inner(ch, config.oracle, geom), "fp_reference")


def fp_hfpi_solve_imperfect(imch: ImperfectChannel, noise_powers, weights, P_t: float,
                            config: OuterConfig = OuterConfig()) -> SolveReport:
    """FP-HFPI on the lower-bound rates of the channel estimate."""
    ch = imch.estimate_problem(noise_powers, weights, P_t)
    Phi = imch.error_covariances
    W0 = initialize_beamformers(ch, policy=config.init_policy, seed=config.seed, W=config.W_init)
    geom = _Full(ch, Phi)
    cfg = config.inner_config(ch.weights)
    variant = "fp_hfpi_s" if config.variant.endswith("_s") else "fp_hfpi"
    rep = _outer(ch, config, geom, W0, _hfpi_inner(ch, cfg, geom, Phi=Phi), variant)
    if imch.H_true is not None:
        rep.true_channel_wsr = optimal_wsr(rep.final_W, imch.true_problem(noise_powers, weights, P_t))
    return rep


def solve(ch: ChannelRealization, config: OuterConfig) -> SolveReport:
    """Dispatch on ``config.variant``."""
    v = config.variant
    if v in ("fp_hfpi", "fp_hfpi_s"):
        return fp_hfpi_solve(ch, config)
    if v in ("rfp_hfpi", "rfp_hfpi_s"):
        return rfp_hfpi_solve(ch, config)
    return fp_reference_solve(ch, config)
