"""Weighted-sum-rate beamforming for one-layer rate-splitting multiple access.

FP outer loop with a hyperplane fixed-point dual iteration inside; see
``solvers`` for the entry points.
"""
from ._backend import BACKEND
from .channel_model import (ChannelRealization, CorrelationModel, ImperfectChannel,
                            sample_iid_rayleigh, sample_imperfect_csit)
from .hfpi import DualState, HfpiConfig, hfpi_solve
from .solvers import (OuterConfig, SolveReport, fp_hfpi_solve, fp_hfpi_solve_imperfect,
                      fp_reference_solve, rfp_hfpi_solve, solve)

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "ChannelRealization", "CorrelationModel", "ImperfectChannel",
    "sample_iid_rayleigh", "sample_imperfect_csit", "DualState", "HfpiConfig",
    "hfpi_solve", "OuterConfig", "SolveReport", "fp_hfpi_solve", "fp_hfpi_solve_imperfect",
    "fp_reference_solve", "rfp_hfpi_solve", "solve",
]
