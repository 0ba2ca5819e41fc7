"""Log-gamma polymer, its geometric RSK line ensemble and the single-curve Gibbs measures."""

from .gibbs import BoundaryData, GridError, LineEnsemble
from .kpz_constants import KpzConstants, kpz_report
from .numerics import ConvergenceError, DomainError, RngStream
from .polymer import DisorderMatrix, log_partition, sample_disorder
from .rsk_chain import ZTriangle, run_chain, run_chain_batch

__all__ = [
    "BoundaryData",
    "ConvergenceError",
    "DisorderMatrix",
    "DomainError",
    "GridError",
    "KpzConstants",
    "LineEnsemble",
    "RngStream",
    "ZTriangle",
    "kpz_report",
    "log_partition",
    "run_chain",
    "run_chain_batch",
    "sample_disorder",
]
