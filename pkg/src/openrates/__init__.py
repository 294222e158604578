"""Escape rates, extremal indices and hitting-time statistics of open dynamical systems."""

from .maps import Hole, IntervalMap, doubling, golden, tent, times_d
from .transfer import SpectralTriple, TransferMatrix, UlamGrid, leading_triple

__all__ = ["Hole", "IntervalMap", "SpectralTriple", "TransferMatrix", "UlamGrid", "doubling", "golden",
           "leading_triple", "tent", "times_d"]
__version__ = "0.1.0"
