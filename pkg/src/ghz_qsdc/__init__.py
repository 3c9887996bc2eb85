"""Simulator for three-party secure direct communication over shared GHZ
states via entanglement swapping."""
from .quantum_core import BellOutcome, DensityMatrix, GhzLabel, PauliOp, StateVector
from .swap_algebra import OpPair, decode, decompose
from .protocol import (
    EncodingScheme,
    Party,
    SessionConfig,
    Transcript,
    run_keygen_subprotocol,
    run_qkd_session,
    run_qsdc_session,
    scheme_from_index,
)
from .security import GhzDiagonal, StabilizerRates, diagonal_from_rates, rates_from_diagonal, twirl, yields

__version__ = "0.1.0"
