"""Channel certification: twirling, stabilizer statistics and hashing yields.

GHZ-diagonal states are stored by label index ``4p + 2 i1 + i2``.  The seven
non-trivial stabilizer elements are kept in the order

    XXX, ZZI, ZIZ, -YYX, IZZ, -YXY, -XYY

so that ``s[0]..s[6]`` line up with the closed-form inversion used in
:func:`diagonal_from_rates`.  Each element is a product of generators; its
``mask`` picks the label bits whose parity gives its eigenvalue.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import reduce
from typing import Callable

import numpy as np

from .quantum_core import DensityMatrix, GhzLabel, QuantumCoreError, ghz_basis_matrix

ATOL = 1e-12
RATE_TOL = 1e-10

_PAULI = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}
# basis change taking each Pauli's eigenbasis to the computational one
_TO_Z_BASIS = {
    "I": np.eye(2, dtype=complex),
    "Z": np.eye(2, dtype=complex),
    "X": np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2),
    "Y": np.array([[1, -1j], [1, 1j]], dtype=complex) / np.sqrt(2),
}


class SecurityError(ValueError):
    """Invalid input to a channel-certification routine."""


class InconsistentRates(SecurityError):
    """Stabilizer error rates that no GHZ-diagonal state can produce."""


@dataclass(frozen=True)
class StabilizerObservable:
    name: str
    paulis: str
    sign: int
    mask: tuple[int, int, int]

    @property
    def matrix(self) -> np.ndarray:
        return self.sign * reduce(np.kron, (_PAULI[c] for c in self.paulis))

    def eigenvalue(self, label: GhzLabel) -> int:
        parity = sum(m * b for m, b in zip(self.mask, label.bits)) % 2
        return -1 if parity else 1


STABILIZERS = (
    StabilizerObservable("XXX", "XXX", 1, (1, 0, 0)),
    StabilizerObservable("ZZI", "ZZI", 1, (0, 1, 0)),
    StabilizerObservable("ZIZ", "ZIZ", 1, (0, 0, 1)),
    StabilizerObservable("-YYX", "YYX", -1, (1, 1, 0)),
    StabilizerObservable("IZZ", "IZZ", 1, (0, 1, 1)),
    StabilizerObservable("-YXY", "YXY", -1, (1, 0, 1)),
    StabilizerObservable("-XYY", "XYY", -1, (1, 1, 1)),
)
GENERATORS = STABILIZERS[:3]

# Rows p000, p100, p011, p111, p010, p110, p001, p101; columns s1..s7.
_ROW_LABELS = ("000", "100", "011", "111", "010", "110", "001", "101")
_RATE_COEFFS = np.array(
    [
        [-1, -1, -1, -1, -1, -1, -1],
        [1, -1, -1, 1, -1, 1, 1],
        [-1, 1, 1, 1, -1, 1, -1],
        [1, 1, 1, -1, -1, -1, 1],
        [-1, 1, -1, 1, 1, -1, 1],
        [1, 1, -1, -1, 1, 1, -1],
        [-1, -1, 1, -1, 1, 1, 1],
        [1, -1, 1, 1, 1, -1, -1],
    ],
    dtype=float,
) / 4.0
_RATE_OFFSET = np.array([1, 0, 0, 0, 0, 0, 0, 0], dtype=float)
_ROW_TO_INDEX = [int(bits, 2) for bits in _ROW_LABELS]


def _label_key(index: int) -> str:
    return "p" + format(index, "03b")


@dataclass(frozen=True, eq=False)
class GhzDiagonal:
    """Probabilities ``p[4p + 2 i1 + i2]`` of the eight GHZ basis states."""

    probs: np.ndarray

    def __post_init__(self) -> None:
        probs = np.asarray(self.probs, dtype=float).reshape(-1)
        if probs.size != 8:
            raise SecurityError(f"GHZ diagonal needs 8 entries, got {probs.size}")
        if probs.min() < 0.0:
            raise SecurityError("GHZ diagonal has a negative entry")
        if abs(probs.sum() - 1.0) > ATOL:
            raise SecurityError(f"GHZ diagonal sums to {probs.sum()!r}")
        probs = probs.copy()
        probs.setflags(write=False)
        object.__setattr__(self, "probs", probs)

    def __getitem__(self, label: GhzLabel | str) -> float:
        if isinstance(label, GhzLabel):
            return float(self.probs[label.index])
        return float(self.probs[int(label.removeprefix("p"), 2)])

    @classmethod
    def point(cls, label: GhzLabel) -> GhzDiagonal:
        probs = np.zeros(8)
        probs[label.index] = 1.0
        return cls(probs)

    @classmethod
    def uniform(cls) -> GhzDiagonal:
        return cls(np.full(8, 1 / 8))

    @classmethod
    def from_dict(cls, data: dict[str, float]) -> GhzDiagonal:
        """Missing keys default to zero."""
        unknown = set(data) - {_label_key(k) for k in range(8)}
        if unknown:
            raise SecurityError(f"unknown diagonal keys: {sorted(unknown)}")
        return cls([float(data.get(_label_key(k), 0.0)) for k in range(8)])

    def to_dict(self) -> dict[str, float]:
        return {_label_key(k): float(v) for k, v in enumerate(self.probs)}

    def joint(self) -> np.ndarray:
        """Probabilities as a ``(2, 2, 2)`` array over ``(b0, b1, b2)``."""
        return self.probs.reshape(2, 2, 2)

    def density_matrix(self) -> DensityMatrix:
        basis = ghz_basis_matrix()
        return DensityMatrix(basis @ np.diag(self.probs) @ basis.conj().T)


@dataclass(frozen=True)
class StabilizerRates:
    """Probabilities ``s1..s7`` of a -1 outcome for each non-trivial element."""

    s: tuple[float, ...]

    def __post_init__(self) -> None:
        s = tuple(float(v) for v in self.s)
        if len(s) != 7:
            raise SecurityError(f"expected 7 stabilizer rates, got {len(s)}")
        if any(not -RATE_TOL <= v <= 1 + RATE_TOL for v in s):
            raise InconsistentRates(f"rates outside [0, 1]: {s}")
        object.__setattr__(self, "s", s)

    def to_dict(self) -> dict[str, float]:
        return {f"s{k + 1}": v for k, v in enumerate(self.s)}


def ghz_diagonal_of(rho: DensityMatrix) -> GhzDiagonal:
    """Diagonal of a 3-qubit state in the GHZ basis."""
    if rho.dim != 8:
        raise SecurityError(f"expected an 8x8 density matrix, got {rho.dim}x{rho.dim}")
    basis = ghz_basis_matrix()
    diag = np.einsum("ik,ij,jk->k", basis.conj(), rho.matrix, basis).real
    diag = np.clip(diag, 0.0, None)
    return GhzDiagonal(diag / diag.sum())


_TWIRL_OPS = (np.eye(8, dtype=complex),) + tuple(s.matrix for s in STABILIZERS)


def twirl(rho: DensityMatrix) -> tuple[DensityMatrix, GhzDiagonal]:
    """Average ``rho`` over the stabilizer group.

    The result is GHZ-diagonal and keeps the GHZ-basis diagonal of ``rho``.
    """
    if rho.dim != 8:
        raise SecurityError(f"twirl needs a 3-qubit state, got dimension {rho.dim}")
    m = rho.matrix
    out = sum(g @ m @ g.conj().T for g in _TWIRL_OPS) / 8.0
    out = (out + out.conj().T) / 2
    twirled = DensityMatrix(out)
    return twirled, ghz_diagonal_of(twirled)


def rates_from_diagonal(d: GhzDiagonal) -> StabilizerRates:
    rates = []
    for element in STABILIZERS:
        rates.append(sum(d.probs[label.index] for label in GhzLabel if element.eigenvalue(label) == -1))
    return StabilizerRates(tuple(min(max(r, 0.0), 1.0) for r in rates))


def diagonal_from_rates(rates: StabilizerRates | tuple[float, ...]) -> GhzDiagonal:
    """Invert :func:`rates_from_diagonal` with the closed-form linear map."""
    s = np.asarray(rates.s if isinstance(rates, StabilizerRates) else rates, dtype=float)
    if s.size != 7:
        raise SecurityError(f"expected 7 stabilizer rates, got {s.size}")
    rows = _RATE_OFFSET + _RATE_COEFFS @ s
    if rows.min() < -RATE_TOL or rows.max() > 1 + RATE_TOL:
        raise InconsistentRates(f"rates {tuple(s)} give GHZ weights outside [0, 1]: {rows}")
    probs = np.zeros(8)
    probs[_ROW_TO_INDEX] = np.clip(rows, 0.0, 1.0)
    return GhzDiagonal(probs / probs.sum())


def entropy_bits(probs: np.ndarray) -> float:
    """Shannon entropy in bits; zero-probability entries contribute nothing."""
    p = np.asarray(probs, dtype=float).reshape(-1)
    p = p[p > 0]
    return float(max(0.0, -(p * np.log2(p)).sum()))


@dataclass(frozen=True)
class Verdict:
    action: str  # "distill" or "discard"
    count: int
    d_h: float
    d_h_prime: float

    def to_dict(self) -> dict:
        return {"action": self.action, "count": self.count, "D_h": self.d_h, "D_h_prime": self.d_h_prime}


@dataclass(frozen=True)
class YieldReport:
    h_b0: float
    h_b1: float
    h_b2: float
    h_b2_given_b1: float
    i_b0_b12: float
    d_h: float
    d_h_prime: float
    verdict: Verdict

    def to_dict(self) -> dict:
        return {
            "H_b0": self.h_b0,
            "H_b1": self.h_b1,
            "H_b2": self.h_b2,
            "H_b2_given_b1": self.h_b2_given_b1,
            "I_b0_b12": self.i_b0_b12,
            "D_h": self.d_h,
            "D_h_prime": self.d_h_prime,
            "verdict": self.verdict.to_dict(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def yields(d: GhzDiagonal, ensemble_size: int = 0) -> YieldReport:
    """Entropies of the label bits and the two hashing yields.

    ``b0`` is the phase bit ``p``; ``b1``, ``b2`` are ``i1``, ``i2``.
    """
    joint = d.joint()
    h0 = entropy_bits(joint.sum(axis=(1, 2)))
    h1 = entropy_bits(joint.sum(axis=(0, 2)))
    h2 = entropy_bits(joint.sum(axis=(0, 1)))
    h12 = entropy_bits(joint.sum(axis=0))
    h012 = entropy_bits(joint)
    h2_given_1 = max(0.0, h12 - h1)
    mutual = max(0.0, h0 + h12 - h012)
    d_h = 1.0 - max(h1, h2) - h0
    d_h_prime = 1.0 - max(h1, h2_given_1) - h0 + mutual
    return YieldReport(h0, h1, h2, h2_given_1, mutual, d_h, d_h_prime, _verdict(d_h, d_h_prime, ensemble_size))


def _verdict(d_h: float, d_h_prime: float, ensemble_size: int) -> Verdict:
    if ensemble_size < 0:
        raise SecurityError(f"ensemble size must be non-negative, got {ensemble_size}")
    if d_h_prime > 0:
        return Verdict("distill", math.floor(ensemble_size * d_h_prime + 1e-12), d_h, d_h_prime)
    return Verdict("discard", 0, d_h, d_h_prime)


def channel_verdict(d: GhzDiagonal, ensemble_size: int) -> Verdict:
    """Distill ``floor(N' * D_h')`` states when the improved yield is positive."""
    return yields(d, ensemble_size).verdict


# Estimation from local measurements ----------------------------------------

Sampler = Callable[[int, int, np.random.Generator], np.ndarray]


def local_outcome_distribution(rho: DensityMatrix, element: StabilizerObservable) -> np.ndarray:
    """Joint distribution of the three local Pauli measurements for ``element``.

    Entry ``k`` is the probability that the parties read bits ``k`` (party 0
    most significant) after rotating into their local eigenbases.
    """
    u = reduce(np.kron, (_TO_Z_BASIS[c] for c in element.paulis))
    probs = np.einsum("ij,jk,ik->i", u, rho.matrix, u.conj()).real
    probs = np.clip(probs, 0.0, None)
    return probs / probs.sum()


def _parity_eigenvalues(element: StabilizerObservable) -> np.ndarray:
    """Eigenvalue of ``element`` implied by each local outcome pattern."""
    vals = np.empty(8, dtype=int)
    for k in range(8):
        bits = ((k >> 2) & 1, (k >> 1) & 1, k & 1)
        odd = sum(b for b, c in zip(bits, element.paulis) if c != "I") % 2
        vals[k] = element.sign * (-1 if odd else 1)
    return vals


def local_sampler(rho: DensityMatrix) -> Sampler:
    """Sampler measuring fresh copies of ``rho`` with local X/Y/Z readouts."""
    tables = [(local_outcome_distribution(rho, e), _parity_eigenvalues(e)) for e in STABILIZERS]

    def sample(element: int, shots: int, rng: np.random.Generator) -> np.ndarray:
        probs, eig = tables[element]
        return eig[rng.choice(8, size=shots, p=probs)]

    return sample


@dataclass(frozen=True)
class RateEstimate:
    rates: tuple[float, ...]
    stderr: tuple[float, ...]
    shots: int

    def detects(self, z: float = 3.0) -> bool:
        """Whether some rate sits more than ``z`` standard errors above zero."""
        return any(r > z * e for r, e in zip(self.rates, self.stderr))

    def to_dict(self) -> dict:
        return {"rates": list(self.rates), "stderr": list(self.stderr), "shots": self.shots}


def estimate_rates(
    source: DensityMatrix | Sampler, shots: int, rng: np.random.Generator
) -> RateEstimate:
    """Empirical -1 frequency of every element from ``shots`` copies each.

    ``source`` is either a 3-qubit density matrix (measured locally) or a
    sampler ``f(element_index, shots, rng) -> array of +-1``.
    """
    if shots < 1:
        raise SecurityError(f"shots must be positive, got {shots}")
    if isinstance(source, DensityMatrix):
        if source.dim != 8:
            raise QuantumCoreError(f"expected a 3-qubit state, got dimension {source.dim}")
        source = local_sampler(source)
    rates, errs = [], []
    for k in range(len(STABILIZERS)):
        outcomes = np.asarray(source(k, shots, rng))
        s = float(np.count_nonzero(outcomes == -1)) / shots
        rates.append(s)
        errs.append(math.sqrt(s * (1.0 - s) / shots))
    return RateEstimate(tuple(rates), tuple(errs), shots)
