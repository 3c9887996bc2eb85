"""Exact state-vector engine for the small systems used by the protocol.

Qubit ``k`` of an ``n``-qubit register is the ``k``-th tensor factor, so
index 0 is the most significant bit of a computational basis index.  The six
particles of a protocol group map to indices 0..5: Alice holds (0, 3), Bob
(1, 4) and Charlie (2, 5).

Global phases are carried through every operation but are treated as
unobservable; use :meth:`StateVector.equals_up_to_phase` for comparisons.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

MAX_QUBITS = 8
ATOL = 1e-12
_SQRT2_INV = 1.0 / np.sqrt(2.0)


class QuantumCoreError(ValueError):
    """Invalid argument to a state-engine operation."""


class BellOutcome(enum.Enum):
    """The four Bell states, tagged with their ``(x, z)`` bits.

    ``x`` says whether the two qubits disagree in the computational basis
    (Phi: 0, Psi: 1) and ``z`` is the relative sign (+: 0, -: 1).
    """

    PHI_PLUS = "Phi+"
    PHI_MINUS = "Phi-"
    PSI_PLUS = "Psi+"
    PSI_MINUS = "Psi-"

    @property
    def x(self) -> int:
        return _BELL_XZ[self][0]

    @property
    def z(self) -> int:
        return _BELL_XZ[self][1]

    @property
    def index(self) -> int:
        return _BELL_INDEX[self]

    @classmethod
    def from_bits(cls, x: int, z: int) -> BellOutcome:
        return _BELL_ORDER[2 * (x & 1) + (z & 1)]


_BELL_ORDER = (BellOutcome.PHI_PLUS, BellOutcome.PHI_MINUS, BellOutcome.PSI_PLUS, BellOutcome.PSI_MINUS)
_BELL_INDEX = {b: k for k, b in enumerate(_BELL_ORDER)}
_BELL_XZ = {b: divmod(k, 2) for k, b in enumerate(_BELL_ORDER)}


class GhzLabel(enum.Enum):
    """The eight GHZ states ``(|0 i1 i2> + (-1)^p |1 ~i1 ~i2>)/sqrt(2)``.

    ``bits`` is ``(p, i1, i2)``; a bit is 1 exactly when the state is a -1
    eigenvector of the matching generator XXX, ZZI, ZIZ.
    """

    P_PLUS = "P+"
    P_MINUS = "P-"
    Q_PLUS = "Q+"
    Q_MINUS = "Q-"
    R_PLUS = "R+"
    R_MINUS = "R-"
    S_PLUS = "S+"
    S_MINUS = "S-"

    @property
    def bits(self) -> tuple[int, int, int]:
        return _GHZ_BITS[self]

    @property
    def index(self) -> int:
        """Storage index ``4p + 2 i1 + i2`` (the ``p000..p111`` ordering)."""
        p, i1, i2 = self.bits
        return 4 * p + 2 * i1 + i2

    @classmethod
    def from_bits(cls, p: int, i1: int, i2: int) -> GhzLabel:
        return _GHZ_BY_BITS[(p & 1, i1 & 1, i2 & 1)]

    @classmethod
    def from_index(cls, index: int) -> GhzLabel:
        return cls.from_bits((index >> 2) & 1, (index >> 1) & 1, index & 1)


def _parse_ghz(label: GhzLabel) -> tuple[int, int, int]:
    letter, sign = label.value
    i1, i2 = divmod("PQRS".index(letter), 2)
    return (1 if sign == "-" else 0, i1, i2)


_GHZ_BITS = {label: _parse_ghz(label) for label in GhzLabel}
_GHZ_BY_BITS = {bits: label for label, bits in _GHZ_BITS.items()}
GHZ_BY_INDEX = tuple(GhzLabel.from_index(k) for k in range(8))


class PauliOp(enum.Enum):
    """Local encoding operators; ``SIGMA_10`` is ``i sigma_y = |0><1| - |1><0|``."""

    SIGMA_00 = "sigma00"
    SIGMA_01 = "sigma01"
    SIGMA_10 = "sigma10"
    SIGMA_11 = "sigma11"

    @property
    def matrix(self) -> np.ndarray:
        return _PAULI_MATRICES[self]

    @property
    def xz(self) -> tuple[int, int]:
        """``(x, z)`` such that the operator equals ``Z^z X^x``."""
        return _PAULI_XZ[self]


_PAULI_MATRICES = {
    PauliOp.SIGMA_00: np.array([[1, 0], [0, 1]], dtype=complex),
    PauliOp.SIGMA_01: np.array([[0, 1], [1, 0]], dtype=complex),
    PauliOp.SIGMA_10: np.array([[0, 1], [-1, 0]], dtype=complex),
    PauliOp.SIGMA_11: np.array([[1, 0], [0, -1]], dtype=complex),
}
_PAULI_XZ = {
    PauliOp.SIGMA_00: (0, 0),
    PauliOp.SIGMA_01: (1, 0),
    PauliOp.SIGMA_10: (1, 1),
    PauliOp.SIGMA_11: (0, 1),
}
for _m in _PAULI_MATRICES.values():
    _m.setflags(write=False)


def _readonly(array: np.ndarray) -> np.ndarray:
    array = np.array(array, dtype=complex)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class StateVector:
    """Normalized pure state of 1..8 qubits."""

    amplitudes: np.ndarray

    def __post_init__(self) -> None:
        amps = np.asarray(self.amplitudes, dtype=complex).reshape(-1)
        n = amps.size.bit_length() - 1
        if amps.size < 2 or amps.size != 1 << n:
            raise QuantumCoreError(f"amplitude length {amps.size} is not a power of two >= 2")
        if n > MAX_QUBITS:
            raise QuantumCoreError(f"{n} qubits exceeds the {MAX_QUBITS}-qubit limit")
        norm = float(np.vdot(amps, amps).real)
        if abs(norm - 1.0) > ATOL:
            raise QuantumCoreError(f"state is not normalized (|psi|^2 = {norm!r})")
        object.__setattr__(self, "amplitudes", _readonly(amps))

    @property
    def num_qubits(self) -> int:
        return self.amplitudes.size.bit_length() - 1

    @classmethod
    def basis(cls, bits: str) -> StateVector:
        """Computational basis state, e.g. ``StateVector.basis("01")``."""
        amps = np.zeros(1 << len(bits), dtype=complex)
        amps[int(bits, 2)] = 1.0
        return cls(amps)

    @classmethod
    def normalized(cls, amplitudes: Sequence[complex]) -> StateVector:
        amps = np.asarray(amplitudes, dtype=complex)
        return cls(amps / np.linalg.norm(amps))

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def inner(self, other: StateVector) -> complex:
        """``<self|other>``."""
        return complex(np.vdot(self.amplitudes, other.amplitudes))

    def equals_up_to_phase(self, other: StateVector, atol: float = ATOL) -> bool:
        if self.num_qubits != other.num_qubits:
            return False
        return abs(abs(self.inner(other)) - 1.0) <= atol

    def allclose(self, other: StateVector, atol: float = ATOL) -> bool:
        """Exact equality, global phase included."""
        return self.num_qubits == other.num_qubits and np.allclose(
            self.amplitudes, other.amplitudes, rtol=0.0, atol=atol
        )


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """Hermitian, unit-trace, positive semidefinite matrix."""

    matrix: np.ndarray

    def __post_init__(self) -> None:
        rho = np.asarray(self.matrix, dtype=complex)
        if rho.ndim != 2 or rho.shape[0] != rho.shape[1] or rho.shape[0] < 2:
            raise QuantumCoreError(f"density matrix must be square, got shape {rho.shape}")
        if rho.shape[0] & (rho.shape[0] - 1):
            raise QuantumCoreError(f"dimension {rho.shape[0]} is not a power of two")
        if not np.allclose(rho, rho.conj().T, rtol=0.0, atol=ATOL):
            raise QuantumCoreError("density matrix is not Hermitian")
        if abs(np.trace(rho) - 1.0) > ATOL:
            raise QuantumCoreError(f"density matrix trace is {np.trace(rho).real!r}, expected 1")
        if np.linalg.eigvalsh(rho).min() < -1e-10:
            raise QuantumCoreError("density matrix has a negative eigenvalue")
        object.__setattr__(self, "matrix", _readonly(rho))

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def num_qubits(self) -> int:
        return self.dim.bit_length() - 1

    def expectation(self, observable: np.ndarray) -> float:
        return float(np.trace(self.matrix @ observable).real)

    def fidelity(self, state: StateVector) -> float:
        """``<psi|rho|psi>``."""
        psi = state.amplitudes
        return float(np.vdot(psi, self.matrix @ psi).real)


def make_bell(outcome: BellOutcome) -> StateVector:
    return StateVector(_BELL_VECTORS[outcome.index])


def make_ghz(label: GhzLabel) -> StateVector:
    p, i1, i2 = label.bits
    amps = np.zeros(8, dtype=complex)
    amps[2 * i1 + i2] = _SQRT2_INV
    amps[4 + 2 * (1 - i1) + (1 - i2)] = -_SQRT2_INV if p else _SQRT2_INV
    return StateVector(amps)


# Rows are the Bell vectors in the |ab> basis, a being the first qubit of the pair.
_BELL_VECTORS = _readonly(
    np.array(
        [
            [1, 0, 0, 1],
            [1, 0, 0, -1],
            [0, 1, 1, 0],
            [0, 1, -1, 0],
        ],
        dtype=complex,
    )
    * _SQRT2_INV
)
_BELL_CONJ = _readonly(_BELL_VECTORS.conj())


def ghz_basis_matrix() -> np.ndarray:
    """Unitary whose column ``k`` is the GHZ state with storage index ``k``."""
    return np.column_stack([make_ghz(GhzLabel.from_index(k)).amplitudes for k in range(8)])


def tensor(a: StateVector, b: StateVector) -> StateVector:
    if a.num_qubits + b.num_qubits > MAX_QUBITS:
        raise QuantumCoreError(
            f"tensor product of {a.num_qubits} and {b.num_qubits} qubits exceeds {MAX_QUBITS}"
        )
    return StateVector(np.kron(a.amplitudes, b.amplitudes))


def _check_qubit(state: StateVector, qubit: int) -> None:
    if not 0 <= qubit < state.num_qubits:
        raise QuantumCoreError(f"qubit {qubit} out of range for {state.num_qubits} qubits")


def _check_pair(state: StateVector, pair: tuple[int, int]) -> None:
    first, second = pair
    _check_qubit(state, first)
    _check_qubit(state, second)
    if first == second:
        raise QuantumCoreError(f"pair {pair} must name two distinct qubits")


def apply_matrix(state: StateVector, matrix: np.ndarray, qubit: int) -> StateVector:
    """Apply an arbitrary 2x2 unitary to one qubit."""
    _check_qubit(state, qubit)
    psi = state.amplitudes.reshape(1 << qubit, 2, -1)
    return StateVector(np.einsum("ij,ajb->aib", matrix, psi).reshape(-1))


def apply_local(state: StateVector, op: PauliOp, qubit: int) -> StateVector:
    return apply_matrix(state, op.matrix, qubit)


@lru_cache(maxsize=None)
def _pair_permutation(n: int, pair: tuple[int, int]) -> tuple[tuple[int, ...], tuple[int, ...]]:
    """Axis order bringing ``pair`` to the front, and its inverse."""
    order = tuple(pair) + tuple(k for k in range(n) if k not in pair)
    return order, tuple(int(k) for k in np.argsort(order))


def _bell_components(state: StateVector, pair: tuple[int, int]) -> np.ndarray:
    """Overlaps ``<beta_k|_pair psi>`` as a ``(4, 2**(n-2))`` array."""
    n = state.num_qubits
    order, _ = _pair_permutation(n, tuple(pair))
    psi = state.amplitudes.reshape((2,) * n).transpose(order).reshape(4, -1)
    return _BELL_CONJ @ psi


def _post_state(comp: np.ndarray, k: int, prob: float, n: int, pair: tuple[int, int]) -> StateVector:
    _, inverse = _pair_permutation(n, tuple(pair))
    post = np.outer(_BELL_VECTORS[k], comp / np.sqrt(prob))
    return StateVector(post.reshape((2,) * n).transpose(inverse).reshape(-1))


def bell_probabilities(state: StateVector, pair: tuple[int, int]) -> np.ndarray:
    """Born-rule probabilities of the four Bell outcomes on ``pair``.

    Entry ``k`` belongs to ``BellOutcome`` with ``index == k``.
    """
    _check_pair(state, pair)
    comps = _bell_components(state, pair)
    return np.einsum("ij,ij->i", comps, comps.conj()).real


def bell_project(state: StateVector, pair: tuple[int, int], outcome: BellOutcome) -> tuple[float, StateVector | None]:
    """Project ``pair`` onto ``outcome``; returns the probability and the
    renormalized state (``None`` when the probability vanishes)."""
    _check_pair(state, pair)
    comp = _bell_components(state, pair)[outcome.index]
    prob = float(np.vdot(comp, comp).real)
    if prob <= ATOL:
        return prob, None
    return prob, _post_state(comp, outcome.index, prob, state.num_qubits, pair)


def bell_measure(
    state: StateVector, pair: tuple[int, int], rng: np.random.Generator
) -> tuple[BellOutcome, StateVector]:
    """Sample a Bell measurement on ``pair``; consumes one uniform draw from ``rng``."""
    _check_pair(state, pair)
    comps = _bell_components(state, pair)
    probs = np.einsum("ij,ij->i", comps, comps.conj()).real
    probs = np.where(probs > ATOL, probs, 0.0)
    cumulative = np.cumsum(probs)
    k = min(int(np.searchsorted(cumulative, rng.random() * cumulative[-1], side="right")), 3)
    return _BELL_ORDER[k], _post_state(comps[k], k, float(probs[k]), state.num_qubits, pair)


def density_from_pure(state: StateVector) -> DensityMatrix:
    if state.num_qubits != 3:
        raise QuantumCoreError(f"expected a 3-qubit state, got {state.num_qubits} qubits")
    psi = state.amplitudes
    return DensityMatrix(np.outer(psi, psi.conj()))


def partial_trace_last(matrix: np.ndarray, keep_qubits: int) -> np.ndarray:
    """Trace out every qubit after the first ``keep_qubits``."""
    dim = matrix.shape[0]
    keep = 1 << keep_qubits
    rest = dim // keep
    return np.einsum("ajbj->ab", matrix.reshape(keep, rest, keep, rest))
