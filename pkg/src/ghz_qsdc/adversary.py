"""Eavesdropper models and Monte Carlo harnesses.

Two attackers are modelled.  The listener hears the public announcements of
an honest session and tries to name the pre-encoding measurement branch or
the message symbols.  The tamperer couples an ancilla to one in-transit
qubit of every GHZ triplet (or replaces the triplet outright) before the
parties certify the channel.
"""
from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .protocol import EncodingScheme, SessionConfig, group_state, measure_group, scheme_count
from .quantum_core import (
    BellOutcome,
    DensityMatrix,
    GhzLabel,
    StateVector,
    density_from_pure,
    partial_trace_last,
    tensor,
)
from .swap_algebra import ALICE_ALPHABET, BOB_ALPHABET, OpPair, apply_op_bell, decode_with_branch, decompose

TAMPER_KINDS = ("none", "ancilla", "replace")
CHUNK = 10_000

Branch = tuple[BellOutcome, BellOutcome, BellOutcome]


class AdversaryError(ValueError):
    """Invalid attack parameters."""


@dataclass(frozen=True)
class EveObservation:
    """What a listener learns from the public channel for one group."""

    initial_pair: tuple[GhzLabel, GhzLabel]
    announced: tuple[BellOutcome, BellOutcome]


def candidate_branches(
    observation: EveObservation,
    alice_ops: tuple = ALICE_ALPHABET,
    bob_ops: tuple = BOB_ALPHABET,
) -> list[Branch]:
    """Pre-encoding branches that some allowed operator pair maps onto the
    announced outcomes."""
    alice, bob = observation.announced
    reach_a = {apply_op_bell(alice, op)[0] for op in alice_ops}
    reach_b = {apply_op_bell(bob, op)[0] for op in bob_ops}
    # Paulis are self-inverse up to sign, so "reachable from" equals "reaches"
    return [
        (t.alice, t.bob, t.charlie)
        for t in decompose(*observation.initial_pair)
        if t.alice in reach_a and t.bob in reach_b
    ]


def _operator_for(before: BellOutcome, after: BellOutcome, alphabet: tuple) -> object:
    return next(op for op in alphabet if apply_op_bell(before, op)[0] is after)


def _honest_group(config: SessionConfig, rng: np.random.Generator):
    """One honest group with uniformly random hidden schemes and symbols."""
    alice_index = int(rng.integers(scheme_count(config.alice_ops)))
    bob_index = int(rng.integers(scheme_count(config.bob_ops)))
    scheme = EncodingScheme(alice_index, bob_index, tuple(config.alice_ops), tuple(config.bob_ops))
    alice_sym = format(int(rng.integers(1 << scheme.alice_width)), f"0{scheme.alice_width}b")
    bob_sym = format(int(rng.integers(1 << scheme.bob_width)), f"0{scheme.bob_width}b")
    ops = OpPair(scheme.alice_op(alice_sym), scheme.bob_op(bob_sym))
    alice, bob, charlie = measure_group(group_state(*config.initial_pair), ops, rng)
    return scheme, (alice_sym, bob_sym), ops, (alice, bob, charlie)


def eve_guess_trial(config: SessionConfig, rng: np.random.Generator, leak_charlie: bool = False) -> bool:
    """Run one honest group and let Eve name the pre-encoding branch.

    With ``leak_charlie`` Eve also holds Charlie's outcome and the scheme and
    simply decodes as Charlie would.
    """
    scheme, _, ops, (alice, bob, charlie) = _honest_group(config, rng)
    truth = (apply_op_bell(alice, ops.alice_op)[0], apply_op_bell(bob, ops.bob_op)[0], charlie)
    obs = EveObservation(config.initial_pair, (alice, bob))
    if leak_charlie:
        _, (a_pre, b_pre) = decode_with_branch(
            charlie, (alice, bob), *config.initial_pair, scheme.alice_ops, scheme.bob_ops
        )
        return (a_pre, b_pre, charlie) == truth
    candidates = candidate_branches(obs, scheme.alice_ops, scheme.bob_ops)
    guess = candidates[int(rng.integers(len(candidates)))]
    return guess == truth


def eve_message_guess(
    observation: EveObservation,
    rng: np.random.Generator,
    charlie: BellOutcome | None = None,
    scheme: EncodingScheme | None = None,
    alice_ops: tuple = ALICE_ALPHABET,
    bob_ops: tuple = BOB_ALPHABET,
) -> tuple[str, str]:
    """Eve's guess of ``(alice_symbol, bob_symbol)``.

    She picks a candidate branch uniformly (restricted by Charlie's outcome
    when leaked), reads off the operators, and maps them through the scheme,
    drawing a uniformly random scheme when she does not know it.
    """
    if scheme is not None:
        alice_ops, bob_ops = scheme.alice_ops, scheme.bob_ops
    candidates = candidate_branches(observation, alice_ops, bob_ops)
    if charlie is not None:
        candidates = [c for c in candidates if c[2] is charlie]
    a_pre, b_pre, _ = candidates[int(rng.integers(len(candidates)))]
    alice_op = _operator_for(a_pre, observation.announced[0], alice_ops)
    bob_op = _operator_for(b_pre, observation.announced[1], bob_ops)
    if scheme is None:
        scheme = EncodingScheme(
            int(rng.integers(scheme_count(alice_ops))), int(rng.integers(scheme_count(bob_ops))),
            tuple(alice_ops), tuple(bob_ops),
        )
    return scheme.alice_map[alice_op], scheme.bob_map[bob_op]


def message_guess_trial(
    config: SessionConfig, rng: np.random.Generator, leak: bool = False
) -> tuple[bool, bool]:
    """Hits on Alice's and Bob's symbols for one honest group."""
    scheme, (alice_sym, bob_sym), _, (alice, bob, charlie) = _honest_group(config, rng)
    obs = EveObservation(config.initial_pair, (alice, bob))
    if leak:
        guess = eve_message_guess(obs, rng, charlie=charlie, scheme=scheme)
    else:
        guess = eve_message_guess(obs, rng, alice_ops=scheme.alice_ops, bob_ops=scheme.bob_ops)
    return guess[0] == alice_sym, guess[1] == bob_sym


@dataclass(frozen=True)
class AttackReport:
    trials: int
    successes: int

    @property
    def rate(self) -> float:
        return self.successes / self.trials

    @property
    def ci95(self) -> tuple[float, float]:
        half = 1.96 * math.sqrt(self.rate * (1 - self.rate) / self.trials)
        return (max(0.0, self.rate - half), min(1.0, self.rate + half))

    def to_dict(self) -> dict:
        return {"trials": self.trials, "successes": self.successes, "rate": self.rate, "ci95": list(self.ci95)}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def run_trials(
    trial: Callable[[np.random.Generator], object],
    trials: int,
    seed: int,
    workers: int = 1,
) -> list:
    """Run ``trials`` independent trials in chunks.

    Chunk ``k`` draws from ``default_rng([seed, k])`` so the results do not
    depend on ``workers``.
    """
    if trials < 1:
        raise AdversaryError(f"trials must be positive, got {trials}")

    def run_chunk(k: int) -> list:
        rng = np.random.default_rng([seed, k])
        size = min(CHUNK, trials - k * CHUNK)
        return [trial(rng) for _ in range(size)]

    chunks = range(math.ceil(trials / CHUNK))
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(run_chunk, chunks))
    else:
        parts = [run_chunk(k) for k in chunks]
    return [r for part in parts for r in part]


def state_guess_attack(
    config: SessionConfig, trials: int, seed: int, leak_charlie: bool = False, workers: int = 1
) -> AttackReport:
    hits = run_trials(lambda rng: eve_guess_trial(config, rng, leak_charlie), trials, seed, workers)
    return AttackReport(trials, int(sum(hits)))


def message_guess_attack(
    config: SessionConfig, trials: int, seed: int, leak: bool = False, workers: int = 1
) -> tuple[AttackReport, AttackReport]:
    """Reports for Alice's symbol and Bob's symbol."""
    hits = run_trials(lambda rng: message_guess_trial(config, rng, leak), trials, seed, workers)
    return AttackReport(trials, sum(a for a, _ in hits)), AttackReport(trials, sum(b for _, b in hits))


# Tampering ------------------------------------------------------------------

_HADAMARD = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)


@dataclass(frozen=True)
class TamperModel:
    """Distribution-phase interference with a GHZ triplet.

    ``ancilla``: a fresh ancilla undergoes a rotation by ``theta`` about Y,
    controlled by qubit ``qubit`` of the triplet read in the ``basis``
    ("z" or "x") eigenbasis; ``theta = pi`` is a full controlled flip.
    ``replace``: the triplet is swapped for ``replacement``.
    """

    kind: str = "none"
    qubit: int = 2
    theta: float = math.pi
    basis: str = "z"
    replacement: DensityMatrix | None = None

    def __post_init__(self) -> None:
        if self.kind not in TAMPER_KINDS:
            raise AdversaryError(f"unknown tamper kind {self.kind!r}")
        if self.kind == "ancilla":
            if self.qubit not in (0, 1, 2):
                raise AdversaryError(f"tamper qubit must be 0, 1 or 2, got {self.qubit}")
            if self.basis not in ("z", "x"):
                raise AdversaryError(f"tamper basis must be 'z' or 'x', got {self.basis!r}")
            if not 0.0 <= self.theta <= math.pi:
                raise AdversaryError(f"theta must lie in [0, pi], got {self.theta}")
        if self.kind == "replace":
            if self.replacement is None or self.replacement.dim != 8:
                raise AdversaryError("replace needs an 8x8 replacement density matrix")


def coupling_unitary(model: TamperModel, num_qubits: int, target: int, ancilla: int) -> np.ndarray:
    """Full-register unitary of the ancilla interaction."""
    c, s = math.cos(model.theta / 2), math.sin(model.theta / 2)
    rot = np.array([[c, -s], [s, c]], dtype=complex)
    dim = 1 << num_qubits
    u = np.zeros((dim, dim), dtype=complex)
    for col in range(dim):
        bits = [(col >> (num_qubits - 1 - k)) & 1 for k in range(num_qubits)]
        ctrl = bits[target]
        for out_anc in (0, 1):
            amp = rot[out_anc, bits[ancilla]] if ctrl else float(out_anc == bits[ancilla])
            if amp == 0:
                continue
            new_bits = list(bits)
            new_bits[ancilla] = out_anc
            row = int("".join(map(str, new_bits)), 2)
            u[row, col] += amp
    if model.basis == "x":
        h = _single_qubit(_HADAMARD, num_qubits, target)
        u = h @ u @ h
    return u


def _single_qubit(matrix: np.ndarray, num_qubits: int, qubit: int) -> np.ndarray:
    ops = [np.eye(2, dtype=complex)] * num_qubits
    ops[qubit] = matrix
    out = ops[0]
    for op in ops[1:]:
        out = np.kron(out, op)
    return out


def apply_tamper(model: TamperModel, channel_state: StateVector | DensityMatrix) -> DensityMatrix:
    """Channel state after the attack, as a 3-qubit density matrix."""
    rho = density_from_pure(channel_state) if isinstance(channel_state, StateVector) else channel_state
    if rho.dim != 8:
        raise AdversaryError(f"expected a 3-qubit channel state, got dimension {rho.dim}")
    if model.kind == "none":
        return rho
    if model.kind == "replace":
        return model.replacement
    anc0 = np.zeros((2, 2), dtype=complex)
    anc0[0, 0] = 1.0
    u = coupling_unitary(model, 4, model.qubit, 3)
    joint = u @ np.kron(rho.matrix, anc0) @ u.conj().T
    out = partial_trace_last(joint, 3)
    return DensityMatrix((out + out.conj().T) / 2)


def tamper_channel(model: TamperModel) -> Callable[[StateVector, np.random.Generator], StateVector]:
    """Session hook applying ``model`` to both triplets of a 6-qubit group.

    Ancilla attacks append one ancilla per triplet (qubits 6 and 7), which
    later measurements on qubits 0..5 trace out implicitly.  Replacement
    samples each triplet from the eigen-decomposition of the replacement
    matrix.
    """
    if model.kind == "ancilla":
        u = coupling_unitary(model, 8, model.qubit, 6) @ coupling_unitary(model, 8, model.qubit + 3, 7)
        zero2 = StateVector.basis("00")

        def couple(state: StateVector, rng: np.random.Generator) -> StateVector:
            if state.num_qubits != 6:
                raise AdversaryError("tamper channel expects a 6-qubit group state")
            return StateVector(u @ tensor(state, zero2).amplitudes)

        return couple
    if model.kind == "replace":
        weights, vectors = np.linalg.eigh(model.replacement.matrix)
        weights = np.clip(weights, 0.0, None)
        weights = weights / weights.sum()

        def replace(state: StateVector, rng: np.random.Generator) -> StateVector:
            picks = rng.choice(8, size=2, p=weights)
            first, second = (StateVector.normalized(vectors[:, k]) for k in picks)
            return tensor(first, second)

        return replace

    return lambda state, rng: state
