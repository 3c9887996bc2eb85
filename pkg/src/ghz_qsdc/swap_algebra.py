"""Closed-form entanglement-swapping algebra for pairs of GHZ states.

Every GHZ state and every Bell state has the form
``(|0 u> + (-1)^s |1 ~u>)/sqrt(2)``, so products of two GHZ states expand in
the triple Bell basis with a handful of parity rules.  For
``g1 = (p, a, b)`` on particles 1-3 and ``g2 = (q, c, d)`` on 4-6, the term
``A_14 (x) B_25 (x) C_36`` is present iff

    xB = xA ^ a ^ c,   xC = xA ^ b ^ d,   zA ^ zB ^ zC = p ^ q

and its amplitude is ``(-1)^(q xA + a zB + b zC) / (2 sqrt 2)``.

Everything else here (operator actions, Charlie's consistency sets and the
decode table) is derived from these rules; ``quantum_core`` serves as the
independent check in the test suite.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .quantum_core import BellOutcome, GhzLabel, PauliOp

TERM_AMPLITUDE = 1.0 / (2.0 * np.sqrt(2.0))

ALICE_ALPHABET = (PauliOp.SIGMA_00, PauliOp.SIGMA_01, PauliOp.SIGMA_10, PauliOp.SIGMA_11)
BOB_ALPHABET = (PauliOp.SIGMA_00, PauliOp.SIGMA_01)
# {I, i sigma_y}: the alternative two-operator alphabet.
BOB_ALPHABET_IY = (PauliOp.SIGMA_00, PauliOp.SIGMA_10)
# {I, sigma_z}: cannot be decoded (both branches reach the same announcements).
BOB_ALPHABET_Z = (PauliOp.SIGMA_00, PauliOp.SIGMA_11)


class DecodeFailure(Exception):
    """Charlie cannot recover a unique operator pair for a group."""


class InconsistentTriple(DecodeFailure):
    """No operator pair explains the announced outcomes."""


class AmbiguousDecode(DecodeFailure):
    """More than one operator pair explains the announced outcomes."""


@dataclass(frozen=True)
class SwapTerm:
    alice: BellOutcome
    bob: BellOutcome
    charlie: BellOutcome
    amplitude: float


@dataclass(frozen=True)
class OpPair:
    alice_op: PauliOp
    bob_op: PauliOp


def decompose(g1: GhzLabel, g2: GhzLabel) -> list[SwapTerm]:
    """Expand ``g1_123 (x) g2_456`` over Bell pairs (1,4), (2,5), (3,6).

    Terms are ordered by Alice's outcome, then Bob's.
    """
    return list(_decompose(g1, g2))


@lru_cache(maxsize=None)
def _decompose(g1: GhzLabel, g2: GhzLabel) -> tuple[SwapTerm, ...]:
    p, a, b = g1.bits
    q, c, d = g2.bits
    terms = []
    for xa, za, zb in itertools.product((0, 1), repeat=3):
        xb = xa ^ a ^ c
        xc = xa ^ b ^ d
        zc = za ^ zb ^ p ^ q
        sign = -1.0 if (q * xa + a * zb + b * zc) % 2 else 1.0
        terms.append(
            SwapTerm(
                BellOutcome.from_bits(xa, za),
                BellOutcome.from_bits(xb, zb),
                BellOutcome.from_bits(xc, zc),
                sign * TERM_AMPLITUDE,
            )
        )
    terms.sort(key=lambda t: (t.alice.index, t.bob.index))
    return tuple(terms)


def _act(phase: int, rest: tuple[int, ...], op: PauliOp, qubit: int) -> tuple[int, tuple[int, ...], int]:
    """Apply ``op`` to ``qubit`` of ``(|0 r> + (-1)^phase |1 ~r>)/sqrt(2)``.

    Returns the new ``(phase, rest)`` and the global sign picked up.
    """
    x, z = op.xz
    sign = 1
    rest = list(rest)
    if x:
        if qubit == 0:
            rest = [1 - r for r in rest]
            sign *= -1 if phase else 1
        else:
            rest[qubit - 1] ^= 1
    if z:
        first_bit = 0 if qubit == 0 else rest[qubit - 1]
        sign *= -1 if first_bit else 1
        phase ^= 1
    return phase, tuple(rest), sign


def apply_op_pair(g: GhzLabel, ops: OpPair) -> tuple[GhzLabel, int]:
    """Label and global sign of ``(alice_op)_1 (bob_op)_2`` acting on ``g``."""
    p, i1, i2 = g.bits
    p, rest, s_alice = _act(p, (i1, i2), ops.alice_op, 0)
    p, rest, s_bob = _act(p, rest, ops.bob_op, 1)
    return GhzLabel.from_bits(p, *rest), s_alice * s_bob


@lru_cache(maxsize=None)
def apply_op_bell(outcome: BellOutcome, op: PauliOp) -> tuple[BellOutcome, int]:
    """Action of ``op`` on the first qubit of a Bell pair."""
    z, (x,), sign = _act(outcome.z, (outcome.x,), op, 0)
    return BellOutcome.from_bits(x, z), sign


def charlie_consistent_pairs(
    charlie: BellOutcome, g1: GhzLabel, g2: GhzLabel
) -> frozenset[tuple[BellOutcome, BellOutcome]]:
    """Alice/Bob outcome pairs that can accompany Charlie's outcome when no
    encoding operation was applied."""
    return frozenset((t.alice, t.bob) for t in _decompose(g1, g2) if t.charlie is charlie)


def charlie_completion(
    g1: GhzLabel, g2: GhzLabel, **known: BellOutcome
) -> list[SwapTerm]:
    """Decomposition terms agreeing with the given outcomes.

    ``known`` takes any of ``alice=``, ``bob=``, ``charlie=``.
    """
    return [t for t in _decompose(g1, g2) if all(getattr(t, k) is v for k, v in known.items())]


@lru_cache(maxsize=None)
def decode_table(
    g1: GhzLabel,
    g2: GhzLabel,
    alice_ops: tuple[PauliOp, ...] = ALICE_ALPHABET,
    bob_ops: tuple[PauliOp, ...] = BOB_ALPHABET,
) -> dict[tuple[BellOutcome, BellOutcome, BellOutcome], tuple[tuple[OpPair, tuple[BellOutcome, BellOutcome]], ...]]:
    """Map ``(charlie, alice_announced, bob_announced)`` to every
    ``(OpPair, pre-operation branch)`` that produces it."""
    table: dict = {}
    for term in decompose(g1, g2):
        for alice_op, bob_op in itertools.product(alice_ops, bob_ops):
            alice_after, _ = apply_op_bell(term.alice, alice_op)
            bob_after, _ = apply_op_bell(term.bob, bob_op)
            key = (term.charlie, alice_after, bob_after)
            table.setdefault(key, []).append((OpPair(alice_op, bob_op), (term.alice, term.bob)))
    return {k: tuple(v) for k, v in table.items()}


def decode_collisions(
    g1: GhzLabel,
    g2: GhzLabel,
    alice_ops: tuple[PauliOp, ...] = ALICE_ALPHABET,
    bob_ops: tuple[PauliOp, ...] = BOB_ALPHABET,
) -> list[tuple[BellOutcome, BellOutcome, BellOutcome]]:
    """Announcement triples reachable by more than one ``(OpPair, branch)``."""
    table = decode_table(g1, g2, tuple(alice_ops), tuple(bob_ops))
    return [key for key, hits in table.items() if len(hits) > 1]


def decode_with_branch(
    charlie: BellOutcome,
    announced: tuple[BellOutcome, BellOutcome],
    g1: GhzLabel = GhzLabel.P_PLUS,
    g2: GhzLabel = GhzLabel.P_PLUS,
    alice_ops: tuple[PauliOp, ...] = ALICE_ALPHABET,
    bob_ops: tuple[PauliOp, ...] = BOB_ALPHABET,
) -> tuple[OpPair, tuple[BellOutcome, BellOutcome]]:
    """Like :func:`decode`, also returning the pre-operation ``(alice, bob)`` branch."""
    table = decode_table(g1, g2, tuple(alice_ops), tuple(bob_ops))
    hits = table.get((charlie, *announced), ())
    if not hits:
        raise InconsistentTriple(
            f"no operator pair maps a branch with Charlie={charlie.value} onto "
            f"({announced[0].value}, {announced[1].value}) for {g1.value}{g2.value}"
        )
    if len(hits) > 1:
        raise AmbiguousDecode(
            f"{len(hits)} operator/branch combinations explain "
            f"({announced[0].value}, {announced[1].value}, {charlie.value})"
        )
    return hits[0]


def decode(
    charlie: BellOutcome,
    announced: tuple[BellOutcome, BellOutcome],
    g1: GhzLabel = GhzLabel.P_PLUS,
    g2: GhzLabel = GhzLabel.P_PLUS,
    alice_ops: tuple[PauliOp, ...] = ALICE_ALPHABET,
    bob_ops: tuple[PauliOp, ...] = BOB_ALPHABET,
) -> OpPair:
    """Recover the encoding operators from Charlie's outcome and the announcements."""
    return decode_with_branch(charlie, announced, g1, g2, alice_ops, bob_ops)[0]
