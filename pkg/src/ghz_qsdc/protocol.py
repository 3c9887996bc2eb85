"""Party state machines and session orchestration.

Three session types run over a logged public channel:

* :func:`run_qsdc_session` sends Alice's and Bob's messages to Charlie,
* :func:`run_qkd_session` turns the same exchange into shared key material,
* :func:`run_keygen_subprotocol` lets two parties build a key with the help
  of a third one who announces their Bell outcome.

Each group consumes two fresh GHZ triplets.  Alice announces before Bob, and
Charlie's measurement event always precedes the declared results.
"""
from __future__ import annotations

import enum
import itertools
import json
import math
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from typing import Callable, Iterable, Iterator, Sequence

import numpy as np

from .quantum_core import (
    BellOutcome,
    GhzLabel,
    PauliOp,
    StateVector,
    apply_local,
    bell_measure,
    make_ghz,
    tensor,
)
from .swap_algebra import (
    ALICE_ALPHABET,
    BOB_ALPHABET,
    DecodeFailure,
    OpPair,
    apply_op_bell,
    charlie_completion,
    decode_collisions,
    decode_with_branch,
)

ALICE_PAIR = (0, 3)
BOB_PAIR = (1, 4)
CHARLIE_PAIR = (2, 5)

Channel = Callable[[StateVector, np.random.Generator], StateVector]


class ProtocolError(ValueError):
    """Invalid session parameters."""


class InferenceAmbiguity(RuntimeError):
    """The decomposition does not pin down a unique missing outcome."""


class Party(str, enum.Enum):
    ALICE = "alice"
    BOB = "bob"
    CHARLIE = "charlie"


class EventKind(str, enum.Enum):
    MEASUREMENT_ANNOUNCED = "measurement-announced"
    RESULT_DECLARED = "result-declared"
    INFERENCE = "inference"
    KEY_BIT = "key-bit"
    GROUP_PARTITION = "group-partition"
    CIPHERTEXT = "ciphertext"


@dataclass(frozen=True)
class Event:
    seq: int
    party: Party
    kind: EventKind
    payload: dict

    def to_json(self) -> str:
        record = {"seq": self.seq, "party": self.party.value, "kind": self.kind.value, "payload": self.payload}
        return json.dumps(record, sort_keys=True)


class Transcript:
    """Append-only log of public classical events."""

    def __init__(self, events: Iterable[Event] = ()) -> None:
        self._events: list[Event] = list(events)

    def append(self, party: Party, kind: EventKind, **payload) -> Event:
        event = Event(len(self._events), party, kind, payload)
        self._events.append(event)
        return event

    def __iter__(self) -> Iterator[Event]:
        return iter(self._events)

    def __len__(self) -> int:
        return len(self._events)

    def __getitem__(self, i: int) -> Event:
        return self._events[i]

    def of_kind(self, kind: EventKind) -> list[Event]:
        return [e for e in self._events if e.kind is kind]

    def to_jsonl(self) -> str:
        return "".join(e.to_json() + "\n" for e in self._events)

    @classmethod
    def from_jsonl(cls, text: str) -> Transcript:
        events = []
        for line in text.splitlines():
            if not line.strip():
                continue
            rec = json.loads(line)
            events.append(Event(rec["seq"], Party(rec["party"]), EventKind(rec["kind"]), rec["payload"]))
        return cls(events)

    def check_ordering(self) -> None:
        """Raise ``AssertionError`` unless sequence numbers increase strictly and
        every declared result follows the sender's measurement announcement and
        Charlie's measurement in the same group."""
        seqs = [e.seq for e in self._events]
        assert all(b > a for a, b in zip(seqs, seqs[1:])), "sequence numbers must increase"
        measured: set[tuple[str, int, Party]] = set()
        for e in self._events:
            scope = e.payload.get("stage", "main")
            group = e.payload.get("group")
            if e.kind is EventKind.MEASUREMENT_ANNOUNCED:
                measured.add((scope, group, e.party))
            elif e.kind is EventKind.RESULT_DECLARED:
                assert (scope, group, e.party) in measured, f"result before measurement: {e}"
                if scope == "main":
                    assert (scope, group, Party.CHARLIE) in measured, f"result before Charlie measured: {e}"


# Encoding schemes ---------------------------------------------------------

@lru_cache(maxsize=None)
def _symbol_permutations(width: int) -> tuple[tuple[str, ...], ...]:
    symbols = ["".join(bits) for bits in itertools.product("01", repeat=width)]
    return tuple(itertools.permutations(symbols))


def _width(alphabet: Sequence[PauliOp]) -> int:
    width = len(alphabet).bit_length() - 1
    if len(alphabet) < 2 or len(alphabet) != 1 << width:
        raise ProtocolError(f"operator alphabet size {len(alphabet)} is not a power of two")
    return width


def scheme_count(alphabet: Sequence[PauliOp]) -> int:
    return math.factorial(len(alphabet))


@dataclass(frozen=True)
class EncodingScheme:
    """Secret bijections from each sender's operators to bit symbols.

    Index ``k`` selects the ``k``-th permutation of the symbols in
    lexicographic order; index 0 maps the operators in alphabet order to
    ``00, 01, 10, 11`` (or ``0, 1``).
    """

    alice_index: int = 0
    bob_index: int = 0
    alice_ops: tuple[PauliOp, ...] = ALICE_ALPHABET
    bob_ops: tuple[PauliOp, ...] = BOB_ALPHABET

    def __post_init__(self) -> None:
        for name, index, ops in (("alice", self.alice_index, self.alice_ops), ("bob", self.bob_index, self.bob_ops)):
            _width(ops)
            if len(set(ops)) != len(ops):
                raise ProtocolError(f"{name} alphabet repeats an operator")
            if not 0 <= index < scheme_count(ops):
                raise ProtocolError(f"{name} scheme index {index} out of range 0..{scheme_count(ops) - 1}")

    @property
    def alice_width(self) -> int:
        return _width(self.alice_ops)

    @property
    def bob_width(self) -> int:
        return _width(self.bob_ops)

    @cached_property
    def alice_map(self) -> dict[PauliOp, str]:
        return dict(zip(self.alice_ops, _symbol_permutations(self.alice_width)[self.alice_index]))

    @cached_property
    def bob_map(self) -> dict[PauliOp, str]:
        return dict(zip(self.bob_ops, _symbol_permutations(self.bob_width)[self.bob_index]))

    @cached_property
    def _alice_inverse(self) -> dict[str, PauliOp]:
        return {s: op for op, s in self.alice_map.items()}

    @cached_property
    def _bob_inverse(self) -> dict[str, PauliOp]:
        return {s: op for op, s in self.bob_map.items()}

    def alice_op(self, symbol: str) -> PauliOp:
        return self._alice_inverse[symbol]

    def bob_op(self, symbol: str) -> PauliOp:
        return self._bob_inverse[symbol]


def scheme_from_index(
    alice_index: int,
    bob_index: int,
    alice_ops: Sequence[PauliOp] = ALICE_ALPHABET,
    bob_ops: Sequence[PauliOp] = BOB_ALPHABET,
) -> EncodingScheme:
    return EncodingScheme(alice_index, bob_index, tuple(alice_ops), tuple(bob_ops))


def scheme_index(mapping: dict[PauliOp, str], alphabet: Sequence[PauliOp]) -> int:
    """Inverse of the index -> map direction."""
    symbols = tuple(mapping[op] for op in alphabet)
    return _symbol_permutations(_width(alphabet)).index(symbols)


def bell_bit_map(index: int = 0) -> dict[BellOutcome, str]:
    """Two-bit labels for Bell outcomes; index 0 is Phi+ 00, Phi- 01, Psi+ 10, Psi- 11."""
    perms = _symbol_permutations(2)
    if not 0 <= index < len(perms):
        raise ProtocolError(f"Bell bit map index {index} out of range 0..{len(perms) - 1}")
    return dict(zip((BellOutcome.from_bits(x, z) for x in (0, 1) for z in (0, 1)), perms[index]))


# Sessions -----------------------------------------------------------------

@dataclass(frozen=True)
class SessionConfig:
    group_count: int
    initial_pair: tuple[GhzLabel, GhzLabel] = (GhzLabel.P_PLUS, GhzLabel.P_PLUS)
    alice_scheme: int = 0
    bob_scheme: int = 0
    seed: int = 0
    alice_ops: tuple[PauliOp, ...] = ALICE_ALPHABET
    bob_ops: tuple[PauliOp, ...] = BOB_ALPHABET
    bell_map: int = 0

    def __post_init__(self) -> None:
        if not isinstance(self.group_count, (int, np.integer)) or self.group_count < 1:
            raise ProtocolError(f"group_count must be a positive integer, got {self.group_count!r}")
        if not 0 <= self.seed < 2**64:
            raise ProtocolError("seed must fit in 64 unsigned bits")
        EncodingScheme(self.alice_scheme, self.bob_scheme, tuple(self.alice_ops), tuple(self.bob_ops))
        bell_bit_map(self.bell_map)

    @property
    def scheme(self) -> EncodingScheme:
        return EncodingScheme(self.alice_scheme, self.bob_scheme, tuple(self.alice_ops), tuple(self.bob_ops))

    def rng(self) -> np.random.Generator:
        return np.random.default_rng(self.seed)


def is_decodable(config: SessionConfig) -> bool:
    """Whether every announcement triple identifies a unique operator pair."""
    g1, g2 = config.initial_pair
    return not decode_collisions(g1, g2, config.alice_ops, config.bob_ops)


@dataclass(frozen=True)
class GroupRecord:
    """Private per-group state (never part of the public transcript)."""

    group: int
    ops: OpPair
    alice: BellOutcome
    bob: BellOutcome
    charlie: BellOutcome
    decoded: OpPair | None = None
    branch: tuple[BellOutcome, BellOutcome] | None = None


@lru_cache(maxsize=None)
def group_state(g1: GhzLabel, g2: GhzLabel) -> StateVector:
    """``g1`` on particles 1-3 and ``g2`` on 4-6 (indices 0..5)."""
    return tensor(make_ghz(g1), make_ghz(g2))


def _group_state(config: SessionConfig) -> StateVector:
    return group_state(*config.initial_pair)


def measure_group(
    state: StateVector,
    ops: OpPair,
    rng: np.random.Generator,
    channel: Channel | None = None,
) -> tuple[BellOutcome, BellOutcome, BellOutcome]:
    """Encode on particles 1 and 2, then Bell-measure Alice, Bob, Charlie in turn."""
    if channel is not None:
        state = channel(state, rng)
    state = apply_local(state, ops.alice_op, 0)
    state = apply_local(state, ops.bob_op, 1)
    alice, state = bell_measure(state, ALICE_PAIR, rng)
    bob, state = bell_measure(state, BOB_PAIR, rng)
    charlie, _ = bell_measure(state, CHARLIE_PAIR, rng)
    return alice, bob, charlie


def _as_bits(bits: str | Sequence[int], name: str) -> str:
    text = bits if isinstance(bits, str) else "".join(str(int(b)) for b in bits)
    if any(ch not in "01" for ch in text):
        raise ProtocolError(f"{name} must contain only 0/1, got {text!r}")
    return text


def _chunks(bits: str, width: int) -> list[str]:
    return [bits[i : i + width] for i in range(0, len(bits), width)]


def _run_groups(
    config: SessionConfig,
    alice_symbols: list[str],
    bob_symbols: list[str],
    rng: np.random.Generator,
    transcript: Transcript,
    channel: Channel | None,
    charlie_scheme: EncodingScheme,
) -> list[GroupRecord]:
    """Steps 3-8 for every group; Charlie decodes with ``charlie_scheme``."""
    g1, g2 = config.initial_pair
    scheme = config.scheme
    base = _group_state(config)
    records = []
    for i, (sa, sb) in enumerate(zip(alice_symbols, bob_symbols)):
        ops = OpPair(scheme.alice_op(sa), scheme.bob_op(sb))
        alice, bob, charlie = measure_group(base, ops, rng, channel)
        transcript.append(Party.ALICE, EventKind.MEASUREMENT_ANNOUNCED, group=i, particles=[1, 4])
        transcript.append(Party.BOB, EventKind.MEASUREMENT_ANNOUNCED, group=i, particles=[2, 5])
        transcript.append(Party.CHARLIE, EventKind.MEASUREMENT_ANNOUNCED, group=i, particles=[3, 6], request="results")
        transcript.append(Party.ALICE, EventKind.RESULT_DECLARED, group=i, outcome=alice.value)
        transcript.append(Party.BOB, EventKind.RESULT_DECLARED, group=i, outcome=bob.value)
        try:
            decoded, branch = decode_with_branch(
                charlie, (alice, bob), g1, g2, charlie_scheme.alice_ops, charlie_scheme.bob_ops
            )
        except DecodeFailure as exc:
            transcript.append(
                Party.CHARLIE, EventKind.INFERENCE, group=i, status="failed", error=type(exc).__name__, tamper_flag=True
            )
            records.append(GroupRecord(i, ops, alice, bob, charlie))
            continue
        transcript.append(Party.CHARLIE, EventKind.INFERENCE, group=i, status="decoded")
        records.append(GroupRecord(i, ops, alice, bob, charlie, decoded, branch))
    return records


@dataclass
class QsdcResult:
    alice_bits: str
    bob_bits: str
    transcript: Transcript
    failed_groups: tuple[int, ...]
    groups: list[GroupRecord] = field(repr=False)

    @property
    def ok(self) -> bool:
        return not self.failed_groups


def run_qsdc_session(
    config: SessionConfig,
    alice_message: str | Sequence[int],
    bob_message: str | Sequence[int],
    channel: Channel | None = None,
    negotiate: bool = False,
) -> QsdcResult:
    """Transmit both messages to Charlie and return what Charlie reads out.

    Symbols of groups Charlie cannot decode come back as ``?`` and the group
    is listed in ``failed_groups``.  With ``negotiate=True`` the scheme
    indices are first sent to Charlie under one-time pads built by
    :func:`run_keygen_subprotocol`, and Charlie decodes with what he received.
    """
    scheme = config.scheme
    alice_message = _as_bits(alice_message, "alice_message")
    bob_message = _as_bits(bob_message, "bob_message")
    n = config.group_count
    if len(alice_message) != scheme.alice_width * n:
        raise ProtocolError(f"alice_message needs {scheme.alice_width * n} bits, got {len(alice_message)}")
    if len(bob_message) != scheme.bob_width * n:
        raise ProtocolError(f"bob_message needs {scheme.bob_width * n} bits, got {len(bob_message)}")

    rng = config.rng()
    transcript = Transcript()
    _announce_partition(transcript, config)
    charlie_scheme = scheme
    if negotiate:
        alice_index, bob_index = negotiate_schemes(config, rng, transcript, channel)
        charlie_scheme = EncodingScheme(alice_index, bob_index, scheme.alice_ops, scheme.bob_ops)

    records = _run_groups(
        config,
        _chunks(alice_message, scheme.alice_width),
        _chunks(bob_message, scheme.bob_width),
        rng,
        transcript,
        channel,
        charlie_scheme,
    )
    alice_out, bob_out, failed = [], [], []
    for rec in records:
        if rec.decoded is None:
            failed.append(rec.group)
            alice_out.append("?" * scheme.alice_width)
            bob_out.append("?" * scheme.bob_width)
        else:
            alice_out.append(charlie_scheme.alice_map[rec.decoded.alice_op])
            bob_out.append(charlie_scheme.bob_map[rec.decoded.bob_op])
    return QsdcResult("".join(alice_out), "".join(bob_out), transcript, tuple(failed), records)


def _announce_partition(transcript: Transcript, config: SessionConfig) -> None:
    g1, g2 = config.initial_pair
    transcript.append(
        Party.CHARLIE,
        EventKind.GROUP_PARTITION,
        groups=config.group_count,
        initial_pair=[g1.value, g2.value],
    )


@dataclass(frozen=True)
class SharedKey:
    certain: str
    random: str

    def __len__(self) -> int:
        return len(self.certain) + len(self.random)


@dataclass(frozen=True)
class KeyMaterial:
    """Charlie's copies of both keys plus each sender's own copy."""

    alice_charlie: SharedKey
    bob_charlie: SharedKey
    alice_copy: SharedKey
    bob_copy: SharedKey

    @property
    def agreed(self) -> bool:
        return self.alice_charlie == self.alice_copy and self.bob_charlie == self.bob_copy


@dataclass
class QkdResult:
    keys: KeyMaterial
    transcript: Transcript
    failed_groups: tuple[int, ...]
    groups: list[GroupRecord] = field(repr=False)


def run_qkd_session(
    config: SessionConfig,
    rng: np.random.Generator | None = None,
    channel: Channel | None = None,
) -> QkdResult:
    """Key distribution mode: random symbols in, certain and random key bits out.

    Per group each sender shares their symbol (certain bits) and the bits of
    their pre-operation Bell outcome (random bits) with Charlie.
    """
    rng = config.rng() if rng is None else rng
    scheme = config.scheme
    bits_of = bell_bit_map(config.bell_map)
    n = config.group_count
    a = "".join(map(str, rng.integers(0, 2, scheme.alice_width * n)))
    b = "".join(map(str, rng.integers(0, 2, scheme.bob_width * n)))

    transcript = Transcript()
    _announce_partition(transcript, config)
    records = _run_groups(
        config, _chunks(a, scheme.alice_width), _chunks(b, scheme.bob_width), rng, transcript, channel, scheme
    )
    ac_c, ac_r, bc_c, bc_r = [], [], [], []
    al_c, al_r, bo_c, bo_r = [], [], [], []
    failed = []
    for rec in records:
        if rec.decoded is None:
            failed.append(rec.group)
            continue
        # senders undo their own operator on their own result
        alice_pre, _ = apply_op_bell(rec.alice, rec.ops.alice_op)
        bob_pre, _ = apply_op_bell(rec.bob, rec.ops.bob_op)
        al_c.append(scheme.alice_map[rec.ops.alice_op])
        al_r.append(bits_of[alice_pre])
        bo_c.append(scheme.bob_map[rec.ops.bob_op])
        bo_r.append(bits_of[bob_pre])
        ac_c.append(scheme.alice_map[rec.decoded.alice_op])
        ac_r.append(bits_of[rec.branch[0]])
        bc_c.append(scheme.bob_map[rec.decoded.bob_op])
        bc_r.append(bits_of[rec.branch[1]])
        transcript.append(
            Party.CHARLIE, EventKind.KEY_BIT, group=rec.group, pair="alice-charlie",
            certain=scheme.alice_width, random=2,
        )
        transcript.append(
            Party.CHARLIE, EventKind.KEY_BIT, group=rec.group, pair="bob-charlie",
            certain=scheme.bob_width, random=2,
        )
    keys = KeyMaterial(
        SharedKey("".join(ac_c), "".join(ac_r)),
        SharedKey("".join(bc_c), "".join(bc_r)),
        SharedKey("".join(al_c), "".join(al_r)),
        SharedKey("".join(bo_c), "".join(bo_r)),
    )
    return QkdResult(keys, transcript, tuple(failed), records)


# Key generation with a helper ---------------------------------------------

_PAIR_OF = {Party.ALICE: ALICE_PAIR, Party.BOB: BOB_PAIR, Party.CHARLIE: CHARLIE_PAIR}


@dataclass
class KeygenResult:
    holders: tuple[Party, Party]
    key: str
    peer_key: str
    transcript: Transcript
    outcomes: list[dict[Party, BellOutcome]] = field(repr=False)
    # per group: what each holder concluded about the other holder's outcome
    inferred: list[dict[Party, BellOutcome]] = field(repr=False, default_factory=list)

    @property
    def agreed(self) -> bool:
        return self.key == self.peer_key


def infer_outcome(
    g1: GhzLabel, g2: GhzLabel, known: dict[Party, BellOutcome], target: Party
) -> BellOutcome:
    """Complete the triple from two known outcomes via the decomposition."""
    terms = charlie_completion(g1, g2, **{p.value: o for p, o in known.items()})
    found = {getattr(t, target.value) for t in terms}
    if len(found) != 1:
        raise InferenceAmbiguity(f"{len(found)} candidates for {target.value} given {known}")
    return found.pop()


def run_keygen_subprotocol(
    config: SessionConfig,
    announcing_party: Party = Party.BOB,
    rng: np.random.Generator | None = None,
    transcript: Transcript | None = None,
    channel: Channel | None = None,
    stage: str = "keygen",
) -> KeygenResult:
    """Build a key between the two parties other than ``announcing_party``.

    All three measure without encoding, the announcer publishes their result,
    and each key holder infers the other's outcome.  Key bits are the Bell
    bit labels of Alice's outcome (Bob's when Alice announces).
    """
    announcing_party = Party(announcing_party)
    rng = config.rng() if rng is None else rng
    transcript = Transcript() if transcript is None else transcript
    holders = tuple(p for p in Party if p is not announcing_party)
    source = holders[0]
    other = holders[1]
    bits_of = bell_bit_map(config.bell_map)
    g1, g2 = config.initial_pair
    base = _group_state(config)
    identity = OpPair(PauliOp.SIGMA_00, PauliOp.SIGMA_00)

    key, peer_key, outcomes, inferred = [], [], [], []
    for i in range(config.group_count):
        alice, bob, charlie = measure_group(base, identity, rng, channel)
        actual = {Party.ALICE: alice, Party.BOB: bob, Party.CHARLIE: charlie}
        outcomes.append(actual)
        for party in Party:
            transcript.append(
                party, EventKind.MEASUREMENT_ANNOUNCED, stage=stage, group=i,
                particles=[k + 1 for k in _PAIR_OF[party]],
            )
        announced = actual[announcing_party]
        transcript.append(announcing_party, EventKind.RESULT_DECLARED, stage=stage, group=i, outcome=announced.value)
        # each holder infers the other holder's outcome
        inferred_other = infer_outcome(g1, g2, {announcing_party: announced, source: actual[source]}, other)
        inferred_source = infer_outcome(g1, g2, {announcing_party: announced, other: actual[other]}, source)
        transcript.append(source, EventKind.INFERENCE, stage=stage, group=i, status="inferred")
        transcript.append(other, EventKind.INFERENCE, stage=stage, group=i, status="inferred")
        inferred.append({other: inferred_other, source: inferred_source})
        key.append(bits_of[actual[source]])
        peer_key.append(bits_of[inferred_source])
        transcript.append(
            source, EventKind.KEY_BIT, stage=stage, group=i, pair=f"{source.value}-{other.value}", count=2
        )
    return KeygenResult(holders, "".join(key), "".join(peer_key), transcript, outcomes, inferred)


def index_width(count: int) -> int:
    """Bits needed to send an index below ``count``."""
    return max(1, math.ceil(math.log2(count)))


def negotiate_schemes(
    config: SessionConfig,
    rng: np.random.Generator,
    transcript: Transcript,
    channel: Channel | None = None,
) -> tuple[int, int]:
    """Send both scheme indices to Charlie under one-time pads.

    Returns the indices as Charlie decrypts them.  An index that decrypts out
    of range is reduced modulo the scheme count; that can only happen if the
    pads disagree.
    """
    scheme = config.scheme
    decoded = []
    for sender, helper, index, ops in (
        (Party.ALICE, Party.BOB, scheme.alice_index, scheme.alice_ops),
        (Party.BOB, Party.ALICE, scheme.bob_index, scheme.bob_ops),
    ):
        count = scheme_count(ops)
        width = index_width(count)
        sub = SessionConfig(
            group_count=math.ceil(width / 2),
            initial_pair=config.initial_pair,
            seed=config.seed,
            bell_map=config.bell_map,
        )
        kg = run_keygen_subprotocol(sub, helper, rng, transcript, channel, stage=f"negotiate-{sender.value}")
        sender_pad, charlie_pad = (kg.key, kg.peer_key) if kg.holders[0] is sender else (kg.peer_key, kg.key)
        plain = format(index, f"0{width}b")
        cipher = "".join(str(int(p) ^ int(k)) for p, k in zip(plain, sender_pad))
        transcript.append(sender, EventKind.CIPHERTEXT, target=Party.CHARLIE.value, bits=cipher)
        recovered = int("".join(str(int(c) ^ int(k)) for c, k in zip(cipher, charlie_pad)), 2)
        decoded.append(recovered % count)
    return decoded[0], decoded[1]
