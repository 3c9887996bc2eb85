"""Command-line entry point.

Exit codes: 0 success, 1 invalid usage, 2 a group could not be decoded.
Results go to standard output as JSON lines; a short summary goes to
standard error.  ``GHZ_QSDC_SEED`` sets the default seed.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import adversary, protocol, security
from .quantum_core import GhzLabel
from .swap_algebra import ALICE_ALPHABET, BOB_ALPHABET, BOB_ALPHABET_IY, BOB_ALPHABET_Z

EXIT_OK, EXIT_USAGE, EXIT_PROTOCOL = 0, 1, 2
SEED_ENV = "GHZ_QSDC_SEED"

_BOB_ALPHABETS = {"x": BOB_ALPHABET, "iy": BOB_ALPHABET_IY, "z": BOB_ALPHABET_Z}

EPILOG = "exit codes: 0 ok, 1 usage error, 2 protocol failure (a group could not be decoded)"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:
        raise UsageError(message)


def _default_seed() -> int:
    raw = os.environ.get(SEED_ENV, "0")
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"{SEED_ENV} must be an integer, got {raw!r}") from None


def _pair(text: str) -> tuple[GhzLabel, GhzLabel]:
    try:
        first, second = (GhzLabel(part.strip()) for part in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected two GHZ labels like 'P+,P+', got {text!r}") from None
    return first, second


def _session_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--n", type=int, required=True, help="number of groups (two GHZ triplets each)")
    p.add_argument("--seed", type=int, default=None, help=f"session seed (default ${SEED_ENV} or 0)")
    p.add_argument("--alice-scheme", type=int, default=0, help="Alice's encoding scheme index")
    p.add_argument("--bob-scheme", type=int, default=0, help="Bob's encoding scheme index")
    p.add_argument("--initial-pair", type=_pair, default=(GhzLabel.P_PLUS, GhzLabel.P_PLUS))
    p.add_argument(
        "--bob-alphabet", choices=sorted(_BOB_ALPHABETS), default="x",
        help="two-operator alphabet: x={I, sigma_x}, iy={I, i sigma_y}, z={I, sigma_z} (not decodable)",
    )
    p.add_argument("--swap-roles", action="store_true", help="Alice sends 1 bit per group and Bob 2")
    p.add_argument("--transcript", type=Path, default=None, help="write the public transcript (JSONL) here")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ghz-qsdc", description="GHZ entanglement-swapping QSDC simulator.", epilog=EPILOG)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("qsdc", help="send messages from Alice and Bob to Charlie", epilog=EPILOG)
    _session_args(p)
    p.add_argument("--alice-bits", required=True, help="Alice's message as a 0/1 string")
    p.add_argument("--bob-bits", required=True, help="Bob's message as a 0/1 string")
    p.add_argument("--negotiate", action="store_true", help="send scheme indices under one-time pads first")

    p = sub.add_parser("qkd", help="distribute keys between Charlie and each sender", epilog=EPILOG)
    _session_args(p)
    p.add_argument("--key-dir", type=Path, default=None, help="write one key file per party pair here")

    p = sub.add_parser("yield", help="hashing yields of a GHZ-diagonal channel", epilog=EPILOG)
    for k in range(8):
        key = "p" + format(k, "03b")
        p.add_argument(f"--{key}", type=float, default=None)
    p.add_argument("--rates", default=None, help="seven comma-separated stabilizer error rates s1..s7")
    p.add_argument("--input", type=Path, default=None, help="JSON file with p000..p111 or s1..s7 keys")
    p.add_argument("--ensemble-size", type=int, default=1000, help="number of noisy copies N'")

    p = sub.add_parser("attack", help="Monte Carlo eavesdropper estimates", epilog=EPILOG)
    p.add_argument("--mode", choices=("state-guess", "message-guess"), required=True)
    p.add_argument("--trials", type=int, required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--leak", action="store_true", help="give Eve Charlie's outcome and the scheme")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--initial-pair", type=_pair, default=(GhzLabel.P_PLUS, GhzLabel.P_PLUS))
    return parser


def _config(args: argparse.Namespace) -> protocol.SessionConfig:
    if args.n < 1:
        raise UsageError(f"--n must be at least 1, got {args.n}")
    alice_ops, bob_ops = ALICE_ALPHABET, _BOB_ALPHABETS[args.bob_alphabet]
    if args.swap_roles:
        alice_ops, bob_ops = bob_ops, alice_ops
    seed = _default_seed() if args.seed is None else args.seed
    try:
        return protocol.SessionConfig(
            group_count=args.n,
            initial_pair=args.initial_pair,
            alice_scheme=args.alice_scheme,
            bob_scheme=args.bob_scheme,
            seed=seed,
            alice_ops=alice_ops,
            bob_ops=bob_ops,
        )
    except protocol.ProtocolError as exc:
        raise UsageError(str(exc)) from None


def _emit(record: dict) -> None:
    sys.stdout.write(json.dumps(record, sort_keys=True) + "\n")


def _write_transcript(path: Path | None, transcript: protocol.Transcript) -> None:
    if path is None:
        return
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(transcript.to_jsonl(), encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot write transcript: {exc}") from None


def cmd_qsdc(args: argparse.Namespace) -> int:
    config = _config(args)
    try:
        result = protocol.run_qsdc_session(config, args.alice_bits, args.bob_bits, negotiate=args.negotiate)
    except protocol.ProtocolError as exc:
        raise UsageError(str(exc)) from None
    _write_transcript(args.transcript, result.transcript)
    _emit({"alice_bits": result.alice_bits, "bob_bits": result.bob_bits, "failed_groups": list(result.failed_groups)})
    print(
        f"decoded alice={result.alice_bits} bob={result.bob_bits} "
        f"({len(result.failed_groups)} of {config.group_count} groups failed)",
        file=sys.stderr,
    )
    return EXIT_OK if result.ok else EXIT_PROTOCOL


def cmd_qkd(args: argparse.Namespace) -> int:
    config = _config(args)
    result = protocol.run_qkd_session(config)
    keys = result.keys
    _write_transcript(args.transcript, result.transcript)
    pairs = {"alice-charlie": (keys.alice_charlie, keys.alice_copy), "bob-charlie": (keys.bob_charlie, keys.bob_copy)}
    if args.key_dir is not None:
        args.key_dir.mkdir(parents=True, exist_ok=True)
        for name, (charlie_copy, sender_copy) in pairs.items():
            record = {
                "pair": name,
                "charlie": {"certain": charlie_copy.certain, "random": charlie_copy.random},
                "sender": {"certain": sender_copy.certain, "random": sender_copy.random},
            }
            (args.key_dir / f"{name}.json").write_text(json.dumps(record, sort_keys=True) + "\n", encoding="utf-8")
    summary = {
        name.replace("-", "_"): {"certain": len(c.certain), "random": len(c.random), "agreed": c == s}
        for name, (c, s) in pairs.items()
    }
    summary["failed_groups"] = list(result.failed_groups)
    _emit(summary)
    print(
        "alice-charlie {certain}+{random} bits, ".format(**summary["alice_charlie"])
        + "bob-charlie {certain}+{random} bits".format(**summary["bob_charlie"]),
        file=sys.stderr,
    )
    return EXIT_OK if not result.failed_groups else EXIT_PROTOCOL


def _diagonal_input(args: argparse.Namespace) -> security.GhzDiagonal:
    inline = {("p" + format(k, "03b")): getattr(args, "p" + format(k, "03b")) for k in range(8)}
    inline = {k: v for k, v in inline.items() if v is not None}
    sources = sum(bool(x) for x in (inline, args.rates, args.input))
    if sources != 1:
        raise UsageError("give exactly one of --pXXX values, --rates or --input")
    try:
        if inline:
            return security.GhzDiagonal.from_dict(inline)
        if args.rates:
            rates = tuple(float(v) for v in args.rates.split(","))
            return security.diagonal_from_rates(security.StabilizerRates(rates))
        data = json.loads(args.input.read_text(encoding="utf-8"))
        if any(k.startswith("s") for k in data):
            rates = tuple(float(data[f"s{k}"]) for k in range(1, 8))
            return security.diagonal_from_rates(security.StabilizerRates(rates))
        return security.GhzDiagonal.from_dict(data)
    except (security.SecurityError, ValueError, KeyError, OSError) as exc:
        raise UsageError(f"invalid channel description: {exc}") from None


def cmd_yield(args: argparse.Namespace) -> int:
    diagonal = _diagonal_input(args)
    if args.ensemble_size < 0:
        raise UsageError("--ensemble-size must be non-negative")
    report = security.yields(diagonal, args.ensemble_size)
    _emit({"diagonal": diagonal.to_dict(), **report.to_dict()})
    print(f"D_h={report.d_h:.6f} D_h'={report.d_h_prime:.6f} -> {report.verdict.action}", file=sys.stderr)
    return EXIT_OK


def cmd_attack(args: argparse.Namespace) -> int:
    if args.trials < 1:
        raise UsageError(f"--trials must be at least 1, got {args.trials}")
    if args.workers < 1:
        raise UsageError("--workers must be at least 1")
    seed = _default_seed() if args.seed is None else args.seed
    config = protocol.SessionConfig(1, initial_pair=args.initial_pair, seed=seed)
    if args.mode == "state-guess":
        report = adversary.state_guess_attack(config, args.trials, seed, args.leak, args.workers)
        _emit({"mode": args.mode, "target": "branch", **report.to_dict()})
        print(f"state-guess rate {report.rate:.4f}", file=sys.stderr)
    else:
        alice, bob = adversary.message_guess_attack(config, args.trials, seed, args.leak, args.workers)
        _emit({"mode": args.mode, "target": "alice", **alice.to_dict()})
        _emit({"mode": args.mode, "target": "bob", **bob.to_dict()})
        print(f"message-guess rates alice {alice.rate:.4f} bob {bob.rate:.4f}", file=sys.stderr)
    return EXIT_OK


_COMMANDS = {"qsdc": cmd_qsdc, "qkd": cmd_qkd, "yield": cmd_yield, "attack": cmd_attack}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"ghz-qsdc: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
