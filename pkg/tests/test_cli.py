import json
import subprocess
import sys

import pytest

from ghz_qsdc.cli import EXIT_OK, EXIT_PROTOCOL, EXIT_USAGE, SEED_ENV, main


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    records = [json.loads(line) for line in out.splitlines() if line.strip()]
    return code, records, err


def test_qsdc_worked_message(capsys, tmp_path):
    path = tmp_path / "t.jsonl"
    code, records, err = run(capsys, "qsdc", "--n", "1", "--alice-bits", "11", "--bob-bits", "1",
                             "--seed", "7", "--transcript", str(path))
    assert code == EXIT_OK
    assert records == [{"alice_bits": "11", "bob_bits": "1", "failed_groups": []}]
    assert "decoded" in err
    for line in path.read_text().splitlines():
        assert set(json.loads(line)) == {"seq", "party", "kind", "payload"}


@pytest.mark.parametrize("argv", [
    ["qsdc", "--n", "0", "--alice-bits", "", "--bob-bits", ""],
    ["qsdc", "--n", "1", "--alice-bits", "1", "--bob-bits", "1"],
    ["qsdc", "--n", "1", "--alice-bits", "11", "--bob-bits", "1", "--alice-scheme", "24"],
    ["qsdc", "--n", "1", "--alice-bits", "11", "--bob-bits", "1", "--initial-pair", "P+"],
    ["attack", "--mode", "state-guess", "--trials", "0"],
    ["yield"],
    ["yield", "--p000", "0.5"],
    ["yield", "--rates", "1,1,1,1,1,1,1"],
    ["bogus"],
])
def test_usage_errors_exit_1(capsys, argv):
    code, _, err = run(capsys, *argv)
    assert code == EXIT_USAGE
    assert "error" in err


def test_non_decodable_alphabet_exit_2(capsys):
    code, records, _ = run(capsys, "qsdc", "--n", "2", "--alice-bits", "0110", "--bob-bits", "01",
                           "--bob-alphabet", "z")
    assert code == EXIT_PROTOCOL
    assert records[0]["failed_groups"] == [0, 1]


def test_swap_roles_and_negotiation(capsys):
    code, records, _ = run(capsys, "qsdc", "--n", "2", "--alice-bits", "10", "--bob-bits", "0111",
                           "--swap-roles", "--negotiate", "--alice-scheme", "1", "--bob-scheme", "20")
    assert code == EXIT_OK
    assert records[0]["alice_bits"] == "10" and records[0]["bob_bits"] == "0111"


def test_qsdc_byte_identical_reruns(capsys, tmp_path):
    outputs = []
    for k in range(2):
        path = tmp_path / f"run{k}.jsonl"
        code, records, _ = run(capsys, "qsdc", "--n", "6", "--alice-bits", "011011001110", "--bob-bits", "101001",
                               "--seed", "42", "--alice-scheme", "11", "--transcript", str(path))
        assert code == EXIT_OK
        outputs.append((path.read_bytes(), records))
    assert outputs[0] == outputs[1]


def test_qkd_counts_and_key_files(capsys, tmp_path):
    code, records, _ = run(capsys, "qkd", "--n", "100", "--seed", "3", "--key-dir", str(tmp_path / "keys"))
    assert code == EXIT_OK
    summary = records[0]
    assert summary["alice_charlie"] == {"certain": 200, "random": 200, "agreed": True}
    assert summary["bob_charlie"] == {"certain": 100, "random": 200, "agreed": True}
    for name in ("alice-charlie", "bob-charlie"):
        rec = json.loads((tmp_path / "keys" / f"{name}.json").read_text())
        assert rec["charlie"] == rec["sender"]


def test_qkd_seeded_reproducibility(capsys, tmp_path):
    blobs = []
    for k in range(2):
        d = tmp_path / f"k{k}"
        run(capsys, "qkd", "--n", "20", "--seed", "9", "--key-dir", str(d), "--transcript", str(d / "t.jsonl"))
        blobs.append([(d / f).read_bytes() for f in ("alice-charlie.json", "bob-charlie.json", "t.jsonl")])
    assert blobs[0] == blobs[1]


def test_seed_from_environment(capsys, monkeypatch, tmp_path):
    monkeypatch.setenv(SEED_ENV, "5")
    run(capsys, "qsdc", "--n", "3", "--alice-bits", "000000", "--bob-bits", "000", "--transcript", str(tmp_path / "a"))
    run(capsys, "qsdc", "--n", "3", "--alice-bits", "000000", "--bob-bits", "000", "--seed", "5",
        "--transcript", str(tmp_path / "b"))
    assert (tmp_path / "a").read_bytes() == (tmp_path / "b").read_bytes()
    monkeypatch.setenv(SEED_ENV, "abc")
    code, _, _ = run(capsys, "qsdc", "--n", "1", "--alice-bits", "00", "--bob-bits", "0")
    assert code == EXIT_USAGE


def test_yield_pure(capsys):
    code, records, _ = run(capsys, "yield", "--p000", "1")
    assert code == EXIT_OK
    assert records[0]["D_h"] == records[0]["D_h_prime"] == 1.0
    assert records[0]["verdict"]["action"] == "distill"


def test_yield_uniform(capsys):
    args = []
    for k in range(8):
        args += [f"--p{k:03b}", "0.125"]
    code, records, _ = run(capsys, "yield", *args)
    assert code == EXIT_OK
    assert records[0]["D_h"] == pytest.approx(-1.0, abs=1e-12)
    assert records[0]["verdict"]["action"] == "discard"


def test_yield_rates_path_equals_diagonal_path(capsys, tmp_path):
    from ghz_qsdc.security import GhzDiagonal, rates_from_diagonal

    probs = {"p000": 0.7, "p001": 0.1, "p010": 0.05, "p100": 0.1, "p111": 0.05}
    args = []
    for k, v in probs.items():
        args += [f"--{k}", str(v)]
    _, direct, _ = run(capsys, "yield", *args)
    rates = rates_from_diagonal(GhzDiagonal.from_dict(probs)).s
    _, via_rates, _ = run(capsys, "yield", "--rates", ",".join(repr(s) for s in rates))
    path = tmp_path / "rates.json"
    path.write_text(json.dumps({f"s{k + 1}": s for k, s in enumerate(rates)}))
    _, via_file, _ = run(capsys, "yield", "--input", str(path))
    for other in (via_rates[0], via_file[0]):
        for key in ("H_b0", "H_b1", "H_b2", "H_b2_given_b1", "I_b0_b12", "D_h", "D_h_prime"):
            assert other[key] == pytest.approx(direct[0][key], abs=1e-12)
        assert other["verdict"]["action"] == direct[0]["verdict"]["action"]


def test_attack_state_guess(capsys):
    code, records, _ = run(capsys, "attack", "--mode", "state-guess", "--trials", "4000", "--seed", "1")
    assert code == EXIT_OK
    rec = records[0]
    assert set(rec) >= {"trials", "successes", "rate", "ci95"}
    assert abs(rec["rate"] - 0.25) < 0.04


def test_attack_message_guess_and_leak(capsys):
    code, records, _ = run(capsys, "attack", "--mode", "message-guess", "--trials", "4000", "--seed", "2")
    assert code == EXIT_OK
    rates = {r["target"]: r["rate"] for r in records}
    assert rates["alice"] < 0.3 and rates["bob"] < 0.55
    _, records, _ = run(capsys, "attack", "--mode", "message-guess", "--trials", "500", "--leak")
    assert all(r["rate"] == 1.0 for r in records)


def test_attack_deterministic_across_workers(capsys):
    _, one, _ = run(capsys, "attack", "--mode", "state-guess", "--trials", "15000", "--seed", "4")
    _, two, _ = run(capsys, "attack", "--mode", "state-guess", "--trials", "15000", "--seed", "4", "--workers", "2")
    assert one == two


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "ghz_qsdc", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert "exit codes" in proc.stdout
