import csv
import io
import json
import os
import subprocess
import sys
import time

import pytest

from qkdsim.cli import main, sweep_values


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


class TestSimulate:
    def test_clean_session(self, capsys):
        code, out, _ = run(capsys, "simulate", "--seed", "7", "--n", "2048")
        assert code == 0
        assert "status     ok" in out and "keys match yes" in out

    def test_detected(self, capsys):
        code, out, _ = run(capsys, "simulate", "--seed", "7", "--eve", "1")
        assert code == 2 and "qber_exceeded" in out

    def test_usage_errors(self, capsys):
        assert run(capsys, "simulate", "--n", "3")[0] == 64
        assert run(capsys, "simulate", "--threshold", "2")[0] == 64
        assert run(capsys, "simulate", "--bogus")[0] == 64
        assert run(capsys, "simulate", "--seed", "-1")[0] == 64

    def test_deterministic(self, capsys, tmp_path):
        a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        out1 = run(capsys, "simulate", "--seed", "11", "--noise", "0.02", "--json", "--transcript", str(a))[1]
        out2 = run(capsys, "simulate", "--seed", "11", "--noise", "0.02", "--json", "--transcript", str(b))[1]
        assert out1 == out2 and a.read_bytes() == b.read_bytes()
        assert json.loads(out1)["final_sha256"]

    def test_env_seed(self, capsys, monkeypatch):
        monkeypatch.setenv("QKDSIM_SEED", "11")
        env = run(capsys, "simulate", "--json")[1]
        monkeypatch.delenv("QKDSIM_SEED")
        assert env == run(capsys, "simulate", "--json", "--seed", "11")[1]

    def test_retries_use_fresh_seeds(self, capsys):
        code, _, err = run(capsys, "simulate", "--seed", "1", "--n", "256", "--eve", "1", "--retries", "2")
        assert code == 2 and err.count("retry") == 2


class TestConfigFile:
    def test_flags_override_file(self, capsys, tmp_path):
        cfg = tmp_path / "s.ini"
        cfg.write_text("[session]\nn = 1024\nseed = 5\nnoise = 0.02\n")
        from_file = json.loads(run(capsys, "simulate", "--config", str(cfg), "--json")[1])
        flags = json.loads(run(capsys, "simulate", "--n", "1024", "--seed", "5", "--noise", "0.02", "--json")[1])
        assert from_file == flags
        override = json.loads(run(capsys, "simulate", "--config", str(cfg), "--n", "2048", "--json")[1])
        assert override["lengths"]["raw"] == 2048

    def test_unknown_key(self, capsys, tmp_path):
        cfg = tmp_path / "s.ini"
        cfg.write_text("[session]\nphotons = 10\n")
        assert run(capsys, "simulate", "--config", str(cfg))[0] == 64

    def test_missing_file(self, capsys, tmp_path):
        assert run(capsys, "simulate", "--config", str(tmp_path / "none.ini"))[0] == 64


class TestSweep:
    def test_values(self):
        assert sweep_values(0.0, 0.1, 0.05) == [0.0, 0.05, 0.1]
        assert sweep_values(0.0, 1.0, 0.1)[-1] == 1.0

    def test_csv(self, capsys):
        code, out, _ = run(capsys, "sweep", "--var", "eve", "--start", "0", "--stop", "1", "--step", "0.5",
                           "--reps", "3", "--n", "1024", "--seed", "2")
        assert code == 0
        rows = list(csv.DictReader(io.StringIO(out)))
        assert [float(r["value"]) for r in rows] == [0.0, 0.5, 1.0]
        assert float(rows[0]["detection_rate"]) == 0.0 and float(rows[2]["detection_rate"]) == 1.0
        assert float(rows[0]["mean_qber"]) < float(rows[1]["mean_qber"]) < float(rows[2]["mean_qber"])
        assert all(r["sessions"] == "3" for r in rows)

    def test_jsonl_to_file(self, capsys, tmp_path):
        out = tmp_path / "sweep.jsonl"
        code = run(capsys, "sweep", "--var", "n", "--start", "512", "--stop", "1024", "--step", "512",
                   "--reps", "2", "--format", "jsonl", "--out", str(out))[0]
        assert code == 0
        rows = [json.loads(line) for line in out.read_text().splitlines()]
        assert [r["value"] for r in rows] == [512, 1024]
        assert rows[1]["mean_final_len"] > rows[0]["mean_final_len"]

    def test_bad_step(self, capsys):
        assert run(capsys, "sweep", "--var", "eve", "--start", "0", "--stop", "1", "--step", "0")[0] == 64


class TestEstimate:
    def test_single(self, capsys):
        code, out, _ = run(capsys, "estimate", "--bits", "1")
        assert code == 0 and "keys        2" in out and "time 1 μs" in out

    def test_table(self, capsys):
        code, out, _ = run(capsys, "estimate", "--table")
        assert code == 0 and len(out.splitlines()) == 8
        assert "1.8e19" in out

    def test_requires_bits(self, capsys):
        assert run(capsys, "estimate")[0] == 64


def test_otp_demo(capsys):
    code, out, _ = run(capsys, "otp-demo", "--seed", "3", "--message", "hello")
    assert code == 0 and "plaintext  hello" in out


def test_otp_demo_message_too_long(capsys):
    code, _, err = run(capsys, "otp-demo", "--seed", "3", "--n", "256", "--message", "x" * 100)
    assert code == 2 and "message needs 800" in err


# --- multi-process -----------------------------------------------------------

def spawn(*argv):
    env = {**os.environ, "PYTHONUNBUFFERED": "1"}
    return subprocess.Popen([sys.executable, "-m", "qkdsim", *argv], stdout=subprocess.PIPE,
                            stderr=subprocess.PIPE, text=True, env=env)


def listening_port(proc) -> int:
    line = proc.stdout.readline()
    assert line.startswith("listening on "), line + proc.stderr.read()
    return int(line.rsplit(":", 1)[1])


def finish(proc, timeout=30):
    out, err = proc.communicate(timeout=timeout)
    return proc.returncode, out, err


def test_listen_connect_processes(tmp_path):
    rx = spawn("listen", "--port", "0", "--seed", "9", "--n", "1024", "--transcript", str(tmp_path / "rx.jsonl"))
    port = listening_port(rx)
    tx = spawn("connect", "--port", str(port), "--seed", "9", "--n", "1024")
    tx_code, tx_out, _ = finish(tx)
    rx_code, rx_out, _ = finish(rx)
    assert tx_code == rx_code == 0
    digest = [l for l in tx_out.splitlines() if l.startswith("final key")]
    assert digest and digest == [l for l in rx_out.splitlines() if l.startswith("final key")]
    assert (tmp_path / "rx.jsonl").read_text().count("\n") > 5


def test_eve_process_detected():
    rx = spawn("listen", "--port", "0", "--seed", "9", "--n", "1024")
    port = listening_port(rx)
    eve = spawn("eve", "--listen", "0", "--upstream", f"127.0.0.1:{port}", "--intercept-prob", "1",
                "--seed", "9")
    eve_port = listening_port(eve)
    tx = spawn("connect", "--port", str(eve_port), "--seed", "9", "--n", "1024")
    assert finish(tx)[0] == 2
    assert finish(rx)[0] == 2
    code, out, _ = finish(eve)
    assert code == 0 and "intercepted 1024 photons" in out


def test_connect_without_listener():
    import socket

    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        port = s.getsockname()[1]
    start = time.monotonic()
    code, out, _ = finish(spawn("connect", "--port", str(port), "--timeout", "2"))
    assert code == 2 and "transport" in out
    assert time.monotonic() - start < 20


def test_version_mismatch_exit_code():
    import socket

    rx = spawn("listen", "--port", "0", "--timeout", "5")
    port = listening_port(rx)
    with socket.create_connection(("127.0.0.1", port)) as s:
        s.sendall(b"QKDSIM/9 0000000000000000 quantum\n")
        s.settimeout(5)
        try:
            assert s.recv(100) == b""
        except ConnectionResetError:
            pass
    code, _, err = finish(rx)
    assert code == 65 and "handshake" in err
