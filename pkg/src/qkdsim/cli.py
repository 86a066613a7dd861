"""``qkdsim`` command line.

Exit codes: 0 success, 2 detection or abort, 64 usage, 65 protocol/handshake,
70 internal error.
"""

from __future__ import annotations

import argparse
import asyncio
import configparser
import csv
import io
import json
import logging
import math
import os
import statistics
import sys
from dataclasses import dataclass
from typing import Optional

from .adversary import Eve, EveStateError
from .keys import Stage
from .protocol import (EndpointResult, SessionConfig, SessionOutcome, allowed_bases,
                       run_session, write_transcript)
from .quantum import ValidationError
from .reconciliation import ReconciliationParams
from .rng import RandomSource, derive_seed
from .transport import HandshakeError, run_emitter_socket, run_eve_proxy, run_receiver_socket
from .vernam import BitString, PadExhausted, PadState, brute_force_estimate, format_duration, format_sci, otp_decrypt, otp_encrypt

EXIT_OK, EXIT_ABORT, EXIT_USAGE, EXIT_PROTOCOL, EXIT_INTERNAL = 0, 2, 64, 65, 70

SWEEP_VARS = {
    "eve": "eve_intercept_prob",
    "noise": "noise_flip_prob",
    "n": "n",
    "check_fraction": "check_fraction",
}
SWEEP_FIELDS = ("value", "mean_qber", "std_qber", "detection_rate", "mean_final_len",
                "mean_eve_known_fraction", "sessions")
TABLE_BITS = (64, 128, 256, 512)
TABLE_RATES = (1, 10**6)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# --- session configuration ---------------------------------------------------

# flag dest -> (config key, converter)
_SESSION_KEYS = {
    "n": int,
    "bases": str,
    "check_fraction": float,
    "check_count": int,
    "threshold": float,
    "noise": float,
    "eve": float,
    "seed": int,
    "block_len": int,
    "passes": int,
    "permute": lambda v: str(v).lower() in ("1", "true", "yes", "on"),
    "margin": int,
    "session_id": str,
}


def _add_session_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("session")
    g.add_argument("--config", help="INI file with a [session] section; flags override it")
    g.add_argument("--n", type=int, help="photons sent (default 4096)")
    g.add_argument("--bases", choices=("two", "three"), help="two_basis (default) or three_basis")
    g.add_argument("--check-fraction", type=float, help="fraction of sifted bits disclosed (default 0.25)")
    g.add_argument("--check-count", type=int, help="exact number of check bits (overrides --check-fraction)")
    g.add_argument("--threshold", type=float, help="abort when QBER exceeds this (default 0.11)")
    g.add_argument("--noise", type=float, help="in-basis bit flip probability of the fiber")
    g.add_argument("--eve", type=float, help="intercept-resend probability (0 disables the adversary)")
    g.add_argument("--seed", type=int, help="root seed (falls back to $QKDSIM_SEED, then 0)")
    g.add_argument("--block-len", type=int, help="initial reconciliation block length (default: auto)")
    g.add_argument("--passes", type=int, help="reconciliation passes (default 4)")
    g.add_argument("--no-permute", dest="permute", action="store_const", const=False,
                   help="skip public permutations between reconciliation passes")
    g.add_argument("--margin", type=int, help="security margin bits removed by amplification (default 16)")
    g.add_argument("--session-id", help="session identifier (default: derived from the seed)")


def _read_config_file(path: str) -> dict:
    parser = configparser.ConfigParser()
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from None
    except configparser.Error as exc:
        raise UsageError(f"bad config {path}: {exc}") from None
    if not parser.has_section("session"):
        return {}
    out = {}
    for key, raw in parser.items("session"):
        key = key.replace("-", "_")
        if key not in _SESSION_KEYS:
            raise UsageError(f"unknown config key {key!r}")
        try:
            out[key] = _SESSION_KEYS[key](raw)
        except ValueError:
            raise UsageError(f"bad value for {key}: {raw!r}") from None
    return out


def _default_seed() -> int:
    env = os.environ.get("QKDSIM_SEED")
    if env is None:
        return 0
    try:
        return int(env, 0)
    except ValueError:
        raise UsageError(f"QKDSIM_SEED is not an integer: {env!r}") from None


def session_settings(args) -> dict:
    """Merge defaults < config file < flags."""
    settings = _read_config_file(args.config) if getattr(args, "config", None) else {}
    for key in _SESSION_KEYS:
        value = getattr(args, key, None)
        if value is not None:
            settings[key] = value
    settings.setdefault("seed", _default_seed())
    return settings


def build_config(settings: dict, seed: Optional[int] = None, **overrides) -> SessionConfig:
    s = {**settings, **overrides}
    recon = ReconciliationParams(
        initial_block_len=s.get("block_len"),
        passes=s.get("passes", 4),
        permute_between_passes=s.get("permute", True),
    )
    kwargs = dict(reconciliation=recon)
    simple = {"n": "n", "check_fraction": "check_fraction", "check_count": "check_count",
              "threshold": "qber_threshold", "noise": "noise_flip_prob", "eve": "eve_intercept_prob",
              "margin": "security_margin", "session_id": "session_id"}
    for key, field_name in simple.items():
        if s.get(key) is not None:
            kwargs[field_name] = s[key]
    if s.get("bases") is not None:
        kwargs["bases_mode"] = {"two": "two_basis", "three": "three_basis"}.get(s["bases"], s["bases"])
    root = s["seed"] if seed is None else seed
    if not 0 <= root < 1 << 64:
        raise UsageError("seed must be a 64-bit unsigned integer")
    try:
        return SessionConfig.from_seed(root, **kwargs)
    except (ValidationError, ValueError) as exc:
        raise UsageError(str(exc)) from None


# --- reports -----------------------------------------------------------------

def _stage_line(stage: Stage, res: EndpointResult, other: EndpointResult) -> Optional[str]:
    a, b = res.keys.get(stage), other.keys.get(stage)
    if a is None and b is None:
        return None
    la = len(a) if a is not None else "-"
    lb = len(b) if b is not None else "-"
    return f"{stage.name.lower():<11}{la} / {lb}"


def render_report(outcome: SessionOutcome) -> str:
    cfg = outcome.config
    out = [f"session    {cfg.session_id}"]
    out.append("status     ok" if not outcome.aborted else f"status     aborted ({outcome.reason})")
    if outcome.qber_estimate is not None:
        out.append(f"qber       {outcome.qber_estimate:.4f} (threshold {cfg.qber_threshold:g})")
    out.append(f"detected   {'yes' if outcome.detected else 'no'}")
    out.append("key length emitter / receiver")
    for stage in Stage:
        line = _stage_line(stage, outcome.emitter, outcome.receiver)
        if line:
            out.append("  " + line)
    sifted, checked = outcome.keys_at(Stage.SIFTED)[0], outcome.keys_at(Stage.CHECKED)[0]
    if sifted is not None and checked is not None:
        out.append(f"leakage    check bits {len(sifted) - len(checked)}")
    if outcome.ledger is not None:
        out.append(f"           parities {outcome.ledger.disclosed_parities}, "
                   f"discarded {len(outcome.ledger.discarded_positions)}, margin {cfg.security_margin}")
    if outcome.adversary_summary is not None:
        s = outcome.adversary_summary
        out.append(f"eve        known {s.known_bits}/{s.sifted_len} sifted bits ({s.known_fraction:.4f})")
    final = outcome.keys_at(Stage.FINAL)
    if final[0] is not None:
        out.append(f"final key  sha256 {final[0].digest()}")
        out.append(f"keys match {'yes' if final[0] == final[1] else 'NO'}")
    return "\n".join(out)


def _outcome_json(outcome: SessionOutcome) -> dict:
    final = outcome.keys_at(Stage.FINAL)[0]
    ledger = outcome.ledger
    return {
        "session": outcome.config.session_id,
        "aborted": outcome.aborted,
        "reason": outcome.reason,
        "detected": outcome.detected,
        "qber": outcome.qber_estimate,
        "lengths": {st.name.lower(): len(k) for st, k in sorted(outcome.emitter.keys.items())},
        "disclosed_parities": ledger.disclosed_parities if ledger else None,
        "discarded": len(ledger.discarded_positions) if ledger else None,
        "eve_known_fraction": outcome.adversary_summary.known_fraction if outcome.adversary_summary else None,
        "final_sha256": final.digest() if final is not None else None,
    }


# --- commands ----------------------------------------------------------------

def _run_with_retries(settings: dict, retries: int) -> SessionOutcome:
    outcome = run_session(build_config(settings))
    for attempt in range(1, retries + 1):
        if not outcome.detected:
            break
        print(f"# detected eavesdropping (qber {outcome.qber_estimate:.4f}); retry {attempt} with fresh seeds",
              file=sys.stderr)
        outcome = run_session(build_config(settings, seed=derive_seed(settings["seed"], "retry", attempt)))
    return outcome


def cmd_simulate(args) -> int:
    settings = session_settings(args)
    if args.retries < 0:
        raise UsageError("--retries must be >= 0")
    outcome = _run_with_retries(settings, args.retries)
    if args.json:
        print(json.dumps(_outcome_json(outcome), sort_keys=True))
    else:
        print(render_report(outcome))
    if args.transcript:
        try:
            write_transcript(outcome, args.transcript)
        except OSError as exc:
            raise UsageError(f"cannot write transcript: {exc}") from None
    return EXIT_ABORT if outcome.aborted else EXIT_OK


@dataclass
class SweepRow:
    value: float
    mean_qber: float
    std_qber: float
    detection_rate: float
    mean_final_len: float
    mean_eve_known_fraction: float
    sessions: int


def sweep_values(start: float, stop: float, step: float) -> list[float]:
    if step <= 0:
        raise UsageError("--step must be positive")
    if stop < start:
        raise UsageError("--stop must be >= --start")
    count = int(math.floor((stop - start) / step + 1e-9)) + 1
    return [round(start + i * step, 12) for i in range(count)]


def run_sweep(settings: dict, variable: str, values: list[float], reps: int) -> list[SweepRow]:
    if variable not in SWEEP_VARS:
        raise UsageError(f"cannot sweep {variable!r}")
    if reps < 1:
        raise UsageError("--reps must be >= 1")
    rows = []
    for j, value in enumerate(sorted(values)):
        v = int(value) if variable == "n" else value
        qbers, detections, lengths, known = [], 0, [], []
        for rep in range(reps):
            cfg = build_config(settings, seed=derive_seed(settings["seed"], "sweep", j, rep), **{variable: v})
            out = run_session(cfg)
            if out.qber_estimate is not None:
                qbers.append(out.qber_estimate)
            detections += out.detected
            final = out.keys_at(Stage.FINAL)[0]
            lengths.append(len(final) if final is not None else 0)
            known.append(out.adversary_summary.known_fraction if out.adversary_summary else 0.0)
        rows.append(SweepRow(
            value=v,
            mean_qber=statistics.fmean(qbers) if qbers else float("nan"),
            std_qber=statistics.pstdev(qbers) if qbers else float("nan"),
            detection_rate=detections / reps,
            mean_final_len=statistics.fmean(lengths),
            mean_eve_known_fraction=statistics.fmean(known),
            sessions=reps,
        ))
    return rows


def format_rows(rows: list[SweepRow], fmt: str) -> str:
    buf = io.StringIO()
    if fmt == "csv":
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(SWEEP_FIELDS)
        for row in rows:
            writer.writerow([_fmt_num(getattr(row, f)) for f in SWEEP_FIELDS])
    else:
        for row in rows:
            buf.write(json.dumps({f: getattr(row, f) for f in SWEEP_FIELDS}) + "\n")
    return buf.getvalue()


def _fmt_num(x) -> str:
    return str(x) if isinstance(x, int) else repr(float(x))


def cmd_sweep(args) -> int:
    settings = session_settings(args)
    rows = run_sweep(settings, args.var, sweep_values(args.start, args.stop, args.step), args.reps)
    text = format_rows(rows, args.format)
    if args.out in (None, "-"):
        sys.stdout.write(text)
    else:
        try:
            with open(args.out, "w", encoding="utf-8") as fh:
                fh.write(text)
        except OSError as exc:
            raise UsageError(f"cannot write {args.out}: {exc}") from None
    return EXIT_OK


def _endpoint_report(role: str, config: SessionConfig, res: EndpointResult) -> str:
    lines = [f"{role} session {config.session_id}"]
    lines.append("status ok" if not res.aborted else f"status aborted ({res.reason})")
    if res.qber is not None:
        lines.append(f"qber {res.qber:.4f}")
    final = res.keys.get(Stage.FINAL)
    if final is not None:
        lines.append(f"final key {len(final)} bits sha256 {final.digest()}")
    return "\n".join(lines)


def _finish_endpoint(args, role: str, config: SessionConfig, res: EndpointResult) -> int:
    print(_endpoint_report(role, config, res), flush=True)
    if args.transcript:
        with open(args.transcript, "w", encoding="utf-8") as fh:
            for i, entry in enumerate(res.transcript):
                record = {"kind": "message", "seq": i, "from": entry.sender, **entry.message.to_json()}
                fh.write(json.dumps(record, sort_keys=True, separators=(",", ":")) + "\n")
    return EXIT_ABORT if res.aborted else EXIT_OK


def _announce(addr) -> None:
    print(f"listening on {addr[0]}:{addr[1]}", flush=True)


def cmd_listen(args) -> int:
    config = build_config(session_settings(args))
    res = asyncio.run(run_receiver_socket(config, args.host, args.port, _announce, args.timeout))
    return _finish_endpoint(args, "receiver", config, res)


def _host_port(text: str) -> tuple[str, int]:
    host, sep, port = text.rpartition(":")
    if not sep:
        host, port = "127.0.0.1", text
    try:
        return host or "127.0.0.1", int(port)
    except ValueError:
        raise UsageError(f"bad address {text!r}") from None


def cmd_connect(args) -> int:
    config = build_config(session_settings(args))
    res = asyncio.run(run_emitter_socket(config, args.host, args.port, args.timeout))
    return _finish_endpoint(args, "emitter", config, res)


def cmd_eve(args) -> int:
    if not 0.0 <= args.intercept_prob <= 1.0:
        raise UsageError("--intercept-prob must lie in [0, 1]")
    seed = args.seed if args.seed is not None else _default_seed()
    mode = {"two": "two_basis", "three": "three_basis"}[args.bases]
    eve = Eve(args.intercept_prob, RandomSource(derive_seed(seed, "eve")), allowed_bases(mode))
    listen_host, listen_port = _host_port(args.listen)
    up_host, up_port = _host_port(args.upstream)
    sid = asyncio.run(run_eve_proxy(eve, listen_host, listen_port, up_host, up_port, _announce, args.timeout))
    print(f"eve session {sid}")
    print(f"intercepted {len(eve.quantum_log)} photons, saw {len(eve.classical_log)} classical messages")
    try:
        s = eve.summary()
        print(f"known {s.known_bits}/{s.sifted_len} sifted bits ({s.known_fraction:.4f})")
    except EveStateError:
        print("known n/a (bases never announced)")
    return EXIT_OK


def estimate_row(bits: int, rate: float) -> str:
    est = brute_force_estimate(bits, rate)
    return f"{bits:>4} bits  keys {format_sci(est.keyspace):>8}  rate {format_sci(rate):>5}/μs  time {format_duration(est)}"


def cmd_estimate(args) -> int:
    if args.table:
        for bits in TABLE_BITS:
            for rate in TABLE_RATES:
                print(estimate_row(bits, rate))
        return EXIT_OK
    if args.bits is None:
        raise UsageError("--bits is required unless --table is given")
    if args.bits < 1 or args.rate <= 0:
        raise UsageError("--bits must be >= 1 and --rate > 0")
    print(estimate_row(args.bits, args.rate))
    return EXIT_OK


def cmd_otp_demo(args) -> int:
    settings = session_settings(args)
    outcome = run_session(build_config(settings))
    print(render_report(outcome))
    if outcome.aborted:
        return EXIT_ABORT
    key_a, key_b = outcome.keys_at(Stage.FINAL)
    plaintext = BitString.from_bytes(args.message.encode("utf-8"))
    try:
        ciphertext = otp_encrypt(plaintext, PadState(key_a.bits))
        recovered = otp_decrypt(ciphertext, PadState(key_b.bits))
    except PadExhausted:
        print(f"final key has {len(key_a)} bits, message needs {len(plaintext)}", file=sys.stderr)
        return EXIT_ABORT
    print(f"ciphertext {ciphertext.data.hex()}")
    print(f"plaintext  {recovered.data.decode('utf-8', errors='replace')}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="qkdsim", description="BB84 quantum key distribution simulator")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="run one in-process session")
    _add_session_flags(p)
    p.add_argument("--transcript", help="write the JSON-lines transcript here")
    p.add_argument("--json", action="store_true", help="print a JSON summary instead of the report")
    p.add_argument("--retries", type=int, default=0, help="re-run with fresh seeds after detection")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="sweep one parameter and tabulate QBER/detection")
    _add_session_flags(p)
    p.add_argument("--var", required=True, choices=sorted(SWEEP_VARS))
    p.add_argument("--start", type=float, required=True)
    p.add_argument("--stop", type=float, required=True)
    p.add_argument("--step", type=float, required=True)
    p.add_argument("--reps", type=int, default=10)
    p.add_argument("--format", choices=("csv", "jsonl"), default="csv")
    p.add_argument("--out", help="output path (default stdout)")
    p.set_defaults(func=cmd_sweep)

    for name, func, help_ in (("listen", cmd_listen, "run the receiver, waiting for a connection"),
                              ("connect", cmd_connect, "run the emitter against a listening receiver")):
        p = sub.add_parser(name, help=help_)
        _add_session_flags(p)
        p.add_argument("--host", default="127.0.0.1")
        p.add_argument("--port", type=int, required=True)
        p.add_argument("--timeout", type=float, default=30.0)
        p.add_argument("--transcript", help="write this endpoint's JSON-lines transcript here")
        p.set_defaults(func=func)

    p = sub.add_parser("eve", help="intercept-resend proxy between connect and listen")
    p.add_argument("--listen", required=True, help="[host:]port to accept the emitter on")
    p.add_argument("--upstream", required=True, help="host:port of the listening receiver")
    p.add_argument("--intercept-prob", type=float, required=True)
    p.add_argument("--seed", type=int, help="root seed (the same value as the endpoints' --seed)")
    p.add_argument("--bases", choices=("two", "three"), default="two")
    p.add_argument("--timeout", type=float, default=30.0)
    p.set_defaults(func=cmd_eve)

    p = sub.add_parser("estimate", help="brute-force search cost for a key size")
    p.add_argument("--bits", type=int)
    p.add_argument("--rate", type=float, default=1.0, help="decryptions per microsecond")
    p.add_argument("--table", action="store_true", help="print 64/128/256/512-bit rows at both rates")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("otp-demo", help="distill a key, then one-time-pad a message with it")
    _add_session_flags(p)
    p.add_argument("--message", required=True)
    p.set_defaults(func=cmd_otp_demo)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # --help or a usage error
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"qkdsim: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except HandshakeError as exc:
        print(f"qkdsim: handshake failed: {exc}", file=sys.stderr)
        return EXIT_PROTOCOL
    except KeyboardInterrupt:
        return EXIT_INTERNAL
    except Exception as exc:  # noqa: BLE001
        logging.getLogger("qkdsim").debug("internal error", exc_info=True)
        print(f"qkdsim: internal error: {exc!r}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
