"""Command-line entry point: ``wbwf plan|run|inspect|sweep``."""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .bits import BitString
from .codec import CodecError, decode, describe
from .medium import ProtocolViolation
from .metrics import write_trace
from .planner import (
    TABLE1,
    PlannerInput,
    SlotKind,
    TdmaConfig,
    load_config,
    load_planner_input,
    named_config,
    plan_configurations,
    validate_config,
)
from .scenario import ScenarioInvalid, load_scenario
from .simulator import run

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_VIOLATION = 3

SUMMARY_HEADER = (
    "frame_ms", "mgmt", "rt", "be", "mgmt_us", "rt_us", "be_us",
    "mgmt_pdu_bits", "padded_bits", "voice_per_rt", "be_bytes",
)


def summary_row(cfg: TdmaConfig) -> tuple:
    return (
        cfg.frame_length_us / 1000, cfg.mgmt_slots, cfg.rt_slots, cfg.be_slots,
        cfg.slot_us(SlotKind.MGMT), cfg.slot_us(SlotKind.RT), cfg.slot_us(SlotKind.BE),
        cfg.mgmt_pdu_bits, cfg.mgmt_padded_bits, cfg.rt_voice_frames_per_slot, cfg.be_payload_bytes,
    )


def _print_table(rows, out) -> None:
    print("\t".join(SUMMARY_HEADER), file=out)
    for r in rows:
        print("\t".join(f"{v:g}" if isinstance(v, float) else str(v) for v in r), file=out)


def _fail(msg: str, code: int = EXIT_INVALID) -> int:
    print(f"error: {msg}", file=sys.stderr)
    return code


def cmd_plan(args) -> int:
    if args.table1:
        configs = [TABLE1[n] for n in sorted(TABLE1)]
        elapsed = 0.0
    else:
        try:
            inp = load_planner_input(Path(args.input).read_text()) if args.input else PlannerInput()
        except (OSError, ValueError) as exc:
            return _fail(str(exc))
        t0 = time.perf_counter()
        configs = plan_configurations(inp)
        elapsed = time.perf_counter() - t0
    if args.full:
        for cfg in configs[: args.limit or None]:
            print(cfg.to_text())
    else:
        _print_table([summary_row(c) for c in configs[: args.limit or None]], sys.stdout)
    if not args.table1:
        print(f"# {len(configs)} configurations in {elapsed:.2f} s", file=sys.stderr)
    return EXIT_OK


def _resolve_config(ref: str) -> TdmaConfig:
    path = Path(ref)
    if path.is_file():
        return load_config(path.read_text())
    return named_config(ref)


def cmd_inspect(args) -> int:
    try:
        cfg = _resolve_config(args.config)
        report = validate_config(cfg)
        if not report.ok:
            return _fail(f"config invalid:\n{report}")
        kind = SlotKind(args.kind.upper())
        text = args.hex if args.hex != "-" else sys.stdin.read()
        digits = "".join(text.split())
        capacity = cfg.capacity_bits(kind)
        bits = BitString.from_hex(digits, capacity if len(digits) * 4 >= capacity else None)
        pdu = decode(bits, cfg, kind)
    except (ValueError, CodecError, EOFError) as exc:
        return _fail(f"{type(exc).__name__}: {exc}")
    fields = describe(pdu)
    if args.json:
        print(json.dumps(fields, sort_keys=True))
    else:
        width = max(len(k) for k in fields)
        for k, v in fields.items():
            print(f"{k.ljust(width)}  {v}")
    return EXIT_OK


def _run_once(path: str, seed: int | None):
    sc = load_scenario(path)
    if seed is not None:
        sc = sc.with_seed(seed)
    return run(sc)


def cmd_run(args) -> int:
    try:
        result = _run_once(args.scenario, args.seed)
    except ScenarioInvalid as exc:
        for field, msg in exc.problems:
            print(f"error: {field}: {msg}", file=sys.stderr)
        return EXIT_INVALID
    except ProtocolViolation as exc:
        return _fail(f"protocol violation: {exc}", EXIT_VIOLATION)
    report = result.report
    if args.trace:
        write_trace(result.trace, args.trace)
    text = report.to_csv() if args.format == "csv" else report.to_jsonl()
    if args.metrics:
        Path(args.metrics).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _sweep_one(job):
    path, seed = job
    return seed, [(s, k, v) for s, k, v in _run_once(path, seed).report.rows()]


def _parse_seeds(text: str) -> list[int]:
    if ":" in text:
        a, b = text.split(":", 1)
        return list(range(int(a), int(b)))
    return [int(s) for s in text.split(",") if s.strip()]


def cmd_sweep(args) -> int:
    try:
        seeds = _parse_seeds(args.seeds)
        load_scenario(args.scenario)
    except ValueError as exc:
        if isinstance(exc, ScenarioInvalid):
            for field, msg in exc.problems:
                print(f"error: {field}: {msg}", file=sys.stderr)
            return EXIT_INVALID
        return _fail(f"bad --seeds: {exc}")
    if not seeds:
        return _fail("empty seed range")
    jobs = [(args.scenario, s) for s in seeds]
    try:
        if args.jobs > 1:
            with ProcessPoolExecutor(args.jobs) as pool:
                results = list(pool.map(_sweep_one, jobs))
        else:
            results = [_sweep_one(j) for j in jobs]
    except ProtocolViolation as exc:
        return _fail(f"protocol violation: {exc}", EXIT_VIOLATION)
    samples: dict[tuple[str, str], list[float]] = {}
    for _, rows in sorted(results):
        for scope, key, value in rows:
            if isinstance(value, (int, float)) and not isinstance(value, bool):
                samples.setdefault((scope, key), []).append(float(value))
    lines = ["scope,key,n,mean,stddev"]
    for (scope, key), vals in sorted(samples.items()):
        n = len(vals)
        mean = sum(vals) / n
        sd = math.sqrt(sum((v - mean) ** 2 for v in vals) / (n - 1)) if n > 1 else 0.0
        lines.append(f"{scope},{key},{n},{round(mean, 6)!r},{round(sd, 6)!r}")
    text = "\n".join(lines) + "\n"
    if args.metrics:
        Path(args.metrics).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="wbwf", description="TDMA MAC planner, frame codec and network simulator")
    sub = p.add_subparsers(dest="command", required=True)

    pl = sub.add_parser("plan", help="enumerate feasible TDMA configurations")
    pl.add_argument("input", nargs="?", help="planner input file (key = value); defaults to built-in values")
    pl.add_argument("--table1", action="store_true", help="print the three reference configurations")
    pl.add_argument("--full", action="store_true", help="print every field instead of the summary table")
    pl.add_argument("--limit", type=int, default=0, help="print at most this many configurations")
    pl.set_defaults(func=cmd_plan)

    rn = sub.add_parser("run", help="run a scenario")
    rn.add_argument("scenario")
    rn.add_argument("--seed", type=int, help="override the scenario seed")
    rn.add_argument("--trace", help="write the JSONL event trace here")
    rn.add_argument("--metrics", help="write metrics here instead of stdout")
    rn.add_argument("--format", choices=("csv", "jsonl"), default="csv")
    rn.set_defaults(func=cmd_run)

    ins = sub.add_parser("inspect", help="decode a hex-encoded frame")
    ins.add_argument("hex", help="frame bytes in hex, or - for stdin")
    ins.add_argument("--config", default="solution3", help="solution1..3 or a config file")
    ins.add_argument("--kind", default="MGMT", choices=("MGMT", "RT", "BE", "mgmt", "rt", "be"))
    ins.add_argument("--json", action="store_true")
    ins.set_defaults(func=cmd_inspect)

    sw = sub.add_parser("sweep", help="run a scenario over many seeds and aggregate")
    sw.add_argument("scenario")
    sw.add_argument("--seeds", default="0:10", help="range a:b (b exclusive) or comma list")
    sw.add_argument("--jobs", type=int, default=1)
    sw.add_argument("--metrics", help="write the aggregate CSV here")
    sw.set_defaults(func=cmd_sweep)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
