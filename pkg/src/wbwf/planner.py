"""TDMA frame planning.

A frame is MGMT slots, then RT slots, then BE slots. Every slot is a whole
number of OFDM symbols: ``ceil((header + payload) / bits_per_symbol)`` data
symbols plus a fixed preamble/guard overhead. All timing is carried as
integer microseconds and integer symbol counts so that tiling checks are
exact.

Search space of :func:`plan_configurations`:

* frame lengths: ``candidate_frame_lengths_us``
* voice frames per RT slot: ``ceil(frame_length / voice_frame_interval)``
* BE payload: multiples of 8 bytes up to ``be_payload_max_bytes``; with
  ``be_exact_fill`` only payloads that fill their data symbols with zero
  padding bits are tried
* MGMT slot count: multiples of ``mgmt_slot_step``, at least
  ``max_nodes_target``
* RT and BE slot counts: exhaustive, 1..512

A candidate is emitted when the MGMT slot carries the header plus a 2-bit
entry per data slot in the data cycle and the three frames tile the frame
length with no remainder.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

MAX_CYCLE_FRAMES = 8
MAX_INDEXED_SLOTS = 512
BITMAP_ENTRY_BITS = 2


class SlotKind(str, Enum):
    MGMT = "MGMT"
    RT = "RT"
    BE = "BE"


@dataclass(frozen=True)
class PlannerInput:
    phy_bit_rate: int = 1_625_000  # bit/s
    mac_header_bits: int = 176
    ofdm_symbol_us: int = 16
    bits_per_symbol: int = 26
    slot_overhead_symbols: int = 8
    voice_frame_bits: int = 54
    voice_frame_interval_us: int = 22_500
    candidate_frame_lengths_us: tuple[int, ...] = (80_000, 128_000)
    max_nodes_target: int = 2
    mgmt_slot_step: int = 2
    be_payload_max_bytes: int = 1280
    be_exact_fill: bool = True
    mgmt_cycle_frames: int = 1
    rt_cycle_frames: int = 1
    be_cycle_frames: int = 1

    def __post_init__(self):
        counts = {
            "phy_bit_rate": self.phy_bit_rate,
            "mac_header_bits": self.mac_header_bits,
            "ofdm_symbol_us": self.ofdm_symbol_us,
            "bits_per_symbol": self.bits_per_symbol,
            "slot_overhead_symbols": self.slot_overhead_symbols,
            "voice_frame_bits": self.voice_frame_bits,
            "voice_frame_interval_us": self.voice_frame_interval_us,
            "max_nodes_target": self.max_nodes_target,
            "mgmt_slot_step": self.mgmt_slot_step,
            "be_payload_max_bytes": self.be_payload_max_bytes,
        }
        for name, value in counts.items():
            if value <= 0:
                raise ValueError(f"{name} must be positive, got {value}")
        for name in ("mgmt_cycle_frames", "rt_cycle_frames", "be_cycle_frames"):
            value = getattr(self, name)
            if not 1 <= value <= MAX_CYCLE_FRAMES:
                raise ValueError(f"{name} must be in 1..{MAX_CYCLE_FRAMES}, got {value}")
        if self.phy_bit_rate * self.ofdm_symbol_us != self.bits_per_symbol * 1_000_000:
            raise ValueError(
                "phy_bit_rate x ofdm_symbol_duration must equal bits_per_symbol "
                f"({self.phy_bit_rate} b/s x {self.ofdm_symbol_us} us != {self.bits_per_symbol} bits)"
            )
        if any(f <= 0 for f in self.candidate_frame_lengths_us):
            raise ValueError("candidate frame lengths must be positive")


@dataclass(frozen=True)
class TdmaConfig:
    frame_length_us: int
    mgmt_slots: int
    rt_slots: int
    be_slots: int
    mgmt_slot_symbols: int
    rt_slot_symbols: int
    be_slot_symbols: int
    mgmt_pdu_bits: int
    mgmt_padded_bits: int
    rt_voice_frames_per_slot: int
    be_payload_bytes: int
    mgmt_cycle_frames: int = 1
    rt_cycle_frames: int = 1
    be_cycle_frames: int = 1
    ofdm_symbol_us: int = 16
    bits_per_symbol: int = 26
    slot_overhead_symbols: int = 8
    mac_header_bits: int = 176
    voice_frame_bits: int = 54

    # durations
    def slot_symbols(self, kind: SlotKind) -> int:
        return {
            SlotKind.MGMT: self.mgmt_slot_symbols,
            SlotKind.RT: self.rt_slot_symbols,
            SlotKind.BE: self.be_slot_symbols,
        }[SlotKind(kind)]

    def slot_us(self, kind: SlotKind) -> int:
        return self.slot_symbols(kind) * self.ofdm_symbol_us

    @property
    def mgmt_slot_us(self) -> int:
        return self.slot_us(SlotKind.MGMT)

    @property
    def rt_slot_us(self) -> int:
        return self.slot_us(SlotKind.RT)

    @property
    def be_slot_us(self) -> int:
        return self.slot_us(SlotKind.BE)

    def slots_per_frame(self, kind: SlotKind) -> int:
        return {
            SlotKind.MGMT: self.mgmt_slots,
            SlotKind.RT: self.rt_slots,
            SlotKind.BE: self.be_slots,
        }[SlotKind(kind)]

    def cycle_frames(self, kind: SlotKind) -> int:
        return {
            SlotKind.MGMT: self.mgmt_cycle_frames,
            SlotKind.RT: self.rt_cycle_frames,
            SlotKind.BE: self.be_cycle_frames,
        }[SlotKind(kind)]

    def slots_per_cycle(self, kind: SlotKind) -> int:
        return self.slots_per_frame(kind) * self.cycle_frames(kind)

    def capacity_bits(self, kind: SlotKind) -> int:
        """Bits a slot of this kind carries, header and FCS included."""
        return (self.slot_symbols(kind) - self.slot_overhead_symbols) * self.bits_per_symbol

    @property
    def frame_symbols(self) -> int:
        return (
            self.mgmt_slots * self.mgmt_slot_symbols
            + self.rt_slots * self.rt_slot_symbols
            + self.be_slots * self.be_slot_symbols
        )

    @property
    def data_slots(self) -> int:
        """Bitmap entry count: every RT and BE slot of the data cycles."""
        return self.slots_per_cycle(SlotKind.RT) + self.slots_per_cycle(SlotKind.BE)

    @property
    def mgmt_cycle_us(self) -> int:
        return self.mgmt_cycle_frames * self.frame_length_us

    def frame_share(self, kind: SlotKind) -> float:
        return self.slots_per_frame(kind) * self.slot_us(kind) / self.frame_length_us

    def to_text(self) -> str:
        return dump_config(self)


def slot_symbols_for_payload(payload_bits: int, inp: PlannerInput) -> int:
    if payload_bits <= 0:
        raise ValueError("payload_bits must be positive")
    data = -(-(inp.mac_header_bits + payload_bits) // inp.bits_per_symbol)
    return data + inp.slot_overhead_symbols


def voice_frames_per_slot(frame_length_us: int, inp: PlannerInput) -> int:
    return -(-frame_length_us // inp.voice_frame_interval_us)


def be_payload_candidates(inp: PlannerInput) -> list[int]:
    out = []
    for nbytes in range(8, inp.be_payload_max_bytes + 1, 8):
        if inp.be_exact_fill and (inp.mac_header_bits + 8 * nbytes) % inp.bits_per_symbol:
            continue
        out.append(nbytes)
    return out


def _mgmt_geometry(data_slots: np.ndarray, inp: PlannerInput):
    pdu = inp.mac_header_bits + BITMAP_ENTRY_BITS * data_slots
    data_symbols = -(-pdu // inp.bits_per_symbol)
    return pdu, data_symbols + inp.slot_overhead_symbols


def plan_configurations(inp: PlannerInput) -> list[TdmaConfig]:
    if not inp.candidate_frame_lengths_us:
        raise ValueError("candidate_frame_lengths_us is empty")
    rc, bc, mc = inp.rt_cycle_frames, inp.be_cycle_frames, inp.mgmt_cycle_frames
    r_max = MAX_INDEXED_SLOTS // rc
    b_max = MAX_INDEXED_SLOTS // bc
    m_max = MAX_INDEXED_SLOTS // mc
    step = inp.mgmt_slot_step
    m_min = max(step, -(-inp.max_nodes_target // step) * step)

    r = np.arange(1, r_max + 1, dtype=np.int64)[:, None]
    b = np.arange(1, b_max + 1, dtype=np.int64)[None, :]
    data_slots = r * rc + b * bc
    mgmt_pdu, mgmt_sym = _mgmt_geometry(data_slots, inp)

    found = []
    for frame_us in sorted(set(inp.candidate_frame_lengths_us)):
        if frame_us % inp.ofdm_symbol_us:
            continue
        frame_sym = frame_us // inp.ofdm_symbol_us
        v = voice_frames_per_slot(frame_us, inp)
        rt_sym = slot_symbols_for_payload(v * inp.voice_frame_bits, inp)
        for payload in be_payload_candidates(inp):
            be_sym = slot_symbols_for_payload(8 * payload, inp)
            rem = frame_sym - r * rt_sym - b * be_sym
            ok = (rem > 0) & (rem % mgmt_sym == 0)
            m = np.where(ok, rem // mgmt_sym, 0)
            ok &= (m >= m_min) & (m <= m_max) & (m % step == 0)
            ok &= (m + r + b) <= MAX_INDEXED_SLOTS
            for i, j in zip(*np.nonzero(ok)):
                found.append(
                    TdmaConfig(
                        frame_length_us=frame_us,
                        mgmt_slots=int(m[i, j]),
                        rt_slots=int(r[i, 0]),
                        be_slots=int(b[0, j]),
                        mgmt_slot_symbols=int(mgmt_sym[i, j]),
                        rt_slot_symbols=rt_sym,
                        be_slot_symbols=be_sym,
                        mgmt_pdu_bits=int(mgmt_pdu[i, j]),
                        mgmt_padded_bits=int(
                            (mgmt_sym[i, j] - inp.slot_overhead_symbols) * inp.bits_per_symbol
                            - mgmt_pdu[i, j]
                        ),
                        rt_voice_frames_per_slot=v,
                        be_payload_bytes=payload,
                        mgmt_cycle_frames=mc,
                        rt_cycle_frames=rc,
                        be_cycle_frames=bc,
                        ofdm_symbol_us=inp.ofdm_symbol_us,
                        bits_per_symbol=inp.bits_per_symbol,
                        slot_overhead_symbols=inp.slot_overhead_symbols,
                        mac_header_bits=inp.mac_header_bits,
                        voice_frame_bits=inp.voice_frame_bits,
                    )
                )
    found.sort(
        key=lambda c: (
            c.frame_length_us,
            c.mgmt_slots,
            c.rt_slots,
            c.be_slots,
            c.be_payload_bytes,
        )
    )
    return found


@dataclass
class Check:
    name: str
    passed: bool
    detail: str = ""


@dataclass
class ValidationReport:
    checks: list[Check] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.checks)

    def failed(self) -> list[Check]:
        return [c for c in self.checks if not c.passed]

    def add(self, name: str, passed: bool, detail: str = "") -> None:
        self.checks.append(Check(name, bool(passed), detail))

    def __str__(self) -> str:
        lines = []
        for c in self.checks:
            mark = "ok  " if c.passed else "FAIL"
            lines.append(f"[{mark}] {c.name}" + (f": {c.detail}" if c.detail else ""))
        return "\n".join(lines)


def validate_config(cfg: TdmaConfig, inp: PlannerInput | None = None) -> ValidationReport:
    inp = inp or PlannerInput(
        mac_header_bits=cfg.mac_header_bits,
        ofdm_symbol_us=cfg.ofdm_symbol_us,
        bits_per_symbol=cfg.bits_per_symbol,
        phy_bit_rate=cfg.bits_per_symbol * 1_000_000 // cfg.ofdm_symbol_us,
        slot_overhead_symbols=cfg.slot_overhead_symbols,
        voice_frame_bits=cfg.voice_frame_bits,
    )
    rep = ValidationReport()
    counts = {
        "mgmt_slots": cfg.mgmt_slots,
        "rt_slots": cfg.rt_slots,
        "be_slots": cfg.be_slots,
        "rt_voice_frames_per_slot": cfg.rt_voice_frames_per_slot,
        "be_payload_bytes": cfg.be_payload_bytes,
    }
    bad = {k: v for k, v in counts.items() if v <= 0}
    rep.add("positive_counts", not bad, ", ".join(f"{k}={v}" for k, v in bad.items()))

    overhead = inp.slot_overhead_symbols
    short = {
        k.value: cfg.slot_symbols(k) for k in SlotKind if cfg.slot_symbols(k) <= overhead
    }
    rep.add(
        "integer_symbol_slots",
        not short and cfg.ofdm_symbol_us == inp.ofdm_symbol_us,
        ", ".join(f"{k} slot has {v} symbols <= overhead {overhead}" for k, v in short.items()),
    )

    frame_sym, rem = divmod(cfg.frame_length_us, cfg.ofdm_symbol_us)
    rep.add(
        "gap_free_tiling",
        rem == 0 and cfg.frame_symbols == frame_sym,
        f"slots cover {cfg.frame_symbols * cfg.ofdm_symbol_us} us of {cfg.frame_length_us} us",
    )

    expected_pdu = inp.mac_header_bits + BITMAP_ENTRY_BITS * cfg.data_slots
    mgmt_cap = cfg.capacity_bits(SlotKind.MGMT)
    rep.add(
        "rule1_mgmt_pdu_bits",
        cfg.mgmt_pdu_bits == expected_pdu,
        f"mgmt_pdu_bits={cfg.mgmt_pdu_bits}, expected {expected_pdu}",
    )
    rep.add(
        "rule1_mgmt_capacity",
        mgmt_cap >= expected_pdu and cfg.mgmt_padded_bits == mgmt_cap - cfg.mgmt_pdu_bits,
        f"capacity {mgmt_cap} bits, pdu {expected_pdu}, padded {cfg.mgmt_padded_bits}",
    )

    need_v = -(-cfg.frame_length_us // inp.voice_frame_interval_us)
    rt_need = inp.mac_header_bits + cfg.rt_voice_frames_per_slot * inp.voice_frame_bits
    rep.add(
        "rule2_voice_frames",
        cfg.rt_voice_frames_per_slot >= need_v and cfg.capacity_bits(SlotKind.RT) >= rt_need,
        f"{cfg.rt_voice_frames_per_slot} frames/slot, need {need_v}; "
        f"capacity {cfg.capacity_bits(SlotKind.RT)} bits for {rt_need}",
    )

    be_need = inp.mac_header_bits + 8 * cfg.be_payload_bytes
    rep.add(
        "rule3_be_multiple_of_8",
        cfg.be_payload_bytes % 8 == 0,
        f"be_payload_bytes={cfg.be_payload_bytes}",
    )
    rep.add(
        "rule3_be_capacity",
        cfg.capacity_bits(SlotKind.BE) >= be_need,
        f"capacity {cfg.capacity_bits(SlotKind.BE)} bits for {be_need}",
    )

    cycles = {k.value: cfg.cycle_frames(k) for k in SlotKind}
    rep.add(
        "cycle_frames_le_8",
        all(1 <= v <= MAX_CYCLE_FRAMES for v in cycles.values()),
        ", ".join(f"{k}={v}" for k, v in cycles.items()),
    )
    per_cycle = {k.value: cfg.slots_per_cycle(k) for k in SlotKind}
    in_frame = cfg.mgmt_slots + cfg.rt_slots + cfg.be_slots
    rep.add(
        "index_bound_512",
        all(v <= MAX_INDEXED_SLOTS for v in per_cycle.values()) and in_frame <= MAX_INDEXED_SLOTS,
        ", ".join(f"{k}={v}" for k, v in per_cycle.items()) + f", frame={in_frame}",
    )
    return rep


@dataclass(frozen=True)
class ScheduledSlot:
    kind: SlotKind
    slot_id_in_frame: int
    start_us: int
    duration_us: int

    @property
    def end_us(self) -> int:
        return self.start_us + self.duration_us


def slot_schedule(cfg: TdmaConfig) -> list[ScheduledSlot]:
    out = []
    t = 0
    idx = 0
    for kind in SlotKind:
        dur = cfg.slot_us(kind)
        for _ in range(cfg.slots_per_frame(kind)):
            out.append(ScheduledSlot(kind, idx, t, dur))
            t += dur
            idx += 1
    return out


# Reference solutions 1-3. MGMT slots are 20 symbols = 320 us, which is what
# the 28.8 / 47.36 ms MGMT frame times require.
def _solution(frame_us, m, r, b, payload, v, rt_sym, be_sym) -> TdmaConfig:
    pdu = 176 + 2 * (r + b)
    return TdmaConfig(
        frame_length_us=frame_us,
        mgmt_slots=m,
        rt_slots=r,
        be_slots=b,
        mgmt_slot_symbols=20,
        rt_slot_symbols=rt_sym,
        be_slot_symbols=be_sym,
        mgmt_pdu_bits=pdu,
        mgmt_padded_bits=312 - pdu,
        rt_voice_frames_per_slot=v,
        be_payload_bytes=payload,
    )


TABLE1 = {
    1: _solution(80_000, 90, 16, 44, 160, 4, 24, 64),
    2: _solution(80_000, 90, 24, 41, 160, 4, 24, 64),
    3: _solution(128_000, 148, 36, 21, 576, 6, 28, 192),
}


def table1_solution(n: int) -> TdmaConfig:
    try:
        return TABLE1[int(n)]
    except (KeyError, ValueError):
        raise ValueError(f"unknown reference solution {n!r}; expected 1, 2 or 3") from None


def named_config(name: str) -> TdmaConfig:
    """Resolve ``solution3``, ``3`` or ``sol3`` to a built-in configuration."""
    key = str(name).lower().removeprefix("solution").removeprefix("sol").strip(" _-")
    return table1_solution(int(key)) if key.isdigit() else table1_solution(name)


# key = value serialization

_INT_FIELDS = [f.name for f in dataclasses.fields(TdmaConfig)]


def dump_config(cfg: TdmaConfig) -> str:
    lines = ["# TDMA configuration; times in microseconds, slot sizes in OFDM symbols"]
    for name in _INT_FIELDS:
        lines.append(f"{name} = {getattr(cfg, name)}")
    return "\n".join(lines) + "\n"


def _parse_kv(text: str) -> dict[str, str]:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key in out:
            raise ValueError(f"line {lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def load_config(text: str) -> TdmaConfig:
    kv = _parse_kv(text)
    unknown = set(kv) - set(_INT_FIELDS)
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    try:
        values = {k: int(v) for k, v in kv.items()}
    except ValueError as exc:
        raise ValueError(f"config values must be integers: {exc}") from None
    try:
        return TdmaConfig(**values)
    except TypeError as exc:
        raise ValueError(f"incomplete config: {exc}") from None


def dump_planner_input(inp: PlannerInput) -> str:
    lines = []
    for f in dataclasses.fields(PlannerInput):
        value = getattr(inp, f.name)
        if isinstance(value, tuple):
            value = ", ".join(str(v) for v in value)
        elif isinstance(value, bool):
            value = str(value).lower()
        lines.append(f"{f.name} = {value}")
    return "\n".join(lines) + "\n"


def load_planner_input(text: str) -> PlannerInput:
    kv = _parse_kv(text)
    fields = {f.name: f for f in dataclasses.fields(PlannerInput)}
    unknown = set(kv) - set(fields)
    if unknown:
        raise ValueError(f"unknown planner keys: {sorted(unknown)}")
    values: dict = {}
    for key, raw in kv.items():
        if key == "candidate_frame_lengths_us":
            values[key] = tuple(int(v) for v in raw.replace(",", " ").split())
        elif key == "be_exact_fill":
            if raw.lower() not in ("true", "false"):
                raise ValueError(f"be_exact_fill must be true/false, got {raw!r}")
            values[key] = raw.lower() == "true"
        else:
            values[key] = int(raw)
    return PlannerInput(**values)
