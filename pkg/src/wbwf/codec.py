"""MAC PDU encoder/decoder.

Serialized layout (MSB first within every field)::

    Frame Control (32)  Type 2 | Subtype 3 | MoreFrag 1 | CycleType 2 |
                        FrameIndex 3 | SlotIdInCycle 9 | SlotIdInFrame 9 |
                        EncapsulatedSDUs 3
    Transmitter (48) | Receiver (48) | Sequence 12 + Fragment 4
    body | zero padding up to the slot capacity | FCS (32)

The FCS covers every preceding bit and is stored as four little-endian
bytes, the 802.11 on-air order. Header plus FCS is 176 bits; a frame always
fills the data capacity of the slot it is sent in.

Subtype codes:

    MGMT     0 beacon, 1 PTT response, 2 queue load level (opaque)
    PTT_SIG  0 session request, 1 session release, 2 session relay (no body)
    RT_DATA  0 MELPe 2400, 1 MELPe 1200, 2 MELPe 600
    BE_DATA  0
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum
from typing import Union

from .bits import BitReader, BitString, BitWriter, fcs32, fcs_field, fcs_from_field
from .planner import SlotKind, TdmaConfig

HEADER_BITS = 176
FCS_BITS = 32
BROADCAST = (1 << 48) - 1
PTT_RES_BITS = 16
SESSION_ID_BITS = 15
MAX_SESSION_ID = (1 << SESSION_ID_BITS) - 1


class CodecError(ValueError):
    pass


class FcsMismatch(CodecError):
    def __init__(self, computed: int, received: int):
        super().__init__(f"FCS mismatch: computed {computed:#010x}, frame carries {received:#010x}")
        self.computed = computed
        self.received = received


class MalformedField(CodecError):
    def __init__(self, field_name: str, value, reason: str = ""):
        msg = f"{field_name}={value!r}" + (f": {reason}" if reason else "")
        super().__init__(msg)
        self.field = field_name
        self.value = value


class LengthMismatch(CodecError):
    def __init__(self, got: int, expected: int):
        super().__init__(f"frame is {got} bits, slot carries {expected}")
        self.got = got
        self.expected = expected


class PduType(IntEnum):
    MGMT = 0
    RT_DATA = 1
    BE_DATA = 2
    PTT_SIG = 3


class CycleType(IntEnum):
    MGMT = 0
    RT = 1
    BE = 2

    @property
    def slot_kind(self) -> SlotKind:
        return SlotKind(self.name)

    @classmethod
    def of(cls, kind: SlotKind) -> "CycleType":
        return cls[SlotKind(kind).value]


class MgmtSubtype(IntEnum):
    BEACON = 0
    PTT_RES = 1
    QLL = 2


class PttSubtype(IntEnum):
    REQUEST = 0
    RELEASE = 1
    RELAY = 2


class VoiceCodec(IntEnum):
    MELPE = 0


class VoiceRate(IntEnum):
    BPS_2400 = 0
    BPS_1200 = 1
    BPS_600 = 2


class SlotCode(IntEnum):
    IDLE = 0
    TRANSMITTING = 1
    NEIGHBOUR_TRANSMITTING = 2
    COLLISION = 3


_SLOT_CODES = tuple(SlotCode)

# RT_DATA subtype -> voice frame size in bits (MELPe frames per 22.5 ms)
RT_SUBTYPE_FRAME_BITS = {VoiceRate.BPS_2400: 54}


@dataclass(frozen=True)
class FrameControl:
    pdu_type: PduType
    subtype: int
    cycle_type: CycleType
    frame_index: int = 0
    slot_id_in_cycle: int = 0
    slot_id_in_frame: int = 0
    encapsulated_sdus: int = 0
    more_fragment: bool = False


@dataclass(frozen=True)
class MacHeader:
    frame_control: FrameControl
    transmitter: int
    receiver: int = BROADCAST
    sequence: int = 0
    fragment: int = 0


@dataclass(frozen=True)
class SlotBitmap:
    entries: tuple[int, ...]

    @classmethod
    def idle(cls, n: int) -> "SlotBitmap":
        return cls((SlotCode.IDLE,) * n)

    def __len__(self) -> int:
        return len(self.entries)

    def __getitem__(self, i: int) -> SlotCode:
        return SlotCode(self.entries[i])

    def with_entry(self, i: int, code: SlotCode) -> "SlotBitmap":
        e = list(self.entries)
        e[i] = SlotCode(code)
        return SlotBitmap(tuple(e))


@dataclass(frozen=True)
class Beacon:
    pass


@dataclass(frozen=True)
class PttResponse:
    session_id: int
    positive: bool = True


@dataclass(frozen=True)
class QueueLoadLevel:
    """Carried verbatim; the coding is not defined."""

    raw: int = 0


Piggyback = Union[Beacon, PttResponse, QueueLoadLevel]


@dataclass(frozen=True)
class MgmtBody:
    bitmap: SlotBitmap
    piggyback: Piggyback = field(default_factory=Beacon)


@dataclass(frozen=True)
class SessionRequest:
    session_id: int
    codec: VoiceCodec = VoiceCodec.MELPE
    rate: VoiceRate = VoiceRate.BPS_2400


@dataclass(frozen=True)
class SessionRelease:
    session_id: int


@dataclass(frozen=True)
class SessionRelay:
    """Reserved subtype; no payload is defined."""


PttSigBody = Union[SessionRequest, SessionRelease, SessionRelay]


@dataclass(frozen=True)
class RtDataBody:
    voice_frames: tuple[int, ...]
    rate: VoiceRate = VoiceRate.BPS_2400


@dataclass(frozen=True)
class BeDataBody:
    payload: bytes


Body = Union[MgmtBody, PttSigBody, RtDataBody, BeDataBody]


@dataclass(frozen=True)
class MacPdu:
    header: MacHeader
    body: Body

    @property
    def pdu_type(self) -> PduType:
        return self.header.frame_control.pdu_type

    @property
    def transmitter(self) -> int:
        return self.header.transmitter


def _body_type(body) -> tuple[PduType, int]:
    if isinstance(body, MgmtBody):
        pb = body.piggyback
        if isinstance(pb, Beacon):
            return PduType.MGMT, MgmtSubtype.BEACON
        if isinstance(pb, PttResponse):
            return PduType.MGMT, MgmtSubtype.PTT_RES
        if isinstance(pb, QueueLoadLevel):
            return PduType.MGMT, MgmtSubtype.QLL
        raise MalformedField("piggyback", pb, "unknown piggyback")
    if isinstance(body, SessionRequest):
        return PduType.PTT_SIG, PttSubtype.REQUEST
    if isinstance(body, SessionRelease):
        return PduType.PTT_SIG, PttSubtype.RELEASE
    if isinstance(body, SessionRelay):
        return PduType.PTT_SIG, PttSubtype.RELAY
    if isinstance(body, RtDataBody):
        return PduType.RT_DATA, VoiceRate(body.rate)
    if isinstance(body, BeDataBody):
        return PduType.BE_DATA, 0
    raise MalformedField("body", type(body).__name__, "unsupported body")


def make_pdu(
    body: Body,
    cfg: TdmaConfig,
    *,
    transmitter: int,
    receiver: int = BROADCAST,
    slot_id_in_cycle: int = 0,
    frame_index: int = 0,
    slot_id_in_frame: int | None = None,
    sequence: int = 0,
) -> MacPdu:
    """Build a PDU with Frame Control derived from the body and slot position.

    ``slot_id_in_cycle`` counts slots of the PDU's kind within its cycle;
    ``slot_id_in_frame`` defaults to the position in the atomic frame.
    """
    pdu_type, subtype = _body_type(body)
    kind = slot_kind_for(pdu_type)
    per_frame = cfg.slots_per_frame(kind)
    if slot_id_in_frame is None:
        offset = {SlotKind.MGMT: 0, SlotKind.RT: cfg.mgmt_slots, SlotKind.BE: cfg.mgmt_slots + cfg.rt_slots}
        slot_id_in_frame = offset[kind] + slot_id_in_cycle % per_frame
    sdus = len(body.voice_frames) if isinstance(body, RtDataBody) else 0
    fc = FrameControl(
        pdu_type=pdu_type,
        subtype=int(subtype),
        cycle_type=CycleType.of(kind),
        frame_index=frame_index,
        slot_id_in_cycle=slot_id_in_cycle,
        slot_id_in_frame=slot_id_in_frame,
        encapsulated_sdus=sdus,
    )
    return MacPdu(MacHeader(fc, transmitter, receiver, sequence & 0xFFF), body)


def slot_kind_for(pdu_type: PduType) -> SlotKind:
    return {
        PduType.MGMT: SlotKind.MGMT,
        PduType.RT_DATA: SlotKind.RT,
        PduType.PTT_SIG: SlotKind.RT,
        PduType.BE_DATA: SlotKind.BE,
    }[PduType(pdu_type)]


def _check_header(h: MacHeader, cfg: TdmaConfig, kind: SlotKind) -> None:
    fc = h.frame_control
    if fc.cycle_type != CycleType.of(kind):
        raise MalformedField("cycle_type", fc.cycle_type, f"expected {CycleType.of(kind).name}")
    if not 0 <= fc.frame_index < cfg.cycle_frames(kind):
        raise MalformedField("frame_index", fc.frame_index, f"cycle has {cfg.cycle_frames(kind)} frames")
    if not 0 <= fc.slot_id_in_cycle < cfg.slots_per_cycle(kind):
        raise MalformedField(
            "slot_id_in_cycle", fc.slot_id_in_cycle, f"{kind.value} cycle has {cfg.slots_per_cycle(kind)} slots"
        )
    total = cfg.mgmt_slots + cfg.rt_slots + cfg.be_slots
    if not 0 <= fc.slot_id_in_frame < total:
        raise MalformedField("slot_id_in_frame", fc.slot_id_in_frame, f"frame has {total} slots")
    for name, value, width in (
        ("transmitter", h.transmitter, 48),
        ("receiver", h.receiver, 48),
        ("sequence", h.sequence, 12),
        ("fragment", h.fragment, 4),
    ):
        if not 0 <= value < (1 << width):
            raise MalformedField(name, value, f"does not fit in {width} bits")


def _session_id(value: int, name: str = "session_id") -> int:
    if not 0 <= value <= MAX_SESSION_ID:
        raise MalformedField(name, value, "session id is 15 bits")
    return value


def _encode_body(body: Body, cfg: TdmaConfig, w: BitWriter) -> None:
    if isinstance(body, MgmtBody):
        if len(body.bitmap) != cfg.data_slots:
            raise MalformedField("bitmap", len(body.bitmap), f"expected {cfg.data_slots} entries")
        for i, code in enumerate(body.bitmap.entries):
            w.write(int(code), 2, f"bitmap[{i}]")
        pb = body.piggyback
        if isinstance(pb, PttResponse):
            if cfg.mgmt_padded_bits < PTT_RES_BITS:
                raise MalformedField(
                    "piggyback", pb, f"PTT response needs 16 bits, MGMT padding has {cfg.mgmt_padded_bits}"
                )
            w.write(int(bool(pb.positive)), 1, "response")
            w.write(_session_id(pb.session_id), SESSION_ID_BITS, "session_id")
        elif isinstance(pb, QueueLoadLevel):
            w.write(pb.raw, cfg.mgmt_padded_bits, "qll")
    elif isinstance(body, SessionRequest):
        w.write(_session_id(body.session_id), SESSION_ID_BITS)
        w.write(int(body.codec), 4, "codec")
        w.write(int(body.rate), 3, "rate")
        w.write(0, 2)
    elif isinstance(body, SessionRelease):
        w.write(_session_id(body.session_id), SESSION_ID_BITS)
        w.write(0, 1)
    elif isinstance(body, SessionRelay):
        pass
    elif isinstance(body, RtDataBody):
        n = len(body.voice_frames)
        if not 1 <= n <= min(cfg.rt_voice_frames_per_slot, 7):
            raise MalformedField("encapsulated_sdus", n, f"must be 1..{cfg.rt_voice_frames_per_slot}")
        if VoiceRate(body.rate) not in RT_SUBTYPE_FRAME_BITS:
            raise MalformedField("rate", body.rate, "only MELPe 2400 frames are carried")
        for i, frame in enumerate(body.voice_frames):
            w.write(frame, cfg.voice_frame_bits, f"voice_frames[{i}]")
    elif isinstance(body, BeDataBody):
        if len(body.payload) > cfg.be_payload_bytes:
            raise MalformedField("payload", len(body.payload), f"exceeds {cfg.be_payload_bytes} bytes")
        data = bytes(body.payload).ljust(cfg.be_payload_bytes, b"\0")
        w.write(int.from_bytes(data, "big"), 8 * len(data), "payload")


def encode(pdu: MacPdu, cfg: TdmaConfig) -> BitString:
    pdu_type, subtype = _body_type(pdu.body)
    h = pdu.header
    fc = h.frame_control
    if fc.pdu_type != pdu_type or fc.subtype != subtype:
        raise MalformedField("frame_control", (fc.pdu_type, fc.subtype), f"body implies {pdu_type.name}/{int(subtype)}")
    kind = slot_kind_for(pdu_type)
    _check_header(h, cfg, kind)
    expected_sdus = len(pdu.body.voice_frames) if isinstance(pdu.body, RtDataBody) else 0
    if fc.encapsulated_sdus != expected_sdus:
        raise MalformedField("encapsulated_sdus", fc.encapsulated_sdus, f"body carries {expected_sdus}")

    w = BitWriter()
    w.write(int(fc.pdu_type), 2, "pdu_type")
    w.write(int(fc.subtype), 3, "subtype")
    w.write(int(bool(fc.more_fragment)), 1, "more_fragment")
    w.write(int(fc.cycle_type), 2, "cycle_type")
    w.write(fc.frame_index, 3, "frame_index")
    w.write(fc.slot_id_in_cycle, 9, "slot_id_in_cycle")
    w.write(fc.slot_id_in_frame, 9, "slot_id_in_frame")
    w.write(fc.encapsulated_sdus, 3, "encapsulated_sdus")
    w.write(h.transmitter, 48, "transmitter")
    w.write(h.receiver, 48, "receiver")
    w.write(h.sequence, 12, "sequence")
    w.write(h.fragment, 4, "fragment")
    _encode_body(pdu.body, cfg, w)

    capacity = cfg.capacity_bits(kind)
    pad = capacity - FCS_BITS - len(w)
    if pad < 0:
        raise MalformedField("body", len(w) - (HEADER_BITS - FCS_BITS), f"does not fit the {kind.value} slot")
    w.write(0, pad, "padding")
    bits = w.bits()
    return bits + fcs_field(fcs32(bits))


def _decode_body(pdu_type: PduType, subtype: int, sdus: int, r: BitReader, cfg: TdmaConfig) -> Body:
    if pdu_type == PduType.MGMT:
        try:
            st = MgmtSubtype(subtype)
        except ValueError:
            raise MalformedField("subtype", subtype, "unknown MGMT subtype") from None
        n = cfg.data_slots
        packed = r.read(2 * n)
        bitmap = SlotBitmap(tuple(_SLOT_CODES[(packed >> (2 * (n - 1 - i))) & 3] for i in range(n)))
        if st == MgmtSubtype.PTT_RES:
            if cfg.mgmt_padded_bits < PTT_RES_BITS:
                raise MalformedField("subtype", subtype, "no room for a PTT response")
            positive = bool(r.read(1))
            pb = PttResponse(r.read(SESSION_ID_BITS), positive)
        elif st == MgmtSubtype.QLL:
            pb = QueueLoadLevel(r.read(cfg.mgmt_padded_bits))
        else:
            pb = Beacon()
        return MgmtBody(bitmap, pb)
    if pdu_type == PduType.PTT_SIG:
        try:
            st = PttSubtype(subtype)
        except ValueError:
            raise MalformedField("subtype", subtype, "unknown PTT-SIG subtype") from None
        if st == PttSubtype.REQUEST:
            sid = r.read(SESSION_ID_BITS)
            codec, rate = r.read(4), r.read(3)
            try:
                return SessionRequest(sid, VoiceCodec(codec), VoiceRate(rate))
            except ValueError:
                raise MalformedField("codec/rate", (codec, rate), "unknown voice codec") from None
        if st == PttSubtype.RELEASE:
            return SessionRelease(r.read(SESSION_ID_BITS))
        return SessionRelay()
    if pdu_type == PduType.RT_DATA:
        try:
            rate = VoiceRate(subtype)
        except ValueError:
            raise MalformedField("subtype", subtype, "unknown RT-DATA subtype") from None
        if rate not in RT_SUBTYPE_FRAME_BITS:
            raise MalformedField("subtype", subtype, "only MELPe 2400 frames are carried")
        if not 1 <= sdus <= cfg.rt_voice_frames_per_slot:
            raise MalformedField("encapsulated_sdus", sdus, f"must be 1..{cfg.rt_voice_frames_per_slot}")
        return RtDataBody(tuple(r.read(cfg.voice_frame_bits) for _ in range(sdus)), rate)
    if subtype != 0:
        raise MalformedField("subtype", subtype, "BE-DATA has no subtypes")
    n = cfg.be_payload_bytes
    return BeDataBody(r.read(8 * n).to_bytes(n, "big"))


def decode(bits: BitString, cfg: TdmaConfig, expected_kind: SlotKind) -> MacPdu:
    kind = SlotKind(expected_kind)
    capacity = cfg.capacity_bits(kind)
    if len(bits) != capacity:
        raise LengthMismatch(len(bits), capacity)
    covered = bits.slice(0, capacity - FCS_BITS)
    received = fcs_from_field(bits.slice(capacity - FCS_BITS, capacity))
    computed = fcs32(covered)
    if computed != received:
        raise FcsMismatch(computed, received)

    r = BitReader(covered)
    raw_type = r.read(2)
    subtype = r.read(3)
    more = bool(r.read(1))
    raw_cycle = r.read(2)
    frame_index = r.read(3)
    in_cycle = r.read(9)
    in_frame = r.read(9)
    sdus = r.read(3)
    pdu_type = PduType(raw_type)
    if slot_kind_for(pdu_type) != kind:
        raise MalformedField("pdu_type", pdu_type.name, f"not carried in {kind.value} slots")
    try:
        cycle = CycleType(raw_cycle)
    except ValueError:
        raise MalformedField("cycle_type", raw_cycle, "reserved code") from None
    if pdu_type != PduType.RT_DATA and sdus:
        raise MalformedField("encapsulated_sdus", sdus, f"must be 0 for {pdu_type.name}")
    fc = FrameControl(pdu_type, subtype, cycle, frame_index, in_cycle, in_frame, sdus, more)
    header = MacHeader(fc, r.read(48), r.read(48), r.read(12), r.read(4))
    _check_header(header, cfg, kind)
    body = _decode_body(pdu_type, subtype, sdus, r, cfg)
    return MacPdu(header, body)


def describe(pdu: MacPdu) -> dict:
    """Flat field listing, as printed by ``wbwf inspect``."""
    h = pdu.header
    fc = h.frame_control
    out = {
        "pdu_type": fc.pdu_type.name,
        "subtype": fc.subtype,
        "more_fragment": int(fc.more_fragment),
        "cycle_type": fc.cycle_type.name,
        "frame_index": fc.frame_index,
        "slot_id_in_cycle": fc.slot_id_in_cycle,
        "slot_id_in_frame": fc.slot_id_in_frame,
        "encapsulated_sdus": fc.encapsulated_sdus,
        "transmitter": format_address(h.transmitter),
        "receiver": format_address(h.receiver),
        "sequence": h.sequence,
        "fragment": h.fragment,
    }
    b = pdu.body
    if isinstance(b, MgmtBody):
        out["bitmap"] = "".join(str(int(c)) for c in b.bitmap.entries)
        pb = b.piggyback
        out["piggyback"] = type(pb).__name__
        if isinstance(pb, PttResponse):
            out["response"] = int(pb.positive)
            out["session_id"] = pb.session_id
        elif isinstance(pb, QueueLoadLevel):
            out["qll_raw"] = pb.raw
    elif isinstance(b, SessionRequest):
        out.update(ptt="REQUEST", session_id=b.session_id, codec=b.codec.name, rate=b.rate.name)
    elif isinstance(b, SessionRelease):
        out.update(ptt="RELEASE", session_id=b.session_id)
    elif isinstance(b, SessionRelay):
        out.update(ptt="RELAY")
    elif isinstance(b, RtDataBody):
        out["voice_frames"] = [format(f, "014x") for f in b.voice_frames]
    elif isinstance(b, BeDataBody):
        out["payload"] = b.payload.hex()
    return out


def format_address(addr: int) -> str:
    return ":".join(f"{b:02x}" for b in addr.to_bytes(6, "big"))


def parse_address(text: str) -> int:
    if text.lower() in ("broadcast", "ff:ff:ff:ff:ff:ff"):
        return BROADCAST
    parts = text.split(":")
    if len(parts) != 6:
        raise ValueError(f"bad MAC address {text!r}")
    return int.from_bytes(bytes(int(p, 16) for p in parts), "big")
