"""Random valid PDUs for round-trip testing (numpy Generator driven)."""

from __future__ import annotations

import dataclasses

from wbwf.codec import (
    BeDataBody,
    MacHeader,
    MacPdu,
    MgmtBody,
    PduType,
    PttResponse,
    QueueLoadLevel,
    RtDataBody,
    SessionRelay,
    SessionRelease,
    SessionRequest,
    SlotBitmap,
    make_pdu,
    slot_kind_for,
)
from wbwf.planner import TdmaConfig


def _bits(rng, n: int) -> int:
    return int.from_bytes(rng.bytes((n + 7) // 8), "big") >> (-n % 8) if n else 0


def random_body(rng, cfg: TdmaConfig, pdu_type: PduType):
    if pdu_type == PduType.MGMT:
        bm = SlotBitmap(tuple(int(c) for c in rng.integers(0, 4, cfg.data_slots)))
        choices = ["beacon", "qll"] + (["res"] if cfg.mgmt_padded_bits >= 16 else [])
        pick = choices[int(rng.integers(len(choices)))]
        if pick == "res":
            return MgmtBody(bm, PttResponse(int(rng.integers(1 << 15)), bool(rng.integers(2))))
        if pick == "qll":
            return MgmtBody(bm, QueueLoadLevel(_bits(rng, cfg.mgmt_padded_bits)))
        return MgmtBody(bm)
    if pdu_type == PduType.PTT_SIG:
        pick = int(rng.integers(3))
        sid = int(rng.integers(1 << 15))
        return (SessionRequest(sid), SessionRelease(sid), SessionRelay())[pick]
    if pdu_type == PduType.RT_DATA:
        n = int(rng.integers(1, cfg.rt_voice_frames_per_slot + 1))
        return RtDataBody(tuple(_bits(rng, cfg.voice_frame_bits) for _ in range(n)))
    return BeDataBody(rng.bytes(cfg.be_payload_bytes))


def random_pdu(rng, cfg: TdmaConfig, pdu_type: PduType) -> MacPdu:
    body = random_body(rng, cfg, pdu_type)
    kind = slot_kind_for(pdu_type)
    total = cfg.mgmt_slots + cfg.rt_slots + cfg.be_slots
    base = make_pdu(body, cfg, transmitter=0)
    fc = dataclasses.replace(
        base.header.frame_control,
        frame_index=int(rng.integers(cfg.cycle_frames(kind))),
        slot_id_in_cycle=int(rng.integers(cfg.slots_per_cycle(kind))),
        slot_id_in_frame=int(rng.integers(total)),
        more_fragment=bool(rng.integers(2)),
    )
    header = MacHeader(fc, _bits(rng, 48), _bits(rng, 48), int(rng.integers(1 << 12)), int(rng.integers(16)))
    return MacPdu(header, body)
