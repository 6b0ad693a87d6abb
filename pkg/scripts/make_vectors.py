"""Regenerate the golden codec vectors in tests/vectors.

Each vector is a pair: NAME.hex (frame bytes) and NAME.json (config, slot
kind and the decoded field listing). Run from the repository root:

    python3 scripts/make_vectors.py
"""

import json
from pathlib import Path

from wbwf.codec import (
    BROADCAST,
    BeDataBody,
    MgmtBody,
    PttResponse,
    QueueLoadLevel,
    RtDataBody,
    SessionRelay,
    SessionRelease,
    SessionRequest,
    SlotBitmap,
    SlotCode,
    describe,
    encode,
    make_pdu,
    slot_kind_for,
)
from wbwf.planner import TABLE1

OUT = Path(__file__).resolve().parents[1] / "tests" / "vectors"
A = 0x020000000001
B = 0x020000000002


def vectors():
    s3 = TABLE1[3]
    bm = SlotBitmap.idle(57).with_entry(0, SlotCode.TRANSMITTING).with_entry(5, SlotCode.NEIGHBOUR_TRANSMITTING)
    bm = bm.with_entry(36, SlotCode.COLLISION)
    yield "mgmt_beacon_s3", 3, make_pdu(MgmtBody(SlotBitmap.idle(57)), s3, transmitter=A)
    yield "mgmt_ptt_res_s3", 3, make_pdu(
        MgmtBody(bm, PttResponse(5, True)), s3, transmitter=B, slot_id_in_cycle=1, sequence=77
    )
    yield "mgmt_qll_s3", 3, make_pdu(MgmtBody(bm, QueueLoadLevel(0x2AAAAA)), s3, transmitter=A, slot_id_in_cycle=147)
    yield "ptt_request_s3", 3, make_pdu(SessionRequest(0), s3, transmitter=A, slot_id_in_cycle=10)
    yield "ptt_release_s3", 3, make_pdu(SessionRelease(0x1234), s3, transmitter=A, receiver=B, slot_id_in_cycle=35)
    yield "ptt_relay_s3", 3, make_pdu(SessionRelay(), s3, transmitter=B, slot_id_in_cycle=0)
    yield "rt_data_s3", 3, make_pdu(
        RtDataBody(tuple((i + 1) * 0x0123456789AB % (1 << 54) for i in range(6))),
        s3, transmitter=A, slot_id_in_cycle=10, sequence=4095,
    )
    yield "be_data_s3", 3, make_pdu(BeDataBody(bytes(range(256)) * 2 + bytes(64)), s3, transmitter=B, slot_id_in_cycle=20)
    yield "rt_data_s1", 1, make_pdu(RtDataBody((0,) * 4), TABLE1[1], transmitter=A, receiver=BROADCAST, slot_id_in_cycle=15)


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    for name, sol, pdu in vectors():
        cfg = TABLE1[sol]
        bits = encode(pdu, cfg)
        kind = slot_kind_for(pdu.pdu_type).value
        (OUT / f"{name}.hex").write_text(bits.hex() + "\n")
        meta = {"solution": sol, "kind": kind, "bits": len(bits), "fields": describe(pdu)}
        (OUT / f"{name}.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
        print(f"{name}: {len(bits)} bits")


if __name__ == "__main__":
    main()
