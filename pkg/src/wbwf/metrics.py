"""Metrics built from the event trace, plus trace/metrics writers.

The collector sees exactly the records that go to the trace file, so every
figure in a report can be recomputed from the trace alone.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np

from .codec import SlotCode

KINDS = ("MGMT", "RT", "BE")
COLLISION_DIGIT = str(int(SlotCode.COLLISION))


@dataclass
class SessionMetrics:
    session: int
    node: str
    destination: str
    press_us: int
    established_us: int | None = None
    success: bool = False
    failed_reason: str | None = None
    receivers: tuple[str, ...] = ()
    generated: int = 0
    sent: int = 0
    dropped: int = 0
    pending: int = 0
    delivered: dict[str, int] = field(default_factory=dict)
    lost: dict[str, int] = field(default_factory=dict)
    latencies_us: list[int] = field(default_factory=list)

    @property
    def establishment_us(self) -> int | None:
        return None if self.established_us is None else self.established_us - self.press_us

    def latency_stats(self) -> dict[str, float]:
        if not self.latencies_us:
            return {}
        a = np.asarray(self.latencies_us, dtype=float)
        return {
            "latency_p50_us": float(np.percentile(a, 50)),
            "latency_p95_us": float(np.percentile(a, 95)),
            "latency_max_us": float(a.max()),
        }

    def delivery_ratio(self, receiver: str) -> float | None:
        d, lost = self.delivered.get(receiver, 0), self.lost.get(receiver, 0)
        return None if d + lost == 0 else d / (d + lost)


@dataclass
class MetricsReport:
    sessions: dict[int, SessionMetrics]
    network: dict[str, float | int]

    def rows(self) -> list[tuple[str, str, object]]:
        out = [("network", k, v) for k, v in sorted(self.network.items())]
        for sid in sorted(self.sessions):
            s = self.sessions[sid]
            scope = f"session/{sid}"
            vals = {
                "node": s.node,
                "destination": s.destination,
                "press_us": s.press_us,
                "success": int(s.success),
                "establishment_us": s.establishment_us,
                "generated": s.generated,
                "sent": s.sent,
                "dropped": s.dropped,
                "pending": s.pending,
                **s.latency_stats(),
            }
            out += [(scope, k, v) for k, v in vals.items() if v is not None]
            for rx in sorted(set(s.delivered) | set(s.lost) | set(s.receivers)):
                rscope = f"{scope}/rx/{rx}"
                out.append((rscope, "delivered", s.delivered.get(rx, 0)))
                out.append((rscope, "lost", s.lost.get(rx, 0)))
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["scope", "key", "value"])
        for scope, key, value in self.rows():
            w.writerow([scope, key, _fmt(value)])
        return buf.getvalue()

    def to_jsonl(self) -> str:
        return "".join(
            json.dumps({"scope": s, "key": k, "value": v}, sort_keys=True) + "\n" for s, k, v in self.rows()
        )

    def value(self, scope: str, key: str):
        for s, k, v in self.rows():
            if s == scope and k == key:
                return v
        raise KeyError((scope, key))


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(round(v, 6))
    return str(v)


class MetricsCollector:
    def __init__(self):
        self.sessions: dict[int, SessionMetrics] = {}
        self.counts: dict[str, int] = {
            "tsa_attempts": 0,
            "tsa_collisions": 0,
            "tsa_reselections": 0,
            "tsa_no_free_slot": 0,
            "collision_reports": 0,
            "ptt_res_ignored": 0,
            "ptt_res_unsent": 0,
            "rt_dropped_no_session": 0,
            "rt_dropped_duplicate": 0,
            "press_rejected": 0,
            "frames_tx": 0,
            "frames_rx": 0,
            "frames_lost": 0,
        }
        self.occupied: dict[str, set] = {k: set() for k in KINDS}
        self.occurrences: dict[str, int] = {k: 0 for k in KINDS}
        self.first_collision: int | None = None
        self.last_collision: int | None = None
        self.duration_us = 0

    def _evidence(self, t: int) -> None:
        if self.first_collision is None:
            self.first_collision = t
        self.last_collision = t

    def consume(self, rec: dict) -> None:
        kind = rec["kind"]
        t = rec["t"]
        c = self.counts
        sess = self.sessions.get(rec.get("session")) if "session" in rec else None
        if kind == "press":
            self.sessions[rec["session"]] = SessionMetrics(rec["session"], rec["node"], rec["destination"], t)
        elif kind == "press_rejected":
            c["press_rejected"] += 1
        elif kind == "session_established" and sess is not None and rec["node"] == sess.node:
            sess.established_us = t
            sess.success = True
            sess.receivers = tuple(rec["receivers"])
        elif kind == "session_failed" and sess is not None:
            sess.failed_reason = rec["reason"]
        elif kind == "voice_gen" and sess is not None:
            sess.generated += 1
        elif kind == "voice_drop" and sess is not None:
            sess.dropped += len(rec["seqs"])
        elif kind == "voice_pending" and sess is not None:
            sess.pending += len(rec["seqs"])
        elif kind == "voice_rx" and sess is not None:
            sess.delivered[rec["node"]] = sess.delivered.get(rec["node"], 0) + 1
            sess.latencies_us.append(rec["latency_us"])
        elif kind == "voice_lost" and sess is not None:
            sess.lost[rec["node"]] = sess.lost.get(rec["node"], 0) + len(rec["seqs"])
        elif kind == "tx":
            c["frames_tx"] += 1
            self.occupied[rec["slot_kind"]].add((rec["frame"], rec["slot_in_frame"]))
            if rec["pdu"] == "RT_DATA" and sess is not None:
                sess.sent += len(rec["seqs"])
            if COLLISION_DIGIT in rec.get("bitmap", ""):
                c["collision_reports"] += 1
                self._evidence(t)
        elif kind in ("rx", "rx_lost"):
            c["frames_rx" if kind == "rx" else "frames_lost"] += 1
            if rec["slot_kind"] != "MGMT" and rec["sensed"] >= 2:
                self._evidence(t)
        elif kind == "tsa_select":
            c["tsa_attempts"] += 1
        elif kind == "tsa_no_free_slot":
            c["tsa_attempts"] += 1
            c["tsa_no_free_slot"] += 1
        elif kind == "tsa_collision":
            c["tsa_collisions"] += 1
            self._evidence(t)
        elif kind == "tsa_reselect":
            c["tsa_reselections"] += 1
        elif kind in ("ptt_res_ignored", "ptt_res_unsent"):
            c[kind] += 1
        elif kind == "rt_drop":
            c["rt_dropped_" + rec["reason"]] += 1
        elif kind == "end":
            self.occurrences = dict(rec["occurrences"])
            self.duration_us = t

    def report(self) -> MetricsReport:
        net: dict[str, float | int] = dict(self.counts)
        for k in KINDS:
            occ = self.occurrences.get(k, 0)
            net[f"utilization_{k}"] = len(self.occupied[k]) / occ if occ else 0.0
        net["sessions"] = len(self.sessions)
        net["sessions_established"] = sum(s.success for s in self.sessions.values())
        net["collision_free"] = int(self.first_collision is None)
        if self.first_collision is not None:
            net["first_collision_us"] = self.first_collision
            net["convergence_us"] = self.last_collision
        else:
            net["convergence_us"] = 0
        net["duration_us"] = self.duration_us
        return MetricsReport(dict(self.sessions), net)


def trace_line(rec: dict) -> str:
    return json.dumps(rec, sort_keys=True, separators=(",", ":")) + "\n"


def write_trace(records, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(trace_line(rec))


def read_trace(path) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]
