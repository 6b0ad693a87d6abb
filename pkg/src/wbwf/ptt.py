"""Push-to-talk user model and voice-frame accounting."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .codec import BROADCAST
from .mac import VoiceFrame

VOICE_FRAME_INTERVAL_US = 22_500
VOICE_FRAME_BITS = 54
_SEQ_BITS = 24


class PttError(RuntimeError):
    pass


class AlreadyActive(PttError):
    pass


class NotTalking(PttError):
    pass


class UserPhase(Enum):
    SILENT = "SILENT"
    PRESSED_WAITING = "PRESSED_WAITING"
    TALKING = "TALKING"
    RELEASING = "RELEASING"


@dataclass(frozen=True)
class TalkAction:
    press_us: int
    talk_us: int
    destination: int = BROADCAST
    synthetic: bool = False

    @property
    def release_us(self) -> int:
        return self.press_us + self.talk_us


@dataclass(frozen=True)
class PttRequestPrimitive:
    destination: int
    time: int


@dataclass(frozen=True)
class PttReleasePrimitive:
    session_id: int | None
    time: int


@dataclass
class PttUserState:
    phase: UserPhase = UserPhase.SILENT
    active_session: int | None = None
    talk_schedule: list[TalkAction] = field(default_factory=list)
    next_seq: int = 0
    frames_generated: int = 0
    talking_since: int | None = None


def voice_payload(session_id: int, seq: int) -> int:
    """Deterministic 54-bit stand-in for a coded frame, unique per (session, seq)."""
    return ((session_id & 0x7FFF) << _SEQ_BITS) | (seq & ((1 << _SEQ_BITS) - 1))


def split_payload(payload: int) -> tuple[int, int]:
    return payload >> _SEQ_BITS, payload & ((1 << _SEQ_BITS) - 1)


def on_press(user: PttUserState, destination: int, now: int) -> PttRequestPrimitive:
    if user.phase != UserPhase.SILENT:
        raise AlreadyActive(f"button already down ({user.phase.value})")
    user.phase = UserPhase.PRESSED_WAITING
    return PttRequestPrimitive(destination, now)


def bind_session(user: PttUserState, session_id: int) -> None:
    user.active_session = session_id


def on_session_established(user: PttUserState, now: int) -> int | None:
    """Start coding; returns the time of the first frame, or None if the press is gone."""
    if user.phase != UserPhase.PRESSED_WAITING:
        return None
    user.phase = UserPhase.TALKING
    user.talking_since = now
    user.next_seq = 0
    return now


def on_session_failed(user: PttUserState, now: int) -> None:
    user.phase = UserPhase.SILENT
    user.active_session = None
    user.talking_since = None


def generate_frame(user: PttUserState, now: int) -> VoiceFrame | None:
    """Next voice frame while TALKING, else None."""
    if user.phase != UserPhase.TALKING or user.active_session is None:
        return None
    seq = user.next_seq
    user.next_seq += 1
    user.frames_generated += 1
    return VoiceFrame(voice_payload(user.active_session, seq), now, user.active_session, seq)


def on_release(user: PttUserState, now: int) -> PttReleasePrimitive:
    """Button up. Works while waiting (aborts the request) or talking."""
    if user.phase not in (UserPhase.PRESSED_WAITING, UserPhase.TALKING):
        raise NotTalking(f"release while {user.phase.value}")
    user.phase = UserPhase.RELEASING
    return PttReleasePrimitive(user.active_session, now)


def on_session_closed(user: PttUserState, now: int) -> None:
    user.phase = UserPhase.SILENT
    user.active_session = None
    user.talking_since = None


@dataclass
class ReceiverLedger:
    """Per (session, receiver) delivery bookkeeping on the listening side."""

    delivered: dict[tuple[int, int], int] = field(default_factory=dict)
    lost: dict[tuple[int, int], int] = field(default_factory=dict)
    latencies: dict[int, list[int]] = field(default_factory=dict)

    def record_delivery(self, session_id: int, receiver: int, generation_time: int, now: int) -> int:
        latency = now - generation_time
        key = (session_id, receiver)
        self.delivered[key] = self.delivered.get(key, 0) + 1
        self.latencies.setdefault(session_id, []).append(latency)
        return latency

    def record_loss(self, session_id: int, receiver: int, count: int) -> None:
        key = (session_id, receiver)
        self.lost[key] = self.lost.get(key, 0) + count


def synthetic_on_off(
    rng: np.random.Generator,
    duration_us: int,
    mean_on_ms: float,
    mean_off_ms: float,
    destination: int = BROADCAST,
) -> list[TalkAction]:
    """Exponential on/off talk spurts. A synthetic convenience, not a speaker model."""
    actions = []
    t = float(rng.exponential(mean_off_ms)) * 1000
    while t < duration_us:
        on = max(1.0, float(rng.exponential(mean_on_ms))) * 1000
        actions.append(TalkAction(int(t), int(on), destination, synthetic=True))
        t += on + float(rng.exponential(mean_off_ms)) * 1000
    return actions
