"""Shared radio medium for one slot occurrence."""

from __future__ import annotations

import math
from dataclasses import dataclass

from .codec import SlotCode
from .phy import ChannelParams, noise_floor_dbm, per, propagation_delay_us, rx_power_dbm, sinr_db

MIN_DISTANCE_M = 1.0


class ProtocolViolation(RuntimeError):
    pass


@dataclass(frozen=True)
class OnAir:
    node: int
    position: tuple[float, float]
    frame_bits: int


@dataclass(frozen=True)
class Reception:
    receiver: int
    sensed: int
    source: int | None = None
    sinr_db: float | None = None
    per: float | None = None
    delivered: bool = False
    reason: str = "silent"

    @property
    def observation(self) -> SlotCode:
        if self.sensed >= 2:
            return SlotCode.COLLISION
        if self.sensed == 1 or self.delivered:
            return SlotCode.NEIGHBOUR_TRANSMITTING
        return SlotCode.IDLE


def distance_m(a: tuple[float, float], b: tuple[float, float]) -> float:
    return max(MIN_DISTANCE_M, math.hypot(a[0] - b[0], a[1] - b[1]))


def medium_deliver(
    on_air: list[OnAir],
    receiver: int,
    position: tuple[float, float],
    params: ChannelParams,
    rng,
    guard_us: float,
) -> Reception:
    """Outcome of one slot at one listening node.

    The strongest frame is attempted against noise plus all other frames;
    everything else is lost. One uniform draw is taken per attempt.
    """
    if not on_air:
        return Reception(receiver, 0)
    noise = noise_floor_dbm(params)
    powers = []
    for tx in on_air:
        d = distance_m(tx.position, position)
        powers.append((rx_power_dbm(d, params), d, tx))
    sensed = sum(1 for p, _, _ in powers if p - noise >= params.sense_threshold_db)
    if not sensed:
        return Reception(receiver, 0, reason="below_sense")
    powers.sort(key=lambda item: (-item[0], item[2].node))
    best_p, best_d, best = powers[0]
    sinr = sinr_db(best_p, [p for p, _, _ in powers[1:]], params)
    if len(powers) > 1 and sinr < params.capture_threshold_db:
        return Reception(receiver, sensed, best.node, round(sinr, 6), 1.0, False, "collision")
    p_err = per(sinr, best.frame_bits, params)
    draw = float(rng.random())
    ok = draw >= p_err
    reason = "ok"
    if ok and propagation_delay_us(best_d) > guard_us:
        ok, reason = False, "late"
    elif not ok:
        reason = "collision" if sensed >= 2 else "channel"
    return Reception(receiver, sensed, best.node, round(sinr, 6), p_err, ok, reason)
