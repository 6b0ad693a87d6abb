"""Outdoor link budget and packet reception.

Path loss follows the ITU-R M.1225 vehicular test environment::

    L = 40 (1 - 4e-3 dhb) log10(R_km) - 18 log10(dhb) + 21 log10(f_MHz) + 80

floored at free-space loss, which takes over below roughly 20 m with the
default parameters. A coded-BER lookup table turns SNR into BER and frame
errors are independent bit errors. Randomness is not drawn here; callers
pass uniform draws in.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

BANDWIDTHS_MHZ = (20.0, 10.0, 5.0, 2.5, 1.25)
THERMAL_NOISE_DBM_HZ = -174.0
SPEED_OF_LIGHT = 299_792_458.0
DEFAULT_BER_TABLE = "ber_bpsk_r12_awgn.csv"


class PhyError(ValueError):
    pass


class NonPositiveDistance(PhyError):
    pass


class EmptyBerTable(PhyError):
    pass


def _read_ber_csv(text: str, source: str = "<table>") -> tuple[tuple[float, float], ...]:
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != ["snr_db", "ber"]:
        raise PhyError(f"{source}: header must be 'snr_db,ber'")
    rows = []
    for n, row in enumerate(reader, 2):
        try:
            rows.append((float(row["snr_db"]), float(row["ber"])))
        except (TypeError, ValueError):
            raise PhyError(f"{source}:{n}: bad row {row}") from None
    return tuple(rows)


def default_ber_table() -> tuple[tuple[float, float], ...]:
    text = resources.files("wbwf").joinpath("data").joinpath(DEFAULT_BER_TABLE).read_text()
    return _read_ber_csv(text, DEFAULT_BER_TABLE)


def load_ber_table(path: str | Path) -> tuple[tuple[float, float], ...]:
    table = _read_ber_csv(Path(path).read_text(), str(path))
    check_ber_table(table)
    return table


def check_ber_table(table) -> None:
    if not table:
        raise EmptyBerTable("BER table is empty")
    for (s0, b0), (s1, b1) in zip(table, table[1:]):
        if not s1 > s0:
            raise PhyError(f"BER table SNR must be strictly increasing ({s0} then {s1})")
        if b1 > b0:
            raise PhyError(f"BER table must be non-increasing ({b0} then {b1} at {s1} dB)")
    for s, b in table:
        if not 0.0 <= b <= 1.0:
            raise PhyError(f"BER {b} at {s} dB outside [0, 1]")


@dataclass(frozen=True)
class ChannelParams:
    tx_power_dbm: float = 36.99  # 5 W
    carrier_mhz: float = 2412.0
    bandwidth_mhz: float = 10.0
    base_height_delta_m: float = 15.0
    noise_figure_db: float = 7.0
    # below this SNR a frame is not even sensed as energy
    sense_threshold_db: float = -2.0
    # with co-slot interference, the strongest frame must clear this SINR to be attempted
    capture_threshold_db: float = 0.0
    ber_table: tuple[tuple[float, float], ...] = field(default_factory=default_ber_table)

    def __post_init__(self):
        if self.bandwidth_mhz not in BANDWIDTHS_MHZ:
            raise PhyError(f"bandwidth {self.bandwidth_mhz} MHz not one of {BANDWIDTHS_MHZ}")
        if not 0 < self.base_height_delta_m < 250:
            raise PhyError("base_height_delta_m must be in (0, 250) m")
        if self.carrier_mhz <= 0:
            raise PhyError("carrier_mhz must be positive")
        check_ber_table(self.ber_table)


@dataclass(frozen=True)
class LinkSample:
    distance_m: float
    rx_power_dbm: float
    snr_db: float
    ber: float
    per: float


def free_space_loss_db(distance_m: float, carrier_mhz: float) -> float:
    if distance_m <= 0:
        raise NonPositiveDistance(f"distance must be positive, got {distance_m}")
    return 20 * math.log10(distance_m / 1000.0) + 20 * math.log10(carrier_mhz) + 32.44


def m1225_vehicular_loss_db(distance_m: float, params: ChannelParams) -> float:
    if distance_m <= 0:
        raise NonPositiveDistance(f"distance must be positive, got {distance_m}")
    dhb = params.base_height_delta_m
    return (
        40 * (1 - 4e-3 * dhb) * math.log10(distance_m / 1000.0)
        - 18 * math.log10(dhb)
        + 21 * math.log10(params.carrier_mhz)
        + 80
    )


def path_loss_db(distance_m: float, params: ChannelParams) -> float:
    return max(
        m1225_vehicular_loss_db(distance_m, params),
        free_space_loss_db(distance_m, params.carrier_mhz),
    )


def noise_floor_dbm(params: ChannelParams) -> float:
    return THERMAL_NOISE_DBM_HZ + 10 * math.log10(params.bandwidth_mhz * 1e6) + params.noise_figure_db


def rx_power_dbm(distance_m: float, params: ChannelParams) -> float:
    return params.tx_power_dbm - path_loss_db(distance_m, params)


def snr_db(distance_m: float, params: ChannelParams) -> float:
    return rx_power_dbm(distance_m, params) - noise_floor_dbm(params)


def ber_at(snr: float, table) -> float:
    """Interpolate linearly in (dB, log10 BER); clamp outside the table."""
    if not table:
        raise EmptyBerTable("BER table is empty")
    if snr <= table[0][0]:
        return table[0][1]
    if snr >= table[-1][0]:
        return table[-1][1]
    lo, hi = 0, len(table) - 1
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if table[mid][0] <= snr:
            lo = mid
        else:
            hi = mid
    (s0, b0), (s1, b1) = table[lo], table[hi]
    w = (snr - s0) / (s1 - s0)
    if b0 <= 0.0 or b1 <= 0.0:
        return b0 + w * (b1 - b0)
    return 10 ** (math.log10(b0) + w * (math.log10(b1) - math.log10(b0)))


def per_from_ber(ber: float, frame_bits: int) -> float:
    if frame_bits <= 0:
        raise PhyError("frame_bits must be positive")
    if ber >= 1.0:
        return 1.0
    return -math.expm1(frame_bits * math.log1p(-ber))


def per(snr: float, frame_bits: int, params: ChannelParams) -> float:
    return per_from_ber(ber_at(snr, params.ber_table), frame_bits)


def receive_decision(per_value: float, draw: float) -> bool:
    """True when the frame is delivered."""
    if not 0.0 <= per_value <= 1.0:
        raise PhyError(f"PER {per_value} outside [0, 1]")
    return draw >= per_value


def link_sample(distance_m: float, frame_bits: int, params: ChannelParams) -> LinkSample:
    s = snr_db(distance_m, params)
    b = ber_at(s, params.ber_table)
    return LinkSample(distance_m, rx_power_dbm(distance_m, params), s, b, per_from_ber(b, frame_bits))


def _mw(dbm: float) -> float:
    return 10 ** (dbm / 10)


def sinr_db(wanted_dbm: float, interferers_dbm, params: ChannelParams) -> float:
    noise = _mw(noise_floor_dbm(params)) + sum(_mw(p) for p in interferers_dbm)
    return wanted_dbm - 10 * math.log10(noise)


def sinr_with_interference(wanted: LinkSample, interferers_dbm, params: ChannelParams) -> float:
    interferers_dbm = list(interferers_dbm)
    if not interferers_dbm:
        return wanted.snr_db
    return sinr_db(wanted.rx_power_dbm, interferers_dbm, params)


def propagation_delay_us(distance_m: float) -> float:
    return distance_m / SPEED_OF_LIGHT * 1e6
