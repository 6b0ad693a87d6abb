"""TDMA MAC for a wide-band tactical radio waveform: planner, codec, channel, MAC and simulator."""

__version__ = "0.1.0"
