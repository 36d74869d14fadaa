"""Moderate-deviations toolkit for discrete memoryless channels.

Gallager's E0 and its rho-derivatives, capacity and dispersion, random-coding
and sphere-packing exponents, finite-blocklength bounds along vanishing
back-off schedules, and exact and Monte Carlo checks on explicit codes.
"""

from .capacity import capacity, channel_dispersion
from .channel import Channel, InputDistribution, TestChannel, bec, bsc, identity_channel, ingest_channel, load_channel
from .exponents import critical_rate, err_exponent, esp_exponent, esp_haroutunian
from .gallager import eo, eo_derivatives

__version__ = "0.1.0"

__all__ = [
    "Channel",
    "InputDistribution",
    "TestChannel",
    "bec",
    "bsc",
    "capacity",
    "channel_dispersion",
    "critical_rate",
    "eo",
    "eo_derivatives",
    "err_exponent",
    "esp_exponent",
    "esp_haroutunian",
    "identity_channel",
    "ingest_channel",
    "load_channel",
]
