"""Capacity bounds for MIMO optical intensity channels with peak and
average power constraints."""

from .channel_core import ChannelModel, effective_alpha, reduce_channel, validate_channel
from .zonotope_signaling import build_decomposition, locate, min_energy_input
from .maxvar import max_trace
from .bounds import BoundReport, bound_report

__all__ = [
    "ChannelModel", "validate_channel", "reduce_channel", "effective_alpha",
    "build_decomposition", "locate", "min_energy_input", "max_trace",
    "BoundReport", "bound_report",
]
