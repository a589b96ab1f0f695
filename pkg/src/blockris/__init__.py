"""Blockage-aware multi-RIS link simulation: indexed-sequence blockage
detection and WMMSE/phase-alignment sum-rate optimization."""

from blockris.channel_model import (
    BlockageState,
    ChannelSet,
    Geometry,
    SystemDims,
    effective_channel,
    generate_channels,
    random_geometry,
    rician_link,
    steering_vector,
)
from blockris.crpa import CrpaConfig, IterationTrace, OptimizerState, crpa_run, wsr
from blockris.errors import BlockrisError, InvalidParameterError, NumericError
from blockris.sync_detect import DetectionReport, PilotConfig, ZcConfig

__all__ = [
    "BlockageState",
    "BlockrisError",
    "ChannelSet",
    "CrpaConfig",
    "DetectionReport",
    "Geometry",
    "InvalidParameterError",
    "IterationTrace",
    "NumericError",
    "OptimizerState",
    "PilotConfig",
    "SystemDims",
    "ZcConfig",
    "crpa_run",
    "effective_channel",
    "generate_channels",
    "random_geometry",
    "rician_link",
    "steering_vector",
    "wsr",
]
