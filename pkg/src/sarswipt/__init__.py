"""Beamforming and power splitting for SWIPT downlinks under SAR limits."""
from .eh import EhModel
from .metrics import BeamformingSolution, check_feasibility, evaluate
from .model import ChannelSet, SystemScenario, UncertaintyModel, generate_channels

__all__ = [
    "EhModel",
    "BeamformingSolution",
    "check_feasibility",
    "evaluate",
    "ChannelSet",
    "SystemScenario",
    "UncertaintyModel",
    "generate_channels",
]
__version__ = "0.1.0"
