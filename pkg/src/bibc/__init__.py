"""Bistatic backscatter communication over distributed MIMO.

Simulation library and batch CLI covering indoor multipath channel
synthesis, backscatter channel estimation under direct-link interference,
transmit beamforming under total/per-antenna power and interference
constraints, access-point role selection, low-resolution ADC noise
modeling, and bit-error-probability evaluation (closed form and
Monte-Carlo).
"""

from bibc.scene import (
    ApSpec,
    ChannelSet,
    Partition,
    RoomGeometry,
    Scene,
    SceneChannels,
    default_scene,
    load_scene,
    synth_channels,
)

__all__ = [
    "ApSpec",
    "ChannelSet",
    "Partition",
    "RoomGeometry",
    "Scene",
    "SceneChannels",
    "default_scene",
    "load_scene",
    "synth_channels",
]

__version__ = "0.1.0"
