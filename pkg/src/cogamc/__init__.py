"""Rate and power adaptation for a cognitive link sharing a fading interference
channel with an adaptive-modulation primary link."""

__version__ = "0.1.0"
