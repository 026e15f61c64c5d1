"""OFDM ISAC baseband engine with a ground-truth channel simulator.

Subpackages follow the processing chain: config -> phytx (transmit) ->
chansim (channel oracle) -> mono (monostatic sensing), uerx (receiver),
bisense (bistatic sensing + over-the-air sync) -> runtime (pipelines, CLI).
"""

__version__ = "0.1.0"

from .config import SystemConfig, FramePlan, load_config, frame_plan  # noqa: F401
