"""Suspended semiflows over fibered interval maps: cocycles, transfer operators, local limits."""

from .cocycle import CocycleSystem, GroupSpec, Roof, SkewPoint, SuspensionPoint
from .ctrw import CTRWModel, exact_dist, sample_ctrw
from .dynamics import IntervalMap, MarkovShift, Partition
from .stable import ScalingSequence, StableLaw, density
from .systems import get_system, list_systems

__version__ = "0.1.0"

__all__ = [
    "CTRWModel",
    "CocycleSystem",
    "GroupSpec",
    "IntervalMap",
    "MarkovShift",
    "Partition",
    "Roof",
    "ScalingSequence",
    "SkewPoint",
    "StableLaw",
    "SuspensionPoint",
    "density",
    "exact_dist",
    "get_system",
    "list_systems",
    "sample_ctrw",
]
