"""Few-shot action recognition on pre-extracted video features.

Videos are embedded as temporally ordered trajectories of unit-norm
sub-action points; classes are learned trajectories of sub-action
prototypes. Classification and temporal detection are both nearest-
trajectory searches in the embedding space.
"""

__version__ = "0.1.0"

from taen.errors import ConfigError, DataError, NumericError, TaenError

__all__ = [
    "ConfigError",
    "DataError",
    "NumericError",
    "TaenError",
    "__version__",
]
