from latentdrive.toyworld.dataset import (
    DataGenConfig,
    DatasetFormatError,
    OUPolicy,
    SequenceDataset,
    expected_file_size,
    generate_dataset,
    splitmix64,
    write_dataset,
)
from latentdrive.toyworld.render import render_frame, render_masks
from latentdrive.toyworld.world import (
    ActionBoundsError,
    ActionVector,
    Obstacle,
    ThemeParams,
    WorldConfig,
    WorldState,
    generate_world,
    step_world,
    wrap_angle,
)

__all__ = [
    "ActionBoundsError",
    "ActionVector",
    "DataGenConfig",
    "DatasetFormatError",
    "OUPolicy",
    "Obstacle",
    "SequenceDataset",
    "ThemeParams",
    "WorldConfig",
    "WorldState",
    "expected_file_size",
    "generate_dataset",
    "generate_world",
    "render_frame",
    "render_masks",
    "splitmix64",
    "step_world",
    "wrap_angle",
    "write_dataset",
]
