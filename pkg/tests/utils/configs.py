"""A tiny experiment protocol that runs end to end in seconds."""

from src.config import ExperimentConfig

TINY_ROSTER = [
    {"name": "ball", "kind": "sphere", "dims": [40.0]},
    {"name": "box", "kind": "box", "dims": [120.0, 60.0, 40.0]},
    {"name": "can", "kind": "cylinder", "dims": [30.0, 80.0]},
]


def tiny_config(**overrides) -> ExperimentConfig:
    settings = dict(
        name="tiny",
        array_resolutions=(8, 4, 2),
        roster=TINY_ROSTER,
        row_offsets=(0.0, 8.0),
        col_offsets=(0.0, 8.0),
        rotations=(0.0, 15.0, 30.0),
        m_list=(64, 16, 4),
        c_grid=(10.0, 1000.0),
        training_fractions=((0.4, 0.2), (0.2, 0.1)),
        training_raw_sizes=(16,),
        training_compressed_sizes=(16,),
        hinge_m_list=(32, 16),
        isometry_trials=10,
        split_seeds=(0, 1),
        n_jobs=1,
    )
    settings.update(overrides)
    return ExperimentConfig(**settings)
