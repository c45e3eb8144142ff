"""
attnreid - attention-guided unpaired domain translation jointly trained with person re-ID.
"""

__version__ = "1.0.0"
__author__ = "attnreid Team"

from .models import (
    DatasetSplits,
    EvaluationReport,
    LabeledImage,
    LoadResult,
    LossReport,
    LossWeights,
    RunConfig,
    SyntheticSpec,
    TrainConfig,
)

__all__ = [
    "DatasetSplits",
    "EvaluationReport",
    "LabeledImage",
    "LoadResult",
    "LossReport",
    "LossWeights",
    "RunConfig",
    "SyntheticSpec",
    "TrainConfig",
]
