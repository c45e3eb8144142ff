"""
Mutable training state shared by the trainer and the checkpoint module.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, Iterable, Literal, Optional

import numpy as np
import torch
import torch.nn as nn

from ..models import RunConfig, TrainConfig
from ..networks import DomainModelSet

logger = logging.getLogger(__name__)

# joint: translation and re-ID together; translation / reid: one stage of the
# two-stage mode (reid is also the whole of direct transfer)
Phase = Literal["joint", "translation", "reid"]

PHASE_FOR_MODE = {
    "edaan_end_to_end": "joint",
    "direct_transfer": "reid",
}


def phase_train_config(train: TrainConfig, phase: Phase) -> TrainConfig:
    """
    Effective schedule of a phase.

    Stage 2 of the two-stage mode runs for stage2_epochs with its decay starting halfway.
    """
    if phase == "reid" and train.mode == "daan_two_stage":
        epochs = train.stage2_epochs
        return train.model_copy(update={"epochs": epochs, "decay_start_epoch": epochs // 2})
    return train


def set_requires_grad(modules: Iterable[nn.Module], requires_grad: bool) -> None:
    for module in modules:
        module.requires_grad_(requires_grad)


def build_optimizers(
    models: DomainModelSet, train: TrainConfig, phase: Phase
) -> Dict[str, torch.optim.Optimizer]:
    """
    Separate Adam optimizers per parameter group of the phase.

    Returns:
        Mapping with keys among "discriminator", "generator", "attention", "reid"
    """

    def adam(params) -> torch.optim.Adam:
        return torch.optim.Adam(list(params), lr=train.lr, betas=(train.beta1, train.beta2))

    if phase == "reid":
        return {"reid": adam(models.reid_parameters())}

    optimizers = {"discriminator": adam(models.discriminator_parameters())}
    if phase == "joint":
        heads = list(models.embedding_head.parameters())
        if models.classifier_head is not None:
            heads += list(models.classifier_head.parameters())
        optimizers["generator"] = adam(list(models.generator_parameters()) + heads)
    else:
        optimizers["generator"] = adam(models.generator_parameters())
    if train.attention_enabled:
        optimizers["attention"] = adam(models.attention_parameters())
    return optimizers


@dataclass
class TrainerState:
    """Everything needed to continue a training phase exactly where it stopped."""

    config: RunConfig
    models: DomainModelSet
    optimizers: Dict[str, torch.optim.Optimizer]
    phase: Phase
    num_classes: int
    epoch: int = 0
    step: int = 0
    attention_frozen: bool = False
    disc_masked: bool = False
    rng: np.random.Generator = field(default_factory=np.random.default_rng)
    torch_rng_state: Optional[torch.Tensor] = None
    translator_checkpoint: Optional[str] = None
    translator: Optional[DomainModelSet] = None

    @property
    def train_config(self) -> TrainConfig:
        return phase_train_config(self.config.train, self.phase)

    @property
    def trains_translation(self) -> bool:
        return self.phase in ("joint", "translation")

    @property
    def trains_reid(self) -> bool:
        return self.phase in ("joint", "reid")

    def set_lr(self, lr: float) -> None:
        for optimizer in self.optimizers.values():
            for group in optimizer.param_groups:
                group["lr"] = lr
