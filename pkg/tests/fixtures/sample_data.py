"""
Sample data and network doubles for testing.
"""

import torch
import torch.nn as nn

from attnreid.networks import DomainModelSet, DomainNetworks

TINY_IMAGE_SIZE = (16, 8)

# Smallest config that still exercises every training phase: 6 identities give
# 3 training identities (enough for quartets) and 3 held-out test identities.
TINY_RUN_CONFIG = {
    "name": "tiny",
    "data": {
        "num_identities": 6,
        "images_per_identity_per_domain": 4,
        "image_size": list(TINY_IMAGE_SIZE),
        "seed": 0,
    },
    "train": {
        "epochs": 2,
        "batch_size": 4,
        "decay_start_epoch": 1,
        "attention_train_epochs": 1,
        "disc_whole_image_epochs": 1,
        "checkpoint_interval": 1,
        "sample_interval": 1,
        "num_sample_images": 2,
        "seed": 0,
        "network": {
            "base_channels": 8,
            "num_residual_blocks": 1,
            "image_size": list(TINY_IMAGE_SIZE),
        },
    },
    "evaluation": {
        "ks": [1, 2],
        "num_ranking_queries": 2,
        "ranking_top_k": 2,
        "batch_size": 8,
    },
}

# file name -> (identity, camera); None means the loader must skip it
REID_FILENAMES = {
    "0001_c1_000151.png": (1, 1),
    "0002_c2s1_000301_01.jpg": (2, 2),
    "0010_c3_000007.png": (10, 3),
    "-001_c1_000001.png": None,
    "junk.txt": None,
    "readme.png": None,
}

# (d_ap, d_an, expected canonical triplet loss) with tau1 = 0.3
TRIPLET_CASES = [
    (0.2, 0.9, 0.0),
    (0.9, 0.2, 1.0),
]

# (d12, d13, d43, expected canonical quartet loss) with tau1 = 0.3, tau2 = 0.15
QUARTET_CASES = [
    (0.2, 0.9, 0.8, 0.0),
    (0.5, 0.5, 0.5, 0.45),
]


class ConstantAttention(nn.Module):
    """Attention double returning the same value at every pixel."""

    def __init__(self, value: float):
        super().__init__()
        self.value = value
        # keeps the module a parameter holder like the real attention net
        self.scale = nn.Parameter(torch.ones(1))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return torch.full_like(x[:, :1], self.value) * self.scale


class ConstantGenerator(nn.Module):
    """Decoder double producing a constant image."""

    def __init__(self, value: float):
        super().__init__()
        self.value = value

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return torch.full_like(x, self.value)


class OffsetGenerator(nn.Module):
    """Decoder double adding a fixed offset, to tell chained translations apart."""

    def __init__(self, offset: float):
        super().__init__()
        self.offset = offset

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return x + self.offset


def make_double_models(
    mask_value: float = 0.5,
    source_decoder: nn.Module = None,
    target_decoder: nn.Module = None,
) -> DomainModelSet:
    """
    Model set with identity encoders, the given decoders (identity by default)
    and constant attention maps.
    """

    def domain(decoder: nn.Module) -> DomainNetworks:
        return DomainNetworks(
            encoder=nn.Identity(),
            decoder=decoder if decoder is not None else nn.Identity(),
            discriminator=nn.Identity(),
            attention=ConstantAttention(mask_value),
        )

    return DomainModelSet(
        source=domain(source_decoder),
        target=domain(target_decoder),
        embedding_head=nn.Identity(),
        classifier_head=None,
    )
