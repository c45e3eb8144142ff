"""
Identity-aware batch construction for the metric losses and unpaired
cross-domain batches for the translation losses.
"""

import logging
from collections import defaultdict
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import torch

from .exceptions import DataError
from .models import LabeledImage

logger = logging.getLogger(__name__)

MIN_QUARTET_IDENTITIES = 3


def stack_images(items: Sequence[LabeledImage]) -> torch.Tensor:
    """Stack labeled images into an (N, 3, H, W) float32 tensor."""
    return torch.from_numpy(np.stack([item.image for item in items]).astype(np.float32))


def class_index_map(items: Sequence[LabeledImage]) -> Dict[int, int]:
    """Map identity labels to contiguous class indices in sorted identity order."""
    return {identity: index for index, identity in enumerate(sorted({i.identity for i in items}))}


@dataclass
class QuartetBatch:
    """Anchor, positive and two negatives; y* are class indices, identities raw labels."""

    x1: torch.Tensor
    x2: torch.Tensor
    x3: torch.Tensor
    x4: torch.Tensor
    y1: torch.Tensor
    y2: torch.Tensor
    y3: torch.Tensor
    y4: torch.Tensor
    identities: np.ndarray  # (N, 4)
    indices: np.ndarray  # (N, 4) positions in the training set

    @property
    def batch_size(self) -> int:
        return self.x1.shape[0]

    def images(self) -> torch.Tensor:
        return torch.cat([self.x1, self.x2, self.x3, self.x4])

    def labels(self) -> torch.Tensor:
        return torch.cat([self.y1, self.y2, self.y3, self.y4])

    def to(self, device) -> "QuartetBatch":
        return QuartetBatch(
            *(t.to(device) for t in (self.x1, self.x2, self.x3, self.x4)),
            *(t.to(device) for t in (self.y1, self.y2, self.y3, self.y4)),
            identities=self.identities,
            indices=self.indices,
        )


class QuartetSampler:
    """
    Draws quartets from a labeled training set.

    Anchor identities are sampled uniformly among identities with at least two
    images; the first negative differs from the anchor and the second negative
    differs from both.
    """

    def __init__(self, train_set: Sequence[LabeledImage], class_index: Optional[Dict[int, int]] = None):
        """
        Args:
            train_set: Labeled training images
            class_index: Identity -> class index map (defaults to sorted identities)

        Raises:
            DataError: With fewer than 3 identities or no identity holding 2 images
        """
        groups: Dict[int, List[int]] = defaultdict(list)
        for index, item in enumerate(train_set):
            groups[item.identity].append(index)
        if len(groups) < MIN_QUARTET_IDENTITIES:
            raise DataError(
                f"quartet sampling requires ≥ {MIN_QUARTET_IDENTITIES} identities, "
                f"got {len(groups)}"
            )

        self.groups = {identity: np.array(members) for identity, members in sorted(groups.items())}
        self.identities = np.array(sorted(groups))
        self.anchor_identities = np.array(
            [identity for identity, members in self.groups.items() if len(members) >= 2]
        )
        if len(self.anchor_identities) == 0:
            raise DataError("quartet sampling requires an identity with at least 2 images")
        skipped = len(self.identities) - len(self.anchor_identities)
        if skipped:
            logger.info(f"{skipped} identities with a single image are never used as anchors")

        self.class_index = class_index or class_index_map(train_set)
        self.images = stack_images(train_set)

    def _classes(self, identities: np.ndarray) -> torch.Tensor:
        return torch.tensor([self.class_index[int(i)] for i in identities], dtype=torch.long)

    def sample(self, batch_size: int, rng: np.random.Generator) -> QuartetBatch:
        """
        Draw a batch of quartets.

        Args:
            batch_size: Number of quartets
            rng: Generator owned by the caller

        Returns:
            QuartetBatch satisfying all identity constraints
        """
        if batch_size < 1:
            raise ValueError("batch_size must be positive")
        identities = np.empty((batch_size, 4), dtype=np.int64)
        indices = np.empty((batch_size, 4), dtype=np.int64)

        for row in range(batch_size):
            anchor = self.anchor_identities[rng.integers(len(self.anchor_identities))]
            members = self.groups[anchor]
            first, second = rng.choice(len(members), size=2, replace=False)

            negatives = self.identities[self.identities != anchor]
            negative = negatives[rng.integers(len(negatives))]
            others = negatives[negatives != negative]
            second_negative = others[rng.integers(len(others))]

            neg_members = self.groups[negative]
            other_members = self.groups[second_negative]
            identities[row] = (anchor, anchor, negative, second_negative)
            indices[row] = (
                members[first],
                members[second],
                neg_members[rng.integers(len(neg_members))],
                other_members[rng.integers(len(other_members))],
            )

        columns = [self.images[torch.from_numpy(indices[:, c])] for c in range(4)]
        labels = [self._classes(identities[:, c]) for c in range(4)]
        return QuartetBatch(*columns, *labels, identities=identities, indices=indices)


def sample_quartet_batch(
    train_set: Sequence[LabeledImage], batch_size: int, rng: np.random.Generator
) -> QuartetBatch:
    """
    Draw one quartet batch from a labeled training set.

    Raises:
        DataError: "quartet sampling requires ≥ 3 identities" on too few identities
    """
    return QuartetSampler(train_set).sample(batch_size, rng)


class DomainPairSampler:
    """Independent draws with replacement from the source and target sets."""

    def __init__(self, source_set: Sequence[LabeledImage], target_set: Sequence[LabeledImage]):
        if not source_set or not target_set:
            raise DataError("domain pair sampling needs non-empty source and target sets")
        self.source = stack_images(source_set)
        self.target = stack_images(target_set)

    def sample(
        self, batch_size: int, rng: np.random.Generator
    ) -> Tuple[torch.Tensor, torch.Tensor]:
        src = rng.integers(len(self.source), size=batch_size)
        tgt = rng.integers(len(self.target), size=batch_size)
        return self.source[torch.from_numpy(src)], self.target[torch.from_numpy(tgt)]


def sample_domain_pair_batch(
    source_set: Sequence[LabeledImage],
    target_set: Sequence[LabeledImage],
    batch_size: int,
    rng: np.random.Generator,
) -> Tuple[torch.Tensor, torch.Tensor]:
    """
    Draw an unpaired (source, target) image batch.

    Returns:
        (src, tgt): two (batch_size, 3, H, W) tensors

    Raises:
        DataError: If either set is empty
    """
    return DomainPairSampler(source_set, target_set).sample(batch_size, rng)
