"""
Train/query/gallery splitting under the single-query protocol.
"""

import logging
from collections import defaultdict
from dataclasses import dataclass
from typing import Dict, List, Sequence

import numpy as np

from ..exceptions import DataError
from ..models import DatasetSplits, Domain, LabeledImage, ProtocolConfig

logger = logging.getLogger(__name__)


def _group_by_identity(dataset: Sequence[LabeledImage]) -> Dict[int, List[int]]:
    groups: Dict[int, List[int]] = defaultdict(list)
    for index, item in enumerate(dataset):
        groups[item.identity].append(index)
    return groups


def split_train_query_gallery(
    dataset: Sequence[LabeledImage], protocol_config: ProtocolConfig
) -> DatasetSplits:
    """
    Partition identities into train and test, then pick queries and gallery.

    Queries are drawn preferentially from images that have a gallery counterpart
    under another camera. Test identities with a single image (or no usable
    query/gallery pair under the camera restriction) are excluded with a warning.

    Args:
        dataset: Labeled images of one domain
        protocol_config: Partition fraction, queries per identity, seed, cameras

    Returns:
        DatasetSplits with disjoint train and test identities

    Raises:
        DataError: If the dataset is empty or has fewer than two identities
    """
    if not dataset:
        raise DataError("Cannot split an empty dataset")

    groups = _group_by_identity(dataset)
    identities = sorted(groups)
    if len(identities) < 2:
        raise DataError("Splitting needs at least two identities")

    rng = np.random.default_rng(protocol_config.seed)
    order = rng.permutation(len(identities))
    n_train = int(round(len(identities) * protocol_config.train_fraction))
    n_train = min(max(n_train, 1), len(identities) - 1)
    train_ids = set(identities[i] for i in order[:n_train])
    test_ids = sorted(set(identities) - train_ids)

    train = [item for item in dataset if item.identity in train_ids]
    query, gallery, excluded = [], [], []
    q_cam = protocol_config.query_camera
    g_cam = protocol_config.gallery_camera

    for identity in test_ids:
        members = groups[identity]
        if len(members) < 2:
            logger.warning(f"Identity {identity} has a single image, excluded from test")
            excluded.append(identity)
            continue

        q_pool = [i for i in members if q_cam is None or dataset[i].camera == q_cam]
        g_pool = [i for i in members if g_cam is None or dataset[i].camera == g_cam]
        cross_camera = [
            i for i in q_pool if any(dataset[j].camera != dataset[i].camera for j in g_pool)
        ]
        pool = cross_camera or q_pool
        n_query = min(protocol_config.queries_per_identity, len(pool))
        chosen = set()
        if n_query > 0:
            picks = rng.choice(len(pool), size=n_query, replace=False)
            chosen = {pool[p] for p in sorted(picks)}
            # keep at least one gallery entry for the identity
            remaining = [j for j in g_pool if j not in chosen]
            while chosen and not remaining:
                chosen.discard(max(chosen))
                remaining = [j for j in g_pool if j not in chosen]

        remaining = [j for j in g_pool if j not in chosen]
        if not chosen or not remaining:
            logger.warning(
                f"Identity {identity} cannot form a query/gallery pair, excluded from test"
            )
            excluded.append(identity)
            continue

        query.extend(dataset[i] for i in sorted(chosen))
        gallery.extend(dataset[j] for j in remaining)

    if excluded:
        logger.warning(f"{len(excluded)} test identities excluded: {excluded}")
    logger.info(
        f"Split {len(identities)} identities: {len(train_ids)} train, "
        f"{len(test_ids) - len(excluded)} test ({len(query)} queries, {len(gallery)} gallery)"
    )
    return DatasetSplits(
        train=train, query=query, gallery=gallery, excluded_identities=excluded
    )


@dataclass
class CrossDomainSplits:
    """Training material for both domains plus the held-out evaluation split."""

    source_train: List[LabeledImage]
    target_train: List[LabeledImage]
    evaluation: DatasetSplits
    evaluation_domain: Domain = "target"


def prepare_cross_domain_splits(
    source: Sequence[LabeledImage],
    target: Sequence[LabeledImage],
    protocol_config: ProtocolConfig,
    evaluation_domain: Domain = "target",
) -> CrossDomainSplits:
    """
    Split the evaluation domain and withhold its test identities from training.

    When both domains share one identity label space (synthetic data), the
    held-out identities are removed from the other domain as well.

    Args:
        source: Labeled source-domain images
        target: Target-domain images (labels used only for evaluation)
        protocol_config: Split protocol
        evaluation_domain: Domain providing query and gallery

    Returns:
        CrossDomainSplits
    """
    if not source or not target:
        raise DataError("Both source and target datasets must be non-empty")

    evaluated = target if evaluation_domain == "target" else source
    splits = split_train_query_gallery(evaluated, protocol_config)
    held_out = set(splits.test_identities) | set(splits.excluded_identities)

    def keep(items: Sequence[LabeledImage], same_space: bool) -> List[LabeledImage]:
        if not same_space:
            return list(items)
        return [item for item in items if item.identity not in held_out]

    shared = protocol_config.shared_identities
    source_train = keep(source, shared or evaluation_domain == "source")
    target_train = keep(target, shared or evaluation_domain == "target")
    if not source_train or not target_train:
        raise DataError("No training images left after withholding test identities")
    return CrossDomainSplits(
        source_train=source_train,
        target_train=target_train,
        evaluation=splits,
        evaluation_domain=evaluation_domain,
    )
