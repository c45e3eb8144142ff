"""
Retrieval metrics under the single-query protocol plus attention quality measures.

Junk gallery entries (same identity and same camera as the query) are removed
from every ranking before scoring.
"""

import logging
from dataclasses import dataclass
from typing import Dict, Iterable, Sequence, Union

import numpy as np
import torch

from ..exceptions import DataError
from ..models import LabeledImage
from ..networks import DomainModelSet
from ..sampler import stack_images

logger = logging.getLogger(__name__)

ImageInput = Union[torch.Tensor, Sequence[LabeledImage]]


@dataclass
class RankingResult:
    """
    Per-query gallery orderings.

    order[q] is a permutation of gallery indices by ascending distance; matches and
    junk are aligned with that order.
    """

    order: np.ndarray  # (Q, G) int
    matches: np.ndarray  # (Q, G) bool, same identity
    junk: np.ndarray  # (Q, G) bool, same identity and camera

    @property
    def num_queries(self) -> int:
        return self.order.shape[0]

    @property
    def num_gallery(self) -> int:
        return self.order.shape[1]

    def good(self, query: int) -> np.ndarray:
        """Match flags of the non-junk entries of one query, in rank order."""
        return self.matches[query][~self.junk[query]]

    def valid_queries(self) -> np.ndarray:
        return np.array([self.good(q).any() for q in range(self.num_queries)], dtype=bool)

    @classmethod
    def from_order(
        cls,
        order: np.ndarray,
        query_ids: Sequence[int],
        gallery_ids: Sequence[int],
        query_cams: Sequence[int],
        gallery_cams: Sequence[int],
    ) -> "RankingResult":
        order = np.asarray(order, dtype=np.int64)
        q_ids = np.asarray(query_ids)[:, None]
        q_cams = np.asarray(query_cams)[:, None]
        g_ids = np.asarray(gallery_ids)[order]
        g_cams = np.asarray(gallery_cams)[order]
        matches = g_ids == q_ids
        return cls(order=order, matches=matches, junk=matches & (g_cams == q_cams))


def squared_distance_matrix(query: np.ndarray, gallery: np.ndarray) -> np.ndarray:
    """(Q, G) squared Euclidean distances, computed in float64."""
    q = np.asarray(query, dtype=np.float64)
    g = np.asarray(gallery, dtype=np.float64)
    return ((q[:, None, :] - g[None, :, :]) ** 2).sum(axis=2)


def rank_gallery(
    query_embeddings: np.ndarray,
    gallery_embeddings: np.ndarray,
    query_ids: Sequence[int],
    gallery_ids: Sequence[int],
    query_cams: Sequence[int],
    gallery_cams: Sequence[int],
) -> RankingResult:
    """
    Rank the gallery for every query; ties are broken by gallery index.

    Returns:
        RankingResult
    """
    distances = squared_distance_matrix(query_embeddings, gallery_embeddings)
    order = np.argsort(distances, axis=1, kind="stable")
    return RankingResult.from_order(order, query_ids, gallery_ids, query_cams, gallery_cams)


def _first_good_positions(rankings: RankingResult) -> np.ndarray:
    valid = rankings.valid_queries()
    invalid = int((~valid).sum())
    if invalid:
        logger.warning(f"{invalid} queries have no good gallery match and are excluded")
    if not valid.any():
        raise DataError("No query has a good gallery match")
    return np.array([int(np.argmax(rankings.good(q))) for q in np.flatnonzero(valid)])


def cmc(rankings: RankingResult, ks: Iterable[int] = (1, 5, 10)) -> Dict[int, float]:
    """
    Cumulative matching characteristic.

    Args:
        rankings: Ranked galleries
        ks: Ranks to report

    Returns:
        {k: fraction of valid queries with a good match within the top k non-junk entries}
    """
    first = _first_good_positions(rankings)
    return {int(k): float((first < k).mean()) for k in ks}


def average_precision(good: np.ndarray) -> float:
    """AP of a binary relevance vector in rank order."""
    hits = np.flatnonzero(good)
    if len(hits) == 0:
        return 0.0
    return float(np.mean(np.arange(1, len(hits) + 1) / (hits + 1)))


def map_score(rankings: RankingResult) -> float:
    """Mean average precision over queries with at least one good match."""
    valid = rankings.valid_queries()
    _first_good_positions(rankings)
    return float(np.mean([average_precision(rankings.good(q)) for q in np.flatnonzero(valid)]))


def _as_tensor(images: ImageInput) -> torch.Tensor:
    if isinstance(images, torch.Tensor):
        return images
    return stack_images(images)


def extract_embeddings(
    models: DomainModelSet, images: ImageInput, batch_size: int = 64
) -> np.ndarray:
    """
    Embed images with the source encoder and embedding head in evaluation mode.

    Returns:
        (N, 128) float32 array
    """
    batch = _as_tensor(images)
    device = next(models.parameters()).device
    was_training = models.training
    models.eval()
    chunks = []
    with torch.no_grad():
        for start in range(0, len(batch), batch_size):
            chunks.append(models.embed(batch[start : start + batch_size].to(device)).cpu())
    models.train(was_training)
    if not chunks:
        return np.zeros((0, models.embedding_head.fc.out_features), dtype=np.float32)
    return torch.cat(chunks).numpy()


def _mask_array(masks) -> np.ndarray:
    array = masks.detach().cpu().numpy() if isinstance(masks, torch.Tensor) else np.asarray(masks)
    if array.ndim == 4:
        array = array[:, 0]
    return array.astype(np.float64)


def attention_iou(attention_maps, gt_masks, threshold: float = 0.5) -> float:
    """
    Mean IoU between thresholded attention maps and ground-truth foreground masks.

    An image whose prediction and ground truth are both empty scores 1.

    Args:
        attention_maps: (N, 1, H, W) or (N, H, W) maps in [0, 1]
        gt_masks: (N, H, W) binary masks (None entries are not allowed)
        threshold: Foreground threshold applied as map >= threshold

    Raises:
        DataError: If ground-truth masks are missing
    """
    if gt_masks is None or (isinstance(gt_masks, (list, tuple)) and any(m is None for m in gt_masks)):
        raise DataError("attention IoU requires ground-truth masks")
    pred = _mask_array(attention_maps) >= threshold
    gt = _mask_array(np.stack(gt_masks) if isinstance(gt_masks, (list, tuple)) else gt_masks) > 0.5
    if pred.shape != gt.shape:
        raise ValueError(f"attention maps {pred.shape} and masks {gt.shape} differ in shape")

    axes = tuple(range(1, pred.ndim))
    intersection = (pred & gt).sum(axis=axes)
    union = (pred | gt).sum(axis=axes)
    iou = np.where(union == 0, 1.0, intersection / np.maximum(union, 1))
    return float(iou.mean())


def foreground_preservation(inputs, composed, gt_masks) -> float:
    """
    Mean absolute difference between input and composed images over foreground pixels.

    Args:
        inputs: (N, 3, H, W) images
        composed: (N, 3, H, W) translated images
        gt_masks: (N, H, W) binary foreground masks

    Raises:
        ValueError: If the masks select no pixel
    """
    x = inputs.detach().cpu().numpy() if isinstance(inputs, torch.Tensor) else np.asarray(inputs)
    y = composed.detach().cpu().numpy() if isinstance(composed, torch.Tensor) else np.asarray(composed)
    mask = _mask_array(np.stack(gt_masks) if isinstance(gt_masks, (list, tuple)) else gt_masks)
    if x.shape != y.shape:
        raise ValueError(f"input {x.shape} and composed {y.shape} differ in shape")
    if mask.sum() == 0:
        raise ValueError("foreground mask is empty")
    weights = np.broadcast_to(mask[:, None], x.shape)
    return float((np.abs(x.astype(np.float64) - y) * weights).sum() / weights.sum())
