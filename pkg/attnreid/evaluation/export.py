"""
File exports: translation strips, ranking grids, embeddings and metrics CSVs.
"""

import logging
from pathlib import Path
from typing import List, Optional, Sequence, Union

import numpy as np
import pandas as pd
import torch
import torch.nn.functional as F

from ..models import EMBEDDING_DIM, LabeledImage, MetricRecord
from ..translate import TranslationOutput
from ..utils.image_io import mask_to_image, save_tensor_grid

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

# border colors in the [-1, 1] pixel convention
MATCH_COLOR = (-1.0, 1.0, -1.0)
MISMATCH_COLOR = (1.0, -1.0, -1.0)
QUERY_COLOR = (0.0, 0.0, 0.0)
BORDER = 2

METRICS_COLUMNS = ["metric", "k", "value"]
TRANSLATION_TILES = ("input", "mask", "raw", "background", "foreground", "composed")


def translation_tiles(inputs: torch.Tensor, output: TranslationOutput) -> List[torch.Tensor]:
    """
    Row-major tiles: input | mask | raw | x_b | x_f | composed for every image.
    """
    mask = output.foreground_mask
    if mask.shape[1] == 1:
        mask = mask_to_image(mask)
    columns = (
        inputs,
        mask,
        output.raw_translation,
        output.background_composite,
        output.foreground_composite,
        output.composed,
    )
    tiles = []
    for index in range(inputs.shape[0]):
        tiles.extend(column[index].detach().cpu() for column in columns)
    return tiles


def save_translation_grid(inputs: torch.Tensor, output: TranslationOutput, path: PathLike) -> None:
    """Write one row of translation tiles per input image."""
    save_tensor_grid(translation_tiles(inputs, output), path, nrow=len(TRANSLATION_TILES))


def _bordered(image: torch.Tensor, color) -> torch.Tensor:
    image = torch.as_tensor(np.asarray(image), dtype=torch.float32)
    return torch.stack(
        [F.pad(image[c], (BORDER, BORDER, BORDER, BORDER), value=color[c]) for c in range(3)]
    )


def export_ranking_grid(
    query,
    ranked_gallery,
    match_flags,
    path: PathLike,
) -> Path:
    """
    Write ranking strips: query leftmost, then the ranked gallery thumbnails bordered
    green (match) or red (non-match). One row per query.

    Args:
        query: One (3, H, W) query, a (Q, 3, H, W) batch or a list of queries
        ranked_gallery: (K, 3, H, W) ranked thumbnails per query
        match_flags: K booleans per query
        path: Output PNG path

    Returns:
        The written path
    """
    if not isinstance(query, (list, tuple)) and np.asarray(query).ndim == 3:
        query, ranked_gallery, match_flags = [query], [ranked_gallery], [match_flags]

    widths = {len(row) for row in ranked_gallery}
    if len(widths) != 1:
        raise ValueError(f"every query needs the same number of ranked entries, got {widths}")
    top_k = widths.pop()

    tiles = []
    for query_image, gallery, flags in zip(query, ranked_gallery, match_flags):
        if len(flags) != len(gallery):
            raise ValueError("match_flags and ranked_gallery differ in length")
        tiles.append(_bordered(query_image, QUERY_COLOR))
        for thumb, flag in zip(gallery, flags):
            tiles.append(_bordered(thumb, MATCH_COLOR if flag else MISMATCH_COLOR))

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    save_tensor_grid(tiles, path, nrow=top_k + 1)
    return path


def image_label(item: LabeledImage, index: int) -> str:
    return item.path if item.path else f"{item.domain}/{index:06d}"


def write_embeddings_csv(
    items: Sequence[LabeledImage], embeddings: np.ndarray, path: PathLike
) -> Path:
    """Columns image_path,identity,camera,e0..e127."""
    if len(items) != len(embeddings):
        raise ValueError(f"{len(items)} images but {len(embeddings)} embeddings")
    array = np.asarray(embeddings, dtype=np.float64)
    dims = array.shape[1] if array.ndim == 2 else EMBEDDING_DIM
    frame = pd.DataFrame(array.reshape(len(items), dims), columns=[f"e{i}" for i in range(dims)])
    frame.insert(0, "camera", [item.camera for item in items])
    frame.insert(0, "identity", [item.identity for item in items])
    frame.insert(0, "image_path", [image_label(item, i) for i, item in enumerate(items)])
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False)
    return path


def write_metrics_csv(records: Sequence[MetricRecord], path: PathLike) -> Path:
    """Columns metric,k,value; k is empty for unranked metrics."""
    frame = pd.DataFrame(
        [{"metric": r.metric, "k": r.k, "value": r.value} for r in records],
        columns=METRICS_COLUMNS,
    )
    frame["k"] = frame["k"].astype("Int64")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False)
    logger.info(f"Wrote {len(records)} metrics to {path}")
    return path


def read_metrics_csv(path: PathLike) -> List[MetricRecord]:
    frame = pd.read_csv(path, dtype={"k": "Int64"})
    return [
        MetricRecord(
            metric=row.metric,
            k=None if pd.isna(row.k) else int(row.k),
            value=float(row.value),
        )
        for row in frame.itertuples(index=False)
    ]
