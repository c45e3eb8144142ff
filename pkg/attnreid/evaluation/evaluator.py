"""
Evaluation of a trained model set on held-out splits.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
import torch

from ..exceptions import DataError
from ..models import DatasetSplits, EvaluationConfig, EvaluationReport, LabeledImage, MetricRecord
from ..networks import DomainModelSet
from ..sampler import stack_images
from ..translate import translate_s2t, translate_t2s
from .export import export_ranking_grid, write_embeddings_csv, write_metrics_csv
from .metrics import (
    RankingResult,
    attention_iou,
    cmc,
    extract_embeddings,
    foreground_preservation,
    map_score,
    rank_gallery,
)

logger = logging.getLogger(__name__)

METRICS_NAME = "metrics.csv"
EMBEDDINGS_NAME = "embeddings.csv"
RANKINGS_NAME = "rankings.png"


@dataclass
class EvaluationOutcome:
    report: EvaluationReport
    ranking: RankingResult
    query_embeddings: np.ndarray
    gallery_embeddings: np.ndarray


def _labels(items: Sequence[LabeledImage]):
    return [i.identity for i in items], [i.camera for i in items]


def evaluate_retrieval(
    models: DomainModelSet, splits: DatasetSplits, config: EvaluationConfig
) -> EvaluationOutcome:
    """
    Embed query and gallery, rank, and score CMC@ks and mAP.

    Raises:
        DataError: Empty query or gallery, or no query with a good match
    """
    if not splits.query or not splits.gallery:
        raise DataError("Evaluation needs a non-empty query and gallery")
    q_emb = extract_embeddings(models, splits.query, config.batch_size)
    g_emb = extract_embeddings(models, splits.gallery, config.batch_size)
    q_ids, q_cams = _labels(splits.query)
    g_ids, g_cams = _labels(splits.gallery)
    ranking = rank_gallery(q_emb, g_emb, q_ids, g_ids, q_cams, g_cams)

    records = [MetricRecord(metric="cmc", k=k, value=v) for k, v in cmc(ranking, config.ks).items()]
    records.append(MetricRecord(metric="map", value=map_score(ranking)))
    report = EvaluationReport(
        records=records,
        num_queries=ranking.num_queries,
        num_valid_queries=int(ranking.valid_queries().sum()),
        num_gallery=ranking.num_gallery,
    )
    return EvaluationOutcome(report, ranking, q_emb, g_emb)


def evaluate_attention(
    models: DomainModelSet,
    images_by_domain: Dict[str, Sequence[LabeledImage]],
    attention_enabled: bool = True,
    threshold: float = 0.5,
    batch_size: int = 64,
) -> List[MetricRecord]:
    """
    Attention IoU against ground-truth masks and foreground MAE of the composed
    translations, pooled over both domains (A_S on source images, A_T on target images).

    Raises:
        DataError: If an image lacks a ground-truth mask
    """
    maps, masks, inputs, composed = [], [], [], []
    was_training = models.training
    models.eval()
    device = next(models.parameters()).device
    with torch.no_grad():
        for domain, items in images_by_domain.items():
            if any(item.gt_mask is None for item in items):
                raise DataError(f"{domain} images lack ground-truth masks")
            translate = translate_s2t if domain == "source" else translate_t2s
            for start in range(0, len(items), batch_size):
                chunk = items[start : start + batch_size]
                x = stack_images(chunk).to(device)
                output = translate(models, x, attention_enabled)
                maps.append(output.foreground_mask.cpu())
                inputs.append(x.cpu())
                composed.append(output.composed.cpu())
                masks.extend(item.gt_mask for item in chunk)
    models.train(was_training)
    if not masks:
        raise DataError("No images for attention evaluation")

    gt = np.stack(masks)
    return [
        MetricRecord(metric="attn_iou", value=attention_iou(torch.cat(maps), gt, threshold)),
        MetricRecord(
            metric="fg_mae",
            value=foreground_preservation(torch.cat(inputs), torch.cat(composed), gt),
        ),
    ]


def evaluate_models(
    models: DomainModelSet,
    splits: DatasetSplits,
    config: EvaluationConfig,
    attention_models: Optional[DomainModelSet] = None,
    attention_sets: Optional[Dict[str, Sequence[LabeledImage]]] = None,
    attention_enabled: bool = True,
) -> EvaluationOutcome:
    """
    Retrieval metrics plus, when translation networks and masked images are given,
    the attention metrics.
    """
    outcome = evaluate_retrieval(models, splits, config)
    if attention_models is None or not attention_sets:
        logger.info("No translation networks or masks, attention metrics skipped")
        return outcome
    if any(item.gt_mask is None for items in attention_sets.values() for item in items):
        logger.info("Ground-truth masks unavailable, attention metrics skipped")
        return outcome
    outcome.report.records.extend(
        evaluate_attention(
            attention_models,
            attention_sets,
            attention_enabled,
            config.attention_threshold,
            config.batch_size,
        )
    )
    return outcome


def write_evaluation_outputs(
    outcome: EvaluationOutcome,
    splits: DatasetSplits,
    out_dir: Union[str, Path],
    config: EvaluationConfig,
) -> Dict[str, Path]:
    """
    Write metrics.csv, embeddings.csv (query then gallery) and rankings.png.

    Returns:
        Mapping of output kind to path
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    outputs = {
        "metrics": write_metrics_csv(outcome.report.records, out_dir / METRICS_NAME),
        "embeddings": write_embeddings_csv(
            list(splits.query) + list(splits.gallery),
            np.concatenate([outcome.query_embeddings, outcome.gallery_embeddings]),
            out_dir / EMBEDDINGS_NAME,
        ),
    }

    ranking = outcome.ranking
    num_queries = min(config.num_ranking_queries, ranking.num_queries)
    keep = [ranking.order[q][~ranking.junk[q]] for q in range(num_queries)]
    top_k = min([config.ranking_top_k] + [len(k) for k in keep]) if keep else 0
    if num_queries and top_k:
        queries, galleries, flags = [], [], []
        for q in range(num_queries):
            good = ranking.good(q)[:top_k]
            queries.append(splits.query[q].image)
            galleries.append([splits.gallery[g].image for g in keep[q][:top_k]])
            flags.append([bool(f) for f in good])
        outputs["rankings"] = export_ranking_grid(queries, galleries, flags, out_dir / RANKINGS_NAME)
    logger.info(f"Wrote evaluation outputs to {out_dir}")
    return outputs
