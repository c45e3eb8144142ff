"""
Loss terms of the joint translation + re-ID objective.

Sign conventions: every function returns a quantity to be minimized.
Distances between embeddings are squared Euclidean.
"""

import logging
import math
from typing import Mapping, Optional, Union

import torch
import torch.nn.functional as F

from .exceptions import NumericAbortError
from .models import LOSS_TERMS, LossReport, LossWeights

logger = logging.getLogger(__name__)

SCORE_EPS = 1e-7

Scalar = Union[torch.Tensor, float]


def _clamp_scores(scores: torch.Tensor) -> torch.Tensor:
    return scores.clamp(SCORE_EPS, 1.0 - SCORE_EPS)


def _require_non_empty(scores: torch.Tensor, name: str) -> None:
    if scores.numel() == 0:
        raise ValueError(f"{name} is empty")


def _require_same_shape(a: torch.Tensor, b: torch.Tensor, what: str) -> None:
    if a.shape != b.shape:
        raise ValueError(f"{what}: shape {tuple(a.shape)} differs from {tuple(b.shape)}")


def adversarial_loss_d(d_real: torch.Tensor, d_fake: torch.Tensor) -> torch.Tensor:
    """
    Discriminator loss -mean(log d_real) - mean(log(1 - d_fake)).

    Args:
        d_real: Sigmoid scores on real images
        d_fake: Sigmoid scores on generated images

    Returns:
        Scalar loss (2 ln 2 at d_real = d_fake = 0.5)
    """
    _require_non_empty(d_real, "d_real")
    _require_non_empty(d_fake, "d_fake")
    real = _clamp_scores(d_real)
    fake = _clamp_scores(d_fake)
    return -torch.log(real).mean() - torch.log(1.0 - fake).mean()


def adversarial_loss_g(d_fake: torch.Tensor) -> torch.Tensor:
    """Non-saturating generator loss -mean(log d_fake)."""
    _require_non_empty(d_fake, "d_fake")
    return -torch.log(_clamp_scores(d_fake)).mean()


def cycle_loss(
    x_s: torch.Tensor, recon_s: torch.Tensor, x_t: torch.Tensor, recon_t: torch.Tensor
) -> torch.Tensor:
    """Sum of the per-domain mean L1 reconstruction errors."""
    _require_same_shape(x_s, recon_s, "source reconstruction")
    _require_same_shape(x_t, recon_t, "target reconstruction")
    return (recon_s - x_s).abs().mean() + (recon_t - x_t).abs().mean()


def attention_consistency_loss(
    a_src: torch.Tensor,
    a_of_translated_src: torch.Tensor,
    a_tgt: torch.Tensor,
    a_of_translated_tgt: torch.Tensor,
) -> torch.Tensor:
    """
    Attention maps must agree before and after translation.

    Args:
        a_src: A_S(x_s)
        a_of_translated_src: A_T applied to the translation of x_s
        a_tgt: A_T(x_t)
        a_of_translated_tgt: A_S applied to the translation of x_t

    Returns:
        Sum of the two mean L1 differences
    """
    _require_same_shape(a_src, a_of_translated_src, "source attention")
    _require_same_shape(a_tgt, a_of_translated_tgt, "target attention")
    return (a_src - a_of_translated_src).abs().mean() + (a_tgt - a_of_translated_tgt).abs().mean()


def squared_distance(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    """Row-wise squared Euclidean distance of two (N, D) batches."""
    return (a - b).pow(2).sum(dim=1)


def _require_batch(*batches: torch.Tensor) -> None:
    sizes = {b.shape[0] for b in batches}
    if len(sizes) != 1:
        raise ValueError(f"embedding batch sizes differ: {[b.shape[0] for b in batches]}")


def triplet_loss(
    anchor: torch.Tensor,
    positive: torch.Tensor,
    negative: torch.Tensor,
    weights: Optional[LossWeights] = None,
) -> torch.Tensor:
    """
    Triplet loss over (anchor, positive, negative) embeddings.

    canonical: mean(max(0, D(a, p) - D(a, n) + tau1))
    paper_literal: mean(max(D(a, p) - D(a, n), tau1))
    """
    weights = weights or LossWeights()
    _require_batch(anchor, positive, negative)
    diff = squared_distance(anchor, positive) - squared_distance(anchor, negative)
    if weights.margin_form == "paper_literal":
        return torch.clamp(diff, min=weights.margin_tau1).mean()
    return F.relu(diff + weights.margin_tau1).mean()


def quartet_loss(
    x1: torch.Tensor,
    x2: torch.Tensor,
    x3: torch.Tensor,
    x4: torch.Tensor,
    weights: Optional[LossWeights] = None,
) -> torch.Tensor:
    """
    Quartet loss: triplet term plus an inter-class term on the two negatives.

    Args:
        x1: Anchor embeddings
        x2: Positive embeddings (identity of x1)
        x3: First negative embeddings
        x4: Second negative embeddings (identity differs from x1 and x3)
        weights: Margins and margin form

    Returns:
        canonical: mean(max(0, D12 - D13 + tau1) + max(0, D12 - D43 + tau2))
        paper_literal: mean(max(D12 - D13 + D12 - D43, tau1))
    """
    weights = weights or LossWeights()
    _require_batch(x1, x2, x3, x4)
    d12 = squared_distance(x1, x2)
    d13 = squared_distance(x1, x3)
    d43 = squared_distance(x4, x3)
    if weights.margin_form == "paper_literal":
        return torch.clamp((d12 - d13) + (d12 - d43), min=weights.margin_tau1).mean()
    return (F.relu(d12 - d13 + weights.margin_tau1) + F.relu(d12 - d43 + weights.margin_tau2)).mean()


def identity_loss(logits: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
    """
    Mean -log p(true class) under the softmax of the logits.

    Raises:
        ValueError: If a label is outside [0, num_classes)
    """
    num_classes = logits.shape[1]
    if labels.numel() and (labels.min() < 0 or labels.max() >= num_classes):
        raise ValueError(
            f"labels must lie in [0, {num_classes}), got range "
            f"[{int(labels.min())}, {int(labels.max())}]"
        )
    return F.cross_entropy(logits, labels)


def term_weight(term: str, weights: LossWeights) -> float:
    """Coefficient of a loss term in the weighted total."""
    return {
        "gan_s": 1.0,
        "gan_t": 1.0,
        "cycle": weights.lambda_cyc,
        "attn": weights.lambda_attn,
        "quartet": weights.lambda_quartet,
        "triplet": weights.lambda_quartet,
        "id": weights.lambda_id,
    }[term]


def _as_float(value: Scalar) -> float:
    return float(value.detach()) if isinstance(value, torch.Tensor) else float(value)


def check_finite(components: Mapping[str, Optional[Scalar]], step: Optional[int] = None) -> None:
    """
    Raise NumericAbortError naming the first non-finite component.
    """
    for term in LOSS_TERMS:
        value = components.get(term)
        if value is None:
            continue
        number = _as_float(value)
        if not math.isfinite(number):
            logger.error(f"Loss term '{term}' is {number}, aborting")
            raise NumericAbortError(term, number, step)


def weighted_total(components: Mapping[str, Optional[Scalar]], weights: LossWeights) -> Scalar:
    """
    Weighted sum of the present components (tensors keep their graph).

    Raises:
        KeyError: On an unknown term name
    """
    unknown = set(components) - set(LOSS_TERMS)
    if unknown:
        raise KeyError(f"unknown loss terms {sorted(unknown)}")
    total: Scalar = 0.0
    for term in LOSS_TERMS:
        value = components.get(term)
        if value is not None:
            total = total + term_weight(term, weights) * value
    return total


def total_loss(
    components: Mapping[str, Optional[Scalar]],
    weights: Optional[LossWeights] = None,
    step: int = 0,
    epoch: int = 0,
) -> LossReport:
    """
    Combine the loss components into a LossReport.

    total = gan_s + gan_t + lambda_cyc * cycle + lambda_attn * attn
            + lambda_quartet * (quartet or triplet) + lambda_id * id

    `attn` is the sum of both domains' attention terms.

    Args:
        components: Term name -> scalar (tensor or float); absent terms may be None
        weights: Loss weights
        step: Training step recorded in the report
        epoch: Training epoch recorded in the report

    Returns:
        LossReport with float values

    Raises:
        NumericAbortError: If a component is NaN or infinite
    """
    weights = weights or LossWeights()
    check_finite(components, step)
    values = {term: _as_float(v) for term, v in components.items() if v is not None}
    total = weighted_total(values, weights)
    return LossReport(step=step, epoch=epoch, total=float(total), **values)
