"""
Attention-guided composition of translated images and cycle reconstruction.

For a source image x the final mapping is

    composed = (1 - A_S(x)) * G_S(E_S(x)) + A_S(x) * x

so the attended foreground is copied from the input and only the background
is restyled. The target side mirrors this with A_T, G_T, E_T.
"""

import logging
from dataclasses import dataclass
from typing import Literal, Optional

import torch

from .networks import DomainModelSet, DomainNetworks, forward_attention

logger = logging.getLogger(__name__)

Direction = Literal["s2t2s", "t2s2t"]


@dataclass
class TranslationOutput:
    """Intermediate and final images of one translation."""

    raw_translation: torch.Tensor
    foreground_mask: torch.Tensor
    background_composite: torch.Tensor
    foreground_composite: torch.Tensor
    composed: torch.Tensor


def compose(mask: torch.Tensor, image: torch.Tensor, translation: torch.Tensor) -> TranslationOutput:
    """
    Blend an input image and its raw translation under a foreground mask.

    Args:
        mask: (N, 1, H, W) or (N, 3, H, W) foreground map in [0, 1]
        image: (N, 3, H, W) input image
        translation: (N, 3, H, W) raw generator output

    Returns:
        TranslationOutput where composed == background_composite + foreground_composite

    Raises:
        ValueError: If the shapes are inconsistent
    """
    if image.shape != translation.shape:
        raise ValueError(
            f"translation shape {tuple(translation.shape)} differs from image "
            f"shape {tuple(image.shape)}"
        )
    if (
        mask.dim() != image.dim()
        or mask.shape[0] != image.shape[0]
        or mask.shape[1] not in (1, image.shape[1])
        or mask.shape[2:] != image.shape[2:]
    ):
        raise ValueError(
            f"mask shape {tuple(mask.shape)} incompatible with image shape {tuple(image.shape)}"
        )

    background = (1 - mask) * translation
    foreground = mask * image
    return TranslationOutput(
        raw_translation=translation,
        foreground_mask=mask,
        background_composite=background,
        foreground_composite=foreground,
        composed=background + foreground,
    )


def _translate(
    networks: DomainNetworks, x: torch.Tensor, attention_enabled: bool
) -> TranslationOutput:
    raw = networks.generate(x)
    if attention_enabled:
        mask = forward_attention(networks.attention, x)
    else:
        mask = torch.zeros_like(x[:, :1])
    return compose(mask, x, raw)


def translate_s2t(
    models: DomainModelSet, x: torch.Tensor, attention_enabled: bool = True
) -> TranslationOutput:
    """
    Map source images into the target style, keeping the attended foreground.

    With attention disabled the mask is identically 0 and composed is the raw translation.
    """
    return _translate(models.source, x, attention_enabled)


def translate_t2s(
    models: DomainModelSet, x: torch.Tensor, attention_enabled: bool = True
) -> TranslationOutput:
    """Mirror of translate_s2t using the target-side networks."""
    return _translate(models.target, x, attention_enabled)


def cycle_reconstruct(
    models: DomainModelSet,
    x: torch.Tensor,
    direction: Direction,
    cycle_input: str = "raw",
    attention_enabled: bool = True,
    forward: Optional[TranslationOutput] = None,
) -> torch.Tensor:
    """
    Translate into the other domain and back.

    Args:
        models: Domain networks
        x: Images of the starting domain
        direction: "s2t2s" for source images, "t2s2t" for target images
        cycle_input: "raw" chains the raw generator outputs G(E(G(E(x)))); "composed"
            chains the attention-composed outputs instead
        attention_enabled: Use the attention masks when cycle_input is "composed"
        forward: Already computed first translation of x, reused instead of recomputed

    Returns:
        Reconstruction with the shape of x
    """
    if direction not in ("s2t2s", "t2s2t"):
        raise ValueError(f"unknown cycle direction '{direction}'")
    if cycle_input not in ("raw", "composed"):
        raise ValueError(f"unknown cycle input '{cycle_input}'")
    first, second = (
        (models.source, models.target) if direction == "s2t2s" else (models.target, models.source)
    )
    if forward is None:
        forward = _translate(first, x, attention_enabled)

    if cycle_input == "composed":
        return _translate(second, forward.composed, attention_enabled).composed
    return second.generate(forward.raw_translation)
