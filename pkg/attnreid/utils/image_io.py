"""
Image file helpers: PNG read/write on the [-1, 1] pixel convention and grid export.
"""

import logging
from pathlib import Path
from typing import Optional, Sequence, Tuple, Union

import numpy as np
import torch
from PIL import Image
from torchvision.utils import make_grid

from ..exceptions import DataError

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


def to_uint8(image: np.ndarray) -> np.ndarray:
    """
    Convert a (3, H, W) image in [-1, 1] to an (H, W, 3) uint8 array.

    Args:
        image: Channel-first float image

    Returns:
        Channel-last 8-bit image
    """
    scaled = np.rint((np.asarray(image, dtype=np.float64) + 1.0) * 127.5)
    return np.clip(scaled, 0, 255).astype(np.uint8).transpose(1, 2, 0)


def from_uint8(array: np.ndarray) -> np.ndarray:
    """
    Convert an (H, W, 3) uint8 array to a (3, H, W) float32 image in [-1, 1].

    Args:
        array: Channel-last 8-bit image

    Returns:
        Channel-first float image
    """
    return (array.astype(np.float64) / 127.5 - 1.0).astype(np.float32).transpose(2, 0, 1)


def save_png(image: np.ndarray, path: PathLike) -> None:
    """Write a (3, H, W) [-1, 1] image as an RGB PNG."""
    Image.fromarray(to_uint8(image)).save(path, format="PNG")


def load_png(path: PathLike, size: Optional[Tuple[int, int]] = None) -> np.ndarray:
    """
    Read an image file as a (3, H, W) float32 array in [-1, 1].

    Args:
        path: Image file path
        size: Optional (height, width) to resize to

    Returns:
        Channel-first float image

    Raises:
        DataError: If the file cannot be decoded
    """
    try:
        with Image.open(path) as img:
            img = img.convert("RGB")
            if size is not None and (img.height, img.width) != tuple(size):
                img = img.resize((size[1], size[0]), Image.BILINEAR)
            array = np.asarray(img, dtype=np.uint8)
    except (OSError, ValueError) as e:
        raise DataError(f"Could not read image {path}: {e}") from e
    return from_uint8(array)


def save_mask_png(mask: np.ndarray, path: PathLike) -> None:
    """Write a binary (H, W) mask as a single-channel PNG (0 / 255)."""
    Image.fromarray((np.asarray(mask) > 0.5).astype(np.uint8) * 255).save(
        path, format="PNG"
    )


def load_mask_png(path: PathLike, size: Optional[Tuple[int, int]] = None) -> np.ndarray:
    """
    Read a single-channel mask PNG as a binary float32 (H, W) array.

    Raises:
        DataError: If the file cannot be decoded
    """
    try:
        with Image.open(path) as img:
            img = img.convert("L")
            if size is not None and (img.height, img.width) != tuple(size):
                img = img.resize((size[1], size[0]), Image.NEAREST)
            array = np.asarray(img, dtype=np.uint8)
    except (OSError, ValueError) as e:
        raise DataError(f"Could not read mask {path}: {e}") from e
    return (array >= 128).astype(np.float32)


def mask_to_image(mask: torch.Tensor) -> torch.Tensor:
    """Map a (N, 1, H, W) mask in [0, 1] to a 3-channel image in [-1, 1]."""
    return (mask * 2.0 - 1.0).expand(-1, 3, -1, -1)


def save_tensor_grid(
    images: Sequence[torch.Tensor], path: PathLike, nrow: int, padding: int = 2
) -> None:
    """
    Tile a sequence of (3, H, W) tensors in [-1, 1] into one PNG.

    Args:
        images: Image tensors of identical shape
        path: Output PNG path
        nrow: Number of images per grid row
        padding: Pixels between tiles
    """
    batch = torch.stack([img.detach().cpu().float() for img in images])
    grid = make_grid(batch, nrow=nrow, padding=padding, pad_value=1.0)
    save_png(grid.clamp(-1.0, 1.0).numpy(), path)
    logger.debug(f"Wrote image grid {path} ({len(images)} tiles)")
