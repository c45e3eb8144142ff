"""
Procedural two-domain person re-ID dataset with ground-truth foreground masks.

Each identity is a two-block "torso + legs" silhouette with a fixed color pair.
Domains differ only in background hue, texture and brightness, so the
foreground of an identity is pixel-identical across domains for the same pose.
"""

import logging
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np
from PIL import Image

from ..models import BackgroundStyle, Domain, LabeledImage, SyntheticSpec
from ..utils.image_io import from_uint8

logger = logging.getLogger(__name__)

DOMAIN_INDEX = {"source": 0, "target": 1}

# vertical layout as fractions of image height
TORSO_TOP = 0.15


@dataclass(frozen=True)
class IdentityParams:
    """Persistent appearance of one synthetic identity."""

    identity: int
    torso_color: Tuple[int, int, int]
    legs_color: Tuple[int, int, int]
    torso_width: float
    torso_height: float
    legs_width: float
    legs_height: float


@dataclass(frozen=True)
class DomainParams:
    """Background style of a domain plus its index for seeding."""

    style: BackgroundStyle
    domain: Domain = "source"

    @property
    def index(self) -> int:
        return DOMAIN_INDEX[self.domain]


def build_palette(size: int) -> np.ndarray:
    """
    Build a deterministic palette of saturated, well separated colors.

    Args:
        size: Number of colors

    Returns:
        (size, 3) uint8 RGB array
    """
    hsv = np.zeros((1, size, 3), dtype=np.uint8)
    hsv[0, :, 0] = np.round(np.arange(size) / size * 255).astype(np.uint8)
    hsv[0, :, 1] = 230
    # alternate brightness so neighbouring hues stay distinguishable
    hsv[0, :, 2] = np.where(np.arange(size) % 2 == 0, 245, 150)
    rgb = Image.frombytes("HSV", (size, 1), hsv.tobytes()).convert("RGB")
    return np.asarray(rgb, dtype=np.uint8)[0]


def pose_seed_for(seed: int, identity: int, index: int) -> int:
    """Derive the pose seed shared by both domains for one image slot."""
    state = np.random.SeedSequence([seed, 2, identity, index]).generate_state(1, np.uint64)
    return int(state[0])


def identity_table(spec: SyntheticSpec) -> List[IdentityParams]:
    """
    Assign every identity a distinct (torso, legs) color pair and body proportions.

    Args:
        spec: Synthetic dataset parameters

    Returns:
        One IdentityParams per identity, indexed by identity label
    """
    palette = build_palette(spec.foreground_palette_size)
    size = spec.foreground_palette_size
    pairs = [(t, l) for t in range(size) for l in range(size)]
    order = np.random.default_rng([spec.seed, 0]).permutation(len(pairs))

    table = []
    for identity in range(spec.num_identities):
        torso_idx, legs_idx = pairs[order[identity]]
        rng = np.random.default_rng([spec.seed, 1, identity])
        table.append(
            IdentityParams(
                identity=identity,
                torso_color=tuple(int(c) for c in palette[torso_idx]),
                legs_color=tuple(int(c) for c in palette[legs_idx]),
                torso_width=float(rng.uniform(0.45, 0.6)),
                torso_height=float(rng.uniform(0.32, 0.38)),
                legs_width=float(rng.uniform(0.3, 0.4)),
                legs_height=float(rng.uniform(0.3, 0.38)),
            )
        )
    return table


def _texture(kind: str, height: int, width: int, rng: np.random.Generator) -> np.ndarray:
    """Texture field in [0, 1] of shape (height, width)."""
    ys, xs = np.mgrid[0:height, 0:width].astype(np.float64)
    if kind == "stripes":
        theta = rng.uniform(0.0, np.pi)
        period = rng.uniform(4.0, 10.0)
        phase = rng.uniform(0.0, 2 * np.pi)
        field = np.sin(2 * np.pi * (ys * np.cos(theta) + xs * np.sin(theta)) / period + phase)
        return 0.5 + 0.5 * field
    if kind == "checker":
        cell = int(rng.integers(4, 9))
        offset = int(rng.integers(0, cell))
        return (((ys + offset) // cell + (xs + offset) // cell) % 2).astype(np.float64)
    if kind == "gradient":
        theta = rng.uniform(0.0, 2 * np.pi)
        ramp = ys / max(height - 1, 1) * np.cos(theta) + xs / max(width - 1, 1) * np.sin(theta)
        return (ramp - ramp.min()) / max(ramp.max() - ramp.min(), 1e-12)
    # smooth blobs plus fine grain
    coarse = rng.uniform(0.0, 1.0, size=(height // 4 + 1, width // 4 + 1))
    smooth = np.kron(coarse, np.ones((4, 4)))[:height, :width]
    return np.clip(0.8 * smooth + 0.2 * rng.uniform(0.0, 1.0, size=(height, width)), 0.0, 1.0)


def render_background(
    domain_params: DomainParams, image_size: Tuple[int, int], rng: np.random.Generator
) -> np.ndarray:
    """
    Render a domain-styled background.

    Returns:
        (H, W, 3) uint8 RGB array
    """
    height, width = image_size
    style = domain_params.style
    hue = rng.uniform(*style.hue_range)
    texture = _texture(style.texture, height, width, rng)

    hsv = np.empty((height, width, 3), dtype=np.float64)
    hsv[..., 0] = (hue + 0.04 * (texture - 0.5)) % 1.0
    hsv[..., 1] = style.saturation
    hsv[..., 2] = np.clip((0.45 + 0.4 * texture) * style.brightness, 0.0, 1.0)
    hsv8 = np.round(hsv * 255).astype(np.uint8)
    rgb = Image.frombytes("HSV", (width, height), hsv8.tobytes()).convert("RGB")
    return np.asarray(rgb, dtype=np.uint8).copy()


def _box(center_x: float, top: float, box_width: float, box_height: float, height, width):
    """Integer box clamped to the frame: (y0, y1, x0, x1)."""
    x0 = int(round(center_x - box_width / 2))
    x1 = int(round(center_x + box_width / 2))
    y0 = int(round(top))
    y1 = int(round(top + box_height))
    return (
        min(max(y0, 0), height),
        min(max(y1, 0), height),
        min(max(x0, 0), width),
        min(max(x1, 0), width),
    )


def render_identity(
    identity_params: IdentityParams,
    domain_params: DomainParams,
    pose_seed: int,
    image_size: Tuple[int, int] = (64, 32),
    pose_jitter: float = 0.1,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Render one identity in one domain.

    The silhouette position depends only on pose_seed, the background on
    (pose_seed, domain). Silhouettes pushed out of frame by jitter are clamped.

    Args:
        identity_params: Persistent appearance of the identity
        domain_params: Background style of the domain
        pose_seed: Seed of the pose jitter (shared across domains)
        image_size: (height, width) in pixels
        pose_jitter: Maximum shift as a fraction of the image width

    Returns:
        (image, gt_mask): (3, H, W) float32 in [-1, 1] and (H, W) float32 in {0, 1}
    """
    height, width = image_size
    pose_rng = np.random.default_rng([pose_seed, 0])
    shift = pose_jitter * width
    dx = pose_rng.uniform(-shift, shift)
    dy = pose_rng.uniform(-shift / 2, shift / 2)

    background_rng = np.random.default_rng([pose_seed, 1, domain_params.index])
    canvas = render_background(domain_params, image_size, background_rng)
    mask = np.zeros((height, width), dtype=np.float32)

    center_x = width / 2 + dx
    torso_top = TORSO_TOP * height + dy
    torso_h = identity_params.torso_height * height
    blocks = (
        (torso_top, identity_params.torso_width, identity_params.torso_height,
         identity_params.torso_color),
        (torso_top + torso_h, identity_params.legs_width, identity_params.legs_height,
         identity_params.legs_color),
    )
    for top, frac_w, frac_h, color in blocks:
        y0, y1, x0, x1 = _box(center_x, top, frac_w * width, frac_h * height, height, width)
        canvas[y0:y1, x0:x1] = color
        mask[y0:y1, x0:x1] = 1.0

    return from_uint8(canvas), mask


def generate_synthetic_dataset(
    spec: SyntheticSpec,
) -> Tuple[List[LabeledImage], List[LabeledImage]]:
    """
    Generate the labeled source and target domains.

    Identities, cameras and pixels are fully determined by spec.seed. Image slot j
    of identity i uses the same pose in both domains and camera j mod num_cameras.

    Args:
        spec: Validated synthetic dataset parameters

    Returns:
        (source, target) lists ordered by identity then image slot
    """
    logger.info(
        f"Generating synthetic dataset: {spec.num_identities} identities x "
        f"{spec.images_per_identity_per_domain} images per domain, seed {spec.seed}"
    )
    table = identity_table(spec)
    domains = {
        "source": DomainParams(style=spec.domain_a_background, domain="source"),
        "target": DomainParams(style=spec.domain_b_background, domain="target"),
    }
    output = {"source": [], "target": []}

    for params in table:
        for index in range(spec.images_per_identity_per_domain):
            pose_seed = pose_seed_for(spec.seed, params.identity, index)
            camera = index % spec.num_cameras
            for name, domain_params in domains.items():
                image, mask = render_identity(
                    params, domain_params, pose_seed, tuple(spec.image_size), spec.pose_jitter
                )
                output[name].append(
                    LabeledImage(
                        image=image,
                        identity=params.identity,
                        camera=camera,
                        domain=name,
                        gt_mask=mask,
                    )
                )

    logger.info(
        f"Generated {len(output['source'])} source and {len(output['target'])} target images"
    )
    return output["source"], output["target"]
