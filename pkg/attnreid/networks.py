"""
Per-domain networks (encoder E, decoder G, discriminator D, attention A) and the
re-ID heads attached to the source-domain encoder.
"""

import logging
from typing import Iterator, Optional, Tuple

import torch
import torch.nn as nn
import torch.nn.functional as F

from .models import DOWNSAMPLE_FACTOR, NetworkConfig

logger = logging.getLogger(__name__)

INIT_STD = 0.02


def init_weights(module: nn.Module) -> None:
    """Zero-mean Gaussian (std 0.02) weights, zero biases; norm scales around 1."""
    if isinstance(module, (nn.Conv2d, nn.ConvTranspose2d, nn.Linear)):
        nn.init.normal_(module.weight, 0.0, INIT_STD)
        if module.bias is not None:
            nn.init.zeros_(module.bias)
    elif isinstance(module, nn.BatchNorm1d):
        nn.init.normal_(module.weight, 1.0, INIT_STD)
        nn.init.zeros_(module.bias)


class ResidualBlock(nn.Module):
    """Two 3x3 convolutions with instance normalization and a skip connection."""

    def __init__(self, channels: int):
        super().__init__()
        self.block = nn.Sequential(
            nn.Conv2d(channels, channels, kernel_size=3, padding=1, padding_mode="reflect"),
            nn.InstanceNorm2d(channels),
            nn.ReLU(inplace=True),
            nn.Conv2d(channels, channels, kernel_size=3, padding=1, padding_mode="reflect"),
            nn.InstanceNorm2d(channels),
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return x + self.block(x)


class Encoder(nn.Module):
    """7x7 stem, two stride-2 downsamples, residual blocks. Output is input/4 spatially."""

    def __init__(self, base_channels: int, num_residual_blocks: int, in_channels: int = 3):
        super().__init__()
        layers = [
            nn.Conv2d(in_channels, base_channels, kernel_size=7, padding=3, padding_mode="reflect"),
            nn.InstanceNorm2d(base_channels),
            nn.ReLU(inplace=True),
        ]
        channels = base_channels
        for _ in range(2):
            layers += [
                nn.Conv2d(channels, channels * 2, kernel_size=3, stride=2, padding=1),
                nn.InstanceNorm2d(channels * 2),
                nn.ReLU(inplace=True),
            ]
            channels *= 2
        layers += [ResidualBlock(channels) for _ in range(num_residual_blocks)]
        self.layers = nn.Sequential(*layers)
        self.out_channels = channels

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.layers(x)


class Decoder(nn.Module):
    """Two stride-2 transposed convolutions and a 7x7 output convolution."""

    def __init__(self, base_channels: int, out_channels: int = 3, activation: str = "tanh"):
        super().__init__()
        channels = base_channels * 4
        layers = []
        for _ in range(2):
            layers += [
                nn.ConvTranspose2d(
                    channels, channels // 2, kernel_size=3, stride=2, padding=1, output_padding=1
                ),
                nn.InstanceNorm2d(channels // 2),
                nn.ReLU(inplace=True),
            ]
            channels //= 2
        layers.append(
            nn.Conv2d(channels, out_channels, kernel_size=7, padding=3, padding_mode="reflect")
        )
        layers.append(nn.Tanh() if activation == "tanh" else nn.Sigmoid())
        self.layers = nn.Sequential(*layers)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.layers(x)


class Discriminator(nn.Module):
    """Patch-level discriminator: three stride-2 convolutions to a 1-channel logit map."""

    def __init__(self, base_channels: int, in_channels: int = 3):
        super().__init__()
        c = base_channels
        self.layers = nn.Sequential(
            nn.Conv2d(in_channels, c, kernel_size=4, stride=2, padding=1),
            nn.LeakyReLU(0.2, inplace=True),
            nn.Conv2d(c, c * 2, kernel_size=4, stride=2, padding=1),
            nn.InstanceNorm2d(c * 2),
            nn.LeakyReLU(0.2, inplace=True),
            nn.Conv2d(c * 2, c * 4, kernel_size=4, stride=2, padding=1),
            nn.InstanceNorm2d(c * 4),
            nn.LeakyReLU(0.2, inplace=True),
            nn.Conv2d(c * 4, 1, kernel_size=3, padding=1),
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.layers(x)

    def scores(self, x: torch.Tensor) -> torch.Tensor:
        """Per-patch probabilities that x is real."""
        return torch.sigmoid(self.forward(x))


class AttentionNet(nn.Module):
    """Encoder-decoder producing a single-channel foreground map in [0, 1]."""

    def __init__(self, base_channels: int, image_size: Tuple[int, int]):
        super().__init__()
        self.image_size = tuple(image_size)
        self.encoder = Encoder(base_channels, num_residual_blocks=0)
        self.decoder = Decoder(base_channels, out_channels=1, activation="sigmoid")

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.decoder(self.encoder(x))


class EmbeddingHead(nn.Module):
    """Global pooling of the encoder feature map and a 128-dim fully connected layer."""

    def __init__(self, in_channels: int, embedding_dim: int):
        super().__init__()
        self.fc = nn.Linear(in_channels, embedding_dim)

    def forward(self, features: torch.Tensor) -> torch.Tensor:
        return self.fc(F.adaptive_avg_pool2d(features, 1).flatten(1))


class ClassifierHead(nn.Module):
    """FC(128) -> BatchNorm -> Dropout -> ReLU -> FC(num_classes) on pooled features."""

    def __init__(self, in_channels: int, num_classes: int, dropout_rate: float, hidden: int = 128):
        super().__init__()
        self.layers = nn.Sequential(
            nn.Linear(in_channels, hidden),
            nn.BatchNorm1d(hidden),
            nn.Dropout(dropout_rate),
            nn.ReLU(inplace=True),
            nn.Linear(hidden, num_classes),
        )

    def forward(self, features: torch.Tensor) -> torch.Tensor:
        return self.layers(F.adaptive_avg_pool2d(features, 1).flatten(1))


class DomainNetworks(nn.Module):
    """E, G, D and A of one domain."""

    def __init__(
        self,
        encoder: nn.Module,
        decoder: nn.Module,
        discriminator: nn.Module,
        attention: nn.Module,
    ):
        super().__init__()
        self.encoder = encoder
        self.decoder = decoder
        self.discriminator = discriminator
        self.attention = attention

    def generate(self, x: torch.Tensor) -> torch.Tensor:
        """Raw translation G(E(x)) into the other domain."""
        return self.decoder(self.encoder(x))


class DomainModelSet(nn.Module):
    """
    Both domains' networks plus the re-ID heads bound to the source encoder.

    State-dict keys are prefixed by network name, e.g. "source.encoder.layers.0.weight".
    """

    def __init__(
        self,
        source: DomainNetworks,
        target: DomainNetworks,
        embedding_head: nn.Module,
        classifier_head: Optional[nn.Module],
        config: Optional[NetworkConfig] = None,
    ):
        super().__init__()
        self.source = source
        self.target = target
        self.embedding_head = embedding_head
        self.classifier_head = classifier_head
        self.config = config

    @property
    def normalize_embeddings(self) -> bool:
        return self.config.normalize_embeddings if self.config is not None else True

    def domain(self, name: str) -> DomainNetworks:
        if name not in ("source", "target"):
            raise ValueError(f"unknown domain '{name}'")
        return self.source if name == "source" else self.target

    def attention_parameters(self) -> Iterator[nn.Parameter]:
        yield from self.source.attention.parameters()
        yield from self.target.attention.parameters()

    def discriminator_parameters(self) -> Iterator[nn.Parameter]:
        yield from self.source.discriminator.parameters()
        yield from self.target.discriminator.parameters()

    def generator_parameters(self) -> Iterator[nn.Parameter]:
        """Encoders and decoders of both domains."""
        for networks in (self.source, self.target):
            yield from networks.encoder.parameters()
            yield from networks.decoder.parameters()

    def reid_parameters(self) -> Iterator[nn.Parameter]:
        """Source encoder plus both heads."""
        yield from self.source.encoder.parameters()
        yield from self.embedding_head.parameters()
        if self.classifier_head is not None:
            yield from self.classifier_head.parameters()

    def embed(self, images: torch.Tensor) -> torch.Tensor:
        return embed(
            self.source.encoder, self.embedding_head, images, normalize=self.normalize_embeddings
        )

    def classify(self, images: torch.Tensor) -> torch.Tensor:
        if self.classifier_head is None:
            raise ValueError("model set has no classifier head")
        return classify(self.source.encoder, self.classifier_head, images)

    def reid_outputs(self, images: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
        """Embeddings and identity logits from one encoder pass."""
        if self.classifier_head is None:
            raise ValueError("model set has no classifier head")
        features = self.source.encoder(images)
        vectors = self.embedding_head(features)
        if self.normalize_embeddings:
            vectors = F.normalize(vectors, p=2, dim=1)
        return vectors, self.classifier_head(features)


def _build_domain(config: NetworkConfig) -> DomainNetworks:
    c = config.base_channels
    return DomainNetworks(
        encoder=Encoder(c, config.num_residual_blocks),
        decoder=Decoder(c, out_channels=3, activation="tanh"),
        discriminator=Discriminator(c),
        attention=AttentionNet(c, config.image_size),
    )


def build_domain_models(config: NetworkConfig, seed: int = 0) -> DomainModelSet:
    """
    Construct E, G, D, A for both domains and the shared re-ID heads.

    Parameters are drawn from N(0, 0.02) under a forked RNG seeded with `seed`,
    so the global torch RNG is left untouched.

    Args:
        config: Network architecture settings (num_classes must be set)
        seed: Initialization seed

    Returns:
        DomainModelSet in training mode

    Raises:
        ValueError: On image sizes incompatible with the downsampling or missing num_classes
    """
    height, width = config.image_size
    if height % DOWNSAMPLE_FACTOR or width % DOWNSAMPLE_FACTOR:
        raise ValueError(
            f"image size {height}x{width} is not divisible by the downsampling "
            f"factor {DOWNSAMPLE_FACTOR}"
        )
    if config.num_classes is None:
        raise ValueError("num_classes must be set to the number of training identities")

    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        source = _build_domain(config)
        target = _build_domain(config)
        feature_channels = source.encoder.out_channels
        models = DomainModelSet(
            source=source,
            target=target,
            embedding_head=EmbeddingHead(feature_channels, config.embedding_dim),
            classifier_head=ClassifierHead(
                feature_channels, config.num_classes, config.dropout_rate
            ),
            config=config,
        )
        models.apply(init_weights)

    n_params = sum(p.numel() for p in models.parameters())
    logger.debug(f"Built domain models with {n_params} parameters (seed {seed})")
    return models


def check_image_shape(image: torch.Tensor, image_size: Tuple[int, int]) -> None:
    """Raise ValueError unless image is (N, 3, H, W) with the configured H, W."""
    if image.dim() != 4 or image.shape[1] != 3 or tuple(image.shape[-2:]) != tuple(image_size):
        raise ValueError(
            f"expected image batch of shape (N, 3, {image_size[0]}, {image_size[1]}), "
            f"got {tuple(image.shape)}"
        )


def forward_attention(attention: nn.Module, image: torch.Tensor) -> torch.Tensor:
    """
    Foreground attention map A(x).

    Args:
        attention: Attention network
        image: (N, 3, H, W) batch

    Returns:
        (N, 1, H, W) map with values in [0, 1]; its complement 1 - A(x) is the background
    """
    image_size = getattr(attention, "image_size", None)
    if image_size is not None:
        check_image_shape(image, image_size)
    return attention(image)


def embed(
    encoder: nn.Module, embedding_head: nn.Module, image: torch.Tensor, normalize: bool = True
) -> torch.Tensor:
    """
    128-dim embedding read from the encoder feature map.

    Args:
        encoder: Backbone encoder (source-domain encoder)
        embedding_head: Embedding head
        image: (N, 3, H, W) batch
        normalize: L2-normalize each embedding

    Returns:
        (N, 128) embeddings
    """
    vectors = embedding_head(encoder(image))
    if normalize:
        vectors = F.normalize(vectors, p=2, dim=1)
    return vectors


def classify(encoder: nn.Module, classifier_head: nn.Module, image: torch.Tensor) -> torch.Tensor:
    """Identity logits (N, num_classes); softmax gives p(x)."""
    return classifier_head(encoder(image))
