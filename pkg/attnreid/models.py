"""
Pydantic models for configuration, labeled data and run results.
"""

from typing import Dict, List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

CONFIG_SCHEMA_VERSION = 1
EMBEDDING_DIM = 128
DOWNSAMPLE_FACTOR = 4

Domain = Literal["source", "target"]
TrainMode = Literal["edaan_end_to_end", "daan_two_stage", "direct_transfer"]
MARGIN_FORM_ALIASES = {"floored": "paper_literal"}


class StrictModel(BaseModel):
    """Base for configuration sections; unknown keys are rejected."""

    model_config = ConfigDict(extra="forbid")


def _validate_image_size(v: Tuple[int, int]) -> Tuple[int, int]:
    height, width = v
    if height <= 0 or width <= 0:
        raise ValueError("image_size must be positive")
    if height % DOWNSAMPLE_FACTOR or width % DOWNSAMPLE_FACTOR:
        raise ValueError(
            f"image_size {height}x{width} must be a multiple of {DOWNSAMPLE_FACTOR} "
            "in both dimensions"
        )
    return v


class BackgroundStyle(StrictModel):
    """Background style of one synthetic domain."""

    hue_range: Tuple[float, float]
    texture: Literal["stripes", "noise", "checker", "gradient"] = "noise"
    brightness: float = 1.0
    saturation: float = 0.6

    @field_validator("hue_range")
    @classmethod
    def validate_hue_range(cls, v):
        """Validate the hue interval lies in [0, 1] and is ordered."""
        low, high = v
        if not (0.0 <= low <= high <= 1.0):
            raise ValueError("hue_range must satisfy 0 <= low <= high <= 1")
        return v

    @field_validator("brightness")
    @classmethod
    def validate_brightness(cls, v):
        """Validate brightness scale is positive."""
        if not (0.0 < v <= 2.0):
            raise ValueError("brightness must be in (0, 2]")
        return v

    @field_validator("saturation")
    @classmethod
    def validate_saturation(cls, v):
        """Validate saturation is a fraction."""
        if not (0.0 <= v <= 1.0):
            raise ValueError("saturation must be in [0, 1]")
        return v


class SyntheticSpec(StrictModel):
    """Parameters of the procedural two-domain re-ID dataset."""

    num_identities: int = 12
    images_per_identity_per_domain: int = 8
    image_size: Tuple[int, int] = (64, 32)
    seed: int = 0
    domain_a_background: BackgroundStyle = Field(
        default_factory=lambda: BackgroundStyle(
            hue_range=(0.55, 0.68), texture="stripes", brightness=1.0
        )
    )
    domain_b_background: BackgroundStyle = Field(
        default_factory=lambda: BackgroundStyle(
            hue_range=(0.02, 0.12), texture="noise", brightness=0.7
        )
    )
    foreground_palette_size: int = 6
    pose_jitter: float = 0.1
    num_cameras: int = 2

    @field_validator("num_identities")
    @classmethod
    def validate_num_identities(cls, v):
        """Quartet sampling needs an anchor identity and two distinct negatives."""
        if v < 3:
            raise ValueError("num_identities must be >= 3 (quartet sampling requires 3 identities)")
        return v

    @field_validator("images_per_identity_per_domain", "num_cameras")
    @classmethod
    def validate_positive(cls, v):
        """Validate counts are positive."""
        if v < 1:
            raise ValueError("must be a positive integer")
        return v

    @field_validator("image_size")
    @classmethod
    def validate_image_size(cls, v):
        """Validate image size is compatible with the network downsampling."""
        return _validate_image_size(v)

    @field_validator("seed")
    @classmethod
    def validate_seed(cls, v):
        """Validate seed fits in 64 bits."""
        if not (0 <= v < 2**64):
            raise ValueError("seed must be a non-negative 64-bit integer")
        return v

    @field_validator("foreground_palette_size")
    @classmethod
    def validate_palette(cls, v):
        """Validate the palette has at least two colors."""
        if v < 2:
            raise ValueError("foreground_palette_size must be >= 2")
        return v

    @field_validator("pose_jitter")
    @classmethod
    def validate_pose_jitter(cls, v):
        """Validate pose jitter is a fraction of the image width."""
        if not (0.0 <= v <= 0.5):
            raise ValueError("pose_jitter must be in [0, 0.5]")
        return v

    @model_validator(mode="after")
    def validate_palette_capacity(self):
        """Every identity needs a distinct (torso, legs) color pair."""
        capacity = self.foreground_palette_size**2
        if self.num_identities > capacity:
            raise ValueError(
                f"num_identities={self.num_identities} exceeds the "
                f"{capacity} distinct color pairs of foreground_palette_size="
                f"{self.foreground_palette_size}"
            )
        return self


class LabeledImage(BaseModel):
    """One image with its identity/camera labels and optional ground-truth mask."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    image: np.ndarray  # (3, H, W) float32 in [-1, 1]
    identity: int
    camera: int
    domain: Domain
    gt_mask: Optional[np.ndarray] = None  # (H, W) float32 in {0, 1}
    path: Optional[str] = None

    @field_validator("identity")
    @classmethod
    def validate_identity(cls, v):
        """Validate identity is non-negative."""
        if v < 0:
            raise ValueError("identity must be non-negative")
        return v

    @field_validator("image")
    @classmethod
    def validate_image(cls, v):
        """Validate the image is channel-first RGB."""
        if v.ndim != 3 or v.shape[0] != 3:
            raise ValueError(f"image must have shape (3, H, W), got {v.shape}")
        return v

    @model_validator(mode="after")
    def validate_mask(self):
        """Mask must match the image spatially and be binary."""
        if self.gt_mask is None:
            return self
        if self.gt_mask.shape != self.image.shape[1:]:
            raise ValueError(
                f"gt_mask shape {self.gt_mask.shape} does not match image "
                f"{self.image.shape[1:]}"
            )
        if not np.isin(self.gt_mask, (0.0, 1.0)).all():
            raise ValueError("gt_mask must be binary")
        return self

    @property
    def image_size(self) -> Tuple[int, int]:
        return self.image.shape[1], self.image.shape[2]


class DatasetSplits(BaseModel):
    """Train/query/gallery partition under the single-query protocol."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    train: List[LabeledImage] = []
    query: List[LabeledImage] = []
    gallery: List[LabeledImage] = []
    excluded_identities: List[int] = []

    @model_validator(mode="after")
    def validate_query_in_gallery(self):
        """Every query identity must be retrievable from the gallery."""
        missing = {q.identity for q in self.query} - {g.identity for g in self.gallery}
        if missing:
            raise ValueError(f"query identities {sorted(missing)} absent from gallery")
        return self

    @property
    def train_identities(self) -> List[int]:
        return sorted({item.identity for item in self.train})

    @property
    def test_identities(self) -> List[int]:
        return sorted({item.identity for item in self.gallery})

    def junk_mask(self) -> np.ndarray:
        """Boolean (num_query, num_gallery) mask of same-identity same-camera entries."""
        q_ids = np.array([q.identity for q in self.query])
        q_cams = np.array([q.camera for q in self.query])
        g_ids = np.array([g.identity for g in self.gallery])
        g_cams = np.array([g.camera for g in self.gallery])
        return (q_ids[:, None] == g_ids[None, :]) & (q_cams[:, None] == g_cams[None, :])


class ProtocolConfig(StrictModel):
    """Identity partition and query selection settings."""

    train_fraction: float = 0.5
    queries_per_identity: int = 1
    seed: int = 0
    query_camera: Optional[int] = None
    gallery_camera: Optional[int] = None
    # both domains label the same people (synthetic data)
    shared_identities: bool = True

    @field_validator("train_fraction")
    @classmethod
    def validate_fraction(cls, v):
        """Validate both partitions can be non-empty."""
        if not (0.0 < v < 1.0):
            raise ValueError("train_fraction must be in (0, 1)")
        return v

    @field_validator("queries_per_identity")
    @classmethod
    def validate_queries(cls, v):
        """Validate at least one query per identity."""
        if v < 1:
            raise ValueError("queries_per_identity must be >= 1")
        return v


class NetworkConfig(StrictModel):
    """Architecture of the per-domain networks and re-ID heads."""

    base_channels: int = 32
    num_residual_blocks: int = 3
    image_size: Tuple[int, int] = (64, 32)
    embedding_dim: int = EMBEDDING_DIM
    num_classes: Optional[int] = None
    dropout_rate: float = 0.5
    normalize_embeddings: bool = True

    @field_validator("base_channels")
    @classmethod
    def validate_base_channels(cls, v):
        """Validate channel width."""
        if v < 8:
            raise ValueError("base_channels must be >= 8")
        return v

    @field_validator("num_residual_blocks")
    @classmethod
    def validate_residual_blocks(cls, v):
        """Validate residual block count."""
        if v < 0:
            raise ValueError("num_residual_blocks must be non-negative")
        return v

    @field_validator("image_size")
    @classmethod
    def validate_image_size(cls, v):
        """Validate image size is compatible with the network downsampling."""
        return _validate_image_size(v)

    @field_validator("embedding_dim")
    @classmethod
    def validate_embedding_dim(cls, v):
        """The embedding layer is fixed at 128 dimensions."""
        if v != EMBEDDING_DIM:
            raise ValueError(f"embedding_dim must be {EMBEDDING_DIM}")
        return v

    @field_validator("num_classes")
    @classmethod
    def validate_num_classes(cls, v):
        """Validate class count when set."""
        if v is not None and v < 1:
            raise ValueError("num_classes must be >= 1")
        return v

    @field_validator("dropout_rate")
    @classmethod
    def validate_dropout(cls, v):
        """Validate dropout is a probability."""
        if not (0.0 <= v < 1.0):
            raise ValueError("dropout_rate must be in [0, 1)")
        return v


class LossWeights(StrictModel):
    """Weights and margins of the joint objective."""

    lambda_attn: float = 10.0
    lambda_quartet: float = 1.0
    lambda_id: float = 1.0
    lambda_cyc: float = 10.0
    margin_tau1: float = 0.3
    margin_tau2: float = 0.15
    margin_form: Literal["canonical", "paper_literal"] = "canonical"

    @field_validator("margin_form", mode="before")
    @classmethod
    def normalize_margin_form(cls, v):
        """Accept "floored" as an alias of the single-hinge form."""
        return MARGIN_FORM_ALIASES.get(v, v) if isinstance(v, str) else v

    @field_validator(
        "lambda_attn", "lambda_quartet", "lambda_id", "lambda_cyc", "margin_tau1", "margin_tau2"
    )
    @classmethod
    def validate_non_negative(cls, v):
        """Validate weights and margins are non-negative."""
        if v < 0:
            raise ValueError("weights and margins must be non-negative")
        return v


class TrainConfig(StrictModel):
    """Optimization schedule, ablation mode and nested network/loss settings."""

    mode: TrainMode = "edaan_end_to_end"
    attention_enabled: bool = True
    epochs: int = 60
    lr: float = 2e-4
    batch_size: int = 16
    decay_start_epoch: Optional[int] = None
    attention_train_epochs: Optional[int] = None
    disc_whole_image_epochs: Optional[int] = None
    stage2_epochs: Optional[int] = None
    seed: int = 0
    beta1: float = 0.5
    beta2: float = 0.999
    metric_loss: Literal["quartet", "triplet"] = "quartet"
    translate_reid_inputs: bool = True
    cycle_input: Literal["raw", "composed"] = "raw"
    disc_input: Literal["composed", "raw"] = "composed"
    checkpoint_interval: int = 10
    sample_interval: int = 10
    num_sample_images: int = 4
    device: str = "cpu"
    weights: LossWeights = Field(default_factory=LossWeights)
    network: NetworkConfig = Field(default_factory=NetworkConfig)

    @field_validator("epochs", "batch_size", "checkpoint_interval", "sample_interval")
    @classmethod
    def validate_positive(cls, v):
        """Validate counts are positive."""
        if v < 1:
            raise ValueError("must be a positive integer")
        return v

    @field_validator("lr")
    @classmethod
    def validate_lr(cls, v):
        """Validate learning rate is positive."""
        if v <= 0:
            raise ValueError("lr must be > 0")
        return v

    @model_validator(mode="after")
    def fill_schedule_defaults(self):
        """Scale the 200-epoch schedule thresholds (100 / 30 / 30) to the configured length."""
        if self.decay_start_epoch is None:
            self.decay_start_epoch = self.epochs // 2
        if self.attention_train_epochs is None:
            self.attention_train_epochs = max(1, round(self.epochs * 30 / 200))
        if self.disc_whole_image_epochs is None:
            self.disc_whole_image_epochs = max(1, round(self.epochs * 30 / 200))
        if self.stage2_epochs is None:
            self.stage2_epochs = self.epochs

        if not (0 < self.attention_train_epochs <= self.epochs):
            raise ValueError("attention_train_epochs must satisfy 0 < value <= epochs")
        if not (0 <= self.decay_start_epoch < self.epochs):
            raise ValueError("decay_start_epoch must satisfy 0 <= value < epochs")
        if not (0 <= self.disc_whole_image_epochs <= self.epochs):
            raise ValueError("disc_whole_image_epochs must satisfy 0 <= value <= epochs")
        if self.stage2_epochs < 1:
            raise ValueError("stage2_epochs must be a positive integer")
        return self


class DatasetConfig(StrictModel):
    """Where the two domains live on disk and how they are labeled."""

    root: str = "data/synthetic"
    source_dir: str = "source"
    target_dir: str = "target"
    layout: Literal["manifest", "filename"] = "manifest"


class EvaluationConfig(StrictModel):
    """Retrieval and attention evaluation settings."""

    ks: List[int] = [1, 5, 10]
    attention_threshold: float = 0.5
    num_ranking_queries: int = 5
    ranking_top_k: int = 10
    domain: Domain = "target"
    batch_size: int = 64

    @field_validator("ks")
    @classmethod
    def validate_ks(cls, v):
        """Validate ranks are positive."""
        if not v or any(k < 1 for k in v):
            raise ValueError("ks must be a non-empty list of positive ranks")
        return sorted(set(v))

    @field_validator("attention_threshold")
    @classmethod
    def validate_threshold(cls, v):
        """Validate threshold is strictly inside (0, 1)."""
        if not (0.0 < v < 1.0):
            raise ValueError("attention_threshold must be in (0, 1)")
        return v


class OutputConfig(StrictModel):
    """Run directory root and results store location."""

    runs_root: str = "runs"
    database_url: Optional[str] = None


class RunConfig(StrictModel):
    """Root configuration consumed by every CLI command."""

    schema_version: int = CONFIG_SCHEMA_VERSION
    name: str = "desk"
    data: SyntheticSpec = Field(default_factory=SyntheticSpec)
    dataset: DatasetConfig = Field(default_factory=DatasetConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)
    protocol: ProtocolConfig = Field(default_factory=ProtocolConfig)
    evaluation: EvaluationConfig = Field(default_factory=EvaluationConfig)
    output: OutputConfig = Field(default_factory=OutputConfig)

    @field_validator("schema_version")
    @classmethod
    def validate_schema_version(cls, v):
        """Validate the config file schema version."""
        if v != CONFIG_SCHEMA_VERSION:
            raise ValueError(
                f"unsupported schema_version {v}, expected {CONFIG_SCHEMA_VERSION}"
            )
        return v

    @model_validator(mode="after")
    def validate_image_sizes(self):
        """Network input size follows the dataset image size."""
        if tuple(self.train.network.image_size) != tuple(self.data.image_size):
            raise ValueError(
                f"train.network.image_size {self.train.network.image_size} differs from "
                f"data.image_size {self.data.image_size}"
            )
        return self


LOSS_TERMS = ("gan_s", "gan_t", "cycle", "attn", "quartet", "triplet", "id")


class LossReport(BaseModel):
    """Named loss values of one training step plus the weighted total."""

    step: int = 0
    epoch: int = 0
    gan_s: Optional[float] = None
    gan_t: Optional[float] = None
    cycle: Optional[float] = None
    attn: Optional[float] = None
    quartet: Optional[float] = None
    triplet: Optional[float] = None
    id: Optional[float] = None
    total: float = 0.0

    def components(self) -> Dict[str, float]:
        """Return the terms present in this report."""
        return {
            term: getattr(self, term) for term in LOSS_TERMS if getattr(self, term) is not None
        }

    def csv_columns(self) -> List[str]:
        return ["step", "epoch", *self.components().keys(), "total"]

    def csv_row(self) -> Dict[str, float]:
        return {"step": self.step, "epoch": self.epoch, **self.components(), "total": self.total}


class LoadResult(BaseModel):
    """Model for dataset loading operation results."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    success: bool
    message: str
    items_processed: int
    skipped: int = 0
    errors: List[str] = []
    images: List[LabeledImage] = []


class MetricRecord(BaseModel):
    """One row of the metrics CSV."""

    metric: str
    k: Optional[int] = None
    value: float

    @property
    def label(self) -> str:
        return f"{self.metric}@{self.k}" if self.k is not None else self.metric


class RunRecord(BaseModel):
    """Identifying facts of an evaluated run, as stored in the results database."""

    run_id: str
    name: str
    mode: TrainMode
    attention_enabled: bool
    metric_loss: str = "quartet"
    seed: int = 0
    checkpoint: str
    evaluation_domain: Domain = "target"

    @field_validator("run_id")
    @classmethod
    def validate_run_id(cls, v):
        """Validate run ID is not empty."""
        if not v.strip():
            raise ValueError("run_id cannot be empty")
        return v


class EvaluationReport(BaseModel):
    """Model for evaluation results."""

    records: List[MetricRecord] = []
    num_queries: int = 0
    num_valid_queries: int = 0
    num_gallery: int = 0

    def as_dict(self) -> Dict[str, float]:
        return {record.label: record.value for record in self.records}
