"""
Alternating discriminator/generator training for the three modes:

- edaan_end_to_end: translation and re-ID trained jointly through the shared source encoder
- daan_two_stage: translation first, then a fresh re-ID network on real + translated images
- direct_transfer: re-ID on labeled source images only
"""

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
import torch

from ..exceptions import DataError, NumericAbortError
from ..losses import (
    adversarial_loss_d,
    adversarial_loss_g,
    attention_consistency_loss,
    check_finite,
    cycle_loss,
    identity_loss,
    quartet_loss,
    total_loss,
    triplet_loss,
    weighted_total,
)
from ..models import LabeledImage, LossReport, RunConfig, TrainConfig
from ..networks import DomainModelSet, build_domain_models, forward_attention
from ..sampler import DomainPairSampler, QuartetBatch, QuartetSampler, class_index_map, stack_images
from ..translate import cycle_reconstruct, translate_s2t, translate_t2s
from ..evaluation.export import save_translation_grid
from ..utils.config_loader import dump_run_config
from .checkpoint import load_checkpoint, resolve_translator_path, save_checkpoint
from .state import (
    PHASE_FOR_MODE,
    Phase,
    TrainerState,
    build_optimizers,
    phase_train_config,
    set_requires_grad,
)

logger = logging.getLogger(__name__)

DiscriminatorInputHook = Callable[[str, torch.Tensor, torch.Tensor], None]

SNAPSHOT_NAME = "config.snapshot.yaml"
LOSSES_NAME = "losses.csv"
FINAL_CHECKPOINT = "ckpt_final.pt"
STAGE1_DIR = "stage1_translation"
STAGE2_DIR = "stage2_reid"


def lr_schedule(epoch: int, config: TrainConfig) -> float:
    """
    Constant learning rate until decay_start_epoch, then linear decay to 0 at `epochs`.

    Args:
        epoch: Zero-based epoch; `epochs` itself is accepted as the decay endpoint
        config: Training schedule

    Returns:
        Learning rate for the epoch

    Raises:
        ValueError: If epoch is outside [0, epochs]
    """
    if not (0 <= epoch <= config.epochs):
        raise ValueError(f"epoch {epoch} outside [0, {config.epochs}]")
    start = config.decay_start_epoch
    if epoch < start:
        return config.lr
    return config.lr * (1.0 - (epoch - start) / (config.epochs - start))


@dataclass
class PhaseFlags:
    attention_frozen: bool
    disc_masked: bool


def apply_phase_schedule(state: TrainerState, epoch: int) -> PhaseFlags:
    """
    Update the freeze/masking flags for an epoch.

    From attention_train_epochs on the attention networks stop receiving updates;
    from disc_whole_image_epochs on the discriminators see background-masked real images.
    """
    train = state.train_config
    state.attention_frozen = epoch >= train.attention_train_epochs
    state.disc_masked = epoch >= train.disc_whole_image_epochs
    set_requires_grad(
        (state.models.source.attention, state.models.target.attention),
        not state.attention_frozen,
    )
    return PhaseFlags(state.attention_frozen, state.disc_masked)


def _metric_term(embeddings: torch.Tensor, train: TrainConfig) -> torch.Tensor:
    x1, x2, x3, x4 = embeddings.chunk(4)
    if train.metric_loss == "triplet":
        return triplet_loss(x1, x2, x3, train.weights)
    return quartet_loss(x1, x2, x3, x4, train.weights)


def _reid_terms(
    models: DomainModelSet, images: torch.Tensor, labels: torch.Tensor, train: TrainConfig
) -> Tuple[torch.Tensor, torch.Tensor]:
    embeddings, logits = models.reid_outputs(images)
    return _metric_term(embeddings, train), identity_loss(logits, labels)


def _translation_terms(
    state: TrainerState,
    domain_batch: Tuple[torch.Tensor, torch.Tensor],
    hook: Optional[DiscriminatorInputHook],
) -> Dict[str, torch.Tensor]:
    """Discriminator update, then the generator-side translation terms (not yet stepped)."""
    models = state.models
    train = state.train_config
    attention = train.attention_enabled
    x_s, x_t = domain_batch

    s2t = translate_s2t(models, x_s, attention)
    t2s = translate_t2s(models, x_t, attention)
    if train.disc_input == "composed":
        fake_t, fake_s = s2t.composed, t2s.composed
    else:
        fake_t, fake_s = s2t.raw_translation, t2s.raw_translation

    real_s, real_t = x_s, x_t
    if state.disc_masked and attention:
        real_s = (1 - s2t.foreground_mask.detach()) * x_s
        real_t = (1 - t2s.foreground_mask.detach()) * x_t
    if hook is not None:
        hook("source", real_s, fake_s.detach())
        hook("target", real_t, fake_t.detach())

    discriminators = (models.source.discriminator, models.target.discriminator)
    set_requires_grad(discriminators, True)
    opt_d = state.optimizers["discriminator"]
    opt_d.zero_grad(set_to_none=True)
    loss_d = adversarial_loss_d(
        models.source.discriminator.scores(real_s), models.source.discriminator.scores(fake_s.detach())
    ) + adversarial_loss_d(
        models.target.discriminator.scores(real_t), models.target.discriminator.scores(fake_t.detach())
    )
    if not torch.isfinite(loss_d):
        raise NumericAbortError("discriminator", float(loss_d), state.step)
    loss_d.backward()
    opt_d.step()

    set_requires_grad(discriminators, False)
    terms = {
        "gan_s": adversarial_loss_g(models.target.discriminator.scores(fake_t)),
        "gan_t": adversarial_loss_g(models.source.discriminator.scores(fake_s)),
    }
    recon_s = cycle_reconstruct(models, x_s, "s2t2s", train.cycle_input, attention, forward=s2t)
    recon_t = cycle_reconstruct(models, x_t, "t2s2t", train.cycle_input, attention, forward=t2s)
    terms["cycle"] = cycle_loss(x_s, recon_s, x_t, recon_t)

    if attention:
        terms["attn"] = attention_consistency_loss(
            s2t.foreground_mask,
            forward_attention(models.target.attention, s2t.composed),
            t2s.foreground_mask,
            forward_attention(models.source.attention, t2s.composed),
        )
    return terms


def training_step(
    state: TrainerState,
    quartet_batch: Optional[QuartetBatch],
    domain_batch: Optional[Tuple[torch.Tensor, torch.Tensor]],
    discriminator_input_hook: Optional[DiscriminatorInputHook] = None,
) -> LossReport:
    """
    One alternating update of the current phase.

    Discriminators step first on detached fakes, then encoders, decoders, heads and
    (while unfrozen) attention networks step on the weighted objective.

    Args:
        state: Trainer state (mutated: parameters, optimizer moments, step counter)
        quartet_batch: Labeled quartets for the re-ID terms (unused in the translation phase)
        domain_batch: Unpaired (source, target) images (unused in the re-ID phase)
        discriminator_input_hook: Called with (domain, real, fake) discriminator inputs

    Returns:
        LossReport of the step

    Raises:
        NumericAbortError: A loss term is NaN or infinite
    """
    train = state.train_config
    models = state.models
    components: Dict[str, torch.Tensor] = {}

    if state.trains_translation:
        if domain_batch is None:
            raise ValueError(f"phase '{state.phase}' needs a domain batch")
        components.update(_translation_terms(state, domain_batch, discriminator_input_hook))

    if state.trains_reid:
        if quartet_batch is None:
            raise ValueError(f"phase '{state.phase}' needs a quartet batch")
        images, labels = quartet_batch.images(), quartet_batch.labels()
        metric, ident = _reid_terms(models, images, labels, train)
        if train.translate_reid_inputs and state.phase == "joint":
            translated = translate_s2t(models, images, train.attention_enabled).composed
            metric_tr, ident_tr = _reid_terms(models, translated, labels, train)
            metric, ident = (metric + metric_tr) / 2, (ident + ident_tr) / 2
        elif train.translate_reid_inputs and state.translator is not None:
            with torch.no_grad():
                translated = translate_s2t(
                    state.translator, images, train.attention_enabled
                ).composed
            metric_tr, ident_tr = _reid_terms(models, translated, labels, train)
            metric, ident = (metric + metric_tr) / 2, (ident + ident_tr) / 2
        components[train.metric_loss] = metric
        components["id"] = ident

    check_finite(components, state.step)
    update_names = [name for name in ("generator", "reid") if name in state.optimizers]
    step_attention = "attention" in state.optimizers and not state.attention_frozen
    for name in update_names:
        state.optimizers[name].zero_grad(set_to_none=True)
    if step_attention:
        state.optimizers["attention"].zero_grad(set_to_none=True)

    weighted_total(components, train.weights).backward()
    for name in update_names:
        state.optimizers[name].step()
    if step_attention:
        state.optimizers["attention"].step()

    report = total_loss(components, train.weights, step=state.step, epoch=state.epoch)
    state.step += 1
    return report


@dataclass
class TrainingResult:
    """Artifacts of a finished training run."""

    run_dir: Path
    final_checkpoint: Path
    checkpoints: List[Path] = field(default_factory=list)
    loss_files: List[Path] = field(default_factory=list)


class LossLog:
    """Append-only loss CSV; resuming drops rows past the checkpointed step."""

    def __init__(self, path: Path):
        self.path = path

    def truncate(self, step: int) -> None:
        if not self.path.is_file():
            return
        frame = pd.read_csv(self.path)
        frame[frame["step"] < step].to_csv(self.path, index=False)

    def append(self, reports: Sequence[LossReport]) -> None:
        if not reports:
            return
        frame = pd.DataFrame([r.csv_row() for r in reports], columns=reports[0].csv_columns())
        header = not self.path.is_file() or self.path.stat().st_size == 0
        frame.to_csv(self.path, mode="a", header=header, index=False)


class Trainer:
    """
    Runs one configured training mode end to end, writing the run directory:
    config snapshot, losses.csv, ckpt_*.pt and samples/*.png.
    """

    def __init__(
        self,
        config: RunConfig,
        source_train: Sequence[LabeledImage],
        target_train: Sequence[LabeledImage],
        run_dir: Union[str, Path],
        discriminator_input_hook: Optional[DiscriminatorInputHook] = None,
    ):
        """
        Args:
            config: Validated run configuration
            source_train: Labeled source-domain training images
            target_train: Target-domain training images (labels unused)
            run_dir: Output directory of the run
            discriminator_input_hook: Optional instrumentation of discriminator inputs

        Raises:
            DataError: If the training sets cannot feed the samplers
        """
        self.config = config
        self.run_dir = Path(run_dir)
        self.hook = discriminator_input_hook
        self.device = torch.device(config.train.device)

        if not source_train:
            raise DataError("source training set is empty")
        self.source_train = list(source_train)
        self.target_train = list(target_train)
        self.class_index = class_index_map(self.source_train)
        self.quartets = QuartetSampler(self.source_train, self.class_index)
        self.pairs = (
            DomainPairSampler(self.source_train, self.target_train)
            if config.train.mode != "direct_transfer"
            else None
        )
        self.sample_images = stack_images(self.source_train[: config.train.num_sample_images])
        self.steps_per_epoch = math.ceil(len(self.source_train) / config.train.batch_size)

    @property
    def num_classes(self) -> int:
        return len(self.class_index)

    def init_state(self, phase: Phase) -> TrainerState:
        """Fresh models, optimizers and RNGs for a phase, seeded from the config."""
        train = phase_train_config(self.config.train, phase)
        network = train.network.model_copy(update={"num_classes": self.num_classes})
        models = build_domain_models(network, seed=train.seed).to(self.device)
        torch.manual_seed(train.seed)
        return TrainerState(
            config=self.config,
            models=models,
            optimizers=build_optimizers(models, train, phase),
            phase=phase,
            num_classes=self.num_classes,
            rng=np.random.default_rng(train.seed),
        )

    def _batches(self, state: TrainerState):
        batch_size = state.train_config.batch_size
        quartets = pairs = None
        if state.trains_reid:
            quartets = self.quartets.sample(batch_size, state.rng).to(self.device)
        if state.trains_translation:
            src, tgt = self.pairs.sample(batch_size, state.rng)
            pairs = (src.to(self.device), tgt.to(self.device))
        return quartets, pairs

    def _save_samples(self, state: TrainerState, out_dir: Path, epoch: int) -> None:
        models = state.translator if state.phase == "reid" else state.models
        if models is None:
            return
        modes = {module: module.training for module in models.modules()}
        models.eval()
        with torch.no_grad():
            output = translate_s2t(
                models, self.sample_images.to(self.device), state.train_config.attention_enabled
            )
        for module, training in modes.items():
            module.train(training)
        path = out_dir / "samples" / f"epoch_{epoch:03d}.png"
        path.parent.mkdir(parents=True, exist_ok=True)
        save_translation_grid(self.sample_images, output, path)

    def fit_phase(
        self, phase: Phase, out_dir: Path, state: Optional[TrainerState] = None
    ) -> Tuple[TrainerState, List[Path]]:
        """
        Train one phase from scratch or from a resumed state.

        Returns:
            (final state, checkpoint paths written)
        """
        out_dir.mkdir(parents=True, exist_ok=True)
        if state is None:
            state = self.init_state(phase)
        elif state.torch_rng_state is not None:
            torch.set_rng_state(state.torch_rng_state)
        train = state.train_config
        log = LossLog(out_dir / LOSSES_NAME)
        if state.step > 0:
            log.truncate(state.step)
        elif log.path.exists():
            log.path.unlink()

        logger.info(
            f"Training phase '{phase}' for epochs {state.epoch}..{train.epochs - 1}, "
            f"{self.steps_per_epoch} steps per epoch"
        )
        checkpoints = []
        state.models.train()
        for epoch in range(state.epoch, train.epochs):
            state.epoch = epoch
            state.set_lr(lr_schedule(epoch, train))
            apply_phase_schedule(state, epoch)

            reports = []
            for _ in range(self.steps_per_epoch):
                quartets, pairs = self._batches(state)
                reports.append(training_step(state, quartets, pairs, self.hook))
            log.append(reports)

            state.epoch = epoch + 1
            mean_total = sum(r.total for r in reports) / len(reports)
            logger.info(f"[{phase}] epoch {epoch + 1}/{train.epochs} mean total {mean_total:.4f}")

            last = state.epoch == train.epochs
            if state.epoch % train.sample_interval == 0 or last:
                self._save_samples(state, out_dir, state.epoch)
            if state.epoch % train.checkpoint_interval == 0 or last:
                state.torch_rng_state = torch.get_rng_state()
                checkpoints.append(
                    save_checkpoint(state, out_dir / f"ckpt_epoch_{state.epoch:03d}.pt")
                )
                if last:
                    checkpoints.append(save_checkpoint(state, out_dir / FINAL_CHECKPOINT))
        return state, checkpoints

    def _load_translator(self, checkpoint: Path) -> DomainModelSet:
        translator = load_checkpoint(checkpoint, device=self.config.train.device).models
        translator.eval()
        translator.requires_grad_(False)
        return translator

    def run(self, resume_from: Optional[Union[str, Path]] = None) -> TrainingResult:
        """
        Train according to config.train.mode.

        Args:
            resume_from: Optional checkpoint of this run to continue from

        Returns:
            TrainingResult listing checkpoints and loss files
        """
        self.run_dir.mkdir(parents=True, exist_ok=True)
        dump_run_config(self.config, self.run_dir / SNAPSHOT_NAME)
        resumed = load_checkpoint(resume_from, self.config.train.device) if resume_from else None
        mode = self.config.train.mode
        logger.info(f"Starting '{mode}' run in {self.run_dir}")

        if mode in PHASE_FOR_MODE:
            state, checkpoints = self.fit_phase(PHASE_FOR_MODE[mode], self.run_dir, resumed)
            return TrainingResult(
                run_dir=self.run_dir,
                final_checkpoint=self.run_dir / FINAL_CHECKPOINT,
                checkpoints=checkpoints,
                loss_files=[self.run_dir / LOSSES_NAME],
            )

        stage1_dir = self.run_dir / STAGE1_DIR
        stage2_dir = self.run_dir / STAGE2_DIR
        checkpoints: List[Path] = []
        if resumed is None or resumed.phase == "translation":
            _, written = self.fit_phase("translation", stage1_dir, resumed)
            checkpoints += written
            resumed = None

        translator_path = stage1_dir / FINAL_CHECKPOINT
        if resumed is not None and resumed.translator_checkpoint:
            translator_path = resolve_translator_path(resume_from, resumed.translator_checkpoint)
        state = resumed or self.init_state("reid")
        state.translator = self._load_translator(translator_path)
        state.translator_checkpoint = str(Path("..") / STAGE1_DIR / FINAL_CHECKPOINT)
        _, written = self.fit_phase("reid", stage2_dir, state)
        checkpoints += written
        return TrainingResult(
            run_dir=self.run_dir,
            final_checkpoint=stage2_dir / FINAL_CHECKPOINT,
            checkpoints=checkpoints,
            loss_files=[stage1_dir / LOSSES_NAME, stage2_dir / LOSSES_NAME],
        )


def train(
    config: RunConfig,
    source_set: Sequence[LabeledImage],
    target_set: Sequence[LabeledImage],
    run_dir: Union[str, Path],
    resume_from: Optional[Union[str, Path]] = None,
) -> TrainingResult:
    """
    Validate inputs and run the configured training mode.

    Raises:
        DataError: Invalid training sets (raised before any step runs)
    """
    return Trainer(config, source_set, target_set, run_dir).run(resume_from)
