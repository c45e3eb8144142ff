"""
Command orchestration shared by the CLI and the ablation script.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import torch

from .data.base_loader import BaseLoader
from .data.directory import load_reid_directory, write_domain_dataset
from .data.splits import CrossDomainSplits, prepare_cross_domain_splits
from .data.synthetic import generate_synthetic_dataset
from .database.repository import RunRepository
from .evaluation.evaluator import EvaluationOutcome, evaluate_models, write_evaluation_outputs
from .evaluation.export import save_translation_grid
from .exceptions import CheckpointError, DataError
from .models import LabeledImage, RunConfig, RunRecord
from .networks import DomainModelSet
from .training.checkpoint import load_checkpoint, resolve_translator_path
from .training.state import TrainerState
from .training.trainer import TrainingResult, train
from .translate import translate_s2t, translate_t2s
from .utils.image_io import load_png
from .utils.text_parsing import is_image_filename

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

EVAL_DIR = "eval"


def dataset_dirs(config: RunConfig) -> Tuple[Path, Path]:
    root = Path(config.dataset.root)
    return root / config.dataset.source_dir, root / config.dataset.target_dir


def run_dir(config: RunConfig) -> Path:
    return Path(config.output.runs_root) / config.name


def database_url(config: RunConfig) -> str:
    """Configured results database, defaulting to results.db under the runs root."""
    if config.output.database_url:
        return config.output.database_url
    root = Path(config.output.runs_root)
    root.mkdir(parents=True, exist_ok=True)
    return f"sqlite:///{root / 'results.db'}"


def generate_dataset(config: RunConfig) -> Tuple[Path, Path]:
    """
    Generate the synthetic domains and write them with manifests.

    Returns:
        (source manifest, target manifest)
    """
    source, target = generate_synthetic_dataset(config.data)
    source_dir, target_dir = dataset_dirs(config)
    return write_domain_dataset(source, source_dir), write_domain_dataset(target, target_dir)


def load_domains(config: RunConfig) -> Tuple[List[LabeledImage], List[LabeledImage]]:
    """
    Load both domains from the configured dataset root.

    Raises:
        DataError: If a domain directory is missing or unreadable
    """
    source_dir, target_dir = dataset_dirs(config)
    for directory in (source_dir, target_dir):
        if not directory.exists():
            raise DataError(f"Dataset directory {directory} does not exist; run gen-data first")
    size = tuple(config.data.image_size)
    source = load_reid_directory(source_dir, config.dataset.layout, "source", size)
    target = load_reid_directory(target_dir, config.dataset.layout, "target", size)
    return source, target


def prepare_splits(
    config: RunConfig, source: List[LabeledImage], target: List[LabeledImage]
) -> CrossDomainSplits:
    return prepare_cross_domain_splits(source, target, config.protocol, config.evaluation.domain)


def run_training(config: RunConfig, resume_from: Optional[PathLike] = None) -> TrainingResult:
    """Load data, split, and train into runs_root/name."""
    source, target = load_domains(config)
    splits = prepare_splits(config, source, target)
    return train(config, splits.source_train, splits.target_train, run_dir(config), resume_from)


def translation_models(
    state: TrainerState, checkpoint: PathLike, device: Optional[str] = None
) -> Optional[DomainModelSet]:
    """Networks that translate for a checkpoint: its own, its stage-1 translator, or none."""
    if state.phase in ("joint", "translation"):
        return state.models
    if state.translator_checkpoint:
        path = resolve_translator_path(checkpoint, state.translator_checkpoint)
        return load_checkpoint(path, device).models
    return None


def attention_sets(
    config: RunConfig,
    splits: CrossDomainSplits,
    source: List[LabeledImage],
    target: List[LabeledImage],
) -> Dict[str, List[LabeledImage]]:
    """Test-identity images of both domains (only the evaluated one without shared labels)."""
    evaluated = list(splits.evaluation.query) + list(splits.evaluation.gallery)
    held_out = set(splits.evaluation.test_identities)
    sets = {}
    for name, items in (("source", source), ("target", target)):
        if name == splits.evaluation_domain:
            sets[name] = evaluated
        elif config.protocol.shared_identities:
            sets[name] = [item for item in items if item.identity in held_out]
    return sets


@dataclass
class EvaluationRun:
    outcome: EvaluationOutcome
    outputs: Dict[str, Path]
    record: RunRecord
    stored: bool


def run_evaluation(
    checkpoint: PathLike,
    config: Optional[RunConfig] = None,
    out_dir: Optional[PathLike] = None,
) -> EvaluationRun:
    """
    Evaluate a checkpoint on the held-out split and record the metrics.

    Protocol, dataset and mode come from the checkpoint's own config so a run
    directory is self-describing; `config` only supplies the evaluation and
    output settings.

    Args:
        checkpoint: Checkpoint file
        config: Optional config for evaluation/output settings
        out_dir: Output directory (defaults to <checkpoint dir>/eval)

    Returns:
        EvaluationRun with the report, written files and stored run record
    """
    checkpoint = Path(checkpoint)
    state = load_checkpoint(checkpoint)
    stored_config = state.config
    if config is not None:
        stored_config = stored_config.model_copy(
            update={"evaluation": config.evaluation, "output": config.output}
        )
    effective = stored_config

    source, target = load_domains(effective)
    splits = prepare_splits(effective, source, target)
    translator = None
    if effective.train.mode != "direct_transfer":
        translator = translation_models(state, checkpoint)

    outcome = evaluate_models(
        state.models,
        splits.evaluation,
        effective.evaluation,
        attention_models=translator,
        attention_sets=attention_sets(effective, splits, source, target),
        attention_enabled=effective.train.attention_enabled,
    )
    outputs = write_evaluation_outputs(
        outcome, splits.evaluation, out_dir or checkpoint.parent / EVAL_DIR, effective.evaluation
    )

    record = RunRecord(
        run_id=BaseLoader.generate_id(str(checkpoint.resolve())),
        name=effective.name,
        mode=effective.train.mode,
        attention_enabled=effective.train.attention_enabled,
        metric_loss=effective.train.metric_loss,
        seed=effective.train.seed,
        checkpoint=str(checkpoint),
        evaluation_domain=effective.evaluation.domain,
    )
    stored = RunRepository(database_url(effective)).record_run(record, outcome.report.records)
    if not stored:
        logger.warning("Metrics were not stored in the results database")
    return EvaluationRun(outcome, outputs, record, stored)


def _load_input_images(input_dir: Path, image_size) -> List[Tuple[str, torch.Tensor]]:
    if not input_dir.is_dir():
        raise DataError(f"Input directory {input_dir} does not exist")
    files = sorted(p for p in input_dir.iterdir() if p.is_file() and is_image_filename(p.name))
    if not files:
        raise DataError(f"No images found in {input_dir}")
    return [(p.stem, torch.from_numpy(load_png(p, image_size))) for p in files]


def translate_directory(
    checkpoint: PathLike,
    input_dir: PathLike,
    out_dir: PathLike,
    direction: str = "s2t",
    config: Optional[RunConfig] = None,
) -> List[Path]:
    """
    Write one input | mask | raw | x_b | x_f | composed strip per input image.

    The checkpoint and every input are loaded before anything is written. Image size
    and attention come from the checkpoint's config; `config` only chooses the device.

    Raises:
        CheckpointError: Unreadable checkpoint or one without translation networks
        DataError: Missing or empty input directory
    """
    checkpoint = Path(checkpoint)
    device = config.train.device if config is not None else None
    state = load_checkpoint(checkpoint, device)
    models = translation_models(state, checkpoint, device)
    if models is None:
        raise CheckpointError(f"Checkpoint {checkpoint} holds no translation networks")
    stored = state.config
    images = _load_input_images(Path(input_dir), tuple(stored.data.image_size))

    translate = translate_s2t if direction == "s2t" else translate_t2s
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    models.eval()
    written = []
    model_device = next(models.parameters()).device
    with torch.no_grad():
        for stem, image in images:
            batch = image.unsqueeze(0).to(model_device)
            output = translate(models, batch, stored.train.attention_enabled)
            path = out_dir / f"{stem}_{direction}.png"
            save_translation_grid(batch.cpu(), output, path)
            written.append(path)
    logger.info(f"Wrote {len(written)} translation grids to {out_dir}")
    return written
