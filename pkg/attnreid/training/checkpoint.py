"""
Versioned checkpoint container with atomic writes.
"""

import io
import json
import logging
import os
from pathlib import Path
from typing import Any, Dict, Optional, Union

import numpy as np
import torch

from ..exceptions import CheckpointError
from ..models import RunConfig
from ..networks import build_domain_models
from .state import TrainerState, build_optimizers, phase_train_config

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT_VERSION = 1

PathLike = Union[str, Path]


def _payload(state: TrainerState) -> Dict[str, Any]:
    torch_rng = state.torch_rng_state
    if torch_rng is None:
        torch_rng = torch.get_rng_state()
    return {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "config": state.config.model_dump(mode="json"),
        "phase": state.phase,
        "num_classes": state.num_classes,
        "epoch": state.epoch,
        "step": state.step,
        "attention_frozen": state.attention_frozen,
        "disc_masked": state.disc_masked,
        "models": state.models.state_dict(),
        "optimizers": {name: opt.state_dict() for name, opt in state.optimizers.items()},
        "torch_rng": torch_rng,
        "numpy_rng": json.dumps(state.rng.bit_generator.state, sort_keys=True),
        "translator_checkpoint": state.translator_checkpoint,
    }


def save_checkpoint(state: TrainerState, path: PathLike) -> Path:
    """
    Serialize the trainer state, writing to a temporary file then renaming it.

    The archive is built in memory so its internal record names do not depend on
    the destination file name; identical states give byte-identical files.

    Args:
        state: Trainer state to persist
        path: Destination file

    Returns:
        The written path
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    buffer = io.BytesIO()
    torch.save(_payload(state), buffer)

    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as handle:
        handle.write(buffer.getvalue())
        handle.flush()
        os.fsync(handle.fileno())
    os.replace(tmp, path)
    logger.info(f"Saved checkpoint {path} (phase {state.phase}, epoch {state.epoch})")
    return path


def read_checkpoint_payload(path: PathLike) -> Dict[str, Any]:
    """
    Read and version-check a checkpoint without building any model.

    Raises:
        CheckpointError: Missing, truncated/corrupt or version-mismatched file
    """
    path = Path(path)
    if not path.is_file():
        raise CheckpointError(f"Checkpoint {path} does not exist")
    try:
        payload = torch.load(io.BytesIO(path.read_bytes()), map_location="cpu", weights_only=True)
    except Exception as e:
        raise CheckpointError(f"Checkpoint {path} is corrupt or truncated: {e}") from e

    found = payload.get("format_version") if isinstance(payload, dict) else None
    if found != CHECKPOINT_FORMAT_VERSION:
        raise CheckpointError(
            f"Checkpoint {path} has an unsupported format",
            expected_version=CHECKPOINT_FORMAT_VERSION,
            found_version=found,
        )
    return payload


def load_checkpoint(path: PathLike, device: Optional[str] = None) -> TrainerState:
    """
    Rebuild a TrainerState from a checkpoint file.

    Nothing is returned unless every part loads; global RNG state is left untouched
    (the torch RNG snapshot is kept on the state for the trainer to restore).

    Args:
        path: Checkpoint file
        device: Device to place the models on (defaults to the configured device)

    Returns:
        TrainerState with models, optimizer moments, counters, phase flags and RNGs

    Raises:
        CheckpointError: On any read, version or content problem
    """
    payload = read_checkpoint_payload(path)
    try:
        config = RunConfig.model_validate(payload["config"])
        phase = payload["phase"]
        network = config.train.network.model_copy(update={"num_classes": payload["num_classes"]})
        models = build_domain_models(network, seed=config.train.seed)
        models.load_state_dict(payload["models"])
        models.to(device or config.train.device)

        optimizers = build_optimizers(models, phase_train_config(config.train, phase), phase)
        if set(optimizers) != set(payload["optimizers"]):
            raise CheckpointError(
                f"Checkpoint {path} optimizer groups {sorted(payload['optimizers'])} do not "
                f"match phase '{phase}'"
            )
        for name, optimizer in optimizers.items():
            optimizer.load_state_dict(payload["optimizers"][name])

        rng = np.random.default_rng()
        rng.bit_generator.state = json.loads(payload["numpy_rng"])
    except CheckpointError:
        raise
    except Exception as e:
        raise CheckpointError(f"Checkpoint {path} content is invalid: {e}") from e

    state = TrainerState(
        config=config,
        models=models,
        optimizers=optimizers,
        phase=phase,
        num_classes=payload["num_classes"],
        epoch=payload["epoch"],
        step=payload["step"],
        attention_frozen=payload["attention_frozen"],
        disc_masked=payload["disc_masked"],
        rng=rng,
        torch_rng_state=payload["torch_rng"],
        translator_checkpoint=payload.get("translator_checkpoint"),
    )
    if state.attention_frozen:
        for param in models.attention_parameters():
            param.requires_grad_(False)
    logger.info(f"Loaded checkpoint {path} (phase {phase}, epoch {state.epoch})")
    return state


def resolve_translator_path(checkpoint: PathLike, reference: str) -> Path:
    """Translator references are stored relative to the referencing checkpoint."""
    ref = Path(reference)
    return ref if ref.is_absolute() else Path(checkpoint).parent / ref
