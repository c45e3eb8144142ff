"""
Pytest configuration and fixtures.
"""

import copy

import pytest
import torch
import yaml
from click.testing import CliRunner

from attnreid import pipeline
from attnreid.data.splits import prepare_cross_domain_splits
from attnreid.data.synthetic import generate_synthetic_dataset
from attnreid.database.repository import RunRepository
from attnreid.models import NetworkConfig, ProtocolConfig, RunConfig, SyntheticSpec
from attnreid.networks import build_domain_models
from attnreid.training.trainer import Trainer
from tests.fixtures.sample_data import TINY_IMAGE_SIZE, TINY_RUN_CONFIG


def tiny_config_data(tmp_path, **sections) -> dict:
    """TINY_RUN_CONFIG rooted in tmp_path, with sections updated from keyword arguments."""
    data = copy.deepcopy(TINY_RUN_CONFIG)
    data["dataset"] = {"root": str(tmp_path / "data")}
    data["output"] = {"runs_root": str(tmp_path / "runs")}
    for section, values in sections.items():
        data.setdefault(section, {}).update(values)
    return data


@pytest.fixture
def tiny_config(tmp_path):
    """Small end-to-end run config writing under tmp_path."""
    return RunConfig.model_validate(tiny_config_data(tmp_path))


@pytest.fixture
def make_config(tmp_path):
    """Factory for tiny configs with per-section overrides."""

    def factory(**sections) -> RunConfig:
        return RunConfig.model_validate(tiny_config_data(tmp_path, **sections))

    return factory


@pytest.fixture(scope="session")
def tiny_spec():
    """Synthetic spec matching the tiny config."""
    return SyntheticSpec.model_validate(TINY_RUN_CONFIG["data"])


@pytest.fixture(scope="session")
def synthetic_domains(tiny_spec):
    """Generated (source, target) domains, shared by the whole session."""
    return generate_synthetic_dataset(tiny_spec)


@pytest.fixture
def dataset_on_disk(tiny_config):
    """Tiny config whose dataset has been written to disk."""
    pipeline.generate_dataset(tiny_config)
    return tiny_config


@pytest.fixture
def network_config():
    """Narrow network for 16x8 images and 3 classes."""
    return NetworkConfig(
        base_channels=8,
        num_residual_blocks=1,
        image_size=TINY_IMAGE_SIZE,
        num_classes=3,
    )


@pytest.fixture
def domain_models(network_config):
    """Freshly initialized model set."""
    return build_domain_models(network_config, seed=0)


@pytest.fixture
def image_batch():
    """Deterministic batch of two images in [-1, 1]."""
    generator = torch.Generator().manual_seed(0)
    return torch.rand(2, 3, *TINY_IMAGE_SIZE, generator=generator) * 2 - 1


@pytest.fixture
def test_repository(tmp_path):
    """Create a test repository with a temporary database."""
    return RunRepository(f"sqlite:///{tmp_path / 'results.db'}")


@pytest.fixture
def cli_runner():
    """Click test runner."""
    return CliRunner()


@pytest.fixture(scope="session")
def training_sets(synthetic_domains):
    """(source_train, target_train) of the tiny dataset with test identities withheld."""
    splits = prepare_cross_domain_splits(*synthetic_domains, ProtocolConfig())
    return splits.source_train, splits.target_train


@pytest.fixture
def make_trainer(tmp_path, make_config, training_sets):
    """Factory for trainers on the tiny dataset writing under tmp_path/<run_name>."""

    def factory(run_name="run", hook=None, **sections) -> Trainer:
        config = make_config(**sections)
        return Trainer(config, *training_sets, tmp_path / run_name, hook)

    return factory


@pytest.fixture
def write_config(tmp_path):
    """Factory writing a tiny YAML config under tmp_path and returning its path."""

    def factory(name="config.yaml", **sections) -> str:
        path = tmp_path / name
        path.write_text(yaml.safe_dump(tiny_config_data(tmp_path, **sections)))
        return str(path)

    return factory
