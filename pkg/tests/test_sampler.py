"""
Tests for quartet and domain-pair sampling.
"""

import numpy as np
import pytest
import torch

from attnreid.exceptions import DataError
from attnreid.models import LabeledImage
from attnreid.sampler import (
    QuartetSampler,
    class_index_map,
    sample_domain_pair_batch,
    sample_quartet_batch,
)


def make_set(counts, domain="source"):
    """One distinguishable (3, 4, 4) image per entry; counts maps identity -> images."""
    items = []
    for identity, count in counts.items():
        for index in range(count):
            value = (len(items) % 200) / 100.0 - 1.0
            items.append(
                LabeledImage(
                    image=np.full((3, 4, 4), value, dtype=np.float32),
                    identity=identity,
                    camera=index % 2,
                    domain=domain,
                )
            )
    return items


class TestQuartetSampler:
    """Test quartet construction."""

    def test_identity_constraints(self):
        """Test every quartet has anchor = positive and two distinct negatives."""
        train_set = make_set({identity: 4 for identity in range(4)})

        batch = sample_quartet_batch(train_set, 8, np.random.default_rng(0))

        ids = batch.identities
        assert batch.batch_size == 8
        assert (ids[:, 0] == ids[:, 1]).all()
        assert (ids[:, 2] != ids[:, 0]).all()
        assert ((ids[:, 3] != ids[:, 0]) & (ids[:, 3] != ids[:, 2])).all()
        assert (batch.indices[:, 0] != batch.indices[:, 1]).all()
        for row in range(8):
            for column in range(4):
                assert train_set[batch.indices[row, column]].identity == ids[row, column]

    def test_images_and_labels_follow_indices(self):
        """Test tensors are gathered from the sampled positions."""
        train_set = make_set({10: 3, 20: 3, 30: 3})
        mapping = class_index_map(train_set)

        batch = sample_quartet_batch(train_set, 5, np.random.default_rng(1))

        columns = (batch.x1, batch.x2, batch.x3, batch.x4)
        labels = (batch.y1, batch.y2, batch.y3, batch.y4)
        for column in range(4):
            for row in range(5):
                item = train_set[batch.indices[row, column]]
                assert torch.equal(columns[column][row], torch.from_numpy(item.image))
                assert labels[column][row].item() == mapping[item.identity]
        assert batch.images().shape == (20, 3, 4, 4)
        assert torch.equal(batch.labels()[:5], batch.y1)

    def test_class_indices_are_contiguous(self):
        """Test identities map to 0..C-1 in sorted order."""
        assert class_index_map(make_set({7: 1, 3: 1, 11: 1})) == {3: 0, 7: 1, 11: 2}

    def test_two_identities_rejected(self):
        """Test quartets need three identities."""
        with pytest.raises(DataError, match="quartet sampling requires ≥ 3 identities"):
            sample_quartet_batch(make_set({0: 4, 1: 4}), 2, np.random.default_rng(0))

    def test_no_anchor_identity(self):
        """Test some identity must hold two images."""
        with pytest.raises(DataError):
            QuartetSampler(make_set({0: 1, 1: 1, 2: 1}))

    def test_single_image_identity_never_anchors(self):
        """Test identities with one image only appear as negatives."""
        sampler = QuartetSampler(make_set({0: 3, 1: 3, 2: 3, 3: 1}))

        batch = sampler.sample(300, np.random.default_rng(2))

        assert 3 not in set(batch.identities[:, 0])
        assert 3 in set(batch.identities[:, 2]) | set(batch.identities[:, 3])

    def test_anchor_distribution_is_uniform(self):
        """Test anchor counts over 10k quartets stay within 4 sigma of uniform."""
        sampler = QuartetSampler(make_set({identity: 2 for identity in range(5)}))
        n = 10_000

        batch = sampler.sample(n, np.random.default_rng(3))

        counts = np.bincount(batch.identities[:, 0], minlength=5)
        p = 1 / 5
        sigma = np.sqrt(n * p * (1 - p))
        assert np.all(np.abs(counts - n * p) < 4 * sigma)

    def test_seeded_sampling_is_reproducible(self):
        """Test the same seed gives the same quartets."""
        sampler = QuartetSampler(make_set({identity: 3 for identity in range(4)}))

        first = sampler.sample(6, np.random.default_rng(5))
        second = sampler.sample(6, np.random.default_rng(5))

        np.testing.assert_array_equal(first.indices, second.indices)

    def test_batch_size_must_be_positive(self):
        """Test empty batches are rejected."""
        sampler = QuartetSampler(make_set({identity: 2 for identity in range(3)}))

        with pytest.raises(ValueError):
            sampler.sample(0, np.random.default_rng(0))


class TestDomainPairSampler:
    """Test unpaired cross-domain batches."""

    def test_batch_shapes(self):
        """Test a batch of 16 draws 16 images per domain."""
        src, tgt = sample_domain_pair_batch(
            make_set({0: 5}), make_set({1: 3}, "target"), 16, np.random.default_rng(0)
        )

        assert src.shape == (16, 3, 4, 4)
        assert tgt.shape == (16, 3, 4, 4)

    def test_single_image_target_repeats(self):
        """Test sampling is with replacement."""
        target = make_set({0: 1}, "target")

        _, tgt = sample_domain_pair_batch(make_set({0: 2}), target, 4, np.random.default_rng(0))

        assert all(torch.equal(image, torch.from_numpy(target[0].image)) for image in tgt)

    def test_seeded_sampling_is_reproducible(self):
        """Test repeat runs with one seed agree."""
        source, target = make_set({0: 6}), make_set({1: 6}, "target")

        first = sample_domain_pair_batch(source, target, 8, np.random.default_rng(9))
        second = sample_domain_pair_batch(source, target, 8, np.random.default_rng(9))

        assert torch.equal(first[0], second[0]) and torch.equal(first[1], second[1])

    def test_empty_set_rejected(self):
        """Test both domains must hold images."""
        with pytest.raises(DataError):
            sample_domain_pair_batch(make_set({0: 2}), [], 4, np.random.default_rng(0))
