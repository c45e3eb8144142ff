"""
Tests for the training schedule, alternating updates and the three training modes.
"""

from unittest.mock import patch

import pandas as pd
import pytest
import torch

from attnreid.exceptions import DataError, NumericAbortError
from attnreid.losses import cycle_loss
from attnreid.models import TrainConfig
from attnreid.networks import forward_attention
from attnreid.translate import cycle_reconstruct
from attnreid.training.checkpoint import read_checkpoint_payload
from attnreid.training.trainer import (
    Trainer,
    apply_phase_schedule,
    lr_schedule,
    train,
    training_step,
)

ZERO_REID_WEIGHTS = {"lambda_attn": 0.0, "lambda_quartet": 0.0, "lambda_id": 0.0, "lambda_cyc": 0.0}


def one_step(trainer, state, epoch=0, hook=None):
    """Apply the epoch schedule and run one training step on fresh batches."""
    apply_phase_schedule(state, epoch)
    quartets = trainer.quartets.sample(4, state.rng) if state.trains_reid else None
    pairs = trainer.pairs.sample(4, state.rng) if state.trains_translation else None
    return training_step(state, quartets, pairs, hook)


def attention_weights(payload):
    return {key: value for key, value in payload["models"].items() if ".attention." in key}


class TestLearningRateSchedule:
    """Test the constant-then-linear decay."""

    @pytest.mark.parametrize("epoch,expected", [(0, 2e-4), (50, 2e-4), (150, 1e-4), (200, 0.0)])
    def test_reference_schedule(self, epoch, expected):
        """Test 200 epochs decaying from epoch 100."""
        config = TrainConfig(epochs=200)

        assert lr_schedule(epoch, config) == pytest.approx(expected, abs=1e-12)

    def test_decay_is_monotone(self):
        """Test the rate never increases."""
        config = TrainConfig(epochs=20, decay_start_epoch=5)
        rates = [lr_schedule(epoch, config) for epoch in range(21)]

        assert all(a >= b for a, b in zip(rates, rates[1:]))

    @pytest.mark.parametrize("epoch", [-1, 201])
    def test_out_of_range(self, epoch):
        """Test epochs outside the run are rejected."""
        with pytest.raises(ValueError):
            lr_schedule(epoch, TrainConfig(epochs=200))


class TestPhaseSchedule:
    """Test the attention freeze and discriminator masking switches."""

    def test_flags_switch_at_thresholds(self, make_trainer):
        """Test both flags are off one epoch before their threshold and on at it."""
        trainer = make_trainer(train={"epochs": 6, "attention_train_epochs": 2, "disc_whole_image_epochs": 4})
        state = trainer.init_state("joint")

        assert not apply_phase_schedule(state, 1).attention_frozen
        assert apply_phase_schedule(state, 2).attention_frozen
        assert not apply_phase_schedule(state, 3).disc_masked
        assert apply_phase_schedule(state, 4).disc_masked

    def test_freeze_disables_attention_gradients(self, make_trainer):
        """Test frozen attention parameters stop requiring gradients."""
        state = make_trainer().init_state("joint")

        apply_phase_schedule(state, 1)

        assert not any(p.requires_grad for p in state.models.attention_parameters())
        assert all(p.requires_grad for p in state.models.generator_parameters())

    def test_attention_unchanged_after_freeze(self, make_trainer):
        """Test attention parameters are bit-identical across checkpoints after the freeze."""
        trainer = make_trainer(train={"epochs": 3})
        initial = {
            key: value.clone()
            for key, value in trainer.init_state("joint").models.state_dict().items()
            if ".attention." in key
        }

        trainer.run()

        first = attention_weights(read_checkpoint_payload(trainer.run_dir / "ckpt_epoch_001.pt"))
        last = attention_weights(read_checkpoint_payload(trainer.run_dir / "ckpt_epoch_003.pt"))
        assert all(torch.equal(first[key], last[key]) for key in first)
        assert any(not torch.equal(first[key], initial[key]) for key in first)

    def test_discriminator_sees_masked_reals_from_threshold(self, make_trainer):
        """Test real discriminator inputs switch from whole to background-masked images."""
        trainer = make_trainer()
        state = trainer.init_state("joint")
        seen = []

        def hook(domain, real, fake):
            seen.append((domain, real.detach().clone()))

        apply_phase_schedule(state, 0)
        quartets = trainer.quartets.sample(4, state.rng)
        x_s, x_t = trainer.pairs.sample(4, state.rng)
        training_step(state, quartets, (x_s, x_t), hook)
        assert torch.equal(seen[0][1], x_s)
        assert torch.equal(seen[1][1], x_t)

        seen.clear()
        apply_phase_schedule(state, 1)
        quartets = trainer.quartets.sample(4, state.rng)
        x_s, x_t = trainer.pairs.sample(4, state.rng)
        with torch.no_grad():
            mask_s = forward_attention(state.models.source.attention, x_s)
        training_step(state, quartets, (x_s, x_t), hook)

        assert seen[0][0] == "source"
        torch.testing.assert_close(seen[0][1], (1 - mask_s) * x_s, rtol=0, atol=1e-6)
        assert not torch.equal(seen[0][1], x_s)

    def test_no_masking_without_attention(self, make_trainer):
        """Test the no-attention ablation keeps whole real images."""
        trainer = make_trainer(train={"attention_enabled": False})
        state = trainer.init_state("joint")
        seen = []
        apply_phase_schedule(state, 1)
        x_s, x_t = trainer.pairs.sample(4, state.rng)

        training_step(
            state, trainer.quartets.sample(4, state.rng), (x_s, x_t), lambda d, r, f: seen.append(r)
        )

        assert torch.equal(seen[0], x_s)


class TestTrainingStep:
    """Test a single alternating update."""

    def test_joint_step_reports_finite_terms(self, make_trainer):
        """Test the joint phase reports every term with a finite value."""
        trainer = make_trainer()
        state = trainer.init_state("joint")

        report = one_step(trainer, state)

        assert list(report.components()) == ["gan_s", "gan_t", "cycle", "attn", "quartet", "id"]
        assert all(torch.isfinite(torch.tensor(v)) for v in report.components().values())
        assert state.step == 1

    def test_every_weight_receives_gradient(self, make_trainer):
        """Test one joint step reaches every network's weights."""
        trainer = make_trainer()
        state = trainer.init_state("joint")

        one_step(trainer, state)

        for name, param in state.models.named_parameters():
            if name.endswith("weight"):
                assert param.grad is not None, name
                assert torch.count_nonzero(param.grad) > 0, name

    def test_zero_weights_cut_head_gradients(self, make_trainer):
        """Test with attention, quartet, id and cycle weights at zero the heads get no gradient."""
        trainer = make_trainer(train={"weights": ZERO_REID_WEIGHTS})
        state = trainer.init_state("joint")

        report = one_step(trainer, state)

        heads = list(state.models.embedding_head.parameters()) + list(
            state.models.classifier_head.parameters()
        )
        for param in heads:
            assert param.grad is None or torch.count_nonzero(param.grad) == 0
        assert report.total == pytest.approx(report.gan_s + report.gan_t)

    def test_phase_updates_only_its_groups(self, make_trainer):
        """Test the translation stage leaves the re-ID heads untouched."""
        trainer = make_trainer(train={"mode": "daan_two_stage"})
        state = trainer.init_state("translation")
        head_before = state.models.embedding_head.fc.weight.detach().clone()

        report = one_step(trainer, state)

        assert torch.equal(state.models.embedding_head.fc.weight, head_before)
        assert report.quartet is None and report.id is None

    @pytest.mark.parametrize("cycle_input", ["raw", "composed"])
    def test_cycle_term_uses_reconstruction_helpers(self, make_trainer, cycle_input):
        """Test the cycle term is the cycle loss of both reconstructions."""
        trainer = make_trainer(train={"cycle_input": cycle_input})
        state = trainer.init_state("joint")

        losses = []

        def recording_cycle_loss(*args):
            losses.append(cycle_loss(*args))
            return losses[-1]

        with patch("attnreid.training.trainer.cycle_reconstruct", wraps=cycle_reconstruct) as recon, \
                patch("attnreid.training.trainer.cycle_loss", side_effect=recording_cycle_loss):
            report = one_step(trainer, state)

        assert [c.args[2] for c in recon.call_args_list] == ["s2t2s", "t2s2t"]
        assert all(c.args[3] == cycle_input for c in recon.call_args_list)
        assert len(losses) == 1
        assert report.cycle == pytest.approx(losses[0].item(), rel=1e-6)

    def test_triplet_variant(self, make_trainer):
        """Test the triplet ablation reports a triplet term instead of a quartet term."""
        trainer = make_trainer(train={"metric_loss": "triplet"})

        report = one_step(trainer, trainer.init_state("joint"))

        assert report.triplet is not None
        assert report.quartet is None

    def test_nan_term_aborts(self, make_trainer):
        """Test a non-finite loss term stops training with the term named."""
        trainer = make_trainer()
        state = trainer.init_state("joint")

        with patch(
            "attnreid.training.trainer.identity_loss", return_value=torch.tensor(float("nan"))
        ):
            with pytest.raises(NumericAbortError) as excinfo:
                one_step(trainer, state)

        assert excinfo.value.term == "id"
        assert excinfo.value.exit_code == 5

    def test_nan_discriminator_aborts(self, make_trainer):
        """Test a non-finite discriminator loss aborts before any discriminator update."""
        trainer = make_trainer()
        state = trainer.init_state("joint")

        with patch(
            "attnreid.training.trainer.adversarial_loss_d", return_value=torch.tensor(float("inf"))
        ):
            with pytest.raises(NumericAbortError, match="discriminator"):
                one_step(trainer, state)


class TestTrainer:
    """Test whole runs of each mode on the tiny dataset."""

    def test_end_to_end_run_directory(self, make_trainer):
        """Test the joint mode writes snapshot, losses, checkpoints and samples."""
        trainer = make_trainer()

        result = trainer.run()

        run_dir = trainer.run_dir
        assert (run_dir / "config.snapshot.yaml").is_file()
        assert result.final_checkpoint == run_dir / "ckpt_final.pt"
        assert [p.name for p in result.checkpoints] == [
            "ckpt_epoch_001.pt",
            "ckpt_epoch_002.pt",
            "ckpt_final.pt",
        ]
        losses = pd.read_csv(run_dir / "losses.csv")
        assert list(losses.columns) == [
            "step", "epoch", "gan_s", "gan_t", "cycle", "attn", "quartet", "id", "total"
        ]
        assert list(losses["step"]) == list(range(6))
        assert losses.drop(columns=["step", "epoch"]).notna().all().all()
        assert (run_dir / "samples" / "epoch_001.png").is_file()
        assert (run_dir / "samples" / "epoch_002.png").is_file()

    def test_direct_transfer_has_no_translation_terms(self, make_trainer):
        """Test the source-only baseline logs only re-ID terms and no samples."""
        trainer = make_trainer(train={"mode": "direct_transfer"})

        trainer.run()

        losses = pd.read_csv(trainer.run_dir / "losses.csv")
        assert list(losses.columns) == ["step", "epoch", "quartet", "id", "total"]
        assert not (trainer.run_dir / "samples").exists()
        payload = read_checkpoint_payload(trainer.run_dir / "ckpt_final.pt")
        assert list(payload["optimizers"]) == ["reid"]

    def test_two_stage_writes_both_stages(self, make_trainer):
        """Test the two-stage mode trains translation, then re-ID against the stage 1 translator."""
        trainer = make_trainer(train={"mode": "daan_two_stage"})

        result = trainer.run()

        stage1 = trainer.run_dir / "stage1_translation"
        stage2 = trainer.run_dir / "stage2_reid"
        assert list(pd.read_csv(stage1 / "losses.csv").columns) == [
            "step", "epoch", "gan_s", "gan_t", "cycle", "attn", "total"
        ]
        assert list(pd.read_csv(stage2 / "losses.csv").columns) == [
            "step", "epoch", "quartet", "id", "total"
        ]
        assert result.final_checkpoint == stage2 / "ckpt_final.pt"
        assert (stage1 / "ckpt_epoch_002.pt").is_file()
        payload = read_checkpoint_payload(stage2 / "ckpt_final.pt")
        assert payload["phase"] == "reid"
        assert payload["translator_checkpoint"] == "../stage1_translation/ckpt_final.pt"
        assert (stage2 / "samples" / "epoch_002.png").is_file()

    def test_samples_keep_network_modes(self, make_trainer, tmp_path):
        """Test sample grids leave the frozen translator in eval mode and trained nets in train mode."""
        trainer = make_trainer(train={"mode": "daan_two_stage"})
        trainer.run()
        state = trainer.init_state("reid")
        state.translator = trainer._load_translator(
            trainer.run_dir / "stage1_translation" / "ckpt_final.pt"
        )
        state.models.train()

        trainer._save_samples(state, tmp_path / "samples_check", 1)

        assert not any(module.training for module in state.translator.modules())
        assert all(module.training for module in state.models.modules())
        assert (tmp_path / "samples_check" / "samples" / "epoch_001.png").is_file()

    def test_joint_samples_restore_train_mode(self, make_trainer, tmp_path):
        """Test the jointly trained networks return to train mode after sampling."""
        trainer = make_trainer()
        state = trainer.init_state("joint")
        state.models.train()

        trainer._save_samples(state, tmp_path / "samples_check", 1)

        assert all(module.training for module in state.models.modules())

    def test_attention_disabled_run(self, make_trainer):
        """Test the no-attention ablation drops the attention term and optimizer."""
        trainer = make_trainer(train={"attention_enabled": False})

        trainer.run()

        assert "attn" not in pd.read_csv(trainer.run_dir / "losses.csv").columns
        payload = read_checkpoint_payload(trainer.run_dir / "ckpt_final.pt")
        assert "attention" not in payload["optimizers"]

    def test_resume_matches_uninterrupted_run(self, make_trainer):
        """Test resuming from an epoch checkpoint reproduces the remaining losses."""
        trainer = make_trainer()
        trainer.run()
        uninterrupted = pd.read_csv(trainer.run_dir / "losses.csv")

        trainer.run(resume_from=trainer.run_dir / "ckpt_epoch_001.pt")
        resumed = pd.read_csv(trainer.run_dir / "losses.csv")

        assert list(resumed["step"]) == list(uninterrupted["step"])
        pd.testing.assert_frame_equal(resumed, uninterrupted, check_exact=False, atol=1e-4)

    def test_seeded_runs_are_reproducible(self, make_trainer):
        """Test two runs with one seed log the same losses."""
        first = make_trainer("first", train={"mode": "direct_transfer"})
        second = make_trainer("second", train={"mode": "direct_transfer"})

        first.run()
        second.run()

        pd.testing.assert_frame_equal(
            pd.read_csv(first.run_dir / "losses.csv"),
            pd.read_csv(second.run_dir / "losses.csv"),
            check_exact=False,
            atol=1e-6,
        )

    def test_empty_source_rejected_before_training(self, tiny_config, training_sets, tmp_path):
        """Test an empty source set fails before any step or output."""
        run_dir = tmp_path / "empty"

        with pytest.raises(DataError, match="empty"):
            train(tiny_config, [], training_sets[1], run_dir)

        assert not run_dir.exists()

    def test_too_few_identities_rejected(self, tiny_config, training_sets, tmp_path):
        """Test two source identities cannot form quartets."""
        source = training_sets[0]
        keep = sorted({item.identity for item in source})[:2]
        two_ids = [item for item in source if item.identity in keep]

        with pytest.raises(DataError):
            Trainer(tiny_config, two_ids, training_sets[1], tmp_path / "two")

    def test_steps_per_epoch(self, make_trainer):
        """Test an epoch covers the source set once."""
        trainer = make_trainer()

        assert trainer.num_classes == 3
        assert trainer.steps_per_epoch == 3
