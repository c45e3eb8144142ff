"""
Tests for retrieval metrics, attention metrics and evaluation exports.
"""

import numpy as np
import pandas as pd
import pytest
import torch
from PIL import Image

from attnreid.data.splits import split_train_query_gallery
from attnreid.evaluation.evaluator import (
    evaluate_attention,
    evaluate_models,
    evaluate_retrieval,
    write_evaluation_outputs,
)
from attnreid.evaluation.export import (
    export_ranking_grid,
    read_metrics_csv,
    write_embeddings_csv,
    write_metrics_csv,
)
from attnreid.evaluation.metrics import (
    RankingResult,
    attention_iou,
    average_precision,
    cmc,
    extract_embeddings,
    foreground_preservation,
    map_score,
    rank_gallery,
)
from attnreid.exceptions import DataError
from attnreid.models import EvaluationConfig, MetricRecord, ProtocolConfig
from attnreid.translate import compose


def rank_1d(query_pos, gallery_pos, query_ids, gallery_ids, query_cams, gallery_cams):
    """Rank a gallery laid out on a line; distances are |position difference|."""
    q = np.asarray(query_pos, dtype=np.float64)[:, None]
    g = np.asarray(gallery_pos, dtype=np.float64)[:, None]
    return rank_gallery(q, g, query_ids, gallery_ids, query_cams, gallery_cams)


def brute_force_scores(q_emb, g_emb, q_ids, g_ids, q_cams, g_cams, ks):
    """Loop-based CMC and mAP with junk removal; None when no query is scorable."""
    firsts, aps = [], []
    for q in range(len(q_ids)):
        distances = [float(((q_emb[q] - g_emb[g]) ** 2).sum()) for g in range(len(g_ids))]
        ranked = sorted(range(len(g_ids)), key=lambda g: (distances[g], g))
        good = []
        for g in ranked:
            same_id = g_ids[g] == q_ids[q]
            if same_id and g_cams[g] == q_cams[q]:
                continue
            good.append(same_id)
        if not any(good):
            continue
        firsts.append(good.index(True))
        hits, precisions = 0, []
        for position, flag in enumerate(good):
            if flag:
                hits += 1
                precisions.append(hits / (position + 1))
        aps.append(sum(precisions) / len(precisions))
    if not firsts:
        return None
    cmc_values = {k: sum(1 for f in firsts if f < k) / len(firsts) for k in ks}
    return cmc_values, sum(aps) / len(aps)


class TestCmc:
    """Test cumulative matching characteristic scoring."""

    def test_first_match_at_rank_two(self):
        """Test a query matched only at rank 2 scores CMC(1)=0 and CMC(2)=1."""
        ranking = rank_1d([0.0], [1.0, 2.0], [1], [2, 1], [0], [1, 1])

        assert cmc(ranking, [1, 2]) == {1: 0.0, 2: 1.0}

    def test_all_first_ranked(self):
        """Test perfect retrieval gives 1 at every rank."""
        ranking = rank_1d([0.0, 10.0], [0.5, 10.5, 20.0], [1, 2], [1, 2, 3], [0, 0], [1, 1, 1])

        assert cmc(ranking, [1, 2, 3]) == {1: 1.0, 2: 1.0, 3: 1.0}

    def test_monotone_in_k(self):
        """Test CMC never decreases with k on a random instance."""
        rng = np.random.default_rng(0)
        ranking = rank_gallery(
            rng.normal(size=(6, 4)),
            rng.normal(size=(15, 4)),
            rng.integers(0, 3, 6),
            rng.integers(0, 3, 15),
            np.zeros(6, dtype=int),
            np.ones(15, dtype=int),
        )

        values = list(cmc(ranking, range(1, 16)).values())

        assert all(a <= b for a, b in zip(values, values[1:]))
        assert values[-1] == 1.0

    def test_no_scorable_query(self):
        """Test rankings without any good match are rejected."""
        ranking = rank_1d([0.0], [1.0], [1], [2], [0], [0])

        with pytest.raises(DataError):
            cmc(ranking, [1])

    def test_ties_broken_by_gallery_index(self):
        """Test equal distances keep gallery order."""
        ranking = rank_1d([0.0], [1.0, -1.0, 1.0], [1], [1, 2, 3], [0], [1, 1, 1])

        np.testing.assert_array_equal(ranking.order[0], [0, 1, 2])


class TestMeanAveragePrecision:
    """Test average precision and mAP."""

    def test_matches_at_ranks_one_and_three(self):
        """Test good matches at ranks 1 and 3 give (1 + 2/3) / 2."""
        ranking = rank_1d([0.0], [1.0, 2.0, 3.0], [1], [1, 2, 1], [0], [1, 1, 2])

        assert map_score(ranking) == pytest.approx((1 + 2 / 3) / 2, abs=1e-12)
        assert average_precision(np.array([True, False, True])) == pytest.approx(0.8333333333333334)

    def test_perfect_retrieval(self):
        """Test all matches ranked first gives mAP 1."""
        ranking = rank_1d([0.0], [1.0, 2.0, 9.0], [1], [1, 1, 2], [0], [1, 2, 1])

        assert map_score(ranking) == 1.0

    def test_no_relevant_entries(self):
        """Test AP of an all-miss vector is zero."""
        assert average_precision(np.zeros(4, dtype=bool)) == 0.0

    def test_matches_brute_force_oracle(self):
        """Test CMC and mAP against exhaustive scoring on 200 random small galleries."""
        rng = np.random.default_rng(42)
        ks = [1, 5, 10]
        checked = 0
        for _ in range(200):
            num_gallery = int(rng.integers(1, 21))
            num_query = int(rng.integers(1, 6))
            q_emb = rng.normal(size=(num_query, 3))
            g_emb = rng.normal(size=(num_gallery, 3))
            q_ids = rng.integers(0, 4, num_query)
            g_ids = rng.integers(0, 4, num_gallery)
            q_cams = rng.integers(0, 3, num_query)
            g_cams = rng.integers(0, 3, num_gallery)

            expected = brute_force_scores(q_emb, g_emb, q_ids, g_ids, q_cams, g_cams, ks)
            ranking = rank_gallery(q_emb, g_emb, q_ids, g_ids, q_cams, g_cams)
            if expected is None:
                with pytest.raises(DataError):
                    cmc(ranking, ks)
                continue

            assert cmc(ranking, ks) == expected[0]
            assert abs(map_score(ranking) - expected[1]) <= 1e-9
            checked += 1
        assert checked > 100

    @pytest.mark.parametrize("junk_position", [-1.0, 0.5, 1.5, 2.5, 10.0])
    def test_junk_entries_never_change_scores(self, junk_position):
        """Test inserting a same-identity same-camera entry anywhere leaves CMC and mAP alone."""
        base = rank_1d([0.0], [1.0, 2.0, 3.0], [1], [2, 1, 1], [0], [1, 1, 2])
        with_junk = rank_1d(
            [0.0], [1.0, 2.0, 3.0, junk_position], [1], [2, 1, 1, 1], [0], [1, 1, 2, 0]
        )

        assert cmc(with_junk, [1, 2, 3]) == cmc(base, [1, 2, 3])
        assert map_score(with_junk) == map_score(base)

    def test_ranking_is_permutation(self):
        """Test every query's order is a permutation of the gallery."""
        rng = np.random.default_rng(1)
        ranking = rank_gallery(
            rng.normal(size=(3, 2)), rng.normal(size=(7, 2)), [0, 1, 2], [0, 1, 2] * 2 + [0], [0] * 3, [1] * 7
        )

        for row in ranking.order:
            assert sorted(row) == list(range(7))
        assert isinstance(ranking, RankingResult)


class TestAttentionMetrics:
    """Test attention IoU and foreground preservation."""

    def test_iou_of_ground_truth_is_one(self):
        """Test a map equal to the mask scores 1."""
        gt = np.zeros((2, 4, 4), dtype=np.float32)
        gt[:, 1:3, 1:3] = 1

        assert attention_iou(gt[:, None], gt) == 1.0

    def test_iou_of_complement_is_zero(self):
        """Test the complement of the mask scores 0."""
        gt = np.zeros((1, 4, 4), dtype=np.float32)
        gt[:, :2] = 1

        assert attention_iou(1 - gt, gt) == 0.0

    def test_iou_matches_pixel_count_oracle(self):
        """Test random maps against per-image pixel counting."""
        rng = np.random.default_rng(7)
        maps = rng.random((5, 1, 6, 4))
        gt = (rng.random((5, 6, 4)) > 0.5).astype(np.float32)

        ious = []
        for n in range(5):
            inter = union = 0
            for i in range(6):
                for j in range(4):
                    pred = maps[n, 0, i, j] >= 0.5
                    truth = gt[n, i, j] > 0.5
                    inter += pred and truth
                    union += pred or truth
            ious.append(inter / union if union else 1.0)

        assert abs(attention_iou(torch.from_numpy(maps), gt) - float(np.mean(ious))) <= 1e-9

    def test_threshold_is_inclusive(self):
        """Test a map exactly at the threshold counts as foreground."""
        gt = np.ones((1, 2, 2), dtype=np.float32)

        assert attention_iou(np.full((1, 2, 2), 0.5), gt, threshold=0.5) == 1.0

    def test_missing_masks(self):
        """Test IoU without ground truth is a data error."""
        with pytest.raises(DataError):
            attention_iou(np.zeros((1, 2, 2)), None)
        with pytest.raises(DataError):
            attention_iou(np.zeros((1, 2, 2)), [None])

    def test_preservation_of_identical_images(self, image_batch):
        """Test composed equal to input gives zero error."""
        gt = np.ones((2, *image_batch.shape[2:]), dtype=np.float32)

        assert foreground_preservation(image_batch, image_batch.clone(), gt) == 0.0

    def test_preservation_of_constant_offset(self, image_batch):
        """Test a uniform +0.2 shift gives 0.2."""
        gt = np.zeros((2, *image_batch.shape[2:]), dtype=np.float32)
        gt[:, 4:12, 2:6] = 1

        assert foreground_preservation(image_batch, image_batch + 0.2, gt) == pytest.approx(0.2, abs=1e-6)

    def test_full_attention_over_foreground_preserves_it(self, image_batch):
        """Test a mask of 1 on the foreground keeps those pixels whatever the raw translation."""
        gt = np.zeros((2, *image_batch.shape[2:]), dtype=np.float32)
        gt[:, 4:12, 2:6] = 1
        raw = torch.rand_like(image_batch) * 2 - 1

        composed = compose(torch.from_numpy(gt)[:, None], image_batch, raw).composed

        assert foreground_preservation(image_batch, composed, gt) == 0.0

    def test_preservation_needs_foreground(self, image_batch):
        """Test an empty mask is rejected."""
        with pytest.raises(ValueError, match="empty"):
            foreground_preservation(image_batch, image_batch, np.zeros((2, 16, 8)))


class TestExtractEmbeddings:
    """Test batched embedding extraction."""

    def test_shape_norm_and_repeatability(self, domain_models, image_batch):
        """Test N x 128 unit vectors, identical across calls and batch sizes."""
        first = extract_embeddings(domain_models, image_batch, batch_size=1)
        second = extract_embeddings(domain_models, image_batch, batch_size=64)

        assert first.shape == (2, 128)
        np.testing.assert_allclose(np.linalg.norm(first, axis=1), 1.0, atol=1e-5)
        np.testing.assert_allclose(first, second, atol=1e-6)

    def test_training_mode_restored(self, domain_models, image_batch):
        """Test extraction leaves the model in its previous mode."""
        domain_models.train()

        extract_embeddings(domain_models, image_batch)

        assert domain_models.training


class TestExports:
    """Test ranking grids and CSV exports."""

    def test_ranking_grid_layout_and_borders(self, tmp_path):
        """Test one query with top-10 gives 11 bordered thumbnails in one row."""
        query = np.zeros((3, 8, 4), dtype=np.float32)
        gallery = [np.zeros((3, 8, 4), dtype=np.float32) for _ in range(10)]
        flags = [index % 3 == 0 for index in range(10)]

        path = export_ranking_grid(query, gallery, flags, tmp_path / "rank.png")

        pixels = np.asarray(Image.open(path).convert("RGB"))
        tile_h, tile_w = 8 + 4, 4 + 4
        assert pixels.shape == (tile_h + 4, 11 * (tile_w + 2) + 2, 3)
        corners = [tuple(pixels[2, 2 + t * (tile_w + 2)]) for t in range(11)]
        assert corners[0] == (128, 128, 128)
        for flag, corner in zip(flags, corners[1:]):
            assert corner == ((0, 255, 0) if flag else (255, 0, 0))

    def test_ranking_grid_reexport_is_byte_identical(self, tmp_path):
        """Test identical inputs give identical files."""
        rng = np.random.default_rng(0)
        queries = [rng.uniform(-1, 1, (3, 8, 4)).astype(np.float32) for _ in range(2)]
        galleries = [[rng.uniform(-1, 1, (3, 8, 4)).astype(np.float32) for _ in range(3)] for _ in range(2)]
        flags = [[True, False, False], [False, True, False]]

        first = export_ranking_grid(queries, galleries, flags, tmp_path / "a.png")
        second = export_ranking_grid(queries, galleries, flags, tmp_path / "b.png")

        assert first.read_bytes() == second.read_bytes()

    def test_ranking_grid_flag_length_mismatch(self, tmp_path):
        """Test flags must cover every ranked thumbnail."""
        image = np.zeros((3, 8, 4), dtype=np.float32)

        with pytest.raises(ValueError):
            export_ranking_grid(image, [image, image], [True], tmp_path / "bad.png")

    def test_metrics_csv_round_trip(self, tmp_path):
        """Test records survive the CSV, with an empty k for unranked metrics."""
        records = [
            MetricRecord(metric="cmc", k=1, value=0.5),
            MetricRecord(metric="cmc", k=5, value=0.75),
            MetricRecord(metric="map", value=0.625),
        ]

        path = write_metrics_csv(records, tmp_path / "metrics.csv")

        assert path.read_text().splitlines() == [
            "metric,k,value",
            "cmc,1,0.5",
            "cmc,5,0.75",
            "map,,0.625",
        ]
        assert [r.model_dump() for r in read_metrics_csv(path)] == [r.model_dump() for r in records]

    def test_embeddings_csv_columns(self, synthetic_domains, tmp_path):
        """Test embeddings rows carry path, identity, camera and 128 values."""
        items = synthetic_domains[1][:3]

        path = write_embeddings_csv(items, np.zeros((3, 128)), tmp_path / "emb.csv")

        frame = pd.read_csv(path)
        assert list(frame.columns[:3]) == ["image_path", "identity", "camera"]
        assert list(frame.columns[3:]) == [f"e{i}" for i in range(128)]
        assert list(frame["identity"]) == [item.identity for item in items]

    def test_embeddings_count_mismatch(self, synthetic_domains, tmp_path):
        """Test one embedding per image is required."""
        with pytest.raises(ValueError):
            write_embeddings_csv(synthetic_domains[1][:3], np.zeros((2, 128)), tmp_path / "e.csv")


class TestEvaluator:
    """Test evaluation of a model set on synthetic splits."""

    @pytest.fixture
    def target_splits(self, synthetic_domains):
        return split_train_query_gallery(synthetic_domains[1], ProtocolConfig())

    def test_retrieval_report(self, domain_models, target_splits):
        """Test CMC rows per k plus mAP, all within [0, 1]."""
        outcome = evaluate_retrieval(domain_models, target_splits, EvaluationConfig(ks=[2, 1]))

        values = outcome.report.as_dict()
        assert list(values) == ["cmc@1", "cmc@2", "map"]
        assert all(0.0 <= v <= 1.0 for v in values.values())
        assert values["cmc@1"] <= values["cmc@2"]
        assert outcome.report.num_queries == len(target_splits.query)
        assert outcome.query_embeddings.shape == (len(target_splits.query), 128)

    def test_empty_query_rejected(self, domain_models, target_splits):
        """Test evaluation needs queries."""
        empty = target_splits.model_copy(update={"query": []})

        with pytest.raises(DataError):
            evaluate_retrieval(domain_models, empty, EvaluationConfig())

    def test_attention_rows_with_masks(self, domain_models, target_splits, synthetic_domains):
        """Test synthetic masks add attention IoU and foreground MAE rows."""
        source, target = synthetic_domains

        outcome = evaluate_models(
            domain_models,
            target_splits,
            EvaluationConfig(ks=[1]),
            attention_models=domain_models,
            attention_sets={"source": source[:4], "target": target[:4]},
        )

        labels = list(outcome.report.as_dict())
        assert labels == ["cmc@1", "map", "attn_iou", "fg_mae"]
        assert 0.0 <= outcome.report.as_dict()["attn_iou"] <= 1.0

    def test_attention_rows_absent_without_masks(self, domain_models, target_splits, synthetic_domains):
        """Test real-style images without masks skip the attention rows."""
        unmasked = [item.model_copy(update={"gt_mask": None}) for item in synthetic_domains[1][:4]]

        outcome = evaluate_models(
            domain_models,
            target_splits,
            EvaluationConfig(ks=[1]),
            attention_models=domain_models,
            attention_sets={"target": unmasked},
        )

        assert "attn_iou" not in outcome.report.as_dict()

    def test_attention_disabled_scores_zero_mask(self, domain_models, synthetic_domains):
        """Test the no-attention variant is scored with an all-background mask."""
        source = synthetic_domains[0][:4]

        records = evaluate_attention(domain_models, {"source": source}, attention_enabled=False)

        gt = np.stack([item.gt_mask for item in source])
        expected_iou = float(np.mean([1.0 if m.sum() == 0 else 0.0 for m in gt]))
        assert records[0].metric == "attn_iou"
        assert records[0].value == pytest.approx(expected_iou)

    def test_outputs_written_and_repeatable(self, domain_models, target_splits, tmp_path):
        """Test metrics, embeddings and ranking grid files, identical on re-evaluation."""
        config = EvaluationConfig(ks=[1, 2], num_ranking_queries=2, ranking_top_k=2)

        first = write_evaluation_outputs(
            evaluate_retrieval(domain_models, target_splits, config), target_splits, tmp_path / "a", config
        )
        second = write_evaluation_outputs(
            evaluate_retrieval(domain_models, target_splits, config), target_splits, tmp_path / "b", config
        )

        assert set(first) == {"metrics", "embeddings", "rankings"}
        assert first["metrics"].read_bytes() == second["metrics"].read_bytes()
        assert first["rankings"].read_bytes() == second["rankings"].read_bytes()
        embeddings = pd.read_csv(first["embeddings"])
        assert len(embeddings) == len(target_splits.query) + len(target_splits.gallery)
