#!/usr/bin/env python3
"""
Runs the ablation grid on the synthetic desk benchmark: two-stage and end-to-end
training, each with and without attention, over several seeds. Every run is
evaluated, stored in the results database and the variant ordering is checked
on the median across seeds.
"""
import logging
import sys
from typing import Dict, List, Optional, Sequence, Tuple

import click

from attnreid import pipeline
from attnreid.database.repository import RunRepository
from attnreid.utils.config_loader import load_run_config

logging.basicConfig(
    level=logging.INFO,
    format="%(asctime)s - %(levelname)s - %(message)s"
)
logger = logging.getLogger(__name__)

# (mode, attention_enabled)
VARIANTS: List[Tuple[str, bool]] = [
    ("daan_two_stage", False),
    ("daan_two_stage", True),
    ("edaan_end_to_end", False),
    ("edaan_end_to_end", True),
]
DEFAULT_SEEDS = (0, 1, 2)
RUN_PREFIX = "ablation_"


class AblationRunner:
    """
    Trains and evaluates every ablation variant for every seed.
    """

    def __init__(self, config_path: str = None, overrides: Sequence[str] = ()):
        """
        Initialize the runner.

        Args:
            config_path: Base YAML run config
            overrides: Extra --set style overrides applied to every run
        """
        self.config_path = config_path
        self.overrides = list(overrides)
        self.base = load_run_config(config_path, self.overrides)
        self.repository = RunRepository(pipeline.database_url(self.base))
        self._summary: Optional[Dict[Tuple[str, bool, str, Optional[int]], float]] = None

    def _config(self, mode: str, attention: bool, seed: int):
        tag = "attn" if attention else "noattn"
        return load_run_config(
            self.config_path,
            self.overrides
            + [
                f"name={RUN_PREFIX}{mode}_{tag}_s{seed}",
                f"train.mode={mode}",
                f"train.attention_enabled={str(attention).lower()}",
                f"train.seed={seed}",
            ],
        )

    def run_variant(self, mode: str, attention: bool, seed: int) -> Dict[str, float]:
        config = self._config(mode, attention, seed)
        logger.info(f"Training {config.name}")
        result = pipeline.run_training(config)
        evaluation = pipeline.run_evaluation(result.final_checkpoint, config)
        metrics = evaluation.outcome.report.as_dict()
        logger.info(f"{config.name}: {metrics}")
        return metrics

    def run_all(self, seeds: Sequence[int]) -> int:
        """
        Run every variant for every seed.

        Returns:
            Number of failed runs
        """
        if not pipeline.dataset_dirs(self.base)[0].exists():
            logger.info("Synthetic dataset missing, generating it")
            pipeline.generate_dataset(self.base)

        errors = 0
        for mode, attention in VARIANTS:
            for seed in seeds:
                try:
                    self.run_variant(mode, attention, seed)
                except Exception as e:
                    logger.error(f"Variant {mode}/attention={attention}/seed={seed} failed: {e}")
                    errors += 1
        self._summary = None
        return errors

    def median(self, mode: str, attention: bool, label: str) -> float:
        """
        Median of a metric label such as "cmc@1" or "fg_mae" across the stored seeds.

        Returns:
            The median, or NaN if no run of the variant reported the metric
        """
        if self._summary is None:
            metric_loss = self.base.train.metric_loss
            self._summary = {
                (row["mode"], row["attention_enabled"], row["metric"], row["k"]): row["median"]
                for row in self.repository.ablation_summary(name_prefix=RUN_PREFIX)
                if row["metric_loss"] == metric_loss
            }
        metric, _, k = label.partition("@")
        key = (mode, attention, metric, int(k) if k else None)
        return self._summary.get(key, float("nan"))

    def check_ordering(self) -> bool:
        """
        Expected ordering: end-to-end >= two-stage >= no-attention on rank-1, and
        attention lowering the foreground MAE.
        """
        rank1 = {v: self.median(*v, "cmc@1") for v in VARIANTS}
        fg = {v: self.median(*v, "fg_mae") for v in VARIANTS}
        checks = {
            "edaan rank-1 >= daan rank-1": rank1[("edaan_end_to_end", True)]
            >= rank1[("daan_two_stage", True)],
            "daan rank-1 >= daan without attention": rank1[("daan_two_stage", True)]
            >= rank1[("daan_two_stage", False)],
            "edaan rank-1 >= edaan without attention": rank1[("edaan_end_to_end", True)]
            >= rank1[("edaan_end_to_end", False)],
            "attention lowers fg MAE": fg[("edaan_end_to_end", True)]
            < fg[("edaan_end_to_end", False)],
            "attention IoU > 0.5": self.median("edaan_end_to_end", True, "attn_iou") > 0.5,
        }
        for name, passed in checks.items():
            logger.info(f"{'PASS' if passed else 'FAIL'}: {name}")
        return all(checks.values())


@click.command()
@click.option("--config", "-c", "config_path", help="Base YAML run config")
@click.option("--set", "overrides", multiple=True, metavar="KEY=VALUE")
@click.option("--seed", "seeds", type=int, multiple=True, default=DEFAULT_SEEDS, show_default=True)
def main(config_path, overrides, seeds):
    """
    Main entry point.
    """
    logger.info("Starting ablation grid...")
    try:
        runner = AblationRunner(config_path, overrides)
        errors = runner.run_all(seeds)
        ordered = runner.check_ordering()

        if errors == 0 and ordered:
            logger.info("Ablation completed, ordering holds")
            sys.exit(0)
        else:
            logger.error(f"Ablation completed with {errors} failed runs, ordering holds: {ordered}")
            sys.exit(1)

    except KeyboardInterrupt:
        logger.info("Ablation cancelled by user")
        sys.exit(130)
    except Exception as e:
        logger.error(f"Unexpected error: {e}")
        sys.exit(1)


if __name__ == "__main__":
    main()
