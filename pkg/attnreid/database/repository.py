"""
Repository pattern implementation for the results store.
"""

import logging
from contextlib import contextmanager
from typing import Any, Dict, List, Optional, Sequence

import pandas as pd
from sqlalchemy.exc import SQLAlchemyError

from ..models import MetricRecord, RunRecord
from .models import DatabaseEngine, Metric, Run

logger = logging.getLogger(__name__)


class RunRepository:
    """Repository for evaluated runs with proper error handling."""

    def __init__(self, database_url: str = "sqlite:///results.db"):
        """
        Initialize repository with database connection.

        Args:
            database_url: SQLAlchemy database URL
        """
        self.db_engine = DatabaseEngine(database_url)
        self.db_engine.create_tables()

    @contextmanager
    def get_session(self):
        """Context manager for database sessions with automatic cleanup."""
        session = self.db_engine.get_session()
        try:
            yield session
            session.commit()
        except Exception:
            session.rollback()
            raise
        finally:
            session.close()

    def record_run(self, run: RunRecord, records: Sequence[MetricRecord]) -> bool:
        """
        Store a run and its metrics, replacing metrics of an earlier evaluation.

        Args:
            run: Run identity
            records: Metric rows of the evaluation

        Returns:
            True if successful, False otherwise
        """
        try:
            with self.get_session() as session:
                db_run = session.query(Run).filter(Run.run_id == run.run_id).first()
                if db_run is None:
                    db_run = Run(run_id=run.run_id)
                    session.add(db_run)
                db_run.name = run.name
                db_run.mode = run.mode
                db_run.attention_enabled = run.attention_enabled
                db_run.metric_loss = run.metric_loss
                db_run.seed = run.seed
                db_run.checkpoint = run.checkpoint
                db_run.evaluation_domain = run.evaluation_domain
                db_run.metrics = [
                    Metric(metric=r.metric, k=r.k, value=r.value) for r in records
                ]
                logger.debug(f"Recorded run {run.name} with {len(records)} metrics")
                return True
        except SQLAlchemyError as e:
            logger.error(f"Failed to record run {run.name}: {e}")
            return False

    def get_all_runs(self) -> List[Dict[str, Any]]:
        """
        Get all runs from the database, oldest first.

        Returns:
            List of run dictionaries
        """
        try:
            with self.get_session() as session:
                runs = session.query(Run).order_by(Run.created_at, Run.run_id).all()
                return [
                    {
                        "run_id": r.run_id,
                        "name": r.name,
                        "mode": r.mode,
                        "attention_enabled": r.attention_enabled,
                        "metric_loss": r.metric_loss,
                        "seed": r.seed,
                        "checkpoint": r.checkpoint,
                        "evaluation_domain": r.evaluation_domain,
                        "created_at": r.created_at.isoformat(),
                    }
                    for r in runs
                ]
        except SQLAlchemyError as e:
            logger.error(f"Failed to retrieve runs: {e}")
            return []

    def get_metrics(self, run_id: str) -> List[Dict[str, Any]]:
        """
        Get the metrics of one run.

        Args:
            run_id: ID of the run

        Returns:
            List of metric dictionaries
        """
        try:
            with self.get_session() as session:
                metrics = (
                    session.query(Metric)
                    .filter(Metric.run_id == run_id)
                    .order_by(Metric.metric_row_id)
                    .all()
                )
                return [{"metric": m.metric, "k": m.k, "value": m.value} for m in metrics]
        except SQLAlchemyError as e:
            logger.error(f"Failed to retrieve metrics for run {run_id}: {e}")
            return []

    def ablation_summary(self, name_prefix: Optional[str] = None) -> List[Dict[str, Any]]:
        """
        Median of every metric across seeds, per (mode, attention, metric loss) variant.

        Args:
            name_prefix: Only summarize runs whose name starts with this prefix

        Returns:
            List of dictionaries with mode, attention_enabled, metric_loss, metric, k,
            median and num_runs
        """
        try:
            with self.get_session() as session:
                query = (
                    session.query(
                        Run.mode,
                        Run.attention_enabled,
                        Run.metric_loss,
                        Run.run_id,
                        Metric.metric,
                        Metric.k,
                        Metric.value,
                    )
                    .join(Metric, Metric.run_id == Run.run_id)
                )
                if name_prefix:
                    query = query.filter(Run.name.startswith(name_prefix, autoescape=True))
                rows = query.all()
        except SQLAlchemyError as e:
            logger.error(f"Failed to build ablation summary: {e}")
            return []

        if not rows:
            return []
        frame = pd.DataFrame(
            rows,
            columns=["mode", "attention_enabled", "metric_loss", "run_id", "metric", "k", "value"],
        )
        frame["k"] = frame["k"].fillna(-1).astype(int)
        summary = (
            frame.groupby(["mode", "attention_enabled", "metric_loss", "metric", "k"])
            .agg(median=("value", "median"), num_runs=("run_id", "nunique"))
            .reset_index()
        )
        return [
            {
                "mode": row.mode,
                "attention_enabled": bool(row.attention_enabled),
                "metric_loss": row.metric_loss,
                "metric": row.metric,
                "k": None if row.k < 0 else int(row.k),
                "median": float(row.median),
                "num_runs": int(row.num_runs),
            }
            for row in summary.itertuples(index=False)
        ]
