"""
SQLAlchemy database models for evaluated runs.
"""

from datetime import datetime, timezone

from sqlalchemy import (
    Boolean,
    Column,
    DateTime,
    Float,
    ForeignKey,
    Integer,
    String,
    create_engine,
)
from sqlalchemy.orm import declarative_base, relationship, sessionmaker

Base = declarative_base()


def _now():
    return datetime.now(timezone.utc)


class Run(Base):
    """Database model for an evaluated training run."""

    __tablename__ = "runs"

    run_id = Column(String(32), primary_key=True)
    name = Column(String(100), nullable=False)
    mode = Column(String(32), nullable=False)
    attention_enabled = Column(Boolean, nullable=False)
    metric_loss = Column(String(16), nullable=False, default="quartet")
    seed = Column(Integer, nullable=False, default=0)
    checkpoint = Column(String(512), nullable=False)
    evaluation_domain = Column(String(16), nullable=False, default="target")
    created_at = Column(DateTime, default=_now)

    # Relationships
    metrics = relationship("Metric", back_populates="run", cascade="all, delete-orphan")


class Metric(Base):
    """Database model for one metrics row of a run."""

    __tablename__ = "metrics"

    metric_row_id = Column(Integer, primary_key=True, autoincrement=True)
    run_id = Column(String(32), ForeignKey("runs.run_id"), nullable=False)
    metric = Column(String(32), nullable=False)
    k = Column(Integer, nullable=True)
    value = Column(Float, nullable=False)

    # Relationships
    run = relationship("Run", back_populates="metrics")


class DatabaseEngine:
    """Database engine and session management."""

    def __init__(self, database_url: str = "sqlite:///results.db"):
        """
        Initialize database engine.

        Args:
            database_url: SQLAlchemy database URL
        """
        self.engine = create_engine(database_url, echo=False)
        self.SessionLocal = sessionmaker(autocommit=False, autoflush=False, bind=self.engine)

    def create_tables(self):
        """Create all tables."""
        Base.metadata.create_all(bind=self.engine)

    def get_session(self):
        """Get a new database session."""
        return self.SessionLocal()

    def drop_tables(self):
        """Drop all tables (for testing/reset)."""
        Base.metadata.drop_all(bind=self.engine)
