"""
SQLModel моделі реєстру запусків.
"""
from datetime import datetime
from enum import Enum
from typing import Optional

from sqlmodel import Field, Index, SQLModel


class RunStatus(str, Enum):
    """Статус запуску"""
    running = "running"
    completed = "completed"
    certificate_failed = "certificate_failed"
    failed = "failed"


class RunRecord(SQLModel, table=True):
    """Один виклик підкоманди CLI"""

    __tablename__ = "runs"
    __table_args__ = (
        Index("idx_runs_status", "status"),
        Index("idx_runs_command", "command"),
        Index("idx_runs_created_at", "created_at"),
    )

    id: str = Field(primary_key=True, max_length=64)
    command: str = Field(max_length=50)
    status: str = Field(default=RunStatus.running.value, max_length=50)
    created_at: datetime = Field(default_factory=datetime.utcnow)
    completed_at: Optional[datetime] = Field(default=None)
    duration_sec: Optional[float] = Field(default=None)

    toolkit_version: str = Field(max_length=20)
    seed: Optional[int] = Field(default=None)
    config_json: str

    # Шлях до головного звіту та код виходу
    report_path: Optional[str] = Field(default=None, max_length=1000)
    exit_code: Optional[int] = Field(default=None)
    error_message: Optional[str] = Field(default=None, max_length=2000)
