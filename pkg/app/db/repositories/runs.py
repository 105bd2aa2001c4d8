"""
Run repository.
Усі операції з реєстром запусків.
"""
from datetime import datetime
from typing import List, Optional

from sqlmodel import Session, select

from app.db.models import RunRecord, RunStatus


class RunRepository:
    """Repository pattern для роботи з runs."""

    def __init__(self, session: Session):
        self.session = session

    def create(self, run_id: str, command: str, config_json: str, toolkit_version: str,
               seed: Optional[int] = None) -> RunRecord:
        """Новий запис зі статусом running"""
        run = RunRecord(id=run_id, command=command, config_json=config_json,
                        toolkit_version=toolkit_version, seed=seed)
        self.session.add(run)
        self.session.commit()
        self.session.refresh(run)
        return run

    def get_by_id(self, run_id: str) -> Optional[RunRecord]:
        statement = select(RunRecord).where(RunRecord.id == run_id)
        return self.session.exec(statement).first()

    def get_recent(self, limit: int = 50, command: Optional[str] = None) -> List[RunRecord]:
        statement = select(RunRecord)
        if command:
            statement = statement.where(RunRecord.command == command)
        statement = statement.order_by(RunRecord.created_at.desc()).limit(limit)
        return list(self.session.exec(statement).all())

    def get_by_status(self, status: str, limit: int = 100) -> List[RunRecord]:
        statement = (
            select(RunRecord)
            .where(RunRecord.status == status)
            .order_by(RunRecord.created_at.desc())
            .limit(limit)
        )
        return list(self.session.exec(statement).all())

    def finish(self, run_id: str, status: RunStatus, exit_code: int,
               report_path: Optional[str] = None, error_message: Optional[str] = None) -> Optional[RunRecord]:
        """Фіналізує запуск: статус, код виходу, тривалість"""
        run = self.get_by_id(run_id)
        if not run:
            return None
        run.status = status.value
        run.exit_code = exit_code
        run.completed_at = datetime.utcnow()
        run.duration_sec = (run.completed_at - run.created_at).total_seconds()
        if report_path:
            run.report_path = report_path
        if error_message:
            run.error_message = error_message[:2000]
        self.session.add(run)
        self.session.commit()
        self.session.refresh(run)
        return run
