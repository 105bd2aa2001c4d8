"""
Report repository.
Запис і читання JSON-звітів та CSV-таблиць одного запуску.
"""
import csv
import json
import logging
from pathlib import Path
from typing import Any, Dict, Iterable, Optional, Sequence

from app.storage.models import ReportEnvelope, csv_number
from app.storage.paths import artifact_path

logger = logging.getLogger(__name__)


class ReportRepository:
    """Repository pattern для артефактів запуску в output_dir/<run_id>/"""

    def __init__(self, output_dir: Path, run_id: str, config: Optional[Dict[str, Any]] = None):
        self.output_dir = Path(output_dir)
        self.run_id = run_id
        self.config = config or {}

    def path(self, name: str) -> Path:
        return artifact_path(self.output_dir, self.run_id, name)

    def save_json(self, name: str, kind: str, payload: Any) -> Path:
        envelope = ReportEnvelope.wrap(kind, self.run_id, self.config, payload)
        path = self.path(name)
        path.write_text(envelope.model_dump_json(indent=2) + "\n", encoding="utf-8")
        logger.info(f"💾 Звіт {kind} збережено: {path}")
        return path

    def save_csv(self, name: str, header: Sequence[str], rows: Iterable[Sequence[Any]],
                 comments: Optional[Dict[str, Any]] = None) -> Path:
        """CSV з необов'язковими рядками-коментарями '# key=value' перед заголовком"""
        path = self.path(name)
        with path.open("w", newline="", encoding="utf-8") as handle:
            for key, value in (comments or {}).items():
                handle.write(f"# {key}={value}\n")
            writer = csv.writer(handle)
            writer.writerow(header)
            for row in rows:
                writer.writerow([csv_number(value) if isinstance(value, float) else value for value in row])
        logger.info(f"💾 Таблиця збережена: {path}")
        return path

    @staticmethod
    def load_json(path: Path) -> ReportEnvelope:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        return ReportEnvelope.model_validate(data)

    @staticmethod
    def load_csv(path: Path) -> Dict[str, Any]:
        """{'comments': {...}, 'header': [...], 'rows': [[...], ...]}"""
        comments: Dict[str, str] = {}
        lines = []
        for line in Path(path).read_text(encoding="utf-8").splitlines():
            if line.startswith("# "):
                key, _, value = line[2:].partition("=")
                comments[key] = value
            else:
                lines.append(line)
        reader = csv.reader(lines)
        header = next(reader)
        return {"comments": comments, "header": header, "rows": [row for row in reader]}
