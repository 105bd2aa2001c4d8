"""
Convergence repository.
Таблиця збіжності: CSV з основними стовпцями та JSON зі свідками.
"""
from pathlib import Path
from typing import Dict

from app.storage.repositories.reports import ReportRepository
from ricci_forge.gh import ConvergenceTable


class ConvergenceRepository:

    def __init__(self, reports: ReportRepository):
        self.reports = reports

    def save_table(self, table: ConvergenceTable, stem: str = "convergence") -> Dict[str, Path]:
        return {
            "csv": self.reports.save_csv(f"{stem}.csv", table.CSV_COLUMNS, table.csv_rows(),
                                         comments={"c": repr(table.c), "seed": table.seed,
                                                   "n_points": table.n_points}),
            "json": self.reports.save_json(f"{stem}.json", "convergence_table", table.model_dump()),
        }
