"""
Spec repository.
Сімейства метрик, їх профілі та сертифікати.
"""
from pathlib import Path
from typing import Dict, Optional

import numpy as np

from app.storage.repositories.reports import ReportRepository
from ricci_forge.constructions import MetricFamilySpec
from ricci_forge.curvature import CurvatureCertificate, ThresholdResult
from ricci_forge.profiles import ScalarProfile

PROFILE_COLUMNS = ("r", "value", "d1", "d2")
PROFILE_NODES = 2001


class SpecRepository:
    """Запис сімейств, профілів, сертифікатів та порогів"""

    def __init__(self, reports: ReportRepository):
        self.reports = reports

    def save_spec(self, spec: MetricFamilySpec, name: Optional[str] = None) -> Path:
        return self.reports.save_json(name or f"{spec.kind}_spec.json", "family_spec", spec.to_dict())

    def save_profile(self, profile: ScalarProfile, grid: Optional[np.ndarray] = None,
                     stem: Optional[str] = None) -> Dict[str, Path]:
        """JSON з кусками та CSV (r, value, d1, d2) на сітці"""
        stem = stem or profile.name or "profile"
        if grid is None:
            lo, hi = profile.domain
            grid = np.linspace(lo, hi, PROFILE_NODES)
        table = profile.grid_table(grid)
        return {
            "json": self.reports.save_json(f"{stem}.json", "profile", profile.to_dict()),
            "csv": self.reports.save_csv(f"{stem}.csv", PROFILE_COLUMNS, table.tolist()),
        }

    def save_spec_profiles(self, spec: MetricFamilySpec) -> Dict[str, Dict[str, Path]]:
        return {name: self.save_profile(profile, stem=f"{spec.kind}_{name}")
                for name, profile in spec.profiles.items()}

    def save_certificate(self, certificate: CurvatureCertificate, name: str = "certificate.json") -> Path:
        return self.reports.save_json(name, "curvature_certificate", certificate.model_dump())

    def save_threshold(self, result: ThresholdResult, name: str = "threshold.json") -> Path:
        return self.reports.save_json(name, "threshold", result.model_dump())

    def load_spec(self, path: Path) -> MetricFamilySpec:
        envelope = ReportRepository.load_json(path)
        return MetricFamilySpec.from_dict(envelope.payload)
