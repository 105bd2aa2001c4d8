"""
Space repository.
Вибрані простори: точки (r, x1..x4, orbit_label) та матриця відстаней.
"""
from pathlib import Path
from typing import Dict

from app.storage.repositories.reports import ReportRepository
from ricci_forge.spaces import SampledSpace

POINT_COLUMNS = ("r", "x1", "x2", "x3", "x4", "orbit_label")


class SpaceRepository:

    def __init__(self, reports: ReportRepository):
        self.reports = reports

    def save_space(self, space: SampledSpace, stem: str = "space") -> Dict[str, Path]:
        points = [
            [float(r), *(float(x) for x in fiber), label]
            for r, fiber, label in zip(space.radii, space.fibers, space.orbit_labels)
        ]
        comments = {"resolution": repr(space.resolution), "seed": space.seed,
                    "source": space.source_kind, "group": space.group}
        return {
            "points": self.reports.save_csv(f"{stem}_points.csv", POINT_COLUMNS, points),
            "distances": self.reports.save_csv(
                f"{stem}_distances.csv", [f"p{j}" for j in range(space.size)],
                space.distances.tolist(), comments=comments),
        }
