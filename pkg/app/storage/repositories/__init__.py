# Repositories package
from app.storage.repositories.convergence import ConvergenceRepository
from app.storage.repositories.reports import ReportRepository
from app.storage.repositories.spaces import SpaceRepository
from app.storage.repositories.specs import SpecRepository

__all__ = ["ReportRepository", "SpecRepository", "SpaceRepository", "ConvergenceRepository"]
