# Repositories package
from app.db.repositories.runs import RunRepository

__all__ = ["RunRepository"]
