"""
Створення таблиць реєстру запусків.
"""
import logging

from sqlalchemy.engine import Engine
from sqlmodel import SQLModel

from app.db.models import RunRecord  # noqa: F401  (реєстрація таблиці в metadata)

logger = logging.getLogger(__name__)


def init_db(engine: Engine) -> None:
    """Створює відсутні таблиці"""
    SQLModel.metadata.create_all(engine)
    logger.debug(f"🗄️ Таблиці реєстру готові: {engine.url}")
