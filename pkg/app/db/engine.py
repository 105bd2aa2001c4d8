"""
SQLite engine для реєстру запусків.
Файл бази лежить у директорії звітів поруч з артефактами.
"""
from functools import lru_cache
from pathlib import Path

from sqlalchemy import event
from sqlalchemy.engine import Engine
from sqlmodel import create_engine

DB_FILENAME = "runs.db"


@lru_cache(maxsize=8)
def get_engine(output_dir: str) -> Engine:
    """Engine для output_dir/runs.db (один на директорію)"""
    db_path = Path(output_dir) / DB_FILENAME
    db_path.parent.mkdir(parents=True, exist_ok=True)
    engine = create_engine(
        f"sqlite:///{db_path}",
        echo=False,
        connect_args={"check_same_thread": False},
    )

    @event.listens_for(engine, "connect")
    def set_sqlite_pragma(dbapi_connection, connection_record):
        # WAL: паралельні читання звітів під час запису
        cursor = dbapi_connection.cursor()
        cursor.execute("PRAGMA journal_mode=WAL;")
        cursor.execute("PRAGMA synchronous=NORMAL;")
        cursor.close()

    return engine
