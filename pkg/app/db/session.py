"""
Керування сесіями реєстру запусків.
"""
from pathlib import Path
from typing import Union

from sqlmodel import Session

from app.db.engine import get_engine
from app.db.init_db import init_db


def get_db_session(output_dir: Union[str, Path]) -> Session:
    """
    Сесія для реєстру в output_dir (таблиці створюються за потреби).

    Usage:
        with get_db_session(out) as session:
            RunRepository(session).create(...)
    """
    engine = get_engine(str(output_dir))
    init_db(engine)
    return Session(engine)
