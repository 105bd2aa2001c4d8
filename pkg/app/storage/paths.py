"""
Розташування звітів.
Пріоритет: явний прапорець --out, потім RICCI_FORGE_OUT, потім data/reports.
"""
import os
from pathlib import Path
from typing import Optional, Union

from ricci_forge.config import DEFAULT_OUTPUT_DIR

OUTPUT_ENV = "RICCI_FORGE_OUT"


def resolve_output_dir(explicit: Optional[Union[str, Path]] = None) -> Path:
    if explicit:
        out = Path(explicit)
    elif os.environ.get(OUTPUT_ENV):
        out = Path(os.environ[OUTPUT_ENV])
    else:
        out = DEFAULT_OUTPUT_DIR
    out.mkdir(parents=True, exist_ok=True)
    return out


def artifact_path(output_dir: Path, run_id: str, name: str) -> Path:
    """output_dir/<run_id>/<name>"""
    path = output_dir / run_id / name
    path.parent.mkdir(parents=True, exist_ok=True)
    return path
