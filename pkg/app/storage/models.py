"""
Схеми звітів: кожен JSON загорнутий у конверт з конфігурацією та версією.
"""
import math
from datetime import datetime
from typing import Any, Dict

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from ricci_forge.config import TOOLKIT_VERSION


def plain(value: Any) -> Any:
    """numpy -> вбудовані типи Python (рекурсивно)"""
    if isinstance(value, dict):
        return {str(key): plain(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [plain(item) for item in value]
    if isinstance(value, np.ndarray):
        return plain(value.tolist())
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, BaseModel):
        return plain(value.model_dump())
    return value


class ReportEnvelope(BaseModel):
    """Конверт звіту"""
    model_config = ConfigDict(ser_json_inf_nan="constants")

    kind: str
    toolkit_version: str = TOOLKIT_VERSION
    run_id: str
    config: Dict[str, Any]
    payload: Dict[str, Any]
    created_at: datetime = Field(default_factory=datetime.utcnow)

    @classmethod
    def wrap(cls, kind: str, run_id: str, config: Dict[str, Any], payload: Any) -> "ReportEnvelope":
        return cls(kind=kind, run_id=run_id, config=plain(config), payload=plain(payload))


def csv_number(value: float) -> str:
    """repr для скінченних чисел, inf/-inf/nan текстом"""
    if isinstance(value, float) and not math.isfinite(value):
        return str(value)
    return repr(float(value)) if isinstance(value, (float, np.floating)) else str(value)
