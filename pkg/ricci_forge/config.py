"""
Конфігурація та константи для перевірки метрик
"""

import logging
import os
from pathlib import Path
from typing import Optional

from dotenv import load_dotenv

PROJECT_ROOT = Path(__file__).parent.parent
load_dotenv(PROJECT_ROOT / ".env")

# Налаштування логування
LOG_LEVEL = os.environ.get("RICCI_FORGE_LOG_LEVEL", "INFO").upper()
logging.basicConfig(level=getattr(logging, LOG_LEVEL, logging.INFO))
logger = logging.getLogger("ricci_forge")

TOOLKIT_VERSION = "1.0.0"

# Директорія для звітів (RICCI_FORGE_OUT має пріоритет)
DEFAULT_OUTPUT_DIR = PROJECT_ROOT / "data" / "reports"

# Обмеження потоків (None = всі ядра)
def parse_threads(raw: Optional[str]) -> Optional[int]:
    """RICCI_FORGE_THREADS -> додатне ціле або None"""
    if not raw:
        return None
    try:
        threads = int(raw)
    except ValueError:
        logger.warning(f"⚠️ RICCI_FORGE_THREADS={raw!r} не є цілим числом, використовуємо всі ядра")
        return None
    if threads < 1:
        logger.warning(f"⚠️ RICCI_FORGE_THREADS={threads} < 1, використовуємо всі ядра")
        return None
    return threads


MAX_THREADS = parse_threads(os.environ.get("RICCI_FORGE_THREADS"))

# Допуски профілів
CONTINUITY_TOL = 1e-12
DERIVATIVE_JUMP_TOL = 1e-8
CONCAVITY_SLACK = 1e-10
LIPSCHITZ_SLACK = 1e-9
JUMP_REPORT_FLOOR = 1e-13  # менші стрибки вважаємо шумом округлення
TABLE_SPACING_FRACTION = 1e-3  # крок таблиці = частка довжини табличного відрізка
MIN_TABLE_NODES = 4
MIN_REGULARITY_NODES = 16

# Ядро згладжування
KERNEL_RADIUS = 0.25
KERNEL_PANELS = 24  # панелі складеної квадратури Гауса на вікні ядра
KERNEL_GAUSS_NODES = 12
RAMP_GAUSS_NODES = 96  # квадратура первісних бампа в замкненій формі згладженого зламу
RAMP_CUTOFF = 3.0  # exp(-cosh(3)^2) < 1e-43

# Сертифікати кривини
DEFAULT_GRID_STEP = 1e-3
DEFAULT_CERT_TOL = 1e-8
THRESHOLD_TOL = 1e-6

# Тензорний оракул
ORACLE_STEP = 1e-4
EH_MARGIN = 0.05  # r >= a(1 + EH_MARGIN)
ORACLE_CERT_TOL = 1e-4

# Конформна модифікація
CONFORMAL_FLAT_END = 0.25  # h = 1 на (0, 1/4)
CONFORMAL_TANGENT_POINT = 0.7  # точка дотику до 1 + s^2
CONFORMAL_KERNEL_RADIUS = 0.08
MODEL_BLEND_INNER = 0.1  # chi = 1 на (1 - 0.1, 1 + 0.1)
MODEL_BLEND_OUTER = 0.2  # chi = 0 поза (1 - 0.2, 1 + 0.2)

# Простори та GH
KNN_NEIGHBORS = 12
TRIANGLE_CHECK_TRIPLES = 1000
MC_MIN_SAMPLES = 10_000
MC_CHUNK = 100_000

# Записані пороги (отримані threshold_search на сітці (0.01, 50), крок 1e-3).
# Поріг Бергера лежить у (0.01, 1); значення оновлюється командою `threshold`.
BERGER_THRESHOLD_N4 = 0.13
