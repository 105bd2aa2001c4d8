"""
Контроль пам'яті для щільних матриць відстаней.
Вибірка з N точок тримає кілька матриць N x N float64 одночасно
(ваги, граф, геодезичні, буфери GH), тому розмір перевіряється до алокації.
"""

import gc
import logging
import os
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Iterator, Optional

import psutil

logger = logging.getLogger(__name__)

FLOAT_BYTES = 8
MB = 1024 ** 2


@dataclass(frozen=True)
class MemorySnapshot:
    available_bytes: int
    used_percent: float
    process_rss_bytes: int


class MemoryMonitor:
    """Оцінка щільних алокацій відносно вільної пам'яті системи"""

    def __init__(self, max_fraction: float = 0.5):
        if not 0 < max_fraction <= 1:
            raise ValueError(f"max_fraction must lie in (0, 1], got {max_fraction}")
        self.max_fraction = max_fraction
        self.process = psutil.Process()

    def snapshot(self) -> Optional[MemorySnapshot]:
        try:
            system = psutil.virtual_memory()
            return MemorySnapshot(int(system.available), float(system.percent),
                                  int(self.process.memory_info().rss))
        except psutil.Error as e:
            logger.warning(f"⚠️ Не вдалося прочитати стан пам'яті: {e}")
            return None

    @staticmethod
    def dense_bytes(n_points: int, copies: int = 1) -> int:
        """copies матриць n_points x n_points з float64"""
        return int(n_points) ** 2 * FLOAT_BYTES * copies

    def can_allocate(self, n_bytes: int) -> bool:
        snapshot = self.snapshot()
        if snapshot is None:
            return True
        allowed = self.max_fraction * snapshot.available_bytes
        if n_bytes > allowed:
            logger.warning(f"⚠️ Потрібно {n_bytes / MB:.0f}MB, дозволено {allowed / MB:.0f}MB "
                           f"({self.max_fraction:.0%} вільної пам'яті)")
            return False
        return True

    @contextmanager
    def tracked(self, label: str) -> Iterator["MemoryMonitor"]:
        """Логує зміну RSS процесу за час блоку"""
        before = self.snapshot()
        try:
            yield self
        finally:
            gc.collect()
            after = self.snapshot()
            if before and after:
                delta = (after.process_rss_bytes - before.process_rss_bytes) / MB
                logger.debug(f"🧠 {label}: {delta:+.1f}MB RSS, система {after.used_percent:.1f}%")


memory_monitor = MemoryMonitor(float(os.getenv("RICCI_FORGE_MEMORY_FRACTION", "0.5")))
