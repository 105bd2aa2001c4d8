"""
Оцінки відстані Громова-Хаусдорфа через явні відповідності
та експеримент збіжності M_i, N_i до сферичної суспензії
"""
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import ClassVar, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel

from .config import BERGER_THRESHOLD_N4, MAX_THREADS
from .constructions import MetricFamilySpec, build_m_closed_profile, build_n_closed_profiles, limit_suspension
from .errors import CertificateFailure, ConvergenceFailure, ErrorText, ParameterError, PreconditionError
from .groups import group_by_label, psi_map
from .spaces import SampledSpace, _orbit_geometry, diameter, level_layout, rescale, sample_space, volume_closed

logger = logging.getLogger(__name__)

ROW_CHUNK = 256
DEFAULT_RESOLUTION = 1e-3
REPORT_SCALE = 1 / math.pi


@dataclass(frozen=True, eq=False)
class Correspondence:
    """Відповідність між A та B: пари індексів (k, 2)"""
    pairs: np.ndarray
    size_a: int
    size_b: int

    @classmethod
    def identity(cls, size: int) -> "Correspondence":
        index = np.arange(size)
        return cls(np.column_stack([index, index]), size, size)

    @property
    def covers_a(self) -> np.ndarray:
        return np.isin(np.arange(self.size_a), self.pairs[:, 0])

    @property
    def covers_b(self) -> np.ndarray:
        return np.isin(np.arange(self.size_b), self.pairs[:, 1])

    def validate(self) -> "Correspondence":
        missing_a = np.flatnonzero(~self.covers_a)
        missing_b = np.flatnonzero(~self.covers_b)
        if missing_a.size or missing_b.size:
            raise PreconditionError(ErrorText.NOT_SURJECTIVE.format(
                missing_a=missing_a[:5].tolist(), missing_b=missing_b[:5].tolist()))
        return self

    def permuted(self, order_a: np.ndarray, order_b: np.ndarray) -> "Correspondence":
        """Відповідність для переставлених просторів A[order_a], B[order_b]"""
        inverse_a = np.argsort(order_a)
        inverse_b = np.argsort(order_b)
        pairs = np.column_stack([inverse_a[self.pairs[:, 0]], inverse_b[self.pairs[:, 1]]])
        return Correspondence(pairs, self.size_a, self.size_b)


def _nearest(source: SampledSpace, target: SampledSpace, source_map: Optional[np.ndarray],
             target_map: Optional[np.ndarray], action) -> np.ndarray:
    """Для кожної точки source найближча точка target за |dr| + кут між орбітами"""
    source_fibers = source.fibers if source_map is None else source.fibers @ source_map.T
    target_fibers = target.fibers if target_map is None else target.fibers @ target_map.T
    nearest = np.empty(source.size, dtype=int)
    for start in range(0, source.size, ROW_CHUNK):
        stop = min(start + ROW_CHUNK, source.size)
        angle, _ = _orbit_geometry(source_fibers[start:stop], target_fibers, action)
        cost = np.abs(source.radii[start:stop, None] - target.radii[None, :]) + angle
        nearest[start:stop] = np.argmin(cost, axis=1)
    return nearest


def shared_coordinate_correspondence(a: SampledSpace, b: SampledSpace,
                                     fiber_map_a: Optional[np.ndarray] = None,
                                     fiber_map_b: Optional[np.ndarray] = None,
                                     action=None) -> Correspondence:
    """
    Точки зіставляються за спільними координатами (r, [p]). fiber_map_* переводить
    точки шару кожного простору в спільну систему координат, де діє action.
    Однакові вибірки дають тотожну відповідність.
    """
    if action is None:
        action = group_by_label(a.group)
    if a.size == b.size and np.array_equal(a.radii, b.radii):
        mapped_a = a.fibers if fiber_map_a is None else a.fibers @ fiber_map_a.T
        mapped_b = b.fibers if fiber_map_b is None else b.fibers @ fiber_map_b.T
        if np.allclose(mapped_a, mapped_b, atol=1e-12):
            return Correspondence.identity(a.size)
    forward = _nearest(a, b, fiber_map_a, fiber_map_b, action)
    backward = _nearest(b, a, fiber_map_b, fiber_map_a, action)
    pairs = np.vstack([
        np.column_stack([np.arange(a.size), forward]),
        np.column_stack([backward, np.arange(b.size)]),
    ])
    return Correspondence(np.unique(pairs, axis=0), a.size, b.size)


class GHEstimate(BaseModel):
    """Половина спотворення відповідності разом зі свідком"""
    value: float
    resolution: float
    witness_pairs: Tuple[int, int]
    witness_r: Tuple[float, float]
    lower: float


def _distortion_block(args) -> Tuple[float, int, int]:
    rows, d_a, d_b, index_a, index_b = args
    block = np.abs(d_a[np.ix_(index_a[rows], index_a)] - d_b[np.ix_(index_b[rows], index_b)])
    flat = int(np.argmax(block))
    row, col = divmod(flat, block.shape[1])
    return float(block[row, col]), int(rows[row]), int(col)


def gh_upper_report(a: SampledSpace, b: SampledSpace, corr: Correspondence,
                    threads: Optional[int] = MAX_THREADS) -> GHEstimate:
    corr.validate()
    if corr.size_a != a.size or corr.size_b != b.size:
        raise PreconditionError(
            f"correspondence sizes ({corr.size_a}, {corr.size_b}) do not match spaces ({a.size}, {b.size})")
    index_a, index_b = corr.pairs[:, 0], corr.pairs[:, 1]
    blocks = [np.arange(start, min(start + ROW_CHUNK, len(index_a)))
              for start in range(0, len(index_a), ROW_CHUNK)]
    tasks = [(rows, a.distances, b.distances, index_a, index_b) for rows in blocks]
    workers = threads or os.cpu_count() or 1
    if workers == 1 or len(tasks) == 1:
        results = [_distortion_block(task) for task in tasks]
    else:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            results = list(executor.map(_distortion_block, tasks))
    best, p, q = max(results, key=lambda item: item[0])
    return GHEstimate(
        value=0.5 * best,
        resolution=a.resolution + b.resolution,
        witness_pairs=(p, q),
        witness_r=(float(a.radii[index_a[p]]), float(a.radii[index_a[q]])),
        lower=gh_lower(a, b),
    )


def gh_upper(a: SampledSpace, b: SampledSpace, corr: Correspondence) -> float:
    """1/2 max |d_A(a, a') - d_B(b, b')| по парах пар відповідності"""
    return gh_upper_report(a, b, corr).value


def gh_lower(a: SampledSpace, b: SampledSpace) -> float:
    return 0.5 * abs(diameter(a) - diameter(b))


class ConvergenceRow(BaseModel):
    i: int
    d: float
    gh_mn: float
    gh_mx: float
    gh_nx: float
    resolution: float
    gh_lower_mn: float
    witness_r_mn: Tuple[float, float]
    diameter_m: float
    diameter_n: float
    volume_m: float
    volume_n: float
    coarse: bool


class ConvergenceTable(BaseModel):
    """Таблиця збіжності (діаметри та об'єми після масштабу 1/pi)"""
    c: float
    limit_c: float
    n_points: int
    seed: int
    rows: List[ConvergenceRow]
    monotone: bool
    fitted_c_mn: float
    fitted_c_mx: float
    fitted_c_nx: float
    limit_diameter: float
    limit_volume: float
    volume_lower_bound: float

    CSV_COLUMNS: ClassVar[Tuple[str, ...]] = ("i", "d", "gh_mn", "gh_mx", "gh_nx", "resolution")

    def csv_rows(self) -> List[List[float]]:
        return [[getattr(row, column) for column in self.CSV_COLUMNS] for row in self.rows]


def _fitted_constant(values: Sequence[float], slacks: Sequence[float], i_list: Sequence[int]) -> float:
    return float(max(max(value - 2 * slack, 0.0) * i for value, slack, i in zip(values, slacks, i_list)))


def _is_monotone(values: Sequence[float], slacks: Sequence[float]) -> bool:
    return all(later <= earlier + 2 * slack for earlier, later, slack in zip(values, values[1:], slacks[1:]))


def require_monotone(table: "ConvergenceTable") -> "ConvergenceTable":
    """Помилка ConvergenceFailure (з таблицею), якщо стовпець gh(M_i, N_i) не спадає"""
    values = [row.gh_mn for row in table.rows]
    slacks = [row.resolution for row in table.rows]
    if not _is_monotone(values, slacks):
        raise ConvergenceFailure(ErrorText.NOT_MONOTONE.format(values=values, slacks=slacks), table=table)
    return table


def _require_certified(spec: MetricFamilySpec) -> MetricFamilySpec:
    if not spec.passed:
        raise CertificateFailure(f"curvature certificate failed for {spec.kind} "
                                 f"(c={spec.params.c}, d={spec.params.d})", spec=spec)
    return spec


def convergence_experiment(c: float, i_list: Sequence[int], n_points: int, seed: int,
                           resolution: float = DEFAULT_RESOLUTION,
                           threads: Optional[int] = MAX_THREADS, strict: bool = True) -> ConvergenceTable:
    """
    M_i (фактор за nu_4), N_i (фактор за mu_4, шар у координатах Psi) та
    граничний X = суспензія над (c/2) S^3 / mu_4 на одній вибірці (r, p).
    Усі три вибірки мають однакові радіальні рівні. strict: стовпець gh(M_i, N_i),
    що не спадає, дає ConvergenceFailure з готовою таблицею.
    """
    i_list = list(i_list)
    if not i_list or any(i < 2 for i in i_list) or i_list != sorted(set(i_list)):
        raise ParameterError(f"i_list must be strictly ascending with i >= 2, got {i_list}")
    if not 0 < c < BERGER_THRESHOLD_N4 or not 2 * c < 1:
        raise ParameterError(f"c={c} must lie below the recorded thresholds ({BERGER_THRESHOLD_N4})")

    psi = psi_map()
    limit = _require_certified(limit_suspension(c / 2))
    levels = level_layout(limit, n_points, resolution).count
    x_space = sample_space(limit, n_points, resolution, seed, fiber_map=psi, threads=threads, levels=levels)
    limit_scaled = rescale(limit, REPORT_SCALE)

    rows = []
    for i in i_list:
        d = 1.0 / i
        logger.info(f"🔁 Крок збіжності i={i}, d={d:.4f}")
        m_spec = _require_certified(build_m_closed_profile(c, d))
        n_spec = _require_certified(build_n_closed_profiles(c, d))
        m_space = sample_space(m_spec, n_points, resolution, seed, threads=threads, levels=levels)
        n_space = sample_space(n_spec, n_points, resolution, seed, fiber_map=psi, threads=threads, levels=levels)

        # спільні координати: шар N та X повертаються через Psi (інволюція) до дії nu_4
        mn = gh_upper_report(m_space, n_space,
                             shared_coordinate_correspondence(m_space, n_space, fiber_map_b=psi), threads)
        mx = gh_upper_report(m_space, x_space,
                             shared_coordinate_correspondence(m_space, x_space, fiber_map_b=psi), threads)
        nx = gh_upper_report(n_space, x_space,
                             shared_coordinate_correspondence(n_space, x_space), threads)
        rows.append(ConvergenceRow(
            i=i, d=d, gh_mn=mn.value, gh_mx=mx.value, gh_nx=nx.value,
            resolution=max(m_space.resolution, n_space.resolution, x_space.resolution),
            gh_lower_mn=mn.lower, witness_r_mn=mn.witness_r,
            diameter_m=diameter(rescale(m_space, REPORT_SCALE)),
            diameter_n=diameter(rescale(n_space, REPORT_SCALE)),
            volume_m=volume_closed(rescale(m_spec, REPORT_SCALE)),
            volume_n=volume_closed(rescale(n_spec, REPORT_SCALE)),
            coarse=m_space.coarse_warning or n_space.coarse_warning,
        ))
        logger.info(f"📊 i={i}: gh(M,N)={mn.value:.4f}, gh(M,X)={mx.value:.4f}, gh(N,X)={nx.value:.4f}")

    slacks = [row.resolution for row in rows]
    gh_mn = [row.gh_mn for row in rows]
    monotone = _is_monotone(gh_mn, slacks)
    if not monotone:
        logger.warning(f"⚠️ Стовпець gh(M_i, N_i) не спадає з точністю до 2 x роздільність: {gh_mn}")
    table = ConvergenceTable(
        c=c, limit_c=c / 2, n_points=n_points, seed=seed, rows=rows, monotone=monotone,
        fitted_c_mn=_fitted_constant(gh_mn, slacks, i_list),
        fitted_c_mx=_fitted_constant([row.gh_mx for row in rows], slacks, i_list),
        fitted_c_nx=_fitted_constant([row.gh_nx for row in rows], slacks, i_list),
        limit_diameter=diameter(rescale(x_space, REPORT_SCALE)),
        limit_volume=volume_closed(limit_scaled),
        volume_lower_bound=min(min(row.volume_m, row.volume_n) for row in rows),
    )
    return require_monotone(table) if strict else table
