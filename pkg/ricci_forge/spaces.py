"""
Скінченні метричні простори з сімейств метрик: фактор-відстані,
графові геодезичні, діаметр, об'єм та масштабування
"""
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from contextlib import nullcontext
from dataclasses import dataclass, field, replace
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel
from scipy import integrate, sparse
from scipy.sparse.csgraph import connected_components, shortest_path
from scipy.stats import qmc
from sklearn.neighbors import NearestNeighbors

from .config import KNN_NEIGHBORS, MAX_THREADS, MC_CHUNK, MC_MIN_SAMPLES, TRIANGLE_CHECK_TRIPLES
from .constructions import MetricFamilySpec
from .errors import ConnectivityError, ErrorText, ParameterError, ResourceError, UnsupportedFamilyError
from .groups import (
    HOPF_DIRECTION,
    GroupAction,
    hopf_point,
    iota,
    mu,
    nu4,
    psi_map,
    require_unit,
    trivial,
)
from .tensor_oracle import berger_chart, warped_chart

try:
    from memory_monitor import memory_monitor
    MEMORY_MONITOR_AVAILABLE = True
except ImportError:
    MEMORY_MONITOR_AVAILABLE = False

logger = logging.getLogger(__name__)

__all__ = [
    "GroupAction", "mu", "iota", "nu4", "trivial", "psi_map",
    "SampledSpace", "LevelLayout", "DisplacementReport", "quotient_distance", "level_layout", "sample_space",
    "diameter", "volume_closed", "volume_mc", "min_displacement", "rescale", "triangle_violation",
]

SPHERE_VOLUME = 2 * math.pi ** 2
ROW_CHUNK = 256


def _orbit_geometry(x: np.ndarray, y: np.ndarray, action: GroupAction) -> Tuple[np.ndarray, np.ndarray]:
    """
    Для всіх пар (x_i, y_j): кут між x_i та найближчим образом y_j
    і вертикальна (хопфова) частка напрямку. Форми (N, M).

    Кут береться через хорду 2 arcsin(|x - g y| / 2): arccos біля 1
    втрачає половину знаків.
    """
    images = action.apply(y)
    dots = np.einsum("ni,gmi->gnm", x, images)
    best = np.argmax(dots, axis=0)
    nearest = images[best, np.arange(y.shape[0])[None, :]]
    chord = np.linalg.norm(x[:, None, :] - nearest, axis=2)
    angle = 2.0 * np.arcsin(np.clip(chord / 2.0, 0.0, 1.0))
    vertical_dir = x @ HOPF_DIRECTION.T
    along = np.abs(np.einsum("ni,nmi->nm", vertical_dir, nearest))
    sine = np.sin(angle)
    fraction = np.where(sine > 1e-12, np.clip(along / np.where(sine > 1e-12, sine, 1.0), 0.0, 1.0), 0.0)
    return angle, fraction


def quotient_distance(x, y, action: GroupAction) -> float:
    """min_g arccos(x . g y) на S^3"""
    x = require_unit(np.asarray(x, dtype=float).reshape(1, 4))
    y = require_unit(np.asarray(y, dtype=float).reshape(1, 4))
    angle, _ = _orbit_geometry(x, y, action)
    return float(angle[0, 0])


@dataclass(frozen=True, eq=False)
class SampledSpace:
    """Скінченний метричний простір, вибраний із сімейства"""
    radii: np.ndarray
    fibers: np.ndarray
    orbit_labels: Tuple[str, ...]
    distances: np.ndarray
    resolution: float
    seed: int
    source_kind: str
    group: str
    coarse_warning: bool = False
    metadata: Dict[str, Any] = field(default_factory=dict)

    @property
    def size(self) -> int:
        return int(self.radii.shape[0])

    def permuted(self, order: np.ndarray) -> "SampledSpace":
        order = np.asarray(order)
        return replace(
            self,
            radii=self.radii[order],
            fibers=self.fibers[order],
            orbit_labels=tuple(self.orbit_labels[i] for i in order),
            distances=self.distances[np.ix_(order, order)],
        )


def _halton(count: int, seed: int) -> Tuple[np.ndarray, np.ndarray]:
    """Квазівипадкові (u, точка шару): u на [0, 1), точки рівномірні на S^3"""
    sampler = qmc.Halton(d=4, scramble=True, seed=seed)
    u = sampler.random(count)
    xi = np.arcsin(np.sqrt(u[:, 1]))
    fibers = hopf_point(xi, 2 * math.pi * u[:, 2], 2 * math.pi * u[:, 3])
    return u[:, 0], fibers


@dataclass(frozen=True)
class LevelLayout:
    """Радіальні рівні зі спільним набором точок шару; стягнуті кінці - одна точка"""
    levels: np.ndarray
    collapsed: Tuple[bool, bool]
    fibers_per_level: int

    @property
    def count(self) -> int:
        return int(self.levels.size)

    @property
    def structured_points(self) -> int:
        open_levels = self.count - sum(self.collapsed)
        return sum(self.collapsed) + open_levels * self.fibers_per_level

    @property
    def radial_step(self) -> float:
        return float(np.max(np.diff(self.levels))) if self.count > 1 else 0.0


def _fiber_scale(spec: MetricFamilySpec) -> float:
    lo, hi = spec.domain
    grid = np.linspace(lo, hi, 257) if hi > lo else np.array([lo])
    vertical, horizontal = spec.warp_scale(grid)
    return float(max(np.max(np.abs(vertical)), np.max(np.abs(horizontal))))


def _collapsed_ends(spec: MetricFamilySpec, resolution: float) -> Tuple[bool, bool]:
    """Кінець стягується в точку, якщо весь шар там коротший за роздільність"""
    lo, hi = spec.domain
    if not hi > lo:
        return False, False
    vertical, horizontal = spec.warp_scale(np.array([lo, hi]))
    extent = math.pi * np.maximum(np.abs(vertical), np.abs(horizontal))
    return bool(extent[0] <= resolution), bool(extent[1] <= resolution)


def level_layout(spec: MetricFamilySpec, n_points: int, resolution: float,
                 action: Optional[GroupAction] = None, levels: Optional[int] = None) -> LevelLayout:
    """
    Кількість рівнів L вирівнює радіальний крок (hi - lo) / (L - 1) та типову
    відстань між m = (N - стягнуті) // (L - стягнуті) точками шару
    масштабу max(rho, phi): радіус кулі об'єму vol(S^3 / G) / m.
    levels задає L явно (однакові рівні для порівнюваних вибірок).
    """
    action = action or spec.action
    lo, hi = spec.domain
    if not hi > lo:
        return LevelLayout(np.array([lo]), (False, False), n_points)
    collapsed = _collapsed_ends(spec, resolution)
    poles = sum(collapsed)
    if n_points <= poles:
        return LevelLayout(np.array([lo, hi]), collapsed, 0)
    first, last = max(2, poles + 1), n_points

    def fibers_for(count: int) -> int:
        return (n_points - poles) // (count - poles)

    if levels is None:
        scale = _fiber_scale(spec)
        cell = SPHERE_VOLUME / action.order * 3 / (4 * math.pi)

        def spacing(count: int) -> float:
            return max((hi - lo) / (count - 1), scale * (cell / fibers_for(count)) ** (1 / 3))

        levels = min(range(first, last + 1), key=spacing)
    count = int(min(max(levels, first), last))
    return LevelLayout(np.linspace(lo, hi, count), collapsed, fibers_for(count))


def _layout_points(layout: LevelLayout, n_points: int, seed: int, lo: float, hi: float):
    """
    Точки рівнів (рівень за рівнем) та добірка квазівипадкових (r, шар) до n_points.
    Повертає радіуси, точки шару, індекс рівня та індекс спільної точки шару
    (-1 для стягнутих кінців та добірки), впорядковані за радіусом.
    """
    fibers_per_level = layout.fibers_per_level
    extra = n_points - layout.structured_points
    unit, fibers = _halton(max(1, fibers_per_level + extra), seed)
    shared = fibers[:fibers_per_level]

    radii, points, level_index, fiber_index = [], [], [], []
    last = layout.count - 1
    for level, r in enumerate(layout.levels):
        pole = (level == 0 and layout.collapsed[0]) or (level == last and layout.collapsed[1])
        count = 1 if pole else fibers_per_level
        radii.append(np.full(count, r))
        points.append(fibers[:1] if pole else shared)
        level_index.append(np.full(count, level))
        fiber_index.append(np.full(count, -1) if pole else np.arange(count))
    if extra:
        radii.append(lo + (hi - lo) * unit[fibers_per_level:])
        points.append(fibers[fibers_per_level:])
        level_index.append(np.full(extra, -1))
        fiber_index.append(np.full(extra, -1))

    radii = np.concatenate(radii)
    order = np.argsort(radii, kind="stable")
    return (radii[order], np.concatenate(points)[order],
            np.concatenate(level_index)[order], np.concatenate(fiber_index)[order])


def _local_weights(spec: MetricFamilySpec, radii: np.ndarray, fibers: np.ndarray,
                   action: GroupAction) -> np.ndarray:
    """
    Довжина кривої, прямої в координатах (r, кут великого кола), за Сімпсоном.
    Швидкість sqrt(dr^2 + theta^2 (rho(r)^2 a^2 + phi(r)^2 (1 - a^2))),
    вертикальна частка a вздовж великого кола стала.
    """
    n_points = radii.shape[0]
    vertical, horizontal = (np.asarray(scale, dtype=float).reshape(n_points) for scale in spec.warp_scale(radii))
    weights = np.empty((n_points, n_points))
    for start in range(0, n_points, ROW_CHUNK):
        stop = min(start + ROW_CHUNK, n_points)
        angle, fraction = _orbit_geometry(fibers[start:stop], fibers, action)
        dr = radii[start:stop, None] - radii[None, :]
        mid = 0.5 * (radii[start:stop, None] + radii[None, :])
        mid_vertical, mid_horizontal = (np.asarray(scale, dtype=float).reshape(mid.shape)
                                        for scale in spec.warp_scale(mid.ravel()))

        def speed(v, h):
            return np.sqrt(dr ** 2 + angle ** 2 * (v ** 2 * fraction ** 2 + h ** 2 * (1 - fraction ** 2)))

        weights[start:stop] = (speed(vertical[start:stop, None], horizontal[start:stop, None])
                               + 4 * speed(mid_vertical, mid_horizontal)
                               + speed(vertical[None, :], horizontal[None, :])) / 6
    np.fill_diagonal(weights, 0.0)
    return np.minimum(weights, weights.T)


def _structural_edges(radii: np.ndarray, level_index: np.ndarray, fiber_index: np.ndarray,
                      poles: np.ndarray) -> sparse.csr_matrix:
    """
    Точні ребра: радіальні відрізки між сусідніми рівнями однієї точки шару
    та ребра від стягнутого кінця до кожної точки (відстань |r - r_кінця|).
    """
    n_points = radii.shape[0]
    rows, cols = [], []
    on_level = fiber_index >= 0
    key = {(int(level), int(fiber)): index
           for index, (level, fiber) in enumerate(zip(level_index, fiber_index)) if fiber >= 0}
    for index in np.flatnonzero(on_level):
        upper = key.get((int(level_index[index]) + 1, int(fiber_index[index])))
        if upper is not None:
            rows.append(index)
            cols.append(upper)
    for pole in poles:
        others = np.delete(np.arange(n_points), pole)
        rows.extend([int(pole)] * others.size)
        cols.extend(others.tolist())
    rows, cols = np.asarray(rows, dtype=int), np.asarray(cols, dtype=int)
    data = np.abs(radii[rows] - radii[cols])
    edges = sparse.coo_matrix((data, (rows, cols)), shape=(n_points, n_points)).tocsr()
    return edges.maximum(edges.T)


def _max_gap(fibers: np.ndarray, action: GroupAction) -> float:
    """Найбільший кут від точки шару до найближчої іншої (pi для однієї точки)"""
    if fibers.shape[0] < 2:
        return math.pi
    angle, _ = _orbit_geometry(fibers, fibers, action)
    np.fill_diagonal(angle, np.inf)
    return float(np.max(np.min(angle, axis=1)))


def sample_space(spec: MetricFamilySpec, n_points: int, resolution: float, seed: int,
                 neighbors: int = KNN_NEIGHBORS, fiber_map: Optional[np.ndarray] = None,
                 action: Optional[GroupAction] = None, threads: Optional[int] = MAX_THREADS,
                 levels: Optional[int] = None) -> SampledSpace:
    """
    Вибірка на радіальних рівнях зі спільними квазірівномірними точками шару
    та геодезичні відстані найкоротшими шляхами у графі k найближчих сусідів,
    доповненому точними радіальними ребрами та ребрами стягнутих кінців.

    fiber_map застосовується до точок шару після вибірки (спільні координати
    для відповідностей між сімействами).
    """
    if n_points < 2:
        raise ParameterError(f"need at least 2 points, got {n_points}")
    if not resolution > 0:
        raise ParameterError(f"resolution must be positive, got {resolution}")
    if spec.kind in ("EH", "EH_conformal"):
        raise UnsupportedFamilyError(f"family {spec.kind} has no warped form to sample")
    action = action or spec.action
    lo, hi = spec.domain
    if not (math.isfinite(lo) and math.isfinite(hi)):
        raise ParameterError(f"open family must be truncated before sampling, domain {spec.domain}")

    if MEMORY_MONITOR_AVAILABLE and not memory_monitor.can_allocate(memory_monitor.dense_bytes(n_points, 6)):
        raise ResourceError(f"distance matrices for {n_points} points exceed the memory limit")

    layout = level_layout(spec, n_points, resolution, action, levels)
    radii, fibers, level_index, fiber_index = _layout_points(layout, n_points, seed, lo, hi)
    if fiber_map is not None:
        fibers = fibers @ np.asarray(fiber_map).T
    fibers = fibers / np.linalg.norm(fibers, axis=1, keepdims=True)
    labels = tuple(f"{action.name}:{i}" for i in range(radii.shape[0]))
    last = layout.count - 1
    poles = np.flatnonzero(((level_index == 0) & layout.collapsed[0])
                           | ((level_index == last) & layout.collapsed[1]))

    tracker = memory_monitor.tracked(f"граф {spec.kind}") if MEMORY_MONITOR_AVAILABLE else nullcontext()
    with tracker:
        weights = _local_weights(spec, radii, fibers, action)
        for pole in poles:
            weights[pole, :] = weights[:, pole] = np.abs(radii - radii[pole])
        k = min(neighbors, radii.shape[0] - 1)
        graph = NearestNeighbors(n_neighbors=k, metric="precomputed").fit(weights).kneighbors_graph(mode="distance")
        graph = graph.maximum(graph.T).maximum(_structural_edges(radii, level_index, fiber_index, poles))
        components, _ = connected_components(graph, directed=False)
        if components > 1:
            raise ConnectivityError(ErrorText.DISCONNECTED.format(components=components))
        distances = _all_pairs(graph, threads)
        distances = np.minimum(distances, distances.T)
        np.fill_diagonal(distances, 0.0)
        if not np.all(np.isfinite(distances)):
            raise ConnectivityError(ErrorText.DISCONNECTED.format(components="several"))

    masked = weights + np.diag(np.full(radii.shape[0], np.inf))
    nearest_gap = float(np.max(np.min(masked, axis=1)))
    on_level = fiber_index >= 0
    fiber_gap = 0.0
    if np.any(on_level):
        shared = fibers[on_level & (level_index == level_index[on_level].min())]
        fiber_gap = _fiber_scale(spec) * _max_gap(shared, action)
    covering = max(nearest_gap, layout.radial_step, fiber_gap)
    effective = max(resolution, covering)
    feature = spec.scale_factors.get("cap_scale", math.inf)
    coarse = covering > resolution or effective > feature
    if coarse:
        logger.warning(f"⚠️ Покриття {covering:.4f} грубіше за запитану роздільність {resolution:.4g} "
                       f"або масштаб шапки {feature:.4f}")
    logger.info(f"📐 Вибірка {spec.kind}: {radii.shape[0]} точок, {layout.count} рівнів "
                f"по {layout.fibers_per_level}, роздільність {effective:.4f}")
    return SampledSpace(radii=radii, fibers=fibers, orbit_labels=labels, distances=distances,
                        resolution=effective, seed=seed, source_kind=spec.kind, group=action.name,
                        coarse_warning=coarse,
                        metadata={"requested_resolution": resolution, "covering_scale": covering,
                                  "neighbors": k, "levels": layout.count,
                                  "fibers_per_level": layout.fibers_per_level,
                                  "collapsed_ends": list(layout.collapsed)})


def diameter(s: SampledSpace) -> float:
    """Найбільша відстань (похибка +- s.resolution)"""
    if s.size <= 1:
        return 0.0
    return float(np.max(s.distances))


def triangle_violation(s: SampledSpace, triples: int = TRIANGLE_CHECK_TRIPLES, seed: int = 0) -> float:
    """Найбільше порушення d(i,k) <= d(i,j) + d(j,k) на випадкових трійках"""
    rng = np.random.default_rng(seed)
    i, j, k = rng.integers(0, s.size, size=(3, triples))
    excess = s.distances[i, k] - s.distances[i, j] - s.distances[j, k]
    return float(max(0.0, np.max(excess)))


def volume_closed(spec: MetricFamilySpec) -> float:
    """(2 pi^2 / m) int warp^3 dr або (2 pi^2 / n) int rho phi^2 dr"""
    lo, hi = spec.domain
    if spec.is_berger:
        rho, phi = spec.profiles["rho"], spec.profiles["phi"]
        integrand = lambda r: float(rho(r) * phi(r) ** 2)
        points = sorted(set(rho.breakpoints) | set(phi.breakpoints))
    elif "warp" in spec.profiles and spec.kind != "round_sphere":
        warp = spec.profiles["warp"]
        integrand = lambda r: float(warp(r) ** 3)
        points = warp.breakpoints
    else:
        raise UnsupportedFamilyError(f"volume is not defined for family {spec.kind}")
    points = [p for p in points if lo < p < hi]
    value, _ = integrate.quad(integrand, lo, hi, points=points or None, epsabs=0.0, epsrel=1e-10,
                              limit=max(200, 4 * len(points) + 50))
    return SPHERE_VOLUME / spec.quotient_order * value


def _volume_chart(spec: MetricFamilySpec):
    lo, hi = spec.domain
    if spec.is_berger:
        rho, phi = spec.profiles["rho"], spec.profiles["phi"]
        return berger_chart(lambda r: rho(r), lambda r: phi(r), (lo, hi))
    if "warp" in spec.profiles and spec.kind != "round_sphere":
        warp = spec.profiles["warp"]
        return warped_chart(lambda r: warp(r), 3, (lo, hi))
    raise UnsupportedFamilyError(f"volume is not defined for family {spec.kind}")


def volume_mc(spec: MetricFamilySpec, n_samples: int, seed: int) -> Tuple[float, float]:
    """Монте-Карло оцінка int sqrt(det g) по координатному боксу карти та її стандартна похибка"""
    if n_samples < MC_MIN_SAMPLES:
        raise ParameterError(f"need at least {MC_MIN_SAMPLES} samples, got {n_samples}")
    chart = _volume_chart(spec)
    low = np.array([box[0] for box in chart.valid_region])
    high = np.array([box[1] for box in chart.valid_region])
    box_volume = float(np.prod(high - low))
    rng = np.random.default_rng(seed)
    total, total_sq, done = 0.0, 0.0, 0
    while done < n_samples:
        count = min(MC_CHUNK, n_samples - done)
        points = low + (high - low) * rng.random((count, chart.dim))
        density = np.sqrt(np.abs(np.linalg.det(chart.metric_fn(points))))
        total += float(np.sum(density))
        total_sq += float(np.sum(density ** 2))
        done += count
    mean = total / n_samples
    variance = max(total_sq / n_samples - mean ** 2, 0.0)
    estimate = box_volume * mean / spec.quotient_order
    stderr = box_volume * math.sqrt(variance / n_samples) / spec.quotient_order
    return estimate, stderr


class DisplacementReport(BaseModel):
    group: str
    value: float
    trivial: bool
    samples: int


def min_displacement(action: GroupAction, n_samples: int = 10_000, seed: int = 0) -> DisplacementReport:
    """Мінімальне геодезичне зміщення нетривіальними елементами групи на S^3"""
    if action.is_trivial:
        logger.info(f"ℹ️ Група '{action.name}' тривіальна, зміщення 0")
        return DisplacementReport(group=action.name, value=0.0, trivial=True, samples=n_samples)
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n_samples, 4))
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    images = action.apply(x)[1:]
    dots = np.einsum("ni,gni->gn", x, images)
    value = float(np.min(np.arccos(np.clip(dots, -1.0, 1.0))))
    return DisplacementReport(group=action.name, value=value, trivial=False, samples=n_samples)


def rescale(obj: Union[MetricFamilySpec, SampledSpace], lam: float) -> Union[MetricFamilySpec, SampledSpace]:
    """Множення всіх довжин на lam (об'єм x lam^4, межі Річчі x lam^-2 лише записуються)"""
    if not lam > 0:
        raise ParameterError(f"scale must be positive, got {lam}")
    if lam == 1:
        return obj
    if isinstance(obj, SampledSpace):
        return replace(obj, radii=obj.radii * lam, distances=obj.distances * lam,
                       resolution=obj.resolution * lam,
                       metadata=dict(obj.metadata, rescale=obj.metadata.get("rescale", 1.0) * lam))
    profiles = {name: profile.transformed(lam, 1 / lam, 0.0) for name, profile in obj.profiles.items()}
    factors = dict(obj.scale_factors)
    factors["rescale"] = factors.get("rescale", 1.0) * lam
    factors["ricci_scale"] = factors.get("ricci_scale", 1.0) / lam ** 2
    if "cap_scale" in factors:
        factors["cap_scale"] *= lam
    return replace(obj, profiles=profiles, domain=(obj.domain[0] * lam, obj.domain[1] * lam),
                   scale_factors=factors)
