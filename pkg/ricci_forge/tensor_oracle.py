"""
Незалежне обчислення кривини Річчі з координатної метрики
скінченними різницями (без використання замкнених формул)
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg

from .config import ORACLE_STEP
from .errors import ErrorText, OracleError, ParameterError, PreconditionError

logger = logging.getLogger(__name__)

MetricFn = Callable[[np.ndarray], np.ndarray]
Box = Tuple[Tuple[float, float], ...]

MAX_CONDITION = 1e12


@dataclass(frozen=True, eq=False)
class ChartMetric:
    """
    Координатна карта з метрикою.

    metric_fn приймає масив точок (N, dim) і повертає (N, dim, dim).
    """
    dim: int
    metric_fn: MetricFn
    chart_name: str
    valid_region: Box
    metadata: Dict[str, Any] = field(default_factory=dict)

    def metric_at(self, x: Sequence[float]) -> np.ndarray:
        points = np.asarray(x, dtype=float)
        if points.ndim == 1:
            return self.metric_fn(points[None, :])[0]
        return self.metric_fn(points)

    def contains(self, x: Sequence[float], margin: float = 0.0) -> bool:
        return all(lo + margin <= xi <= hi - margin for xi, (lo, hi) in zip(x, self.valid_region))

    def is_positive_definite(self, points: np.ndarray) -> bool:
        metrics = self.metric_at(np.atleast_2d(points))
        if not np.allclose(metrics, np.swapaxes(metrics, 1, 2), rtol=1e-12, atol=1e-14):
            return False
        try:
            np.linalg.cholesky(metrics)
        except np.linalg.LinAlgError:
            return False
        return True

    def sample_points(self, count: int, seed: int = 0, margin: float = 0.0) -> np.ndarray:
        """Випадкові точки всередині допустимої області (для перевірок)"""
        rng = np.random.default_rng(seed)
        bounds = []
        for lo, hi in self.valid_region:
            hi = hi if math.isfinite(hi) else lo + 10.0
            bounds.append((lo + margin, hi - margin))
        low = np.array([b[0] for b in bounds])
        high = np.array([b[1] for b in bounds])
        return low + (high - low) * rng.random((count, self.dim))


def _stencil(x: np.ndarray, h: float) -> np.ndarray:
    """Точки x +- h e_l для всіх x, форма (N, 2, dim, dim)"""
    dim = x.shape[-1]
    shifts = h * np.eye(dim)
    return np.stack([x[:, None, :] + shifts[None], x[:, None, :] - shifts[None]], axis=1)


def _inverse(chart: ChartMetric, metrics: np.ndarray, points: np.ndarray) -> np.ndarray:
    conditions = np.linalg.cond(metrics)
    bad = ~np.isfinite(conditions) | (conditions > MAX_CONDITION)
    if np.any(bad):
        index = int(np.argmax(bad))
        raise OracleError(
            ErrorText.SINGULAR.format(x=points[index].tolist(), cond=float(conditions[index])),
            condition_number=float(conditions[index]),
        )
    return np.linalg.inv(metrics)


def _christoffel_batch(chart: ChartMetric, x: np.ndarray, h: float) -> np.ndarray:
    """Gamma^k_ij для пачки точок, форма (N, dim, dim, dim)"""
    n_points, dim = x.shape
    stencil = _stencil(x, h).reshape(-1, dim)
    shifted = chart.metric_fn(stencil).reshape(n_points, 2, dim, dim, dim)
    dg = (shifted[:, 0] - shifted[:, 1]) / (2 * h)
    ginv = _inverse(chart, chart.metric_fn(x), x)
    gamma = 0.5 * (
        np.einsum("nkl,nilj->nkij", ginv, dg)
        + np.einsum("nkl,njli->nkij", ginv, dg)
        - np.einsum("nkl,nlij->nkij", ginv, dg)
    )
    return gamma


def _require_margin(chart: ChartMetric, x: np.ndarray, margin: float) -> None:
    if x.shape != (chart.dim,):
        raise PreconditionError(f"point must have {chart.dim} coordinates, got shape {x.shape}")
    if not chart.contains(x, margin):
        raise PreconditionError(
            f"point {x.tolist()} is closer than {margin:.3e} to the boundary of chart '{chart.chart_name}'")


def christoffel(chart: ChartMetric, x: Sequence[float], h: float = ORACLE_STEP) -> np.ndarray:
    """Символи Крістофеля Gamma[k, i, j] центральними різницями метрики"""
    if not h > 0:
        raise ParameterError(f"step must be positive, got {h}")
    x = np.asarray(x, dtype=float)
    _require_margin(chart, x, 2 * h)
    return _christoffel_batch(chart, x[None, :], h)[0]


def _ricci_raw(chart: ChartMetric, x: np.ndarray, h: float) -> np.ndarray:
    dim = chart.dim
    centre = _christoffel_batch(chart, x[None, :], h)[0]
    around = _christoffel_batch(chart, _stencil(x[None, :], h).reshape(-1, dim), h)
    around = around.reshape(2, dim, dim, dim, dim)
    d_gamma = (around[0] - around[1]) / (2 * h)
    ricci = (
        np.einsum("kkij->ij", d_gamma)
        - np.einsum("jkik->ij", d_gamma)
        + np.einsum("kkl,lij->ij", centre, centre)
        - np.einsum("kjl,lik->ij", centre, centre)
    )
    return 0.5 * (ricci + ricci.T)


def ricci_tensor(chart: ChartMetric, x: Sequence[float], h: float = ORACLE_STEP,
                 richardson: bool = False) -> np.ndarray:
    """R_ij зі скінченно-різницевих символів Крістофеля"""
    if not h > 0:
        raise ParameterError(f"step must be positive, got {h}")
    x = np.asarray(x, dtype=float)
    _require_margin(chart, x, 4 * h)
    coarse = _ricci_raw(chart, x, h)
    if not richardson:
        return coarse
    fine = _ricci_raw(chart, x, h / 2)
    return (4 * fine - coarse) / 3


def ricci_eigenvalues(chart: ChartMetric, x: Sequence[float], h: float = ORACLE_STEP,
                      richardson: bool = False) -> np.ndarray:
    """Власні значення ендоморфізму g^-1 R (за зростанням)"""
    ricci = ricci_tensor(chart, x, h, richardson)
    metric = chart.metric_at(x)
    return linalg.eigh(ricci, metric, eigvals_only=True)


def ricci_eigen_min(chart: ChartMetric, x: Sequence[float], h: float = ORACLE_STEP,
                    richardson: bool = False) -> float:
    return float(ricci_eigenvalues(chart, x, h, richardson)[0])


# ---------------------------------------------------------------------------
# Карти
# ---------------------------------------------------------------------------

def _diagonal(entries: np.ndarray) -> np.ndarray:
    n_points, dim = entries.shape
    out = np.zeros((n_points, dim, dim))
    index = np.arange(dim)
    out[:, index, index] = entries
    return out


def sphere_metric_diagonal(angles: np.ndarray) -> np.ndarray:
    """Діагональ стандартної метрики S^k у гіперсферичних кутах (N, k)"""
    sines = np.sin(angles[:, :-1]) ** 2
    factors = np.concatenate([np.ones((angles.shape[0], 1)), np.cumprod(sines, axis=1)], axis=1)
    return factors


def sphere_box(k: int) -> Box:
    return tuple([(0.0, math.pi)] * (k - 1) + [(0.0, 2 * math.pi)])


def euclidean_chart(dim: int = 4) -> ChartMetric:
    def metric(x: np.ndarray) -> np.ndarray:
        return np.broadcast_to(np.eye(dim), (x.shape[0], dim, dim)).copy()

    return ChartMetric(dim, metric, "euclidean", tuple([(-10.0, 10.0)] * dim))


def warped_chart(warp: Callable[[np.ndarray], np.ndarray], fiber_dim: int,
                 radial_range: Tuple[float, float],
                 radial_factor: Optional[Callable[[np.ndarray], np.ndarray]] = None,
                 name: str = "warped") -> ChartMetric:
    """radial_factor(r) dr^2 + warp(r)^2 ds_k^2 у координатах (r, кути S^k)"""
    def metric(x: np.ndarray) -> np.ndarray:
        r = x[:, 0]
        radial = np.ones_like(r) if radial_factor is None else radial_factor(r)
        sphere = sphere_metric_diagonal(x[:, 1:]) * (np.asarray(warp(r)) ** 2)[:, None]
        return _diagonal(np.column_stack([radial, sphere]))

    return ChartMetric(fiber_dim + 1, metric, name, (radial_range,) + sphere_box(fiber_dim))


def round_s2_chart() -> ChartMetric:
    chart = warped_chart(np.sin, 1, (0.0, math.pi), name="round_s2")
    return chart


def warped_metric_chart(metric) -> ChartMetric:
    """Карта для WarpedMetric (профіль як функція деформації)"""
    return warped_chart(lambda r: metric.warp(r), metric.fiber_dim, metric.domain, name=f"{metric.name}_chart")


def berger_chart(rho: Callable[[np.ndarray], np.ndarray], phi: Callable[[np.ndarray], np.ndarray],
                 radial_range: Tuple[float, float], name: str = "berger") -> ChartMetric:
    """
    dr^2 + rho^2 eta^2 + phi^2 (dxi^2 + sin^2(2 xi)/4 dbeta^2), eta = dalpha + cos^2(xi) dbeta.
    Координати (r, xi, alpha, beta), xi in (0, pi/2).
    """
    def metric(x: np.ndarray) -> np.ndarray:
        r, xi = x[:, 0], x[:, 1]
        rho2 = np.asarray(rho(r)) ** 2
        phi2 = np.asarray(phi(r)) ** 2
        cos2 = np.cos(xi) ** 2
        out = np.zeros((x.shape[0], 4, 4))
        out[:, 0, 0] = 1.0
        out[:, 1, 1] = phi2
        out[:, 2, 2] = rho2
        out[:, 2, 3] = out[:, 3, 2] = rho2 * cos2
        out[:, 3, 3] = rho2 * cos2 ** 2 + phi2 * np.sin(2 * xi) ** 2 / 4
        return out

    box = (radial_range, (0.0, math.pi / 2), (0.0, 2 * math.pi), (0.0, 2 * math.pi))
    return ChartMetric(4, metric, name, box)


def berger_metric_chart(metric) -> ChartMetric:
    return berger_chart(lambda r: metric.rho(r), lambda r: metric.phi(r), metric.domain,
                        name=f"{metric.name}_chart")


def model_u_chart(u_range: Tuple[float, float] = (0.05, 20.0)) -> ChartMetric:
    """du^2/(1+u^2)^2 + u^2/(1+u^2)^2 ds_3^2 - сфера радіуса 1/2"""
    return warped_chart(lambda u: u / (1 + u ** 2), 3, u_range,
                        radial_factor=lambda u: 1 / (1 + u ** 2) ** 2, name="model_u")


def model_rho_chart(rho_range: Tuple[float, float] = (0.05, math.pi - 0.05)) -> ChartMetric:
    """Та сама модельна метрика після заміни u = tan(rho/2)"""
    return warped_chart(lambda r: np.sin(r) / 2, 3, rho_range,
                        radial_factor=lambda r: np.full_like(r, 0.25), name="model_rho")
