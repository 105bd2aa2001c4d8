"""
Замкнені формули кривини Річчі для одно- та двічі деформованих метрик,
сертифікація невід'ємності на сітках і пошук порогу параметра
"""
import logging
import math
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from .config import DEFAULT_CERT_TOL, DEFAULT_GRID_STEP, KERNEL_RADIUS, THRESHOLD_TOL
from .errors import BracketError, DegenerateMetricError, ErrorText, ParameterError, RicciForgeError
from .profiles import MollifierKernel, ScalarProfile, eval_profile

logger = logging.getLogger(__name__)

GRID_ONLY_NOTE = "non-negativity certified on grid nodes only"


def make_grid(lo: float, hi: float, step: float = DEFAULT_GRID_STEP) -> np.ndarray:
    """Рівномірна сітка на [lo, hi] з кроком не більшим за step"""
    if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi and step > 0):
        raise ParameterError(f"invalid grid ({lo}, {hi}) with step {step}")
    count = int(math.ceil((hi - lo) / step)) + 1
    return np.linspace(lo, hi, count)


def _domain_of(*profiles: ScalarProfile) -> Tuple[float, float]:
    lo = max(profile.domain[0] for profile in profiles)
    hi = min(profile.domain[1] for profile in profiles)
    return lo, hi


@dataclass(frozen=True, eq=False)
class WarpedMetric:
    """dr^2 + warp(r)^2 ds_k^2, шар S^k / mu_m"""
    warp: ScalarProfile
    fiber_dim: int = 3
    quotient_order: int = 1
    domain: Optional[Tuple[float, float]] = None
    name: str = "warped"

    condition_names = ("radial", "spherical")

    def __post_init__(self):
        if self.fiber_dim < 1 or self.quotient_order < 1:
            raise ParameterError("fiber_dim and quotient_order must be >= 1")
        if self.quotient_order != 1 and self.fiber_dim != 3:
            raise ParameterError("cyclic quotients are defined for the 3-sphere fiber only")
        if self.domain is None:
            object.__setattr__(self, "domain", self.warp.domain)

    def condition_values(self, grid: np.ndarray) -> np.ndarray:
        phi, d1, d2 = (eval_profile(self.warp, grid, order) for order in range(3))
        degenerate = ~(phi > 0)
        safe = np.where(degenerate, 1.0, phi)
        k = self.fiber_dim
        radial = -k * d2 / safe
        spherical = -d2 / safe + (k - 1) * (1 - d1 ** 2) / safe ** 2
        values = np.vstack([radial, spherical])
        values[:, degenerate] = -np.inf
        return values


@dataclass(frozen=True, eq=False)
class BergerMetric:
    """dr^2 + rho^2 eta^2 + phi^2 (Hopf pullback of the base sphere), шар S^3 / mu_n"""
    rho: ScalarProfile
    phi: ScalarProfile
    n: int = 1
    domain: Optional[Tuple[float, float]] = None
    name: str = "berger"

    condition_names = ("q1", "q2", "q3")

    def __post_init__(self):
        if self.n < 1:
            raise ParameterError(f"quotient order must be >= 1, got {self.n}")
        if self.domain is None:
            object.__setattr__(self, "domain", _domain_of(self.rho, self.phi))

    def condition_values(self, grid: np.ndarray) -> np.ndarray:
        rho, rho1, rho2 = (eval_profile(self.rho, grid, order) for order in range(3))
        phi, phi1, phi2 = (eval_profile(self.phi, grid, order) for order in range(3))
        degenerate = ~((rho > 0) & (phi > 0))
        rho = np.where(degenerate, 1.0, rho)
        phi = np.where(degenerate, 1.0, phi)
        q1 = -rho2 / rho - 2 * phi2 / phi
        q2 = 2 * rho ** 4 / phi ** 4 - 2 * (rho / phi) * rho1 * phi1 - rho * rho2
        q3 = 4 - 2 * rho ** 2 / phi ** 2 - (phi / rho) * rho1 * phi1 - phi * phi2 - phi1 ** 2
        values = np.vstack([q1, q2, q3])
        values[:, degenerate] = -np.inf
        return values


@dataclass(frozen=True)
class FunctionFamily:
    """Сім'я з довільними умовами: conditions(grid) -> масив (k, N)"""
    conditions: Callable[[np.ndarray], np.ndarray]
    condition_names: Tuple[str, ...] = ("condition",)
    name: str = "function"

    def condition_values(self, grid: np.ndarray) -> np.ndarray:
        return np.atleast_2d(np.asarray(self.conditions(grid), dtype=float))


Family = Union[WarpedMetric, BergerMetric, FunctionFamily]


def ricci_warped(m: WarpedMetric, r: float) -> Tuple[float, float]:
    """Власні значення Річчі: радіальний напрям та напрям уздовж сфери"""
    phi = eval_profile(m.warp, r, 0)
    if not phi > 0:
        raise DegenerateMetricError(ErrorText.DEGENERATE.format(r=r, what="phi", value=phi))
    radial, spherical = m.condition_values(np.array([r]))[:, 0]
    return float(radial), float(spherical)


def berger_conditions(m: BergerMetric, r: float) -> Tuple[float, float, float]:
    """Три величини, невід'ємність яких рівносильна Ric >= 0"""
    rho, phi = eval_profile(m.rho, r, 0), eval_profile(m.phi, r, 0)
    if not (rho > 0 and phi > 0):
        what, value = ("rho", rho) if not rho > 0 else ("phi", phi)
        raise DegenerateMetricError(ErrorText.DEGENERATE.format(r=r, what=what, value=value))
    q1, q2, q3 = m.condition_values(np.array([r]))[:, 0]
    return float(q1), float(q2), float(q3)


class GridSpec(BaseModel):
    lo: float
    hi: float
    step: float
    count: int

    @classmethod
    def of(cls, grid: np.ndarray) -> "GridSpec":
        step = float((grid[-1] - grid[0]) / (grid.size - 1)) if grid.size > 1 else 0.0
        return cls(lo=float(grid[0]), hi=float(grid[-1]), step=step, count=int(grid.size))


class CurvatureCertificate(BaseModel):
    model_config = ConfigDict(ser_json_inf_nan="constants")

    family: str
    grid: GridSpec
    condition_names: List[str]
    min_values: List[float]
    witness_points: List[float]
    degenerate_points: List[float] = Field(default_factory=list)
    passed: bool
    tolerance: float
    note: str = GRID_ONLY_NOTE


def verify_nonneg(family: Family, grid: Sequence[float],
                  tolerance: float = DEFAULT_CERT_TOL) -> CurvatureCertificate:
    """
    Перевірка умов у кожному вузлі сітки.

    Вироджені вузли не піднімають виняток: значення -inf, вузол стає
    свідком. Свідок - найменший r серед мінімумів.
    """
    if not tolerance > 0:
        raise ParameterError(f"tolerance must be positive, got {tolerance}")
    grid = np.sort(np.asarray(grid, dtype=float))
    lo, hi = family.domain if hasattr(family, "domain") and family.domain else (-np.inf, np.inf)
    if grid[0] < lo or grid[-1] > hi:
        raise ParameterError(f"grid ({grid[0]}, {grid[-1]}) exits family domain ({lo}, {hi})")

    values = family.condition_values(grid)
    index = np.argmin(values, axis=1)
    min_values = [float(values[k, i]) for k, i in enumerate(index)]
    witnesses = [float(grid[i]) for i in index]
    degenerate = grid[np.any(np.isneginf(values), axis=0)]
    passed = all(value >= -tolerance for value in min_values)

    certificate = CurvatureCertificate(
        family=family.name,
        grid=GridSpec.of(grid),
        condition_names=list(family.condition_names),
        min_values=min_values,
        witness_points=witnesses,
        degenerate_points=[float(x) for x in degenerate[:16]],
        passed=passed,
        tolerance=tolerance,
    )
    if passed:
        logger.info(f"✅ Сертифікат '{family.name}' пройдено: мінімуми {np.round(min_values, 6).tolist()}")
    else:
        logger.info(f"❌ Сертифікат '{family.name}' не пройдено: мінімуми {min_values}, свідки {witnesses}")
    return certificate


class ThresholdResult(BaseModel):
    model_config = ConfigDict(ser_json_inf_nan="constants")

    c_max: float
    bracket_low: float
    bracket_high: float
    failing_c: float
    steps: int
    certificate: CurvatureCertificate
    note: str = GRID_ONLY_NOTE


def threshold_search(family_builder: Callable[[float], Family], c_range: Tuple[float, float],
                     grid: Sequence[float], tol: float = THRESHOLD_TOL,
                     tolerance: float = DEFAULT_CERT_TOL, prescan: int = 8) -> ThresholdResult:
    """
    Найбільше c, для якого сертифікат проходить (бісекція до ширини tol).

    Попереднє сканування шукає першу точку, що проходить, і першу точку після
    неї, що не проходить; бісекція працює на цьому відрізку.
    """
    low, high = c_range
    if not low < high or tol <= 0:
        raise ParameterError(f"invalid bracket {c_range} or tol {tol}")

    def certify(c: float) -> Optional[CurvatureCertificate]:
        try:
            certificate = verify_nonneg(family_builder(c), grid, tolerance)
        except RicciForgeError as exc:
            logger.debug(f"c={c}: побудова не вдалася ({exc})")
            return None
        return certificate

    scan = np.linspace(low, high, prescan + 1)
    results = [certify(float(c)) for c in scan]
    passes = [res is not None and res.passed for res in results]
    first_pass = next((i for i, ok in enumerate(passes) if ok), None)
    first_fail = None
    if first_pass is not None:
        first_fail = next((i for i in range(first_pass + 1, len(scan)) if not passes[i]), None)
    if first_pass is None or first_fail is None:
        raise BracketError(ErrorText.NO_SIGN_CHANGE.format(
            low=low, high=high, low_passed=passes[0], high_passed=passes[-1]))

    good, bad = float(scan[first_fail - 1]), float(scan[first_fail])
    best = results[first_fail - 1]
    steps = 0
    while bad - good > tol:
        middle = 0.5 * (good + bad)
        result = certify(middle)
        steps += 1
        if result is not None and result.passed:
            good, best = middle, result
        else:
            bad = middle
        logger.debug(f"Бісекція крок {steps}: [{good:.8f}, {bad:.8f}]")

    logger.info(f"🎯 Поріг знайдено: c_max={good:.8f} (відрізок {good:.8f}..{bad:.8f})")
    return ThresholdResult(c_max=good, bracket_low=float(low), bracket_high=float(high),
                           failing_c=bad, steps=steps, certificate=best)


class RegionBound(BaseModel):
    model_config = ConfigDict(ser_json_inf_nan="constants")

    region: str
    lo: float
    hi: float
    q1_lower: float
    q2_lower: float
    q3_lower: float


def berger_region_bounds(n: int, c: float, kernel: Optional[MollifierKernel] = None) -> List[RegionBound]:
    """
    Аналітичні нижні оцінки умов на трьох ділянках згладженого профілю
    rho = n r, phi = n (ліворуч), rho = phi = n + c(r-1) (праворуч).
    """
    kernel = kernel or MollifierKernel(KERNEL_RADIUS)
    radius = kernel.radius
    inner, outer = 1 - radius, 1 + radius
    sup = kernel.sup_norm

    left = RegionBound(region="core", lo=0.0, hi=inner, q1_lower=0.0,
                       q2_lower=0.0, q3_lower=4 - 2 * inner ** 2)
    rho_min = n * inner
    phi_max = n + c * radius
    ratio_min = rho_min / phi_max
    q1_mid = 0.0 if n - 3 * c >= 0 else sup * (n - 3 * c) / rho_min
    q2_mid = 2 * ratio_min ** 4 - 2 * n * c
    q3_mid = 2 - (n + c / 2) / (n / 2) * n * c - (n + c / 2) * c * sup - c ** 2
    middle = RegionBound(region="transition", lo=inner, hi=outer, q1_lower=q1_mid,
                         q2_lower=q2_mid, q3_lower=q3_mid)
    right = RegionBound(region="cone", lo=outer, hi=math.inf, q1_lower=0.0,
                        q2_lower=2 - 2 * c ** 2, q3_lower=2 - 2 * c ** 2)
    return [left, middle, right]
