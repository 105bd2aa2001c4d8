"""
Побудова сімейств метрик: простір Егучі-Хенсона та його конформна
модифікація, склеєні деформовані добутки M, десингуляризації Бергера N
та граничну сферичну суспензію
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator
from scipy import integrate
from scipy.interpolate import BPoly

from .config import (
    BERGER_THRESHOLD_N4,
    CONFORMAL_FLAT_END,
    CONFORMAL_KERNEL_RADIUS,
    CONFORMAL_TANGENT_POINT,
    CONTINUITY_TOL,
    DEFAULT_CERT_TOL,
    DEFAULT_GRID_STEP,
    EH_MARGIN,
    KERNEL_RADIUS,
    MODEL_BLEND_INNER,
    MODEL_BLEND_OUTER,
    ORACLE_CERT_TOL,
    ORACLE_STEP,
)
from .curvature import (
    BergerMetric,
    CurvatureCertificate,
    GridSpec,
    RegionBound,
    WarpedMetric,
    berger_region_bounds,
    make_grid,
    verify_nonneg,
)
from .errors import NumericError, ParameterError, PreconditionError
from .groups import GroupAction, group_by_label
from .profiles import (
    AffineTerm,
    MollifierKernel,
    PolyTerm,
    RegularityReport,
    ScalarProfile,
    SinTerm,
    check_regularity,
    concave_smooth,
    mollify,
)
from .tensor_oracle import ChartMetric, ricci_eigen_min

logger = logging.getLogger(__name__)

FAMILY_KINDS = (
    "EH", "EH_conformal", "M_open", "M_closed", "N_open", "N_closed", "suspension_limit",
    "warped", "berger", "round_sphere",
)


class ConstructionParams(BaseModel):
    """Параметри конструкцій (a, b, b', c, d, n)"""
    model_config = ConfigDict(frozen=True)

    a: float = Field(1.0, gt=0)
    b: Optional[float] = None
    b_prime: Optional[float] = None
    c: Optional[float] = Field(None, gt=0)
    d: Optional[float] = None
    n: int = Field(4, ge=1)

    @model_validator(mode="after")
    def check_ranges(self) -> "ConstructionParams":
        if self.b is not None and not 0 < self.b < 1:
            raise ValueError(f"need 0 < b < 1, got b={self.b}")
        if self.b_prime is not None and (self.b is None or not self.b < self.b_prime < 1):
            raise ValueError(f"need 0 < b < b' < 1, got b={self.b}, b'={self.b_prime}")
        if self.d is not None and not 0 < self.d <= 0.5:
            raise ValueError(f"need 0 < d <= 1/2, got d={self.d}")
        return self


def make_params(**values: Any) -> ConstructionParams:
    try:
        return ConstructionParams(**values)
    except ValidationError as exc:
        raise ParameterError(str(exc)) from exc


@dataclass(frozen=True, eq=False)
class MetricFamilySpec:
    """Побудоване сімейство: профілі, параметри, група, сертифікат"""
    kind: str
    params: ConstructionParams
    profiles: Dict[str, ScalarProfile]
    group: str
    domain: Tuple[float, float]
    quotient_order: int = 1
    certificate: Optional[CurvatureCertificate] = None
    regularity: Dict[str, RegularityReport] = field(default_factory=dict)
    scale_factors: Dict[str, float] = field(default_factory=dict)
    residuals: Dict[str, float] = field(default_factory=dict)
    region_bounds: List[RegionBound] = field(default_factory=list)
    chart: Optional[ChartMetric] = None
    closed: bool = False

    @property
    def is_berger(self) -> bool:
        return "rho" in self.profiles

    @property
    def passed(self) -> bool:
        return self.certificate is not None and self.certificate.passed

    @property
    def action(self) -> GroupAction:
        return group_by_label(self.group)

    def metric(self) -> Union[WarpedMetric, BergerMetric]:
        if self.is_berger:
            return BergerMetric(self.profiles["rho"], self.profiles["phi"], self.params.n,
                                self.domain, name=self.kind)
        if "warp" not in self.profiles:
            raise PreconditionError(f"family {self.kind} has no warped form")
        fiber_order = self.quotient_order if self.quotient_order > 1 else 1
        return WarpedMetric(self.profiles["warp"], 3, fiber_order, self.domain, name=self.kind)

    def warp_scale(self, r: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """(вертикальний, горизонтальний) масштаби шару в точках r"""
        if self.is_berger:
            return self.profiles["rho"](r), self.profiles["phi"](r)
        warp = self.profiles["warp"](r)
        return warp, warp

    def to_dict(self) -> Dict[str, Any]:
        return {
            "kind": self.kind,
            "params": self.params.model_dump(),
            "group": self.group,
            "domain": list(self.domain),
            "quotient_order": self.quotient_order,
            "profiles": {name: profile.to_dict() for name, profile in self.profiles.items()},
            "scale_factors": self.scale_factors,
            "residuals": self.residuals,
            "regularity": {name: report.model_dump() for name, report in self.regularity.items()},
            "region_bounds": [bound.model_dump() for bound in self.region_bounds],
            "certificate": self.certificate.model_dump() if self.certificate else None,
            "closed": self.closed,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "MetricFamilySpec":
        """Відновлення зі збереженого JSON (карта EH не серіалізується)"""
        certificate = data.get("certificate")
        return cls(
            kind=data["kind"],
            params=ConstructionParams.model_validate(data["params"]),
            profiles={name: ScalarProfile.from_dict(item) for name, item in data.get("profiles", {}).items()},
            group=data["group"],
            domain=tuple(data["domain"]),
            quotient_order=data.get("quotient_order", 1),
            certificate=CurvatureCertificate.model_validate(certificate) if certificate else None,
            regularity={name: RegularityReport.model_validate(item)
                        for name, item in data.get("regularity", {}).items()},
            scale_factors=dict(data.get("scale_factors", {})),
            residuals=dict(data.get("residuals", {})),
            region_bounds=[RegionBound.model_validate(item) for item in data.get("region_bounds", [])],
            closed=data.get("closed", False),
        )


# ---------------------------------------------------------------------------
# Егучі-Хенсон
# ---------------------------------------------------------------------------

def _sigma_forms(theta: np.ndarray, psi: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Коефіцієнти sigma_x, sigma_y, sigma_z при (dtheta, dphi, dpsi), форма (N, 3)"""
    zeros = np.zeros_like(theta)
    sx = 0.5 * np.column_stack([np.sin(psi), -np.sin(theta) * np.cos(psi), zeros])
    sy = 0.5 * np.column_stack([-np.cos(psi), -np.sin(theta) * np.sin(psi), zeros])
    sz = 0.5 * np.column_stack([zeros, np.cos(theta), np.ones_like(theta)])
    return sx, sy, sz


def _angular_block(theta: np.ndarray, psi: np.ndarray, horizontal: np.ndarray,
                   vertical: np.ndarray) -> np.ndarray:
    """horizontal (sx^2 + sy^2) + vertical sz^2, форма (N, 3, 3)"""
    sx, sy, sz = _sigma_forms(theta, psi)
    outer = lambda v: np.einsum("ni,nj->nij", v, v)
    return horizontal[:, None, None] * (outer(sx) + outer(sy)) + vertical[:, None, None] * outer(sz)


def _assemble(radial: np.ndarray, angular: np.ndarray) -> np.ndarray:
    out = np.zeros((radial.shape[0], 4, 4))
    out[:, 0, 0] = radial
    out[:, 1:, 1:] = angular
    return out


ANGLE_BOX = ((0.0, math.pi), (0.0, 2 * math.pi), (0.0, 2 * math.pi))


def eh_sigma_z_coefficient(a: float, r: np.ndarray) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    return r ** 2 * (1 - (a / r) ** 4)


def eh_u_of_r(a: float, r: np.ndarray) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    return np.sqrt(r ** 2 - a ** 4 / r ** 2)


def eh_r_of_u(a: float, u: np.ndarray) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    return np.sqrt((u ** 2 + np.sqrt(u ** 4 + 4 * a ** 4)) / 2)


def eguchi_hanson_chart(a: float, margin: float = EH_MARGIN, r_max: Optional[float] = None) -> ChartMetric:
    """
    dr^2/(1-(a/r)^4) + r^2 (sx^2 + sy^2) + r^2 (1-(a/r)^4) sz^2
    у координатах (r, theta, phi, psi), psi ~ psi + 2 pi.
    """
    if not a > 0:
        raise ParameterError(f"Eguchi-Hanson scale must be positive, got {a}")

    def metric(x: np.ndarray) -> np.ndarray:
        r, theta, psi = x[:, 0], x[:, 1], x[:, 3]
        fall = 1 - (a / r) ** 4
        return _assemble(1 / fall, _angular_block(theta, psi, r ** 2, r ** 2 * fall))

    r_top = r_max if r_max is not None else 50 * a
    return ChartMetric(4, metric, "eguchi_hanson", ((a * (1 + margin), r_top),) + ANGLE_BOX,
                       metadata={"a": a, "margin": margin})


def eguchi_hanson_u_chart(a: float, margin: float = EH_MARGIN, u_max: float = 3.0) -> ChartMetric:
    """Та сама метрика у змінній u: du^2/(1+(a/r)^4)^2 + r^2 (sx^2 + sy^2) + u^2 sz^2"""
    if not a > 0:
        raise ParameterError(f"Eguchi-Hanson scale must be positive, got {a}")

    def metric(x: np.ndarray) -> np.ndarray:
        u, theta, psi = x[:, 0], x[:, 1], x[:, 3]
        r = eh_r_of_u(a, u)
        radial = 1 / (1 + (a / r) ** 4) ** 2
        return _assemble(radial, _angular_block(theta, psi, r ** 2, u ** 2))

    u_min = float(eh_u_of_r(a, a * (1 + margin)))
    return ChartMetric(4, metric, "eguchi_hanson_u", ((u_min, u_max),) + ANGLE_BOX, metadata={"a": a})


def cone_chart(r_range: Tuple[float, float] = (0.05, 50.0)) -> ChartMetric:
    """dr^2 + r^2 ds_3^2 у тих самих кутах (границя a -> 0)"""
    def metric(x: np.ndarray) -> np.ndarray:
        r, theta, psi = x[:, 0], x[:, 1], x[:, 3]
        return _assemble(np.ones_like(r), _angular_block(theta, psi, r ** 2, r ** 2))

    return ChartMetric(4, metric, "cone", (r_range,) + ANGLE_BOX)


def model_sigma_chart(u_range: Tuple[float, float] = (0.05, 20.0)) -> ChartMetric:
    """Модельна метрика du^2/(1+u^2)^2 + u^2/(1+u^2)^2 ds_3^2 у sigma-кутах"""
    def metric(x: np.ndarray) -> np.ndarray:
        u, theta, psi = x[:, 0], x[:, 1], x[:, 3]
        scale = (u / (1 + u ** 2)) ** 2
        return _assemble(1 / (1 + u ** 2) ** 2, _angular_block(theta, psi, scale, scale))

    return ChartMetric(4, metric, "model_sigma", (u_range,) + ANGLE_BOX)


def eh_embedding(x: np.ndarray) -> np.ndarray:
    """Кути (theta, phi, psi) точки карти -> одинична точка S^3 (з точністю до знаку)"""
    x = np.atleast_2d(x)
    theta, phi, psi = x[:, 1], x[:, 2], x[:, 3]
    return np.column_stack([
        np.cos(theta / 2) * np.cos((psi + phi) / 2),
        np.cos(theta / 2) * np.sin((psi + phi) / 2),
        np.sin(theta / 2) * np.cos((psi - phi) / 2),
        np.sin(theta / 2) * np.sin((psi - phi) / 2),
    ])


def eh_angular_involution(x: np.ndarray) -> np.ndarray:
    """(theta, phi, psi) -> (pi - theta, pi + phi, pi - psi): індукована iota ізометрія"""
    x = np.array(np.atleast_2d(x), dtype=float)
    x[:, 1] = math.pi - x[:, 1]
    x[:, 2] = np.mod(math.pi + x[:, 2], 2 * math.pi)
    x[:, 3] = np.mod(math.pi - x[:, 3], 2 * math.pi)
    return x


# ---------------------------------------------------------------------------
# Конформна модифікація
# ---------------------------------------------------------------------------

def conformal_factor_profile(flat_end: float = CONFORMAL_FLAT_END,
                             tangent_point: float = CONFORMAL_TANGENT_POINT,
                             kernel_radius: float = CONFORMAL_KERNEL_RADIUS,
                             upper: float = 4.0) -> ScalarProfile:
    """
    Опукла функція h: h = 1 на (0, flat_end), h = 1 + s^2 для s >= tangent_point + радіус.

    Згладжується опукла кускова функція 1 / дотична / 1 + s^2 - m2, де m2 - другий
    момент ядра (згортка повертає рівно 1 + s^2).
    """
    kernel = MollifierKernel(kernel_radius)
    m2 = kernel.moment(2)
    s_t = tangent_point
    s_a = (s_t ** 2 + m2) / (2 * s_t)
    if s_a - kernel_radius < flat_end:
        raise ParameterError(f"flat region ends at {s_a - kernel_radius:.4f} < {flat_end}")
    line = AffineTerm(1.0, 2 * s_t, s_a)
    quad = PolyTerm((1 - m2, 0.0, 1.0))
    raw = ScalarProfile.piecewise([
        (-2 * kernel_radius, s_a, AffineTerm(1.0, 0.0)),
        (s_a, s_t, line),
        (s_t, upper + kernel_radius, quad),
    ], name="h_raw")
    return mollify(raw, kernel).restricted(-kernel_radius, upper)


def _smooth_step(x: np.ndarray) -> np.ndarray:
    """Гладка сходинка: 0 при x <= 0, 1 при x >= 1"""
    x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
    left = np.where(x > 0, np.exp(-1 / np.where(x > 0, x, 1.0)), 0.0)
    right = np.where(x < 1, np.exp(-1 / np.where(x < 1, 1 - x, 1.0)), 0.0)
    return left / (left + right)


def model_blend(u: np.ndarray, inner: float = MODEL_BLEND_INNER, outer: float = MODEL_BLEND_OUTER) -> np.ndarray:
    """chi = 1 при |u-1| <= inner, chi = 0 при |u-1| >= outer"""
    return _smooth_step((outer - np.abs(np.asarray(u) - 1)) / (outer - inner))


def _t_of_u(a: float, u_max: float, nodes: int = 2001) -> BPoly:
    """t(u) = int_0^u du / (1 + (a/r)^4) з аналітичними t', t''"""
    def rate(u: float) -> float:
        r = float(eh_r_of_u(a, u))
        return 1 / (1 + (a / r) ** 4)

    grid = np.linspace(0.0, u_max, nodes)
    increments = np.zeros(nodes)
    for idx in range(1, nodes):
        result = integrate.quad(rate, grid[idx - 1], grid[idx], epsabs=1e-14, epsrel=1e-12, full_output=1)
        if len(result) > 3:
            raise NumericError(f"quadrature for t(u) failed on [{grid[idx - 1]}, {grid[idx]}]: {result[3]}")
        increments[idx] = result[0]
    t = np.cumsum(increments)
    if np.any(np.diff(t) <= 0):
        raise NumericError("t(u) is not strictly increasing")
    r = eh_r_of_u(a, grid)
    ratio = (a / r) ** 4
    t1 = 1 / (1 + ratio)
    t2 = 4 * a ** 4 * grid / (r ** 6 * (1 + ratio) ** 3)
    return BPoly.from_derivatives(grid, np.column_stack([t, t1, t2]))


def conformal_modified(params: ConstructionParams, h: ScalarProfile, margin: float = EH_MARGIN,
                       u_max: float = 3.0, certify: bool = True,
                       certificate_points: int = 16) -> ChartMetric:
    """
    Метрика ds^2 / h(t)^2 у змінних (u, theta, phi, psi), склеєна гладким
    зрізанням chi з модельною метрикою в околі u = 1.
    """
    a = params.a
    grid = np.linspace(max(h.domain[0], 0.0), min(h.domain[1], u_max), 4001)
    report = check_regularity(h, grid)
    if not report.convex:
        raise PreconditionError(f"conformal factor is not convex: min second difference below slack")
    if report.min_value < 1 - CONTINUITY_TOL:
        raise PreconditionError(f"conformal factor drops below 1: {report.min_value}")
    flat = np.linspace(0.0, CONFORMAL_FLAT_END, 64)
    if np.max(np.abs(h(flat) - 1)) > CONTINUITY_TOL:
        raise PreconditionError(f"conformal factor differs from 1 on (0, {CONFORMAL_FLAT_END})")

    t_of_u = _t_of_u(a, u_max)
    base = eguchi_hanson_u_chart(a, margin, u_max)
    model = model_sigma_chart((base.valid_region[0][0], u_max))

    def conformal(x: np.ndarray) -> np.ndarray:
        factor = np.asarray(h(t_of_u(x[:, 0])))
        return base.metric_fn(x) / (factor ** 2)[:, None, None]

    def blended(x: np.ndarray) -> np.ndarray:
        chi = model_blend(x[:, 0])[:, None, None]
        return (1 - chi) * conformal(x) + chi * model.metric_fn(x)

    conformal_chart = ChartMetric(4, conformal, "eh_conformal_raw", base.valid_region, metadata={"a": a})
    chart = ChartMetric(4, blended, "eh_conformal", base.valid_region, metadata={
        "a": a,
        "t_of_u": t_of_u,
        "conformal_chart": conformal_chart,
        "model_chart": model,
        "h_regularity": report,
    })
    if certify:
        chart.metadata["certificate"] = oracle_certificate(chart, certificate_points, name="EH_conformal")
    return chart


def oracle_certificate(chart: ChartMetric, count: int = 16, name: str = "",
                       upper: float = 1.5, tolerance: float = ORACLE_CERT_TOL,
                       angles: Tuple[float, float, float] = (1.1, 2.0, 2.5)) -> CurvatureCertificate:
    """Мінімальне власне значення Річчі (оракул) у точках уздовж радіальної координати"""
    lo, hi = chart.valid_region[0]
    stop = min(upper, hi - 8 * ORACLE_STEP)
    start = lo + 8 * ORACLE_STEP + 0.01 * (stop - lo)
    radial = np.linspace(start, stop, count)
    values = np.array([ricci_eigen_min(chart, (u,) + angles, richardson=True) for u in radial])
    index = int(np.argmin(values))
    certificate = CurvatureCertificate(
        family=name or chart.chart_name,
        grid=GridSpec.of(radial),
        condition_names=["ricci_eigen_min"],
        min_values=[float(values[index])],
        witness_points=[float(radial[index])],
        passed=bool(values[index] >= -tolerance),
        tolerance=tolerance,
        note="tensor-oracle eigenvalues at sampled chart points",
    )
    logger.info(f"🔬 Оракул '{certificate.family}': мін. власне значення {values[index]:.3e}, пройдено={certificate.passed}")
    return certificate


def eguchi_hanson_family(params: ConstructionParams, conformal: bool = False) -> MetricFamilySpec:
    if conformal:
        chart = conformal_modified(params, conformal_factor_profile())
        certificate = chart.metadata["certificate"]
        kind = "EH_conformal"
    else:
        chart = eguchi_hanson_chart(params.a)
        certificate = oracle_certificate(chart, name="EH", upper=5 * params.a)
        kind = "EH"
    lo, hi = chart.valid_region[0]
    return MetricFamilySpec(kind=kind, params=params, profiles={}, group="mu_2", domain=(lo, hi),
                            quotient_order=2, certificate=certificate, chart=chart)


# ---------------------------------------------------------------------------
# Сімейства M
# ---------------------------------------------------------------------------

def _certificate_step(length_scale: float) -> float:
    return min(DEFAULT_GRID_STEP, length_scale / 100)


def _closed_grid(d: float, cap_lo: float, cap_hi: float, cap_step: float) -> np.ndarray:
    """
    Сітка замкненого сімейства: основна сітка на (d/100, pi - d/100) та
    згущені сітки обох масштабованих шапок на (cap_lo, cap_hi) і дзеркально.
    """
    main = make_grid(d / 100, math.pi - d / 100, _certificate_step(d))
    cap = make_grid(cap_lo, cap_hi, cap_step)
    return np.unique(np.concatenate([main, cap, math.pi - cap]))


def _default_b_prime(b: float) -> float:
    return min(2 * b, b + 0.1, (b + 1) / 2)


def _m_open_warp(c: float, b: float, b_prime: float, r_max: float) -> Tuple[ScalarProfile, Dict[str, float]]:
    x = math.pi / 2 - b
    halfwidth = (b_prime - b) / 2
    q = math.sin(x) - 0.5 * math.cos(x) * x
    scale = 2 * c / q
    if x - halfwidth <= 0:
        raise ParameterError(f"smoothing window ({x - halfwidth}, {x + halfwidth}) reaches the cap point")
    rho_max = 2 * r_max / scale
    hat = ScalarProfile.piecewise([
        (0.0, x, SinTerm()),
        (x, rho_max, AffineTerm(math.sin(x), 0.5 * math.cos(x), x)),
    ], name="phi_hat")
    smooth = concave_smooth(hat, x, halfwidth)
    warp = smooth.transformed(scale / 2, 2 / scale, 0.0, name="warp")
    affine_start = scale * (x + halfwidth) / 2
    if affine_start > 1:
        raise ParameterError(f"cone region starts at r={affine_start:.4f} > 1")
    last = warp.pieces[-1]
    parts = [(piece.lo, piece.hi, piece.term) for piece in warp.pieces[:-1]]
    parts.append((last.lo, last.hi, AffineTerm(0.0, c, -1.0)))
    warp = ScalarProfile.piecewise(parts, name="warp")
    return warp, {"lambda": scale, "q": q, "corner": x, "halfwidth": halfwidth, "affine_start": affine_start}


def build_m_profile(c: Optional[float], b: float, b_prime: Optional[float] = None,
                    r_max: float = 10.0) -> MetricFamilySpec:
    """
    Профіль phi^ = sin на (0, pi/2 - b), далі афінний зі схилом cos(pi/2-b)/2;
    кут згладжується, змінна та метрика масштабуються так, що деформація
    дорівнює c(r+1) за межами вікна згладжування.
    """
    b_prime = b_prime if b_prime is not None else _default_b_prime(b)
    expected = math.cos(math.pi / 2 - b) / 2
    if c is None:
        c = expected
    if abs(c - expected) > 1e-12 * max(1.0, abs(expected)):
        raise ParameterError(f"c must equal cos(pi/2 - b)/2 = {expected!r}, got {c!r}")
    params = make_params(b=b, b_prime=b_prime, c=c)
    warp, factors = _m_open_warp(c, b, b_prime, r_max)

    grid = make_grid(0.01, r_max, _certificate_step(factors["lambda"] * factors["halfwidth"]))
    metric = WarpedMetric(warp, 3, 4, (0.0, r_max), name="M_open")
    certificate = verify_nonneg(metric, grid, DEFAULT_CERT_TOL)
    regularity = check_regularity(warp, grid)
    logger.info(f"🏗️ M_open побудовано: c={c:.6f}, lambda={factors['lambda']:.6f}")
    return MetricFamilySpec(kind="M_open", params=params, profiles={"warp": warp}, group="iota",
                            domain=(0.0, r_max), quotient_order=4, certificate=certificate,
                            regularity={"warp": regularity}, scale_factors=factors)


def _middle_term(c: float, d: float) -> SinTerm:
    return SinTerm(amplitude=c / 2, offset=-c / 2 * math.sin(0.9 * d) + c * d)


def _close_up(cap: ScalarProfile, c: float, d: float, halfwidth: float, name: str) -> ScalarProfile:
    """Шапка на (0, 9d/10), середина на (9d/10, pi - 9d/10), дзеркальна шапка; кути згладжено"""
    joint = 0.9 * d
    left = cap.restricted(0.0, joint)
    right = left.transformed(1.0, -1.0, math.pi)
    middle = ScalarProfile.piecewise([(joint, math.pi - joint, _middle_term(c, d))])
    profile = ScalarProfile.join([left, middle, right], name=name)
    profile = concave_smooth(profile, joint, halfwidth)
    return concave_smooth(profile, math.pi - joint, halfwidth)


def _closed_residuals(profile: ScalarProfile, c: float, d: float) -> Dict[str, float]:
    grid = np.linspace(d, math.pi - d, 2001)
    values = profile(grid)
    built = _middle_term(c, d).evaluate(grid)
    stated = c * (np.sin(grid) - math.sin(0.45 * d) + d)
    symmetric = np.linspace(0.0, math.pi, 2001)
    return {
        "middle_vs_built": float(np.max(np.abs(values - built))),
        "middle_vs_stated": float(np.max(np.abs(values - stated))),
        "limit_deviation": float(np.max(np.abs(values - c / 2 * np.sin(grid)))),
        "mirror": float(np.max(np.abs(profile(symmetric) - profile(math.pi - symmetric)))),
        "endpoint_left": float(profile(0.0)),
        "endpoint_right": float(profile(math.pi)),
    }


def _check_closed_inputs(c: float, d: float, halfwidth: float) -> None:
    if not c > 0:
        raise ParameterError(f"c must be positive, got {c}")
    if not 0 < d <= 0.5:
        raise ParameterError(f"need 0 < d <= 1/2, got {d}")
    if not 0 < halfwidth < 0.1 * d or 0.9 * d + halfwidth >= math.pi / 2:
        raise ParameterError(f"smoothing window {halfwidth} overlaps the cap or the midpoint")


def build_m_closed_profile(c: float, d: float, halfwidth: Optional[float] = None) -> MetricFamilySpec:
    """
    Замкнене сімейство: шапка M_open у масштабі d/10, середина
    c/2 sin r - c/2 sin(9d/10) + c d, дзеркальна шапка.
    """
    halfwidth = halfwidth if halfwidth is not None else d / 20
    _check_closed_inputs(c, d, halfwidth)
    if not 2 * c < 1:
        raise ParameterError(f"cap construction needs 2c < 1, got c={c}")
    b = math.asin(2 * c)
    b_prime = _default_b_prime(b)
    params = make_params(b=b, b_prime=b_prime, c=c, d=d)

    mu_scale = d / 10
    open_warp, factors = _m_open_warp(c, b, b_prime, r_max=10.0)
    if mu_scale * factors["affine_start"] >= 0.9 * d - halfwidth:
        raise ParameterError("cap smoothing window overlaps the middle smoothing window")
    cap = open_warp.transformed(mu_scale, 1 / mu_scale, 0.0)
    warp = _close_up(cap, c, d, halfwidth, name="warp")

    # шапка - M_open у масштабі d/10, перевіряється з кроком відкритого сертифіката
    open_step = _certificate_step(factors["lambda"] * factors["halfwidth"])
    grid = make_grid(d / 100, math.pi - d / 100, _certificate_step(d))
    certificate_grid = _closed_grid(d, 0.01 * mu_scale, 1.5 * mu_scale * factors["affine_start"],
                                    mu_scale * open_step)
    metric = WarpedMetric(warp, 3, 4, (0.0, math.pi), name="M_closed")
    certificate = verify_nonneg(metric, certificate_grid, DEFAULT_CERT_TOL)
    regularity = check_regularity(warp, grid)
    residuals = _closed_residuals(warp, c, d)
    factors = dict(factors, cap_scale=mu_scale, middle_halfwidth=halfwidth)
    logger.info(f"🏗️ M_closed побудовано: c={c:.6f}, d={d:.6f}, залишок {residuals['middle_vs_stated']:.3e}")
    return MetricFamilySpec(kind="M_closed", params=params, profiles={"warp": warp}, group="nu_4",
                            domain=(0.0, math.pi), quotient_order=4, certificate=certificate,
                            regularity={"warp": regularity}, scale_factors=factors, residuals=residuals,
                            closed=True)


# ---------------------------------------------------------------------------
# Сімейства N (Бергер)
# ---------------------------------------------------------------------------

def _n_hat_profiles(n: int, c: float, upper: float) -> Tuple[ScalarProfile, ScalarProfile]:
    rho_hat = ScalarProfile.piecewise([
        (-1.0, 1.0, AffineTerm(0.0, float(n), 0.0)),
        (1.0, upper, AffineTerm(float(n), c, 1.0)),
    ], name="rho_hat")
    phi_hat = ScalarProfile.piecewise([
        (-1.0, 1.0, AffineTerm(float(n), 0.0, 0.0)),
        (1.0, upper, AffineTerm(float(n), c, 1.0)),
    ], name="phi_hat")
    return rho_hat, phi_hat


def _n_smoothed(n: int, c: float, r_max: float, kernel: MollifierKernel) -> Tuple[ScalarProfile, ScalarProfile]:
    rho_hat, phi_hat = _n_hat_profiles(n, c, r_max + kernel.radius)
    return mollify(rho_hat, kernel), mollify(phi_hat, kernel)


def _parity_residuals(rho: ScalarProfile, phi: ScalarProfile, span: float) -> Dict[str, float]:
    delta = np.linspace(1e-3, span, 200)
    return {
        "rho_odd": float(np.max(np.abs(rho(delta) + rho(-delta)))),
        "phi_even": float(np.max(np.abs(phi(delta) - phi(-delta)))),
    }


def build_n_profiles(n: int, c: float, r_max: float = 60.0,
                     kernel: Optional[MollifierKernel] = None, certify: bool = True,
                     grid: Optional[np.ndarray] = None) -> MetricFamilySpec:
    """
    rho^ = n r, phi^ = n на (-1, 1), обидва n + c(r-1) далі; згладжування
    ядром радіуса 1/4. Поблизу r = 0 rho = n r та phi = n точно.
    """
    if n < 1:
        raise ParameterError(f"n must be >= 1, got {n}")
    if not 0 < c < n:
        raise ParameterError(f"need 0 < c < n, got c={c}")
    kernel = kernel or MollifierKernel(KERNEL_RADIUS)
    params = make_params(c=c, n=n)
    rho_full, phi_full = _n_smoothed(n, c, r_max, kernel)
    parity = _parity_residuals(rho_full, phi_full, 1 - kernel.radius - 1e-3)
    rho = rho_full.restricted(0.0, r_max)
    phi = phi_full.restricted(0.0, r_max)

    certificate = None
    if certify:
        grid = grid if grid is not None else make_grid(0.01, min(50.0, r_max), DEFAULT_GRID_STEP)
        certificate = verify_nonneg(BergerMetric(rho, phi, n, (0.0, r_max), name="N_open"), grid, DEFAULT_CERT_TOL)
    factors = {"lambda": c / (n - c), "kernel_radius": kernel.radius}
    return MetricFamilySpec(kind="N_open", params=params, profiles={"rho": rho, "phi": phi},
                            group=f"mu_{n}", domain=(0.0, r_max), quotient_order=n,
                            certificate=certificate, scale_factors=factors, residuals=parity,
                            region_bounds=berger_region_bounds(n, c, kernel))


def berger_metric_for(n: int, c: float, grid_hi: float = 50.0) -> BergerMetric:
    """Сім'я для пошуку порогу: BergerMetric з build_n_profiles без сертифіката"""
    spec = build_n_profiles(n, c, r_max=grid_hi + 1.0, certify=False)
    return spec.metric()


def build_n_closed_profiles(c: float, d: float, n: int = 4,
                            halfwidth: Optional[float] = None) -> MetricFamilySpec:
    """
    Замкнене сімейство Бергера: нормалізоване N у масштабі d/10 як шапка,
    спільна середина та праве продовження для rho і phi, дзеркальна шапка.
    """
    halfwidth = halfwidth if halfwidth is not None else d / 20
    _check_closed_inputs(c, d, halfwidth)
    if c >= BERGER_THRESHOLD_N4:
        logger.warning(f"⚠️ c={c} не менше записаного порогу {BERGER_THRESHOLD_N4}")
    params = make_params(c=c, d=d, n=n)
    kernel = MollifierKernel(KERNEL_RADIUS)
    scale = c / (n - c)
    mu_scale = d / 10
    r_open = d / (scale * mu_scale) + 2.0
    rho_full, phi_full = _n_smoothed(n, c, r_open, kernel)
    factor = scale * mu_scale
    rho_cap = rho_full.restricted(0.0, r_open).transformed(factor, 1 / factor, 0.0)
    phi_cap = phi_full.restricted(0.0, r_open).transformed(factor, 1 / factor, 0.0)
    if factor * (1 + kernel.radius) >= 0.9 * d - halfwidth:
        raise ParameterError("Berger cap transition overlaps the middle smoothing window")

    # хвіст шапки c(r + d/10) у точній формі
    tails = []
    for cap in (rho_cap, phi_cap):
        last = cap.pieces[-1]
        parts = [(piece.lo, piece.hi, piece.term) for piece in cap.pieces[:-1]]
        parts.append((last.lo, last.hi, AffineTerm(0.0, c, -mu_scale)))
        tails.append(ScalarProfile.piecewise(parts))
    rho = _close_up(tails[0], c, d, halfwidth, name="rho")
    phi = _close_up(tails[1], c, d, halfwidth, name="phi")

    # ядро Бергера займає factor * (3/4, 5/4), далеко нижче d/100
    grid = _closed_grid(d, 0.01 * factor, 1.5 * factor, factor * DEFAULT_GRID_STEP)
    metric = BergerMetric(rho, phi, n, (0.0, math.pi), name="N_closed")
    certificate = verify_nonneg(metric, grid, DEFAULT_CERT_TOL)
    shared = make_grid(d / 2, math.pi - d / 2, _certificate_step(d))
    regularity = {"rho": check_regularity(rho, shared), "phi": check_regularity(phi, shared)}
    residuals = _closed_residuals(rho, c, d)
    residuals["rho_phi_shared"] = float(np.max(np.abs(rho(shared) - phi(shared))))
    residuals["phi_endpoint_left"] = float(phi(0.0))
    factors = {"lambda": scale, "cap_scale": mu_scale, "middle_halfwidth": halfwidth}
    logger.info(f"🏗️ N_closed побудовано: c={c:.6f}, d={d:.6f}, сертифікат={certificate.passed}")
    return MetricFamilySpec(kind="N_closed", params=params, profiles={"rho": rho, "phi": phi},
                            group=f"mu_{n}", domain=(0.0, math.pi), quotient_order=n,
                            certificate=certificate, regularity=regularity, scale_factors=factors,
                            residuals=residuals, closed=True)


# ---------------------------------------------------------------------------
# Граничний простір та загальні сімейства
# ---------------------------------------------------------------------------

def limit_suspension(c: float, quotient_order: int = 4) -> MetricFamilySpec:
    """dr^2 + c^2 sin^2(r) ds_3^2 на (0, pi), шар S^3 / mu_4"""
    if not c > 0:
        raise ParameterError(f"c must be positive, got {c}")
    warp = ScalarProfile.piecewise([(0.0, math.pi, SinTerm(amplitude=c))], name="warp")
    grid = make_grid(0.01, math.pi - 0.01, DEFAULT_GRID_STEP)
    metric = WarpedMetric(warp, 3, quotient_order, (0.0, math.pi), name="suspension_limit")
    certificate = verify_nonneg(metric, grid, DEFAULT_CERT_TOL)
    return MetricFamilySpec(kind="suspension_limit", params=make_params(c=c, n=quotient_order),
                            profiles={"warp": warp}, group=f"mu_{quotient_order}",
                            domain=(0.0, math.pi), quotient_order=quotient_order, certificate=certificate,
                            closed=True)


def warped_family(warp: ScalarProfile, quotient_order: int = 1, closed: bool = False,
                  certify: bool = True) -> MetricFamilySpec:
    lo, hi = warp.domain
    certificate = None
    if certify:
        span = hi - lo
        grid = make_grid(lo + 1e-3 * span, hi - 1e-3 * span, _certificate_step(span))
        certificate = verify_nonneg(WarpedMetric(warp, 3, quotient_order, (lo, hi), name="warped"), grid)
    return MetricFamilySpec(kind="warped", params=make_params(n=quotient_order), profiles={"warp": warp},
                            group=f"mu_{quotient_order}", domain=(lo, hi), quotient_order=quotient_order,
                            certificate=certificate, closed=closed)


def berger_family(rho: ScalarProfile, phi: ScalarProfile, n: int = 1, closed: bool = False) -> MetricFamilySpec:
    lo = max(rho.domain[0], phi.domain[0])
    hi = min(rho.domain[1], phi.domain[1])
    return MetricFamilySpec(kind="berger", params=make_params(n=n), profiles={"rho": rho, "phi": phi},
                            group=f"mu_{n}", domain=(lo, hi), quotient_order=n,
                            closed=closed)


def round_sphere_family() -> MetricFamilySpec:
    """Одинична S^3 без радіальної координати (перевірка графових геодезичних)"""
    warp = ScalarProfile.piecewise([(0.0, 1.0, AffineTerm(1.0, 0.0))], name="unit")
    return MetricFamilySpec(kind="round_sphere", params=make_params(n=1), profiles={"warp": warp},
                            group="trivial", domain=(0.0, 0.0), quotient_order=1, closed=True)


def build_family(kind: str, params: ConstructionParams) -> MetricFamilySpec:
    """Диспетчер для командного рядка"""
    if kind == "M_open":
        return build_m_profile(params.c, params.b if params.b is not None else math.asin(2 * params.c),
                               params.b_prime)
    if kind == "M_closed":
        return build_m_closed_profile(params.c, params.d)
    if kind == "N_open":
        return build_n_profiles(params.n, params.c)
    if kind == "N_closed":
        return build_n_closed_profiles(params.c, params.d, params.n)
    if kind == "suspension_limit":
        return limit_suspension(params.c)
    if kind == "EH":
        return eguchi_hanson_family(params)
    if kind == "EH_conformal":
        return eguchi_hanson_family(params, conformal=True)
    raise ParameterError(f"unknown family kind {kind!r}")
