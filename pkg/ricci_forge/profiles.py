"""
Одновимірні профілі деформації (warping functions)

Профіль - це кускова функція з аналітичними кусками (sin, афінні, поліноми)
та табличними кусками. Усі значення незмінні після побудови, тому профілі
безпечно обчислювати з кількох потоків.
"""
import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from numpy.polynomial import Polynomial
from pydantic import BaseModel, Field
from scipy import integrate
from scipy.interpolate import BPoly, PPoly, make_interp_spline

from .config import (
    CONCAVITY_SLACK,
    CONTINUITY_TOL,
    DERIVATIVE_JUMP_TOL,
    JUMP_REPORT_FLOOR,
    KERNEL_GAUSS_NODES,
    KERNEL_PANELS,
    KERNEL_RADIUS,
    LIPSCHITZ_SLACK,
    MIN_REGULARITY_NODES,
    MIN_TABLE_NODES,
    RAMP_CUTOFF,
    RAMP_GAUSS_NODES,
    TABLE_SPACING_FRACTION,
)
from .errors import (
    ErrorText,
    ParameterError,
    PreconditionError,
    ProfileDomainError,
    UnsupportedOrderError,
)

logger = logging.getLogger(__name__)

ArrayLike = Union[float, Sequence[float], np.ndarray]


def _check_order(order: int) -> None:
    if order not in (0, 1, 2):
        raise UnsupportedOrderError(ErrorText.UNSUPPORTED_ORDER.format(order=order))


# ---------------------------------------------------------------------------
# Терми
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SinTerm:
    """amplitude * sin(frequency * r + phase) + offset"""
    amplitude: float = 1.0
    frequency: float = 1.0
    phase: float = 0.0
    offset: float = 0.0

    kind = "sin"
    closed_form = True

    def evaluate(self, r: np.ndarray, order: int = 0) -> np.ndarray:
        arg = self.frequency * r + self.phase
        if order == 0:
            return self.amplitude * np.sin(arg) + self.offset
        if order == 1:
            return self.amplitude * self.frequency * np.cos(arg)
        return -self.amplitude * self.frequency ** 2 * np.sin(arg)

    def transformed(self, alpha: float, beta: float, gamma: float) -> "SinTerm":
        return SinTerm(
            amplitude=alpha * self.amplitude,
            frequency=self.frequency * beta,
            phase=self.frequency * gamma + self.phase,
            offset=alpha * self.offset,
        )

    def mollified(self, kernel: "MollifierKernel") -> "SinTerm":
        # Парне ядро: (sin * K)(r) = sin(r) * int K(s) cos(w s) ds
        damping = kernel.cosine_transform(self.frequency)
        return SinTerm(self.amplitude * damping, self.frequency, self.phase, self.offset)

    def params(self) -> Dict[str, Any]:
        return {
            "amplitude": self.amplitude,
            "frequency": self.frequency,
            "phase": self.phase,
            "offset": self.offset,
        }


@dataclass(frozen=True)
class AffineTerm:
    """value + slope * (r - anchor)"""
    value: float
    slope: float = 0.0
    anchor: float = 0.0

    kind = "affine"
    closed_form = True

    def evaluate(self, r: np.ndarray, order: int = 0) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        if order == 0:
            return self.value + self.slope * (r - self.anchor)
        if order == 1:
            return np.full_like(r, self.slope)
        return np.zeros_like(r)

    def transformed(self, alpha: float, beta: float, gamma: float) -> "AffineTerm":
        return AffineTerm(
            value=alpha * self.value,
            slope=alpha * self.slope * beta,
            anchor=(self.anchor - gamma) / beta,
        )

    def mollified(self, kernel: "MollifierKernel") -> "AffineTerm":
        return self

    def params(self) -> Dict[str, Any]:
        return {"value": self.value, "slope": self.slope, "anchor": self.anchor}


@dataclass(frozen=True)
class PolyTerm:
    """Поліном від (r - origin), коефіцієнти за зростанням степенів"""
    coefficients: Tuple[float, ...]
    origin: float = 0.0
    _poly: Polynomial = field(init=False, repr=False, compare=False)

    kind = "poly"
    closed_form = True

    def __post_init__(self):
        coefficients = tuple(float(value) for value in self.coefficients)
        object.__setattr__(self, "coefficients", coefficients or (0.0,))
        object.__setattr__(self, "_poly", Polynomial(self.coefficients))

    def evaluate(self, r: np.ndarray, order: int = 0) -> np.ndarray:
        shifted = np.asarray(r, dtype=float) - self.origin
        return self._poly.deriv(order)(shifted) if order else self._poly(shifted)

    def transformed(self, alpha: float, beta: float, gamma: float) -> "PolyTerm":
        scaled = [alpha * coef * beta ** power for power, coef in enumerate(self.coefficients)]
        return PolyTerm(tuple(scaled), origin=(self.origin - gamma) / beta)

    def mollified(self, kernel: "MollifierKernel") -> "PolyTerm":
        # Непарні моменти ядра нульові: sum_j m_2j / (2j)! * P^(2j)
        result = np.zeros(len(self.coefficients))
        for power in range(0, len(self.coefficients), 2):
            derived = self._poly.deriv(power).coef if power else self._poly.coef
            weight = kernel.moment(power) / math.factorial(power)
            result[: len(derived)] += weight * derived
        return PolyTerm(tuple(result), origin=self.origin)

    def params(self) -> Dict[str, Any]:
        return {"coefficients": list(self.coefficients), "origin": self.origin}


@dataclass(frozen=True, eq=False)
class TableTerm:
    """
    Табличний кусок.

    З колонками похідних (d1, d2) використовується ермітів сплайн п'ятого
    степеня з аналітичними похідними. Без них значення береться зі сплайна,
    а похідні - центральними різницями з кроками h та h/2, об'єднаними
    екстраполяцією Річардсона (похибка O(h^4), шаблон не виходить за h).
    """
    nodes: np.ndarray
    values: np.ndarray
    d1: Optional[np.ndarray] = None
    d2: Optional[np.ndarray] = None
    spline_order: int = 3
    _interp: Any = field(init=False, repr=False)

    kind = "table"
    closed_form = False

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if nodes.ndim != 1 or nodes.shape != values.shape:
            raise PreconditionError("table nodes and values must be 1-D arrays of equal length")
        if nodes.size < MIN_TABLE_NODES:
            raise PreconditionError(f"table needs at least {MIN_TABLE_NODES} nodes, got {nodes.size}")
        if np.any(np.diff(nodes) <= 0):
            raise PreconditionError("table nodes must be strictly increasing")
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "values", values)
        has_derivatives = self.d1 is not None and self.d2 is not None
        if has_derivatives:
            d1 = np.asarray(self.d1, dtype=float)
            d2 = np.asarray(self.d2, dtype=float)
            object.__setattr__(self, "d1", d1)
            object.__setattr__(self, "d2", d2)
            interp = BPoly.from_derivatives(nodes, np.column_stack([values, d1, d2]))
        else:
            object.__setattr__(self, "d1", None)
            object.__setattr__(self, "d2", None)
            interp = make_interp_spline(nodes, values, k=min(self.spline_order, nodes.size - 1))
        object.__setattr__(self, "_interp", interp)

    @property
    def spacing(self) -> float:
        return float((self.nodes[-1] - self.nodes[0]) / (self.nodes.size - 1))

    @property
    def has_derivatives(self) -> bool:
        return self.d1 is not None

    def evaluate(self, r: np.ndarray, order: int = 0) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        if order == 0 or self.has_derivatives:
            return self._interp(r, order) if order else self._interp(r)
        h = self.spacing
        near_edge = (r - self.nodes[0] < h * (1 - 1e-9)) | (self.nodes[-1] - r < h * (1 - 1e-9))
        if np.any(near_edge):
            bad = float(np.atleast_1d(r)[np.atleast_1d(near_edge)][0])
            raise ProfileDomainError(ErrorText.TABLE_EDGE.format(r=bad, h=h))
        return (4 * self._centered(r, h / 2, order) - self._centered(r, h, order)) / 3

    def _centered(self, r: np.ndarray, step: float, order: int) -> np.ndarray:
        plus, minus = self._interp(r + step), self._interp(r - step)
        if order == 1:
            return (plus - minus) / (2 * step)
        return (plus - 2 * self._interp(r) + minus) / step ** 2

    def edge_derivative(self, r: np.ndarray, order: int) -> np.ndarray:
        """Аналітична похідна сплайна, придатна і на краях таблиці"""
        r = np.asarray(r, dtype=float)
        return self._interp(r, order) if order else self._interp(r)

    def transformed(self, alpha: float, beta: float, gamma: float) -> "TableTerm":
        nodes = (self.nodes - gamma) / beta
        values = alpha * self.values
        d1 = alpha * beta * self.d1 if self.has_derivatives else None
        d2 = alpha * beta ** 2 * self.d2 if self.has_derivatives else None
        if beta < 0:
            nodes, values = nodes[::-1], values[::-1]
            if self.has_derivatives:
                d1, d2 = d1[::-1], d2[::-1]
        return TableTerm(nodes, values, d1, d2, self.spline_order)

    def mollified(self, kernel: "MollifierKernel") -> None:
        return None

    def params(self) -> Dict[str, Any]:
        data: Dict[str, Any] = {
            "nodes": self.nodes.tolist(),
            "values": self.values.tolist(),
            "spline_order": self.spline_order,
            "spacing": self.spacing,
        }
        if self.has_derivatives:
            data["d1"] = self.d1.tolist()
            data["d2"] = self.d2.tolist()
        return data


@dataclass(frozen=True)
class RampTerm:
    """
    Згладжена кусково-афінна функція в замкненій формі.

    value + slope * (r - anchor) + sum jump * ramp(r - location), де ramp -
    згортка (s)_+ з бамп-ядром радіуса radius. Друга похідна дорівнює
    sum jump * K(r - location) точно, тож знак кривини не залежить від сітки.
    """
    value: float
    slope: float
    anchor: float
    kinks: Tuple[Tuple[float, float], ...]
    radius: float

    kind = "ramp"
    # повторне згладжування табулюється
    closed_form = False

    def __post_init__(self):
        object.__setattr__(self, "kinks", tuple((float(loc), float(jump)) for loc, jump in self.kinks))
        if not self.radius > 0:
            raise ParameterError(f"ramp radius must be positive, got {self.radius}")

    def evaluate(self, r: np.ndarray, order: int = 0) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        out = AffineTerm(self.value, self.slope, self.anchor).evaluate(r, order)
        for location, jump in self.kinks:
            out = out + jump * _ramp(r - location, self.radius, order)
        return out

    def transformed(self, alpha: float, beta: float, gamma: float) -> "RampTerm":
        base = AffineTerm(self.value, self.slope, self.anchor).transformed(alpha, beta, gamma)
        scale = abs(beta)
        kinks = tuple(((loc - gamma) / beta, alpha * jump * scale) for loc, jump in self.kinks)
        value, slope = base.value, base.slope
        if beta < 0:
            # ramp(-s) = ramp(s) - s
            for location, jump in kinks:
                value -= jump * (base.anchor - location)
                slope -= jump
        return RampTerm(value, slope, base.anchor, kinks, self.radius / scale)

    def mollified(self, kernel: "MollifierKernel") -> None:
        return None

    def params(self) -> Dict[str, Any]:
        return {
            "value": self.value,
            "slope": self.slope,
            "anchor": self.anchor,
            "kinks": [list(kink) for kink in self.kinks],
            "radius": self.radius,
        }


Term = Union[SinTerm, AffineTerm, PolyTerm, TableTerm, RampTerm]


def term_from_dict(kind: str, params: Dict[str, Any]) -> Term:
    if kind == "sin":
        return SinTerm(**params)
    if kind == "affine":
        return AffineTerm(**params)
    if kind == "poly":
        return PolyTerm(tuple(params["coefficients"]), params.get("origin", 0.0))
    if kind == "table":
        return TableTerm(
            np.asarray(params["nodes"]),
            np.asarray(params["values"]),
            np.asarray(params["d1"]) if "d1" in params else None,
            np.asarray(params["d2"]) if "d2" in params else None,
            params.get("spline_order", 3),
        )
    if kind == "ramp":
        return RampTerm(params["value"], params["slope"], params["anchor"],
                        tuple(tuple(kink) for kink in params["kinks"]), params["radius"])
    raise PreconditionError(f"unknown piece kind {kind!r}")


# ---------------------------------------------------------------------------
# Профіль
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ProfilePiece:
    lo: float
    hi: float
    term: Term


@dataclass(frozen=True, eq=False)
class ScalarProfile:
    """Кускова скалярна функція з похідними до другого порядку"""
    pieces: Tuple[ProfilePiece, ...]
    name: str = ""

    def __post_init__(self):
        pieces = tuple(self.pieces)
        if not pieces:
            raise PreconditionError("profile needs at least one piece")
        for piece in pieces:
            if not piece.lo < piece.hi:
                raise PreconditionError(f"empty piece interval ({piece.lo}, {piece.hi})")
        for left, right in zip(pieces[:-1], pieces[1:]):
            if left.hi != right.lo:
                raise PreconditionError(f"pieces are not adjacent at {left.hi} / {right.lo}")
            joint = left.hi
            jump = float(left.term.evaluate(np.array(joint), 0) - right.term.evaluate(np.array(joint), 0))
            scale = max(1.0, abs(float(right.term.evaluate(np.array(joint), 0))))
            if abs(jump) > CONTINUITY_TOL * scale:
                raise PreconditionError(f"profile is discontinuous at {joint}: jump {jump:.3e}")
        object.__setattr__(self, "pieces", pieces)

    @classmethod
    def piecewise(cls, parts: Iterable[Tuple[float, float, Term]], name: str = "") -> "ScalarProfile":
        return cls(tuple(ProfilePiece(float(lo), float(hi), term) for lo, hi, term in parts), name)

    @classmethod
    def join(cls, profiles: Sequence["ScalarProfile"], name: str = "") -> "ScalarProfile":
        pieces: List[ProfilePiece] = []
        for profile in profiles:
            pieces.extend(profile.pieces)
        return cls(tuple(pieces), name)

    @property
    def domain(self) -> Tuple[float, float]:
        return self.pieces[0].lo, self.pieces[-1].hi

    @property
    def breakpoints(self) -> List[float]:
        return [piece.hi for piece in self.pieces[:-1]]

    def contains(self, r: ArrayLike) -> np.ndarray:
        lo, hi = self.domain
        r = np.asarray(r, dtype=float)
        slack_lo = CONTINUITY_TOL * max(1.0, abs(lo)) if math.isfinite(lo) else 0.0
        slack_hi = CONTINUITY_TOL * max(1.0, abs(hi)) if math.isfinite(hi) else 0.0
        return (r >= lo - slack_lo) & (r <= hi + slack_hi)

    def __call__(self, r: ArrayLike, order: int = 0):
        return eval_profile(self, r, order)

    def one_sided(self, r: float, order: int, side: str) -> float:
        """Однобічне значення похідної в точці (для стрибків у точках зламу)"""
        _check_order(order)
        index = int(np.searchsorted(self.breakpoints, r, side="right"))
        if side == "left" and index > 0 and r == self.pieces[index - 1].hi:
            index -= 1
        term = self.pieces[index].term
        point = np.array(float(r))
        if isinstance(term, TableTerm):
            return float(term.edge_derivative(point, order))
        return float(term.evaluate(point, order))

    def transformed(self, value_scale: float, arg_scale: float, arg_shift: float = 0.0,
                    name: Optional[str] = None) -> "ScalarProfile":
        """Точна репараметризація new(r) = value_scale * old(arg_scale * r + arg_shift)"""
        if arg_scale == 0:
            raise ParameterError("arg_scale must be non-zero")
        parts = []
        for piece in self.pieces:
            a = (piece.lo - arg_shift) / arg_scale
            b = (piece.hi - arg_shift) / arg_scale
            parts.append((min(a, b), max(a, b), piece.term.transformed(value_scale, arg_scale, arg_shift)))
        if arg_scale < 0:
            parts.reverse()
        return ScalarProfile.piecewise(parts, name if name is not None else self.name)

    def restricted(self, lo: float, hi: float) -> "ScalarProfile":
        parts = []
        for piece in self.pieces:
            a, b = max(piece.lo, lo), min(piece.hi, hi)
            if a < b:
                parts.append((a, b, piece.term))
        if not parts:
            raise ProfileDomainError(ErrorText.OUT_OF_DOMAIN.format(r=(lo, hi), domain=self.domain))
        return ScalarProfile.piecewise(parts, self.name)

    def grid_table(self, grid: ArrayLike) -> np.ndarray:
        """Колонки (r, value, d1, d2) для CSV"""
        grid = np.asarray(grid, dtype=float)
        return np.column_stack([grid, self(grid, 0), self(grid, 1), self(grid, 2)])

    def to_dict(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "pieces": [
                {"interval": [piece.lo, piece.hi], "kind": piece.term.kind, "params": piece.term.params()}
                for piece in self.pieces
            ],
            "breakpoints": self.breakpoints,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ScalarProfile":
        parts = []
        for item in data["pieces"]:
            params = dict(item["params"])
            params.pop("spacing", None)
            lo, hi = item["interval"]
            parts.append((lo, hi, term_from_dict(item["kind"], params)))
        return cls.piecewise(parts, data.get("name", ""))


def sine_profile(lo: float = 0.0, hi: float = math.pi, amplitude: float = 1.0,
                 name: str = "sin") -> ScalarProfile:
    return ScalarProfile.piecewise([(lo, hi, SinTerm(amplitude=amplitude))], name)


def affine_profile(value: float, slope: float, anchor: float = 0.0, lo: float = 0.0,
                   hi: float = math.inf, name: str = "affine") -> ScalarProfile:
    return ScalarProfile.piecewise([(lo, hi, AffineTerm(value, slope, anchor))], name)


def eval_profile(p: ScalarProfile, r: ArrayLike, order: int = 0):
    """
    Значення похідної порядку order (0, 1, 2) у точці або масиві точок.
    У точці зламу використовується правий кусок.
    """
    _check_order(order)
    scalar = np.ndim(r) == 0
    points = np.atleast_1d(np.asarray(r, dtype=float))
    inside = p.contains(points)
    if not np.all(inside):
        bad = float(points[~inside][0])
        raise ProfileDomainError(ErrorText.OUT_OF_DOMAIN.format(r=bad, domain=p.domain))
    if len(p.pieces) == 1:
        result = np.asarray(p.pieces[0].term.evaluate(points, order), dtype=float)
        result = np.broadcast_to(result, points.shape).astype(float)
    else:
        index = np.searchsorted(p.breakpoints, points, side="right")
        result = np.empty_like(points)
        for i in np.unique(index):
            mask = index == i
            result[mask] = p.pieces[i].term.evaluate(points[mask], order)
    return float(result[0]) if scalar else result


# ---------------------------------------------------------------------------
# Ядро згладжування
# ---------------------------------------------------------------------------

def _bump(x: float) -> float:
    return math.exp(-1.0 / (1.0 - x * x)) if abs(x) < 1 else 0.0


_RAMP_X, _RAMP_W = np.polynomial.legendre.leggauss(RAMP_GAUSS_NODES)


def _bump_partials(x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    int_{-1}^x b(t) dt та int_{-1}^x t b(t) dt.

    Заміна t = tanh(u) дає підінтегральні вирази exp(-cosh(u)^2) / cosh(u)^2,
    аналітичні в смузі навколо дійсної осі, тому квадратура Гаусса-Лежандра
    на [-RAMP_CUTOFF, atanh(x)] збігається експоненційно.
    """
    with np.errstate(divide="ignore"):
        upper = np.clip(np.arctanh(np.clip(x, -1.0, 1.0)), -RAMP_CUTOFF, RAMP_CUTOFF)
    half = 0.5 * (upper + RAMP_CUTOFF)
    u = (0.5 * (upper - RAMP_CUTOFF))[:, None] + half[:, None] * _RAMP_X[None, :]
    cosh = np.cosh(u)
    weights = half[:, None] * _RAMP_W[None, :] * np.exp(-cosh ** 2) / cosh ** 2
    return weights.sum(axis=1), (weights * np.tanh(u)).sum(axis=1)


@lru_cache(maxsize=1)
def _bump_mass() -> float:
    return float(_bump_partials(np.array([1.0]))[0][0])


def _ramp(s: np.ndarray, radius: float, order: int) -> np.ndarray:
    """(s)_+ * K та її похідні: сам злам, функція розподілу ядра, ядро"""
    s = np.asarray(s, dtype=float)
    x = np.atleast_1d(s / radius).ravel()
    mass = _bump_mass()
    inside = np.abs(x) < 1
    if order == 2:
        out = np.zeros_like(x)
        out[inside] = np.exp(-1.0 / (1.0 - x[inside] ** 2)) / (radius * mass)
        return out.reshape(s.shape)
    cdf = (x >= 1).astype(float)
    moment = np.zeros_like(x)
    if np.any(inside):
        partial, first = _bump_partials(x[inside])
        cdf[inside] = partial / mass
        moment[inside] = first / mass
    if order == 1:
        return cdf.reshape(s.shape)
    flat = np.atleast_1d(s).ravel()
    return (flat * cdf - radius * moment).reshape(s.shape)


@dataclass(frozen=True)
class MollifierKernel:
    """Нормований парний бамп C * exp(-1/(1-(s/R)^2)) з носієм (-R, R)"""
    radius: float = KERNEL_RADIUS
    normalization: float = field(init=False)

    def __post_init__(self):
        if not self.radius > 0:
            raise ParameterError(f"kernel radius must be positive, got {self.radius}")
        mass, _ = integrate.quad(_bump, -1.0, 1.0, epsabs=1e-15, epsrel=1e-13, limit=200)
        object.__setattr__(self, "normalization", 1.0 / (self.radius * mass))

    def __call__(self, s: ArrayLike) -> np.ndarray:
        return self.derivative(s, 0)

    def derivative(self, s: ArrayLike, order: int = 0) -> np.ndarray:
        _check_order(order)
        scalar = np.ndim(s) == 0
        x = np.atleast_1d(np.asarray(s, dtype=float)) / self.radius
        out = np.zeros_like(x)
        inside = np.abs(x) < 1
        xi = x[inside]
        one_minus = 1.0 - xi ** 2
        base = self.normalization * np.exp(-1.0 / one_minus)
        if order == 0:
            out[inside] = base
        elif order == 1:
            g1 = -2.0 * xi / one_minus ** 2
            out[inside] = base * g1 / self.radius
        else:
            g1 = -2.0 * xi / one_minus ** 2
            g2 = -2.0 / one_minus ** 2 - 8.0 * xi ** 2 / one_minus ** 3
            out[inside] = base * (g1 ** 2 + g2) / self.radius ** 2
        return float(out[0]) if scalar else out

    def _integrate(self, weight) -> float:
        value, _ = integrate.quad(lambda x: _bump(x) * weight(x), -1.0, 1.0,
                                  epsabs=1e-15, epsrel=1e-13, limit=200)
        return value

    def mass(self) -> float:
        return self.normalization * self.radius * self._integrate(lambda x: 1.0)

    def moment(self, j: int) -> float:
        if j % 2:
            return 0.0
        if j == 0:
            return 1.0
        return self.normalization * self.radius ** (j + 1) * self._integrate(lambda x: x ** j)

    def cosine_transform(self, omega: float) -> float:
        if omega == 0:
            return 1.0
        return self.normalization * self.radius * self._integrate(lambda x: math.cos(omega * self.radius * x))

    @property
    def sup_norm(self) -> float:
        return self.normalization / math.e


def _piece_derivative(term: Term, t: np.ndarray, order: int) -> np.ndarray:
    if isinstance(term, TableTerm):
        return term.edge_derivative(t, order)
    return term.evaluate(t, order)


def _convolution_columns(p: ScalarProfile, kernel: MollifierKernel,
                         nodes: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    (p*K, (p*K)', (p*K)'') у вузлах.

    Похідні переносяться з ядра на профіль: (p*K)' = p' * K та
    (p*K)'' = p'' * K + сума стрибків p' у зламах, помножених на K(r - злам).
    Для кусково-афінного p друга колонка точна, а підінтегральні вирази
    гладкі на кожному відрізку складеної квадратури Гаусса-Лежандра.
    """
    gauss_x, gauss_w = np.polynomial.legendre.leggauss(KERNEL_GAUSS_NODES)
    radius = kernel.radius
    breakpoints = np.asarray(p.breakpoints)
    slope_jumps = np.array([p.one_sided(bp, 1, "right") - p.one_sided(bp, 1, "left") for bp in breakpoints])
    columns = np.zeros((3, nodes.size))
    for idx, r in enumerate(nodes):
        a, b = r - radius, r + radius
        inside = (breakpoints > a) & (breakpoints < b)
        cuts = np.concatenate([[a], breakpoints[inside], [b]])
        for left, right in zip(cuts[:-1], cuts[1:]):
            piece = int(np.searchsorted(breakpoints, 0.5 * (left + right), side="right"))
            term = p.pieces[piece].term
            panels = max(1, int(math.ceil(KERNEL_PANELS * (right - left) / (2 * radius))))
            edges = np.linspace(left, right, panels + 1)
            mid = 0.5 * (edges[:-1] + edges[1:])
            half = 0.5 * (edges[1:] - edges[:-1])
            t = (mid[:, None] + half[:, None] * gauss_x[None, :]).ravel()
            weights = (half[:, None] * gauss_w[None, :]).ravel() * kernel(r - t)
            for order in range(3):
                columns[order, idx] += np.dot(weights, _piece_derivative(term, t, order))
        if np.any(inside):
            columns[2, idx] += np.dot(slope_jumps[inside], kernel(r - breakpoints[inside]))
    return columns[0], columns[1], columns[2]


def _merge(intervals: List[Tuple[float, float]]) -> List[Tuple[float, float]]:
    merged: List[Tuple[float, float]] = []
    for lo, hi in sorted(intervals):
        if merged and lo <= merged[-1][1]:
            merged[-1] = (merged[-1][0], max(merged[-1][1], hi))
        else:
            merged.append((lo, hi))
    return merged


def _ramp_term(window: List[ProfilePiece], radius: float) -> RampTerm:
    first = window[0].term
    kinks = tuple((right.lo, right.term.slope - left.term.slope) for left, right in zip(window[:-1], window[1:]))
    return RampTerm(first.value, first.slope, first.anchor, kinks, radius)


def mollify(p: ScalarProfile, kernel: MollifierKernel) -> ScalarProfile:
    """
    Згортка p * kernel.

    На кусках, де все вікно ядра лежить в одному аналітичному куску,
    результат записується в замкненій формі (афінні куски не змінюються).
    Околи зламів кусково-афінного профілю теж мають замкнену форму (RampTerm),
    решта околів табулюється з колонками value, d1, d2.
    """
    radius = kernel.radius
    lo, hi = p.domain
    out_lo, out_hi = lo + radius, hi - radius
    if not out_lo < out_hi:
        raise ProfileDomainError(ErrorText.KERNEL_WINDOW.format(r=(out_lo, out_hi), domain=p.domain))

    seams = [(bp - radius, bp + radius) for bp in p.breakpoints]
    seams += [(piece.lo - radius, piece.hi + radius) for piece in p.pieces if not piece.term.closed_form]
    seams = [(max(a, out_lo), min(b, out_hi)) for a, b in seams]
    seams = _merge([(a, b) for a, b in seams if a < b])
    if any(not math.isfinite(b - a) for a, b in seams):
        raise PreconditionError("tabulated pieces must be bounded before mollification")

    spans: List[Tuple[float, float, str]] = []
    cursor = out_lo
    for a, b in seams:
        if cursor < a:
            spans.append((cursor, a, "closed"))
        spans.append((a, b, "table"))
        cursor = b
    if cursor < out_hi:
        spans.append((cursor, out_hi, "closed"))

    parts = []
    for a, b, kind in spans:
        if kind == "closed":
            inner = 0.5 * (a + b) if math.isfinite(b) else a + radius
            index = int(np.searchsorted(p.breakpoints, inner, side="right"))
            parts.append((a, b, p.pieces[index].term.mollified(kernel)))
            continue
        window = [piece for piece in p.pieces if piece.hi > a - radius and piece.lo < b + radius]
        if all(isinstance(piece.term, AffineTerm) for piece in window):
            parts.append((a, b, _ramp_term(window, radius)))
        else:
            count = max(MIN_TABLE_NODES, int(math.ceil(1.0 / TABLE_SPACING_FRACTION)) + 1)
            nodes = np.linspace(a, b, count)
            values, d1, d2 = _convolution_columns(p, kernel, nodes)
            parts.append((a, b, TableTerm(nodes, values, d1, d2)))
    result = ScalarProfile.piecewise(parts, p.name)
    logger.debug(f"Згладжено профіль '{p.name}': {len(spans)} кусків, радіус ядра {radius}")
    return result


# ---------------------------------------------------------------------------
# Згладжування кута та перевірка регулярності
# ---------------------------------------------------------------------------

def concave_smooth(p: ScalarProfile, corner: float, halfwidth: float) -> ScalarProfile:
    """
    Заміна увігнутого кута на C2 увігнуту 1-ліпшицеву вставку.

    Вставка - ермітів поліном п'ятого степеня, що збігається з p (значення,
    перша та друга похідні) на краях вікна; увігнутість, ліпшицевість та
    нерівність вставка <= p перевіряються на сітці.
    """
    if not halfwidth > 0:
        raise ParameterError(f"halfwidth must be positive, got {halfwidth}")
    lo_w, hi_w = corner - halfwidth, corner + halfwidth
    lo, hi = p.domain
    if not (lo < lo_w and hi_w < hi):
        raise ProfileDomainError(ErrorText.OUT_OF_DOMAIN.format(r=(lo_w, hi_w), domain=p.domain))

    jumps = [abs(p.one_sided(corner, order, "right") - p.one_sided(corner, order, "left")) for order in (1, 2)]
    if max(jumps) <= DERIVATIVE_JUMP_TOL:
        logger.debug(f"Профіль '{p.name}' гладкий у {corner}, згладжування не потрібне")
        return p

    left_slope = p.one_sided(corner, 1, "left")
    right_slope = p.one_sided(corner, 1, "right")
    if left_slope < right_slope - DERIVATIVE_JUMP_TOL:
        raise PreconditionError(ErrorText.CONVEX_CORNER.format(corner=corner, left=left_slope, right=right_slope))
    others = [bp for bp in p.breakpoints if lo_w <= bp <= hi_w and bp != corner]
    if others:
        raise PreconditionError(f"smoothing window around {corner} contains other breakpoints {others}")

    window = np.linspace(lo_w, hi_w, 401)
    window = window[window != corner]
    slopes = np.abs(eval_profile(p, window, 1))
    if np.max(slopes) > 1 + LIPSCHITZ_SLACK:
        raise PreconditionError(ErrorText.NOT_LIPSCHITZ.format(corner=corner, slope=float(np.max(slopes))))

    data = [[float(p(x, order)) for order in range(3)] for x in (lo_w, hi_w)]
    bernstein = BPoly.from_derivatives([lo_w, hi_w], data)
    local = PPoly.from_bernstein_basis(bernstein)
    insert = PolyTerm(tuple(local.c[::-1, 0]), origin=lo_w)

    check = np.linspace(lo_w, hi_w, 2001)
    second = insert.evaluate(check, 2)
    if np.max(second) > CONCAVITY_SLACK:
        raise PreconditionError(ErrorText.NOT_CONCAVE.format(corner=corner, value=float(np.max(second))))
    if np.max(np.abs(insert.evaluate(check, 1))) > 1 + LIPSCHITZ_SLACK:
        raise PreconditionError(ErrorText.NOT_LIPSCHITZ.format(
            corner=corner, slope=float(np.max(np.abs(insert.evaluate(check, 1))))))
    if np.max(insert.evaluate(check, 0) - eval_profile(p, check, 0)) > CONTINUITY_TOL * 10:
        raise PreconditionError(f"smoothed insert exceeds the profile near {corner}")

    parts = []
    for piece in p.pieces:
        if piece.hi == corner:
            parts.append((piece.lo, lo_w, piece.term))
            parts.append((lo_w, hi_w, insert))
        elif piece.lo == corner:
            parts.append((hi_w, piece.hi, piece.term))
        else:
            parts.append((piece.lo, piece.hi, piece.term))
    logger.debug(f"Кут {corner:.6f} профілю '{p.name}' згладжено, напівширина {halfwidth}")
    return ScalarProfile.piecewise(parts, p.name)


class BreakpointJump(BaseModel):
    location: float
    order: int
    magnitude: float


class RegularityReport(BaseModel):
    concave: bool
    convex: bool = False
    lipschitz_constant: float
    breakpoint_jumps: List[BreakpointJump] = Field(default_factory=list)
    min_value: float
    max_second_difference: float = 0.0

    def max_jump(self, order: int) -> float:
        return max((jump.magnitude for jump in self.breakpoint_jumps if jump.order == order), default=0.0)


def check_regularity(p: ScalarProfile, grid: ArrayLike) -> RegularityReport:
    """Увігнутість, ліпшицевість та стрибки похідних у точках зламу"""
    grid = np.asarray(grid, dtype=float)
    if grid.size < MIN_REGULARITY_NODES:
        raise PreconditionError(f"regularity check needs at least {MIN_REGULARITY_NODES} nodes")
    values = eval_profile(p, grid, 0)
    slopes = np.diff(values) / np.diff(grid)
    second = np.diff(slopes) * (grid[2:] - grid[:-2]) / 2.0

    jumps: List[BreakpointJump] = []
    for bp in p.breakpoints:
        if not grid[0] <= bp <= grid[-1]:
            continue
        for order in (0, 1, 2):
            magnitude = abs(p.one_sided(bp, order, "right") - p.one_sided(bp, order, "left"))
            if magnitude >= JUMP_REPORT_FLOOR:
                jumps.append(BreakpointJump(location=bp, order=order, magnitude=magnitude))

    max_second = float(np.max(second))
    return RegularityReport(
        concave=max_second <= CONCAVITY_SLACK,
        convex=float(np.min(second)) >= -CONCAVITY_SLACK,
        lipschitz_constant=float(np.max(np.abs(slopes))),
        breakpoint_jumps=jumps,
        min_value=float(np.min(values)),
        max_second_difference=max_second,
    )
