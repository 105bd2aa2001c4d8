"""
Скінченні групи ізометрій S^3 у C^2 = R^4 (z1 = x1 + i x2, z2 = x3 + i x4)
"""
import logging
import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from .errors import ErrorText, ParameterError, PreconditionError

logger = logging.getLogger(__name__)

UNIT_TOL = 1e-10


def _rotation(angle: float) -> np.ndarray:
    """Множення z1 та z2 на exp(i angle)"""
    cos, sin = math.cos(angle), math.sin(angle)
    block = np.array([[cos, -sin], [sin, cos]])
    out = np.zeros((4, 4))
    out[:2, :2] = block
    out[2:, 2:] = block
    return out


IOTA = np.array([
    [0.0, 0.0, -1.0, 0.0],
    [0.0, 0.0, 0.0, 1.0],
    [1.0, 0.0, 0.0, 0.0],
    [0.0, -1.0, 0.0, 0.0],
])
"""(z1, z2) -> (-conj(z2), conj(z1))"""

PSI = np.array([
    [1.0, 0.0, 0.0, 0.0],
    [0.0, 0.0, 1.0, 0.0],
    [0.0, 1.0, 0.0, 0.0],
    [0.0, 0.0, 0.0, -1.0],
])
"""(x1, x2, x3, x4) -> (x1, x3, x2, -x4), інволюція"""

HOPF_DIRECTION = _rotation(math.pi / 2)
"""Множення на i: напрям шару Хопфа"""


@dataclass(frozen=True, eq=False)
class GroupAction:
    """Скінченна група ортогональних матриць 4x4 (тотожна - перша)"""
    name: str
    matrices: Tuple[np.ndarray, ...]

    def __post_init__(self):
        if not self.matrices or not np.allclose(self.matrices[0], np.eye(4)):
            raise ParameterError("the first group element must be the identity")

    @property
    def order(self) -> int:
        return len(self.matrices)

    @property
    def is_trivial(self) -> bool:
        return self.order == 1

    def stacked(self) -> np.ndarray:
        return np.stack(self.matrices)

    def apply(self, x: np.ndarray) -> np.ndarray:
        """Орбіти точок: (N, 4) -> (order, N, 4)"""
        return np.einsum("gij,nj->gni", self.stacked(), np.atleast_2d(x))

    def canonical(self, x: np.ndarray) -> np.ndarray:
        """Представник орбіти: лексикографічно найбільший образ"""
        orbits = self.apply(x)
        out = np.empty_like(np.atleast_2d(x))
        for idx in range(out.shape[0]):
            candidates = np.round(orbits[:, idx, :], 12)
            best = np.lexsort(candidates.T[::-1])[-1]
            out[idx] = orbits[best, idx]
        return out

    def conjugated(self, matrix: np.ndarray, name: str = "") -> "GroupAction":
        inverse = np.linalg.inv(matrix)
        conj = tuple(matrix @ element @ inverse for element in self.matrices)
        return GroupAction(name or f"{self.name}_conj", conj)

    def is_isometry_group(self, samples: int = 20, seed: int = 0, tol: float = 1e-12) -> bool:
        rng = np.random.default_rng(seed)
        x = rng.normal(size=(samples, 4))
        y = rng.normal(size=(samples, 4))
        dots = np.einsum("ni,ni->n", x, y)
        images_x, images_y = self.apply(x), self.apply(y)
        return bool(np.all(np.abs(np.einsum("gni,gni->gn", images_x, images_y) - dots) <= tol * 10))

    def is_closed(self, tol: float = 1e-12) -> bool:
        stacked = self.stacked()
        for left in self.matrices:
            for right in self.matrices:
                product = left @ right
                if not np.any(np.max(np.abs(stacked - product), axis=(1, 2)) <= tol):
                    return False
        return True


def trivial() -> GroupAction:
    return GroupAction("trivial", (np.eye(4),))


def mu(k: int) -> GroupAction:
    """Діагональна дія коренів k-го степеня з одиниці"""
    if k < 1:
        raise ParameterError(f"group order must be >= 1, got {k}")
    if k == 1:
        return trivial()
    return GroupAction(f"mu_{k}", tuple(_rotation(2 * math.pi * j / k) for j in range(k)))


def iota() -> GroupAction:
    """Група, породжена iota (iota^2 = -1, порядок 4 на C^2)"""
    return GroupAction("iota", (np.eye(4), IOTA, -np.eye(4), -IOTA))


def nu4() -> GroupAction:
    return GroupAction("nu_4", iota().matrices)


def psi_map() -> np.ndarray:
    return PSI.copy()


def group_by_label(label: str) -> GroupAction:
    if label in ("trivial", "mu_1"):
        return trivial()
    if label.startswith("mu_"):
        return mu(int(label.split("_", 1)[1]))
    if label == "iota":
        return iota()
    if label == "nu_4":
        return nu4()
    raise ParameterError(f"unknown group label {label!r}")


def require_unit(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    norms = np.linalg.norm(np.atleast_2d(x), axis=1)
    if np.any(np.abs(norms - 1) > UNIT_TOL):
        raise PreconditionError(ErrorText.NON_UNIT.format(norm=float(norms[np.argmax(np.abs(norms - 1))])))
    return x


def hopf_point(xi: np.ndarray, alpha: np.ndarray, beta: np.ndarray) -> np.ndarray:
    """z1 = cos(xi) exp(i(alpha+beta)), z2 = sin(xi) exp(i alpha)"""
    xi, alpha, beta = np.broadcast_arrays(np.asarray(xi, float), np.asarray(alpha, float), np.asarray(beta, float))
    return np.stack([
        np.cos(xi) * np.cos(alpha + beta),
        np.cos(xi) * np.sin(alpha + beta),
        np.sin(xi) * np.cos(alpha),
        np.sin(xi) * np.sin(alpha),
    ], axis=-1)


def hopf_projection(x: np.ndarray) -> np.ndarray:
    """Розшарування Хопфа на сферу радіуса 1/2: (z1 conj(z2), (|z1|^2-|z2|^2)/2)"""
    x = np.atleast_2d(x)
    z1 = x[:, 0] + 1j * x[:, 1]
    z2 = x[:, 2] + 1j * x[:, 3]
    w = z1 * np.conj(z2)
    return np.column_stack([w.real, w.imag, 0.5 * (np.abs(z1) ** 2 - np.abs(z2) ** 2)])
