"""
Ієрархія винятків та стандартизовані повідомлення
"""
from typing import Any, Optional


class ErrorText:
    """Стандартизовані повідомлення про помилки"""
    OUT_OF_DOMAIN = "point {r!r} lies outside the profile domain {domain}"
    UNSUPPORTED_ORDER = "derivative order {order} is not supported (use 0, 1 or 2)"
    TABLE_EDGE = "tabulated derivative at {r!r} needs distance >= {h!r} from the piece edges"
    DEGENERATE = "metric degenerates at r={r!r}: {what}={value!r}"
    KERNEL_WINDOW = "kernel window around {r!r} leaves the profile domain {domain}"
    CONVEX_CORNER = "corner at {corner!r} is convex: left slope {left!r} < right slope {right!r}"
    NOT_LIPSCHITZ = "profile is not 1-Lipschitz near {corner!r}: slope {slope!r}"
    NOT_CONCAVE = "smoothed profile is not concave near {corner!r}: second difference {value!r}"
    NO_SIGN_CHANGE = "no sign change in bracket ({low!r}, {high!r}): passes={low_passed}/{high_passed}"
    SINGULAR = "metric matrix is singular at {x}: condition number {cond:.3e}"
    DISCONNECTED = "sample graph has {components} connected components"
    NON_UNIT = "fiber point is not a unit vector: |x|={norm!r}"
    NOT_SURJECTIVE = "correspondence misses {missing_a} points of A and {missing_b} points of B"
    NOT_MONOTONE = "gh(M_i, N_i) column {values} does not decrease within 2 x resolution {slacks}"


class RicciForgeError(Exception):
    """Базова помилка пакета"""


class ProfileDomainError(RicciForgeError):
    """Точка поза областю визначення профілю або вікно виходить за межі"""


class UnsupportedOrderError(RicciForgeError):
    """Порядок похідної > 2"""


class PreconditionError(RicciForgeError):
    """Порушена передумова операції"""


class ParameterError(PreconditionError):
    """Некоректні параметри конструкції"""


class DegenerateMetricError(RicciForgeError):
    """Функція деформації не додатна"""


class BracketError(RicciForgeError):
    """Немає зміни знаку на відрізку пошуку порогу"""


class NumericError(RicciForgeError):
    """Квадратура або інша чисельна процедура не збіглася"""


class OracleError(RicciForgeError):
    """Вироджена матриця метрики в тензорному оракулі"""

    def __init__(self, message: str, condition_number: float = float("inf")):
        super().__init__(message)
        self.condition_number = condition_number


class ConnectivityError(RicciForgeError):
    """Граф вибірки незв'язний"""


class UsageError(RicciForgeError):
    """Некоректні аргументи командного рядка"""


class CertificateFailure(RicciForgeError):
    """Сертифікат кривини не пройдено"""

    def __init__(self, message: str, spec: Optional[Any] = None):
        super().__init__(message)
        self.spec = spec


class UnsupportedFamilyError(RicciForgeError):
    """Сім'я не має деформованої форми для цієї операції"""


class ResourceError(RicciForgeError):
    """Оцінка пам'яті перевищує дозволену частку"""


class ConvergenceFailure(RicciForgeError):
    """Стовпець gh(M_i, N_i) не спадає з точністю до роздільності"""

    def __init__(self, message: str, table: Optional[Any] = None):
        super().__init__(message)
        self.table = table
