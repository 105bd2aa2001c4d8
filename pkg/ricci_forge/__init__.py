"""
ricci_forge: метрики з невід'ємною кривиною Річчі на деформованих добутках,
їх сертифікати, вибірки та оцінки відстані Громова-Хаусдорфа.
"""
from .config import TOOLKIT_VERSION
from .errors import CertificateFailure, PreconditionError, RicciForgeError

__version__ = TOOLKIT_VERSION

__all__ = ["__version__", "RicciForgeError", "PreconditionError", "CertificateFailure"]
