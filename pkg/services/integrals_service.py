"""
Замкнутые формы логарифмических интегралов: по ячейкам сетки и интегралы
вида ∫₀^∞ ln|a² ± b²z²| / (c² + d²z²)^n dz.
"""

import enum
import logging
import math

import numpy as np
from scipy.integrate import quad

from .exceptions import DomainError
from .specfun_service import xlogx

logger = logging.getLogger(__name__)


class CellIntegral(enum.Enum):
    """Виды интегралов логарифма по ячейкам."""
    SQUARE = "square"                  # ∫_a^b∫_a^b ln|w−v| dv dw
    SEGMENT = "segment"                # ∫_a^b ln|v−c| dv
    SHIFTED_SQUARE = "shifted_square"  # ∫_0^a∫_0^a ln(c+x−y) dx dy, c ≥ a ≥ 0


class LogIdentity(enum.Enum):
    """Интегралы 𝓘^±_{a,b,c,d;n} и 𝒥_{c,d;n}."""
    I_MINUS_1 = "I-_1"
    I_PLUS_1 = "I+_1"
    I_MINUS_2 = "I-_2"
    I_PLUS_2 = "I+_2"
    J_1 = "J_1"
    J_2 = "J_2"


def closed_form_log_cells(kind: CellIntegral, a: float, b: float = 0.0, c: float = 0.0) -> float:
    """
    Точное значение интеграла логарифма по ячейке.

    Args:
        kind: Вид интеграла
        a, b, c: Параметры; для SHIFTED_SQUARE используются a (сторона) и c (сдвиг)

    Raises:
        DomainError: если нарушены условия формулы
    """
    if kind is CellIntegral.SQUARE:
        r = b - a
        if r <= 0:
            raise DomainError(f"Для квадрата требуется b > a, получено a={a}, b={b}")
        return r * r * math.log(r) - 1.5 * r * r
    if kind is CellIntegral.SEGMENT:
        if b <= a:
            raise DomainError(f"Для отрезка требуется b > a, получено a={a}, b={b}")
        return xlogx(b - c) + xlogx(c - a) + a - b
    if kind is CellIntegral.SHIFTED_SQUARE:
        if not c >= a >= 0:
            raise DomainError(f"Формула требует c ≥ a ≥ 0, получено a={a}, c={c}")
        return (0.5 * (c - a) * xlogx(c - a) + 0.5 * (c + a) * xlogx(c + a)
                - c * xlogx(c) - 1.5 * a * a)
    raise DomainError(f"Неизвестный вид интеграла: {kind}")


def _phi(u):
    """Первообразная второго порядка: ∂²φ/∂x∂y = −ln|x−y| при u = x−y."""
    u = np.asarray(u, dtype=float)
    return 0.5 * u * xlogx(u) - 0.75 * u * u


def rectangle_log_integral(a, b, c, d):
    """∫_a^b∫_c^d ln|x−y| dy dx для прямоугольников (векторизовано)."""
    return _phi(b - c) - _phi(a - c) - _phi(b - d) + _phi(a - d)


def segment_log_integral(x, a, b):
    """∫_a^b ln|x−y| dy (векторизовано по x и по отрезкам)."""
    return xlogx(np.asarray(b) - x) + xlogx(x - np.asarray(a)) + np.asarray(a) - np.asarray(b)


def log_integral_identities(case: LogIdentity, a: float = 0.0, b: float = 0.0,
                            c: float = 1.0, d: float = 1.0) -> float:
    """
    Замкнутые формы интегралов 𝓘^±_{a,b,c,d;n} и 𝒥_{c,d;n}.

    Для n = 2 формулы верны только при c = d = 1.

    Raises:
        DomainError: если нарушены условия a, b, c, d ≥ 0, cd > 0, a + b > 0
    """
    if min(a, b, c, d) < 0 or c * d <= 0:
        raise DomainError(f"Требуется a, b, c, d ≥ 0 и cd > 0, получено {(a, b, c, d)}")
    uses_ab = case in (LogIdentity.I_MINUS_1, LogIdentity.I_PLUS_1, LogIdentity.I_MINUS_2,
                       LogIdentity.I_PLUS_2)
    if uses_ab and a + b <= 0:
        raise DomainError(f"Требуется a + b > 0, получено a={a}, b={b}")
    if case in (LogIdentity.I_MINUS_2, LogIdentity.I_PLUS_2, LogIdentity.J_2) and (c != 1 or d != 1):
        raise DomainError("Формулы для n = 2 известны только при c = d = 1")

    if case is LogIdentity.I_MINUS_1:
        return math.pi * math.log(abs(a * a + b * b * c * c / (d * d))) / (2 * c * d)
    if case is LogIdentity.I_PLUS_1:
        return math.pi / (c * d) * math.log(a + b * c / d)
    if case is LogIdentity.I_MINUS_2:
        return math.pi / 4 * math.log(a * a + b * b) - math.pi * b * b / (2 * (a * a + b * b))
    if case is LogIdentity.I_PLUS_2:
        return math.pi / 2 * math.log(a + b) - b * math.pi / (2 * a + 2 * b)
    if case is LogIdentity.J_1:
        return math.pi / (2 * c * d)
    if case is LogIdentity.J_2:
        return math.pi / 4
    raise DomainError(f"Неизвестный случай: {case}")


def log_integral_quadrature(case: LogIdentity, a: float = 0.0, b: float = 0.0,
                            c: float = 1.0, d: float = 1.0) -> float:
    """Тот же интеграл адаптивной квадратурой (scipy.integrate.quad)."""
    power = 2 if case in (LogIdentity.I_MINUS_2, LogIdentity.I_PLUS_2, LogIdentity.J_2) else 1
    sign = -1.0 if case in (LogIdentity.I_MINUS_1, LogIdentity.I_MINUS_2) else 1.0

    if case in (LogIdentity.J_1, LogIdentity.J_2):
        def integrand(z):
            return 1.0 / (c * c + d * d * z * z) ** power
    else:
        def integrand(z):
            return math.log(abs(a * a + sign * b * b * z * z)) / (c * c + d * d * z * z) ** power

    opts = dict(epsabs=1e-13, epsrel=1e-12, limit=400)
    if sign < 0 and b > 0:
        z0 = a / b
        if z0 > 0:
            left = quad(integrand, 0.0, z0, **opts)[0]
            middle = quad(integrand, z0, 2.0 * z0, **opts)[0]
            right = quad(integrand, 2.0 * z0, np.inf, **opts)[0]
            return left + middle + right
    return quad(integrand, 0.0, 1.0, **opts)[0] + quad(integrand, 1.0, np.inf, **opts)[0]
