"""
Специальные функции в логарифмической шкале: ln Γ и ядро взаимодействия Q_θ.
"""

import logging
import math
from typing import Union

import numpy as np

from .exceptions import DomainError

logger = logging.getLogger(__name__)

# Значения весов всегда хранятся как натуральные логарифмы; точный ноль = -inf.
LogValue = float
ArrayLike = Union[float, np.ndarray]

EULER_GAMMA = 0.57721566490153286061

_LANCZOS_COF = np.array([
    57.1562356658629235,
    -59.5979603554754912,
    14.1360979747417471,
    -0.491913816097620199,
    0.339946499848118887e-4,
    0.465236289270485756e-4,
    -0.983744753048795646e-4,
    0.158088703224912494e-3,
    -0.210264441724104883e-3,
    0.217439618115212643e-3,
    -0.164318106536763890e-3,
    0.844182239838527433e-4,
    -0.261908384015814087e-4,
    0.368991826595316234e-5,
])
_LANCZOS_G_SHIFT = 5.24218750000000000  # 671/128
_SQRT_2PI = 2.5066282746310005


def _lanczos(x: np.ndarray) -> np.ndarray:
    tmp = x + _LANCZOS_G_SHIFT
    tmp = (x + 0.5) * np.log(tmp) - tmp
    ser = np.full_like(x, 0.999999999999997092)
    for j, c in enumerate(_LANCZOS_COF):
        ser = ser + c / (x + j + 1.0)
    return tmp + np.log(_SQRT_2PI * ser / x)


def log_gamma(x: ArrayLike) -> ArrayLike:
    """
    Вычисляет ln Γ(x) для положительных аргументов.

    Используется приближение Ланцоша (14 коэффициентов, сдвиг x + 671/128,
    т.е. g = 607/128 плюс ½) и формула отражения для x < 1/2.

    Args:
        x: Число или массив положительных чисел

    Returns:
        ln Γ(x) той же формы, что и x

    Raises:
        DomainError: если хотя бы один аргумент не положителен
    """
    arr = np.asarray(x, dtype=float)
    if np.any(~(arr > 0)):
        raise DomainError(f"ln Γ определён только для x > 0, получено: {x}")

    flat = np.atleast_1d(arr).ravel()
    small = flat < 0.5
    out = np.empty_like(flat)
    out[~small] = _lanczos(flat[~small])
    if np.any(small):
        xs = flat[small]
        out[small] = np.log(np.pi / np.sin(np.pi * xs)) - _lanczos(1.0 - xs)
    out = out.reshape(arr.shape)

    if np.ndim(x) == 0:
        return float(out)
    return out


def log_q_theta(x: ArrayLike, theta: float) -> ArrayLike:
    """
    Вычисляет ln Q_θ(x) = ln[Γ(x+1)Γ(x+θ) / (Γ(x)Γ(x+1−θ))].

    Для целого θ используется точное произведение x·∏_{k=1−θ}^{θ−1}(x+k),
    при θ = 1 результат равен 2·ln x.

    Args:
        x: Расстояние между частицами (x ≥ θ), число или массив
        theta: Параметр θ > 0

    Returns:
        ln Q_θ(x)

    Raises:
        DomainError: если θ ≤ 0 или x < θ
    """
    if not theta > 0:
        raise DomainError(f"Параметр θ должен быть положительным, получено: {theta}")
    arr = np.asarray(x, dtype=float)
    if np.any(arr < theta * (1.0 - 1e-12)):
        raise DomainError(f"Q_θ определено только для x ≥ θ = {theta}")

    if theta == 1.0:
        out = 2.0 * np.log(arr)
    elif float(theta).is_integer() and theta <= 64:
        k = int(theta)
        out = np.log(arr)
        for shift in range(1 - k, k):
            out = out + np.log(arr + shift)
    else:
        out = np.log(arr) + log_gamma(arr + theta) - log_gamma(arr + 1.0 - theta)

    if np.ndim(x) == 0:
        return float(out)
    return out


def q_theta_bound(x: ArrayLike, theta: float) -> ArrayLike:
    """Граница |ln Q_θ(x) − 2θ ln x| ≤ (1+θ)³/x."""
    return (1.0 + theta) ** 3 / np.asarray(x, dtype=float)


def gamma_sandwich_check(x: float) -> bool:
    """
    Проверяет x^{x−γ}/e^{x−1} ≤ Γ(x) ≤ x^{x−1/2}/e^{x−1} для реализованного ln Γ.

    Args:
        x: Аргумент x ≥ 1

    Returns:
        bool: True, если обе оценки выполняются

    Raises:
        DomainError: если x < 1
    """
    if x < 1:
        raise DomainError(f"Оценка Γ применима только при x ≥ 1, получено: {x}")
    lg = log_gamma(x)
    tol = 1e-13 * max(1.0, abs(lg))
    lower = (x - EULER_GAMMA) * math.log(x) - (x - 1.0)
    upper = (x - 0.5) * math.log(x) - (x - 1.0)
    return lower <= lg + tol and lg <= upper + tol


def stirling_residual(n: int) -> float:
    """Остаток формулы Стирлинга ln n! − [½ln(2π) + (n+½)ln n − n]."""
    if n < 1:
        raise DomainError(f"Остаток Стирлинга определён для n ≥ 1, получено: {n}")
    return log_gamma(n + 1.0) - (0.5 * math.log(2.0 * math.pi) + (n + 0.5) * math.log(n) - n)


def xlogx(x: ArrayLike) -> ArrayLike:
    """x·ln|x| с соглашением 0·ln 0 = 0."""
    arr = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(arr == 0.0, 0.0, arr * np.log(np.abs(arr)))
    if np.ndim(x) == 0:
        return float(out)
    return out
