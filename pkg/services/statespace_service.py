"""
Пространство состояний 𝕎_N^{θ,M}: конфигурации, перечисление, эмпирические меры
и комбинаторные отображения переноса частиц.
"""

import itertools
import logging
import math
from typing import Iterator, Optional, Sequence, Tuple

import numpy as np

from config import Config
from models import Configuration, EmpiricalMeasure, GridDensity
from .exceptions import ResourceLimitError, ValidationError

logger = logging.getLogger(__name__)

# Допуск для сравнения ℓ с порогом ρN в плавающей точке.
_EDGE_EPS = 1e-9


def validate_configuration(c: Configuration) -> Configuration:
    """
    Проверяет инварианты конфигурации.

    Raises:
        ValidationError: если λ не является невозрастающей последовательностью
            неотрицательных целых, не превосходящих M
    """
    if not c.theta > 0:
        raise ValidationError(f"θ должно быть положительным, получено: {c.theta}")
    if c.n < 1:
        raise ValidationError("Конфигурация должна содержать хотя бы одну частицу")
    lam = c.lambdas
    for i, part in enumerate(lam):
        if not isinstance(part, (int, np.integer)):
            raise ValidationError(f"λ_{i + 1} = {part} не является целым числом")
        if part < 0:
            raise ValidationError(f"λ_{i + 1} = {part} отрицательно")
        if i > 0 and part > lam[i - 1]:
            raise ValidationError(f"Последовательность λ = {lam} не является невозрастающей")
    if c.cap is not None and lam[0] > c.cap:
        raise ValidationError(f"λ_1 = {lam[0]} превышает M = {c.cap}")
    return c


def from_partition(lambdas: Sequence[int], theta: float, cap: Optional[int] = None,
                   truncated: bool = False) -> Configuration:
    """
    Строит конфигурацию ℓ_i = λ_i + (N−i)·θ по разбиению λ.

    Args:
        lambdas: Невозрастающая последовательность неотрицательных целых
        theta: Параметр θ > 0
        cap: Ограничение M на λ_1 (None означает M = ∞)
        truncated: Признак того, что M получено усечением бесконечного ансамбля

    Returns:
        Configuration

    Raises:
        ValidationError: если λ некорректно
    """
    try:
        lam = tuple(int(p) for p in lambdas)
    except (TypeError, ValueError) as e:
        raise ValidationError(f"Некорректное разбиение: {lambdas}") from e
    if any(int(p) != p for p in lambdas):
        raise ValidationError(f"Части разбиения должны быть целыми: {lambdas}")
    return validate_configuration(Configuration(theta=theta, lambdas=lam, cap=cap, truncated=truncated))


def to_partition(c: Configuration) -> Tuple[int, ...]:
    """Возвращает λ_i = ℓ_i − (N−i)·θ."""
    return c.lambdas


def from_positions(positions: Sequence[float], theta: float, cap: Optional[int] = None) -> Configuration:
    """Восстанавливает конфигурацию по положениям ℓ_1 > … > ℓ_N."""
    pos = np.asarray(positions, dtype=float)
    n = len(pos)
    raw = pos - (n - 1 - np.arange(n)) * theta
    lam = np.rint(raw)
    if np.any(np.abs(raw - lam) > 1e-9 * np.maximum(1.0, np.abs(raw))):
        raise ValidationError(f"Положения {positions} не лежат на решётке ℤ + (N−i)θ")
    return from_partition(lam.astype(int).tolist(), theta, cap)


def state_count(n: int, m: int) -> int:
    """|𝕎_N^{θ,M}| = C(N+M, N)."""
    return math.comb(n + m, n)


def enumerate_states(n: int, m: int, theta: float, budget: Optional[int] = None) -> Iterator[Configuration]:
    """
    Перечисляет все элементы 𝕎_N^{θ,M} в колексикографическом порядке по λ.

    Args:
        n: Число частиц N ≥ 1
        m: Ограничение M ≥ 0
        theta: Параметр θ > 0
        budget: Максимальное число состояний (по умолчанию из Config)

    Yields:
        Configuration

    Raises:
        ResourceLimitError: если C(N+M, N) превышает бюджет
    """
    if n < 1 or m < 0:
        raise ValidationError(f"Некорректные параметры перечисления: N={n}, M={m}")
    budget = Config.get_enum_budget() if budget is None else budget
    count = state_count(n, m)
    if count > budget:
        raise ResourceLimitError(
            f"Число состояний C({n + m}, {n}) = {count} превышает бюджет {budget}",
            count=count,
            budget=budget,
        )
    logger.debug(f"Перечисление {count} состояний: N={n}, M={m}, θ={theta}")
    for increasing in itertools.combinations_with_replacement(range(m + 1), n):
        yield Configuration(theta=theta, lambdas=increasing[::-1], cap=m)


def enumerate_partitions(max_size: int, max_rows: int) -> Iterator[Tuple[int, ...]]:
    """Перечисляет разбиения с |λ| ≤ max_size и не более max_rows строк (включая ∅)."""

    def _rec(remaining: int, max_part: int, rows_left: int):
        yield ()
        if rows_left == 0:
            return
        for first in range(min(remaining, max_part), 0, -1):
            for rest in _rec(remaining - first, first, rows_left - 1):
                yield (first,) + rest

    yield from _rec(max_size, max_size, max_rows)


def empirical_measure(c: Configuration, n_scale: Optional[int] = None) -> EmpiricalMeasure:
    """
    Эмпирическая мера μ_N: атомы ℓ_i/N с весом 1/N.

    Если конфигурация содержит r частиц, а n_scale = N ≠ r, получается
    частичная мера μ_{N,r} с атомами ℓ_i/N и весом 1/r.
    """
    n_scale = c.n if n_scale is None else n_scale
    return EmpiricalMeasure(atoms=c.positions / n_scale, weight=1.0 / c.n, theta=c.theta, n=n_scale)


def count_above(c: Configuration, rho: float) -> int:
    """Число частиц с ℓ_i ≥ ρN."""
    threshold = rho * c.n
    return int(np.count_nonzero(c.positions >= threshold - _EDGE_EPS * max(1.0, abs(threshold))))


def shift_map(c: Configuration, w: int, w_prime: int) -> Configuration:
    """
    Стирает частицу ℓ_{w′} и сдвигает окно: ℓ′_k = ℓ_{k+1} + θ при w′ ≤ k ≤ w.

    В терминах разбиения это λ′_k = λ_{k+1} на окне, поэтому результат
    определяется вектором ℓ без стёртой частицы и отображение инъективно
    на таких векторах.

    Args:
        c: Конфигурация
        w: Правая граница окна, 1 ≤ w ≤ N−1
        w_prime: Стираемая частица, 1 ≤ w′ ≤ w

    Raises:
        ValidationError: если индексы вне допустимого диапазона
    """
    n = c.n
    if not (1 <= w_prime <= w <= n - 1):
        raise ValidationError(f"Недопустимые индексы окна: w′={w_prime}, w={w}, N={n}")
    lam = list(c.lambdas)
    for k in range(w_prime, w + 1):
        lam[k - 1] = c.lambdas[k]
    return Configuration(theta=c.theta, lambdas=tuple(lam), cap=c.cap, truncated=c.truncated)


def push_right_tail_map(c: Configuration, barrier: float) -> Configuration:
    """
    Отображение τ: частицы выше барьера сдвигаются каскадом, а верхняя ставится
    в ближайшую допустимую точку ν(ℓ) = min{ℓ_{u+1}+θ+a ≥ barrier·N, a ∈ ℤ≥0}.

    Args:
        c: Конфигурация
        barrier: Барьер (в масштабе ℓ/N), ℓ_{u+1} < barrier·N ≤ ℓ_1

    Returns:
        Configuration с ℓ′_k = ℓ_{k+1}+θ при k < u и ℓ′_u = ν(ℓ)

    Raises:
        ValidationError: если барьер вне допустимого диапазона
    """
    n = c.n
    u = count_above(c, barrier)
    if u < 1:
        raise ValidationError(f"Барьер {barrier} выше ℓ_1/N = {c.positions[0] / n}")
    if u >= n:
        raise ValidationError(f"Барьер {barrier} не выше ℓ_N/N: все частицы над барьером")
    lam = list(c.lambdas)
    for k in range(1, u):
        lam[k - 1] = c.lambdas[k]
    # ℓ_{u+1}+θ+a имеет ту же решёточную часть, что и ℓ_u, поэтому a сдвигает λ_u.
    base_lambda = c.lambdas[u]
    base_position = c.positions[u] + c.theta
    target = barrier * n
    a = max(0, math.ceil(target - base_position - _EDGE_EPS * max(1.0, abs(target))))
    lam[u - 1] = base_lambda + a
    return validate_configuration(Configuration(theta=c.theta, lambdas=tuple(lam), cap=c.cap,
                                                truncated=c.truncated))


def quantile_configuration(phi: GridDensity, n: int, r: int, m: Optional[int], theta: float) -> Configuration:
    """
    Строит конфигурацию из r частиц по квантилям плотности φ.

    Квантили y_i берутся на уровнях (i−½)/r, и ℓ′_i - наибольший элемент
    ℤ+(r−i)θ, не превосходящий N·y_{r−i+1}.

    Args:
        phi: Допустимая плотность (0 ≤ φ ≤ θ⁻¹, масса 1)
        n: Масштаб N
        r: Число частиц, r ∈ [N/2, N]
        m: Ограничение M (None - без ограничения)
        theta: Параметр θ

    Raises:
        ValidationError: если φ недопустима, r вне диапазона или результат
            выходит за 𝕎_r^{θ,M}
    """
    if not (n / 2 <= r <= n):
        raise ValidationError(f"r = {r} должно лежать в [N/2, N] при N = {n}")
    violation = phi.admissibility_violation(theta)
    if violation > 1e-9:
        raise ValidationError(f"Плотность недопустима: нарушение {violation:.3e}")

    cdf = np.concatenate([[0.0], np.cumsum(phi.widths * phi.values)])
    levels = (np.arange(1, r + 1) - 0.5) / r
    # наименьший y с Φ(y) = q: ячейка j, где cdf[j] < q ≤ cdf[j+1]
    j = np.clip(np.searchsorted(cdf, levels, side="left") - 1, 0, phi.cells - 1)
    with np.errstate(divide="ignore", invalid="ignore"):
        y = phi.edges[j] + (levels - cdf[j]) / phi.values[j]
    y = np.where(phi.values[j] > 0, y, phi.edges[j])

    lam = []
    for i in range(1, r + 1):
        value = n * y[r - i] - (r - i) * theta
        lam.append(int(math.floor(value + 1e-12 * max(1.0, abs(value)))))
    if lam[-1] < 0 or any(lam[k] < lam[k + 1] for k in range(r - 1)):
        raise ValidationError(f"Квантильная конфигурация вне 𝕎: λ = {lam}")
    if m is not None and lam[0] > m:
        raise ValidationError(f"Квантильная конфигурация превышает M = {m}: λ_1 = {lam[0]}")
    return Configuration(theta=theta, lambdas=tuple(lam), cap=m)


def mollify(mu: EmpiricalMeasure, r: Optional[int] = None) -> GridDensity:
    """
    Сглаженная мера ψ_{N,r} = Σ f_{ℓ_i/N}, f_a = (N/rθ)·1[a, a+θ/N).

    Соседние блоки на расстоянии ровно θ/N склеиваются без зазора.
    """
    r = len(mu.atoms) if r is None else r
    n, theta = mu.n, mu.theta
    height = n / (r * theta)
    width = theta / n
    starts = np.sort(mu.atoms)

    edges = [0.0]
    values = []
    for a in starts:
        if a - edges[-1] > 1e-12 * max(1.0, a):
            values.append(0.0)
            edges.append(float(a))
        edges.append(edges[-1] + width)
        values.append(height)
    return GridDensity(edges=np.asarray(edges), values=np.asarray(values))


def tail_sum_bound(n: int, theta: float, xi: float, b: float) -> float:
    """
    Оценка суммы Σ_{ℓ ≥ (B+θ+1)N} (ℓ²/N²+1)^{−Nθξ} ≤ (Nπ/2)/(B²+1)^{Nθξ−1}.

    Raises:
        ValidationError: если Nθξ < 1
    """
    power = n * theta * xi
    if power < 1:
        raise ValidationError(f"Оценка хвоста требует Nθξ ≥ 1, получено {power}")
    return (n * math.pi / 2.0) * math.exp(-(power - 1.0) * math.log(b * b + 1.0))


def truncation_cap(n: int, theta: float, xi: float = 1.0, eps: Optional[float] = None,
                   edge_hint: float = 0.0, margin: float = 2.0) -> int:
    """
    Выбирает конечное M для ансамбля с M = ∞.

    M = max(⌈(B+θ+1)N⌉, ⌈(edge_hint + margin)·N⌉), где B - наименьшее число,
    при котором оценка хвоста не превосходит eps.

    Args:
        n: Число частиц
        theta: Параметр θ
        xi: Запас роста ξ потенциала
        eps: Допустимая отбрасываемая масса (по умолчанию из Config)
        edge_hint: Ожидаемый правый край носителя равновесной меры
        margin: Запас над краем носителя

    Returns:
        int: Ограничение на λ_1
    """
    eps = Config.TRUNCATION_EPS if eps is None else eps
    power = n * theta * xi
    if power <= 1:
        raise ValidationError(f"Усечение требует Nθξ > 1, получено {power}")
    b = math.sqrt(math.expm1(math.log(n * math.pi / (2.0 * eps)) / (power - 1.0)))
    cap = max(math.ceil((b + theta + 1.0) * n), math.ceil((edge_hint + margin) * n))
    logger.info(f"Усечение M = ∞ до M = {cap} (N={n}, θ={theta}, ξ={xi}, ε={eps})")
    return cap
