"""
Специализации многочленов Джека: J_λ(1^N), двойственные J̃_λ в специализациях
Планшереля и чистой β, степенные суммы и нормировочные тождества Коши.
"""

import logging
import math
from typing import Sequence, Union

import numpy as np
from scipy.stats import poisson

from models import Partition, Specialization
from .exceptions import DivergenceError, ResourceLimitError, ValidationError
from .specfun_service import LogValue, log_gamma
from .statespace_service import enumerate_partitions, enumerate_states, state_count
from config import Config

logger = logging.getLogger(__name__)

PartitionLike = Union[Partition, Sequence[int]]


def as_partition(lam: PartitionLike) -> Partition:
    """
    Приводит последовательность к разбиению.

    Raises:
        ValidationError: если последовательность не является разбиением
    """
    if isinstance(lam, Partition):
        return lam
    parts = tuple(lam)
    if any(int(p) != p or p < 0 for p in parts):
        raise ValidationError(f"Части разбиения должны быть неотрицательными целыми: {parts}")
    if any(parts[i] < parts[i + 1] for i in range(len(parts) - 1)):
        raise ValidationError(f"Разбиение должно быть невозрастающим: {parts}")
    return Partition(parts)


def power_sum(spec: Specialization, k: int, theta: float) -> float:
    """
    Значение p_k в специализации (α, β, γ).

    p_1 = γ + Σ(α_i + β_i), p_k = Σα_i^k + (−θ)^{k−1}Σβ_i^k при k ≥ 2.
    """
    if k < 1:
        raise ValidationError(f"Степень k должна быть ≥ 1, получено: {k}")
    alphas = np.asarray(spec.alphas, dtype=float)
    betas = np.asarray(spec.betas, dtype=float)
    if k == 1:
        return float(spec.gamma + alphas.sum() + betas.sum())
    return float(np.sum(alphas ** k) + (-theta) ** (k - 1) * np.sum(betas ** k))


def _pair_offsets(lam: Partition, n: int, theta: float):
    parts = np.asarray(lam.padded(n), dtype=float)
    ell = parts + (n - 1 - np.arange(n)) * theta
    iu, ju = np.triu_indices(n, k=1)
    return ell, ell[iu] - ell[ju]


def log_jack_one_n(lam: PartitionLike, n: int, theta: float, method: str = "gamma") -> LogValue:
    """
    ln J_λ(1^N; θ).

    Args:
        lam: Разбиение
        n: Число переменных N
        theta: Параметр θ
        method: "gamma" - произведение гамма-функций, "box" - произведение по клеткам

    Returns:
        Логарифм значения; −inf, если у λ больше N строк
    """
    lam = as_partition(lam)
    if lam.length > n:
        return -math.inf
    if method == "box":
        total = 0.0
        for box in lam.boxes():
            total += math.log(n * theta + box.coarm - theta * box.coleg)
            total -= math.log(box.arm + theta * box.leg + theta)
        return total
    i = np.arange(1, n + 1)
    total = float(np.sum(log_gamma(theta) - log_gamma(i * theta)))
    if n > 1:
        _, diffs = _pair_offsets(lam, n, theta)
        total += float(np.sum(log_gamma(diffs + theta) - log_gamma(diffs)))
    return total


def log_dual_factor(lam: PartitionLike, theta: float) -> LogValue:
    """ln ∏ (a+θℓ+θ)/(a+θℓ+1): переход J_λ → J̃_λ."""
    lam = as_partition(lam)
    return sum(math.log(b.arm + theta * b.leg + theta) - math.log(b.arm + theta * b.leg + 1.0)
               for b in lam.boxes())


def log_jack_plancherel(lam: PartitionLike, s: float, theta: float) -> LogValue:
    """ln J_λ(r_s) = Σ_□ ln[sθ / (a+θℓ+θ)]."""
    lam = as_partition(lam)
    return sum(math.log(s * theta) - math.log(b.arm + theta * b.leg + theta) for b in lam.boxes())


def log_dual_jack_plancherel(lam: PartitionLike, s: float, theta: float, n: int = None,
                             method: str = "gamma") -> LogValue:
    """
    ln J̃_λ(r_s) в специализации Планшереля.

    Гамма-форма требует N ≥ ℓ(λ) частиц; по умолчанию N = max(1, ℓ(λ)).
    Форма по клеткам: ∏ sθ/(a+θℓ+1).
    """
    lam = as_partition(lam)
    if method == "box":
        return sum(math.log(s * theta) - math.log(b.arm + theta * b.leg + 1.0) for b in lam.boxes())
    n = max(1, lam.length) if n is None else n
    if n < lam.length:
        raise ValidationError(f"N = {n} меньше длины разбиения {lam.length}")
    ell, diffs = _pair_offsets(lam, n, theta)
    log_st = math.log(s * theta)
    total = -0.5 * n * (n - 1) * log_st
    total += float(np.sum(log_gamma(diffs + 1.0) - log_gamma(diffs + 1.0 - theta)))
    total += float(np.sum(ell * log_st - log_gamma(ell + 1.0)))
    return total


def log_dual_jack_pure_beta(lam: PartitionLike, m: int, theta: float, beta: float = 1.0,
                            n: int = None, method: str = "gamma") -> LogValue:
    """
    ln J̃_λ(β^M) в специализации чистой β с M переменными, равными β.

    J̃_λ(β^M; θ) = (θβ)^{|λ|}·J_{λ′}(1^M; θ⁻¹); равно нулю при λ_1 > M.

    Args:
        lam: Разбиение
        m: Число β-переменных M
        theta: Параметр θ
        beta: Значение β-переменных
        n: Число частиц в гамма-форме (по умолчанию max(1, ℓ(λ)))
        method: "gamma" или "duality"
    """
    lam = as_partition(lam)
    if lam.parts and lam.parts[0] > m:
        return -math.inf
    scale = lam.size * math.log(theta * beta)
    if method == "duality":
        return scale + log_jack_one_n(Partition(lam.conjugate), m, 1.0 / theta, method="box")
    n = max(1, lam.length) if n is None else n
    if n < lam.length:
        raise ValidationError(f"N = {n} меньше длины разбиения {lam.length}")
    ell, diffs = _pair_offsets(lam, n, theta)
    i = np.arange(1, n + 1)
    total = float(np.sum(log_gamma(diffs + 1.0) - log_gamma(diffs + 1.0 - theta)))
    total += float(np.sum(log_gamma(m + theta * (i - 1) + 1.0) - log_gamma(ell + 1.0)
                          - log_gamma(m + n * theta - ell + 1.0 - theta)))
    return scale + total


def log_normalization(n: int, rho2: Specialization, theta: float) -> LogValue:
    """
    ln H_θ(1^N; ρ₂) = Nθγ + N Σ ln(1+θβ_i) − Nθ Σ ln(1−α_i).

    Raises:
        DivergenceError: если α_i ≥ 1
    """
    alphas = np.asarray(rho2.alphas, dtype=float)
    betas = np.asarray(rho2.betas, dtype=float)
    if np.any(alphas >= 1.0):
        raise DivergenceError(f"Нормировка расходится: α_1 = {alphas.max()} ≥ 1")
    return float(n * theta * rho2.gamma + n * np.sum(np.log1p(theta * betas))
                 - n * theta * np.sum(np.log1p(-alphas)))


def log_normalization_series(n: int, rho2: Specialization, theta: float, k_max: int = 200) -> LogValue:
    """Ряд Σ_k θ·p_k(1^N)·p_k(ρ₂)/k, усечённый на k_max."""
    return sum(theta * n * power_sum(rho2, k, theta) / k for k in range(1, k_max + 1))


def plancherel_truncation(n: int, s: float, theta: float, tol: float) -> int:
    """
    Наименьшее K, при котором масса |λ| > K меньше 1e−2·tol.

    При ρ₁ = 1^N и специализации Планшереля |λ| распределено по Пуассону
    со средним θsN, так что хвост вычисляется точно.
    """
    mean = theta * s * n
    k = int(math.ceil(mean))
    while poisson.sf(k, mean) >= 1e-2 * tol:
        k += 1
    return k


def verify_cauchy_sum(n: int, param: float, theta: float, family: str, truncation: int = None,
                      tol: float = 1e-8, budget: int = None) -> float:
    """
    Относительная ошибка |Σ_λ J_λ(ρ₁)·J̃_λ(ρ₂)/H_θ − 1|.

    Args:
        n: Число переменных ρ₁ = 1^N
        param: M для family="pure_beta", s для family="plancherel_truncated"
        theta: Параметр θ
        family: "pure_beta" или "plancherel_truncated"
        truncation: Граница |λ| ≤ K для Планшереля (по умолчанию по хвосту Пуассона)
        tol: Целевая точность, задающая усечение
        budget: Максимальное число слагаемых

    Raises:
        ResourceLimitError: если число слагаемых превышает бюджет
    """
    budget = Config.get_enum_budget() if budget is None else budget
    if family == "pure_beta":
        m = int(param)
        log_h = log_normalization(n, Specialization.pure_beta(m), theta)
        terms = [
            log_jack_one_n(c.lambdas, n, theta) + log_dual_jack_pure_beta(c.lambdas, m, theta, n=n)
            for c in enumerate_states(n, m, theta, budget=budget)
        ]
    elif family == "plancherel_truncated":
        s = float(param)
        log_h = log_normalization(n, Specialization.plancherel(s), theta)
        k = plancherel_truncation(n, s, theta, tol) if truncation is None else truncation
        tail = float(poisson.sf(k, theta * s * n))
        if state_count(n, k) > budget:
            raise ResourceLimitError(f"Слишком много разбиений для |λ| ≤ {k}", count=state_count(n, k),
                                     budget=budget)
        terms = [
            log_jack_one_n(lam, n, theta) + log_dual_jack_plancherel(lam, s, theta, method="box")
            for lam in enumerate_partitions(k, n)
        ]
        logger.info(f"Сумма Коши (Планшерель): |λ| ≤ {k}, хвост Пуассона {tail:.3e}")
    else:
        raise ValidationError(f"Неизвестное семейство: {family}")

    total = float(np.logaddexp.reduce(np.asarray(terms)))
    return abs(math.expm1(total - log_h))


def _second_specialization(family: str, param: float, beta: float) -> Specialization:
    if family == "pure_beta":
        return Specialization(betas=(beta,) * int(param))
    if family == "plancherel":
        return Specialization.plancherel(param)
    raise ValidationError(f"Неизвестное семейство: {family}")


def partition_log_weight(lam: PartitionLike, n: int, theta: float, family: str, param: float,
                         beta: float = 1.0) -> LogValue:
    """Ненормированный вес ln J_λ(1^N) + ln J̃_λ(ρ₂) индуцированной меры на разбиениях."""
    _second_specialization(family, param, beta)
    if family == "pure_beta":
        dual = log_dual_jack_pure_beta(lam, int(param), theta, beta=beta, n=n)
    else:
        dual = log_dual_jack_plancherel(lam, param, theta, n=n)
    return log_jack_one_n(lam, n, theta) + dual


def jack_measure_log_prob(lam: PartitionLike, n: int, theta: float, family: str, param: float,
                          beta: float = 1.0) -> LogValue:
    """
    ln 𝒥_{ρ₁,ρ₂}(λ) = ln J_λ(1^N) + ln J̃_λ(ρ₂) − ln H_θ.

    family="pure_beta": ρ₂ - M = param переменных, равных β;
    family="plancherel": ρ₂ = r_s с s = param.
    """
    rho2 = _second_specialization(family, param, beta)
    return (partition_log_weight(lam, n, theta, family, param, beta=beta)
            - log_normalization(n, rho2, theta))
