"""
Сэмплер Метрополиса–Гастингса на 𝕎_N^{θ,M} и оценки по его траекториям.

Предложение: частица i выбирается равновероятно, λ_i сдвигается на ±1.
Логарифм отношения весов считается за O(N) по таблицам ln Q_θ и N·V_N.
"""

import hashlib
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from functools import lru_cache
from typing import Callable, Iterable, Iterator, List, Optional, Sequence

import numpy as np

from config import Config
from models import ChainConfig, Configuration, TailEstimate
from .exceptions import ValidationError
from .measures_service import EnsembleSpec, batch_log_weights
from .specfun_service import log_q_theta
from .statespace_service import enumerate_states, validate_configuration

logger = logging.getLogger(__name__)

_BATCH = 4096
_BATCHES_FOR_ERROR = 20


class ChainKernel:
    """
    Таблицы для O(N)-вычисления отношения весов.

    pair[d, k] - вклад пары частиц на расстоянии d по индексу с разностью
    λ равной k, т.е. ln Q_θ(k + dθ) (или β·ln(k + dθ) для кулоновского
    взаимодействия); field[i, λ] = N·V_N((λ + (N−1−i)θ)/N).
    """

    def __init__(self, spec: EnsembleSpec):
        if spec.cap is None:
            raise ValidationError("Сэмплер требует конечного M (или усечения)")
        self.spec = spec
        n, theta, cap = spec.n, spec.theta, spec.cap
        k = np.arange(cap + 1, dtype=float)
        if n > 1:
            d = np.arange(1, n, dtype=float)
            gaps = k[None, :] + d[:, None] * theta
            if spec.interaction == "coulomb":
                table = spec.beta * np.log(gaps)
            else:
                table = np.asarray(log_q_theta(gaps, theta))
            self.pair = np.vstack([np.full(cap + 1, np.nan), table])
        else:
            self.pair = np.empty((1, cap + 1))
        shifts = (n - 1 - np.arange(n)) * theta
        positions = (k[None, :] + shifts[:, None]) / n
        self.field = n * np.asarray(spec.potential.eval_finite_n(n, positions))

    def log_ratio(self, lam: np.ndarray, i: int, delta: int) -> float:
        """ln π(λ + δe_i) − ln π(λ) для допустимого хода."""
        n = len(lam)
        new = lam[i] + delta
        total = -(self.field[i, new] - self.field[i, lam[i]])
        if n > 1:
            left = np.arange(i)
            right = np.arange(i + 1, n)
            if len(left):
                dist = i - left
                total += float(np.sum(self.pair[dist, lam[left] - new] - self.pair[dist, lam[left] - lam[i]]))
            if len(right):
                dist = right - i
                total += float(np.sum(self.pair[dist, new - lam[right]] - self.pair[dist, lam[i] - lam[right]]))
        return total


@lru_cache(maxsize=16)
def kernel_for(spec: EnsembleSpec) -> ChainKernel:
    """Таблицы ядра строятся один раз на ансамбль."""
    logger.debug(f"Построение таблиц ядра: N={spec.n}, M={spec.cap}")
    return ChainKernel(spec)


def _allowed(lam: np.ndarray, i: int, delta: int, cap: int) -> bool:
    new = lam[i] + delta
    if new < 0 or new > cap:
        return False
    if i > 0 and new > lam[i - 1]:
        return False
    if i < len(lam) - 1 and new < lam[i + 1]:
        return False
    return True


def mh_step(state: Configuration, spec: EnsembleSpec, rng: np.random.Generator,
            kernel: Optional[ChainKernel] = None) -> Configuration:
    """
    Один шаг Метрополиса–Гастингса.

    Недопустимое предложение (нарушение порядка или M) отклоняется,
    и состояние не меняется.
    """
    kernel = kernel or kernel_for(spec)
    lam = np.asarray(state.lambdas, dtype=int)
    i = int(rng.integers(state.n))
    delta = 1 if rng.random() < 0.5 else -1
    if not _allowed(lam, i, delta, spec.cap):
        return state
    if math.log(rng.random()) < kernel.log_ratio(lam, i, delta):
        lam[i] += delta
        return Configuration(theta=state.theta, lambdas=tuple(int(x) for x in lam), cap=state.cap,
                             truncated=state.truncated)
    return state


def _initial_state(spec: EnsembleSpec, initial: Optional[Configuration]) -> np.ndarray:
    if initial is None:
        return np.zeros(spec.n, dtype=int)
    validate_configuration(initial)
    if initial.n != spec.n or (spec.cap is not None and initial.lambdas[0] > spec.cap):
        raise ValidationError(f"Начальное состояние не принадлежит ансамблю: {initial}")
    return np.asarray(initial.lambdas, dtype=int)


def _chain_rng(seed: int, chains: int) -> List[np.random.Generator]:
    return [np.random.Generator(np.random.PCG64(s)) for s in np.random.SeedSequence(seed).spawn(chains)]


def _walk(cfg: ChainConfig, rng: np.random.Generator, initial: Optional[Configuration]) -> Iterator[np.ndarray]:
    spec = cfg.spec
    kernel = kernel_for(spec)
    lam = _initial_state(spec, initial)
    n, cap = spec.n, spec.cap
    accepted = 0
    step = 0
    while step < cfg.steps:
        size = min(_BATCH, cfg.steps - step)
        sites = rng.integers(n, size=size)
        deltas = np.where(rng.random(size) < 0.5, 1, -1)
        thresholds = np.log(rng.random(size))
        for i, delta, u in zip(sites, deltas, thresholds):
            i, delta = int(i), int(delta)
            if _allowed(lam, i, delta, cap) and u < kernel.log_ratio(lam, i, delta):
                lam[i] += delta
                accepted += 1
            step += 1
            if step > cfg.burn_in and (step - cfg.burn_in) % cfg.thin == 0:
                yield lam.copy()
    logger.debug(f"Цепочка завершена: {cfg.steps} шагов, доля принятия {accepted / max(cfg.steps, 1):.3f}")


def _check_chain_config(cfg: ChainConfig):
    if cfg.steps <= cfg.burn_in:
        raise ValidationError(f"Число шагов {cfg.steps} должно превышать burn-in {cfg.burn_in}")
    if cfg.thin < 1 or cfg.chains < 1:
        raise ValidationError("thin и chains должны быть положительными")


def run_chain(cfg: ChainConfig, initial: Optional[Configuration] = None,
              chain_index: int = 0) -> Iterator[Configuration]:
    """
    Поток состояний цепочки после burn-in с прореживанием thin.

    Траектория полностью определяется seed и номером цепочки: потоки
    случайных чисел порождаются SeedSequence(seed).spawn(chains).
    """
    _check_chain_config(cfg)
    rng = _chain_rng(cfg.seed, max(cfg.chains, chain_index + 1))[chain_index]
    spec = cfg.spec
    for lam in _walk(cfg, rng, initial):
        yield Configuration(theta=spec.theta, lambdas=tuple(int(x) for x in lam), cap=spec.cap,
                            truncated=spec.truncated)


def _collect(cfg: ChainConfig, index: int, initial: Optional[Configuration]) -> np.ndarray:
    rng = _chain_rng(cfg.seed, cfg.chains)[index]
    rows = list(_walk(cfg, rng, initial))
    return np.asarray(rows, dtype=int).reshape(len(rows), cfg.spec.n)


def run_chains(cfg: ChainConfig, initial: Optional[Configuration] = None) -> List[np.ndarray]:
    """
    Запускает cfg.chains независимых цепочек в пуле потоков.

    Returns:
        Список массивов λ (строка - сохранённое состояние) по цепочкам
    """
    _check_chain_config(cfg)
    workers = max(1, min(cfg.chains, Config.get_threads()))
    with ThreadPoolExecutor(max_workers=workers) as pool:
        results = list(pool.map(lambda k: _collect(cfg, k, initial), range(cfg.chains)))
    logger.info(f"Завершено цепочек: {cfg.chains}, сохранено состояний: {sum(len(r) for r in results)}")
    return results


def transition_matrix(spec: EnsembleSpec):
    """
    Точное ядро перехода цепочки на перечисленном пространстве состояний.

    Returns:
        (states, P, pi): массив λ, стохастическая матрица и стационарное
        распределение по точным весам
    """
    states = [c.lambdas for c in enumerate_states(spec.n, spec.cap, spec.theta)]
    index = {s: k for k, s in enumerate(states)}
    logw = batch_log_weights(spec, np.asarray(states))
    pi = np.exp(logw - np.max(logw))
    pi /= pi.sum()
    size = len(states)
    matrix = np.zeros((size, size))
    proposal = 1.0 / (2 * spec.n)
    for a, lam in enumerate(states):
        for i in range(spec.n):
            for delta in (1, -1):
                target = list(lam)
                target[i] += delta
                b = index.get(tuple(target))
                if b is None:
                    continue
                matrix[a, b] = proposal * min(1.0, math.exp(logw[b] - logw[a]))
        matrix[a, a] = 1.0 - matrix[a].sum()
    return np.asarray(states), matrix, pi


def trajectory_digest(states: Iterable) -> str:
    """64-битный blake2b-отпечаток последовательности посещённых λ."""
    digest = hashlib.blake2b(digest_size=8)
    for state in states:
        lam = state.lambdas if isinstance(state, Configuration) else state
        digest.update(np.asarray(lam, dtype="<i8").tobytes())
    return digest.hexdigest()


def _tail_hits(samples: np.ndarray, spec: EnsembleSpec, t: float, side: str) -> np.ndarray:
    top = samples[:, 0] + (spec.n - 1) * spec.theta
    threshold = t * spec.n
    eps = 1e-9 * max(1.0, abs(threshold))
    if side == "upper":
        return (top >= threshold - eps).astype(float)
    return (top <= threshold + eps).astype(float)


def estimate_tail(cfg: ChainConfig, t: float, side: str,
                  initial: Optional[Configuration] = None) -> TailEstimate:
    """
    Оценка P(ℓ₁ ≥ tN) или P(ℓ₁ ≤ tN) методом групповых средних.

    При отсутствии попаданий p̂ = 0 и возвращается граница «правила трёх» 3/n.
    """
    if side not in ("upper", "lower"):
        raise ValidationError(f"Сторона хвоста должна быть upper или lower, получено: {side}")
    return tail_from_samples(run_chains(cfg, initial), cfg.spec, t, side)


def tail_from_samples(chains: Sequence[np.ndarray], spec: EnsembleSpec, t: float, side: str) -> TailEstimate:
    """Оценка хвоста по уже сохранённым состояниям цепочек."""
    if side not in ("upper", "lower"):
        raise ValidationError(f"Сторона хвоста должна быть upper или lower, получено: {side}")
    hits = np.concatenate([_tail_hits(c, spec, t, side) for c in chains if len(c)])
    total = len(hits)
    if total == 0:
        raise ValidationError("Цепочки не сохранили ни одного состояния")
    p_hat = float(hits.mean())

    batches = min(_BATCHES_FOR_ERROR, total)
    size = total // batches
    means = hits[:batches * size].reshape(batches, size).mean(axis=1)
    stderr = float(means.std(ddof=1) / math.sqrt(batches)) if batches > 1 else float("nan")
    variance = p_hat * (1.0 - p_hat)
    if stderr > 0 and variance > 0:
        n_effective = float(variance / stderr ** 2)
    else:
        n_effective = float(total)

    zero_hits = not np.any(hits)
    bound = 3.0 / total if zero_hits else None
    if zero_hits:
        logger.warning(f"Нет попаданий в хвост {side} при t={t}: p ≤ {bound:.3e} (правило трёх)")
    if spec.truncated:
        logger.warning(f"Оценка хвоста на усечённом пространстве: M = {spec.cap}")
    return TailEstimate(threshold=t, side=side, p_hat=p_hat, stderr=stderr, n_effective=n_effective,
                        n_samples=total, zero_hits=zero_hits, rule_of_three_bound=bound,
                        truncation_cap=spec.cap if spec.truncated else None)


def empirical_positions(samples: Sequence[np.ndarray], spec: EnsembleSpec) -> np.ndarray:
    """Все ℓ_i/N из сохранённых состояний одним массивом."""
    shifts = (spec.n - 1 - np.arange(spec.n)) * spec.theta
    stacked = np.concatenate([np.asarray(s, dtype=float) for s in samples if len(s)], axis=0)
    return ((stacked + shifts) / spec.n).ravel()


def ks_distance(samples, cdf: Callable) -> float:
    """Статистика Колмогорова–Смирнова между выборкой и непрерывной функцией распределения."""
    x = np.sort(np.asarray(samples, dtype=float))
    if len(x) == 0:
        raise ValidationError("Пустая выборка")
    values, counts = np.unique(x, return_counts=True)
    upper = np.cumsum(counts) / len(x)
    lower = upper - counts / len(x)
    model = np.asarray(cdf(values), dtype=float)
    return float(max(np.max(np.abs(upper - model)), np.max(np.abs(model - lower))))
