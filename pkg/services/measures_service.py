"""
Потенциалы, логарифмические веса ансамбля, энергия атомарных мер и точные
статистические суммы.
"""

import logging
import math
from dataclasses import dataclass
from typing import Dict, Iterable, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import logsumexp

from models import Configuration, EmpiricalMeasure, PotentialReport
from .exceptions import DomainError, ValidationError
from .specfun_service import LogValue, log_gamma, log_q_theta, xlogx
from .statespace_service import empirical_measure, enumerate_states, truncation_cap

logger = logging.getLogger(__name__)

_CHUNK = 4096


class Potential:
    """
    Семейство потенциалов (V_N, V, V′).

    window - правый конец области определения V (для семейств с конечным M),
    None для потенциалов на [0, ∞).
    """

    family = "abstract"

    def __init__(self, theta: float, xi: float = 1.0, offset_a: float = 0.0,
                 window: Optional[float] = None, params: Optional[Dict] = None):
        if not theta > 0:
            raise ValidationError(f"θ должно быть положительным, получено: {theta}")
        self.theta = theta
        self.xi = xi
        self.offset_a = offset_a
        self.window = window
        self.params = params or {}

    def eval_finite_n(self, n: int, x):
        raise NotImplementedError

    def eval_limit(self, x):
        raise NotImplementedError

    def eval_derivative(self, x):
        raise NotImplementedError

    def edge_hint(self) -> float:
        """Оценка правого края носителя равновесной меры (для усечения M = ∞)."""
        return self.window or 0.0

    def to_dict(self) -> Dict:
        return {"family": self.family, "params": dict(self.params), "theta": self.theta,
                "xi": self.xi, "offset_a": self.offset_a, "window": self.window}

    def __repr__(self):
        return f"<Potential {self.family} {self.params}>"


class KrawtchoukPotential(Potential):
    """V(x) = x ln x + (𝙼+θ−x) ln(𝙼+θ−x) и его конечномерный вариант V_N."""

    family = "krawtchouk"

    def __init__(self, m_rate: float, theta: float):
        if not m_rate > 0:
            raise ValidationError(f"Параметр 𝙼 должен быть положительным, получено: {m_rate}")
        super().__init__(theta, window=m_rate + theta, params={"m_rate": m_rate})
        self.m_rate = m_rate

    def cap_for(self, n: int) -> int:
        """M_N = ⌊𝙼·N⌋."""
        return int(math.floor(self.m_rate * n + 1e-9))

    def eval_finite_n(self, n: int, x):
        theta = self.theta
        cap = self.cap_for(n)
        arr = np.asarray(x, dtype=float)
        nx = n * arr
        if np.any(nx < -1e-9) or np.any(nx > cap + (n - 1) * theta + 1e-9):
            raise DomainError(f"V_N определён на [0, (M_N+(N−1)θ)/N], получено x = {x}")
        nx = np.clip(nx, 0.0, cap + (n - 1) * theta)
        const = -(cap + n * theta + 2.0 - theta) * math.log(n) + cap + n * theta - theta
        out = (log_gamma(nx + 1.0) + log_gamma(cap + n * theta - nx + 1.0 - theta) + const) / n
        return float(out) if np.ndim(x) == 0 else out

    def eval_limit(self, x):
        c = self.window
        arr = np.asarray(x, dtype=float)
        if np.any(arr < -1e-12) or np.any(arr > c * (1 + 1e-12)):
            raise DomainError(f"V определён на [0, 𝙼+θ] = [0, {c}], получено x = {x}")
        arr = np.clip(arr, 0.0, c)
        out = xlogx(arr) + xlogx(c - arr)
        return float(out) if np.ndim(x) == 0 else out

    def eval_derivative(self, x):
        c = self.window
        arr = np.asarray(x, dtype=float)
        if np.any(arr < 0) or np.any(arr > c):
            raise DomainError(f"V′ определена на [0, 𝙼+θ] = [0, {c}], получено x = {x}")
        delta = 2.0 ** -40 * c
        arr = np.clip(arr, delta, c - delta)
        out = np.log(arr) - np.log(c - arr)
        return float(out) if np.ndim(x) == 0 else out

    def edge_hint(self) -> float:
        return (self.m_rate + self.theta) / 2 + math.sqrt(self.m_rate * self.theta)


class JackPotential(Potential):
    """V(x) = A + x ln x − ln(etθ)·x; постоянная A обеспечивает рост с ξ = 1."""

    family = "jack"

    def __init__(self, t: float, theta: float, offset_a: Optional[float] = None):
        if not t > 0:
            raise ValidationError(f"Параметр t должен быть положительным, получено: {t}")
        super().__init__(theta, xi=1.0, params={"t": t})
        self.t = t
        self.offset_a = _jack_offset(t, theta) if offset_a is None else offset_a

    def eval_finite_n(self, n: int, x):
        arr = np.asarray(x, dtype=float)
        if np.any(arr < 0):
            raise DomainError(f"V_N определён при x ≥ 0, получено x = {x}")
        nx = n * arr
        out = self.offset_a + (log_gamma(nx + 1.0) - nx * math.log(self.t * self.theta * n)) / n
        return float(out) if np.ndim(x) == 0 else out

    def eval_limit(self, x):
        arr = np.asarray(x, dtype=float)
        if np.any(arr < 0):
            raise DomainError(f"V определён при x ≥ 0, получено x = {x}")
        out = self.offset_a + xlogx(arr) - math.log(math.e * self.t * self.theta) * arr
        return float(out) if np.ndim(x) == 0 else out

    def eval_derivative(self, x):
        arr = np.asarray(x, dtype=float)
        if np.any(arr < 0):
            raise DomainError(f"V′ определена при x ≥ 0, получено x = {x}")
        arr = np.maximum(arr, 2.0 ** -40)
        out = np.log(arr) - math.log(self.t * self.theta)
        return float(out) if np.ndim(x) == 0 else out

    def edge_hint(self) -> float:
        return self.theta * (math.sqrt(self.t) + 1.0) ** 2


class TabulatedPotential(Potential):
    """Кусочно-линейный потенциал по таблице узлов, постоянный вне таблицы."""

    family = "tabulated"

    def __init__(self, knots: Sequence[float], values: Sequence[float], theta: float,
                 derivatives: Optional[Sequence[float]] = None, window: Optional[float] = None,
                 xi: float = 1.0):
        knots = np.asarray(knots, dtype=float)
        values = np.asarray(values, dtype=float)
        if knots.ndim != 1 or len(knots) < 2 or len(knots) != len(values):
            raise ValidationError("Таблица потенциала должна содержать не менее двух узлов x, v")
        if np.any(np.diff(knots) <= 0):
            raise ValidationError("Узлы таблицы потенциала должны строго возрастать")
        super().__init__(theta, xi=xi, window=window, params={"knots": len(knots)})
        self.knots = knots
        self.values = values
        if derivatives is None:
            self.derivatives = None
        else:
            self.derivatives = np.asarray(derivatives, dtype=float)
            if len(self.derivatives) != len(knots):
                raise ValidationError("Таблица производных должна совпадать по длине с узлами")

    def eval_finite_n(self, n: int, x):
        return self.eval_limit(x)

    def eval_limit(self, x):
        out = np.interp(np.asarray(x, dtype=float), self.knots, self.values)
        return float(out) if np.ndim(x) == 0 else out

    def eval_derivative(self, x):
        arr = np.asarray(x, dtype=float)
        if self.derivatives is not None:
            out = np.interp(arr, self.knots, self.derivatives, left=0.0, right=0.0)
        else:
            slopes = np.diff(self.values) / np.diff(self.knots)
            idx = np.searchsorted(self.knots, arr, side="right") - 1
            inside = (idx >= 0) & (idx < len(slopes))
            out = np.where(inside, slopes[np.clip(idx, 0, len(slopes) - 1)], 0.0)
        return float(out) if np.ndim(x) == 0 else out


def krawtchouk_potential(m_rate: float, theta: float) -> KrawtchoukPotential:
    """Потенциал ансамбля Кравчука с параметром 𝙼."""
    return KrawtchoukPotential(m_rate, theta)


def jack_potential(t: float, theta: float) -> JackPotential:
    """Потенциал ансамбля Джека–Планшереля с параметром t."""
    potential = JackPotential(t, theta)
    logger.info(f"Потенциал Джека: t={t}, θ={theta}, A={potential.offset_a:.12g}")
    return potential


def tabulated_potential(knots, values, theta: float, derivatives=None, window=None) -> TabulatedPotential:
    return TabulatedPotential(knots, values, theta, derivatives=derivatives, window=window)


def constant_potential(c: float, theta: float, window: Optional[float] = None) -> TabulatedPotential:
    """V ≡ c (при c = 0 - нулевой потенциал)."""
    return TabulatedPotential([0.0, 1.0], [c, c], theta, derivatives=[0.0, 0.0], window=window)


def _jack_offset(t: float, theta: float, x_max: float = 1e3) -> float:
    """
    Наименьшее A, при котором A + x ln x − ln(etθ)x ≥ 2θ ln(1+x²) при x ≥ 0.

    Так как Γ(y+1) ≥ y^{y}e^{−y}, то V_N ≥ V при любом N, и условие на V
    влечёт условие роста для всех V_N.
    """
    slope = math.log(math.e * t * theta)

    def deficit(x):
        return 2.0 * theta * np.log1p(x * x) - xlogx(x) + slope * x

    grid = np.concatenate([[0.0], np.geomspace(1e-8, x_max, 20001)])
    values = deficit(grid)
    k = int(np.argmax(values))
    lo, hi = grid[max(k - 1, 0)], grid[min(k + 1, len(grid) - 1)]
    best = float(values[k])
    if hi > lo:
        res = minimize_scalar(lambda x: -deficit(x), bounds=(lo, hi), method="bounded",
                              options={"xatol": 1e-12})
        best = max(best, -float(res.fun))

    # при x > x_max производная 4θx/(1+x²) − ln x − 1 + ln(etθ) отрицательна
    tail_slope = 4.0 * theta * x_max / (1.0 + x_max ** 2) - math.log(x_max) - 1.0 + slope
    if tail_slope >= 0 or deficit(x_max) > best:
        raise ValidationError(f"Не удалось подобрать A для t={t}, θ={theta}: хвост не убывает")
    return max(best, 0.0)


def validate_potential(v: Potential, theta: float, n_values: Iterable[int] = (10, 100, 1000),
                       x_max: float = 1e4) -> PotentialReport:
    """
    Проверяет условие роста V(x) ≥ (1+ξ)θ ln(1+x²), огибающую |V′| ≤ B(1+|ln x|)
    и скорость сходимости V_N → V.

    Нарушения не приводят к исключению: они отражаются в отчёте.
    """
    right = x_max if v.window is None else v.window
    grid = np.concatenate([[0.0], np.geomspace(1e-6, right, 2001)])
    grid = grid[grid <= right]
    messages = []

    margins = v.eval_limit(grid) - (1.0 + v.xi) * theta * np.log1p(grid ** 2)
    k = int(np.argmin(margins))
    growth_margin = float(margins[k])
    growth_required = v.window is None
    growth_ok = growth_margin >= -1e-9
    if growth_required and not growth_ok:
        messages.append(f"рост нарушен в x = {grid[k]:.6g} на {-growth_margin:.3e}")

    inner = grid[(grid > 0) & (grid < right)]
    envelope = float(np.max(np.abs(v.eval_derivative(inner)) / (1.0 + np.abs(np.log(inner)))))

    conv = None
    checkpoints = grid[grid <= min(10.0, right)]
    constants = []
    for n in n_values:
        if v.window is not None:
            cap = v.cap_for(n) if isinstance(v, KrawtchoukPotential) else None
            upper = (cap + (n - 1) * theta) / n if cap is not None else right
            pts = checkpoints[checkpoints <= min(upper, right)]
        else:
            pts = checkpoints
        diff = np.max(np.abs(v.eval_finite_n(n, pts) - v.eval_limit(pts)))
        constants.append(diff * n / math.log(n + 1.0))
    if constants:
        conv = float(max(constants))

    report = PotentialReport(
        family=v.family,
        growth_required=growth_required,
        growth_ok=growth_ok,
        growth_margin=growth_margin,
        worst_x=float(grid[k]),
        derivative_envelope=envelope,
        convergence_constant=conv,
        messages=tuple(messages),
    )
    if messages:
        logger.warning(f"Потенциал {v.family}: {'; '.join(messages)}")
    return report


@dataclass(frozen=True)
class EnsembleSpec:
    """Дискретный β-ансамбль на 𝕎_N^{θ,M}."""
    n: int
    theta: float
    cap: Optional[int]
    potential: Potential
    interaction: str = "q_theta"
    beta: Optional[float] = None
    truncated: bool = False

    def __post_init__(self):
        if self.n < 1:
            raise ValidationError(f"Число частиц должно быть положительным, получено: {self.n}")
        if not self.theta > 0:
            raise ValidationError(f"θ должно быть положительным, получено: {self.theta}")
        if self.interaction not in ("q_theta", "coulomb"):
            raise ValidationError(f"Неизвестное взаимодействие: {self.interaction}")
        if self.interaction == "coulomb" and self.beta is None:
            raise ValidationError("Для кулоновского взаимодействия нужен параметр β")
        if self.cap is not None and self.cap < 0:
            raise ValidationError(f"M должно быть неотрицательным, получено: {self.cap}")

    def to_dict(self) -> Dict:
        return {
            "family": self.potential.family,
            "params": dict(self.potential.params),
            "n": self.n,
            "theta": self.theta,
            "cap": self.cap,
            "truncated": self.truncated,
            "interaction": self.interaction if self.beta is None else f"{self.interaction}({self.beta})",
        }


def krawtchouk_spec(n: int, m_rate: float, theta: float) -> EnsembleSpec:
    """Ансамбль Кравчука с M_N = ⌊𝙼N⌋."""
    potential = krawtchouk_potential(m_rate, theta)
    return EnsembleSpec(n=n, theta=theta, cap=potential.cap_for(n), potential=potential)


def jack_spec(n: int, t: float, theta: float, cap: Optional[int] = None,
              eps: Optional[float] = None) -> EnsembleSpec:
    """Ансамбль Джека–Планшереля; при cap=None M = ∞ усекается по оценке хвоста."""
    potential = jack_potential(t, theta)
    truncated = cap is None
    if truncated:
        cap = truncation_cap(n, theta, xi=potential.xi, eps=eps, edge_hint=potential.edge_hint())
    return EnsembleSpec(n=n, theta=theta, cap=cap, potential=potential, truncated=truncated)


def _check_configuration(spec: EnsembleSpec, c: Configuration):
    if c.n != spec.n:
        raise ValidationError(f"Конфигурация содержит {c.n} частиц, ансамбль - {spec.n}")
    if abs(c.theta - spec.theta) > 1e-12 * spec.theta:
        raise ValidationError(f"θ конфигурации {c.theta} не совпадает с θ ансамбля {spec.theta}")
    lam = c.lambdas
    if lam[-1] < 0 or any(lam[i] < lam[i + 1] for i in range(len(lam) - 1)):
        raise ValidationError(f"Некорректная конфигурация λ = {lam}")
    if spec.cap is not None and lam[0] > spec.cap:
        raise ValidationError(f"λ_1 = {lam[0]} превышает M = {spec.cap}")


def batch_log_weights(spec: EnsembleSpec, lambdas: np.ndarray) -> np.ndarray:
    """
    Логарифмические веса для пачки конфигураций (строки массива λ).

    Returns:
        Массив Σ_{i<j} ln Q_θ(ℓ_i−ℓ_j) − N·Σ_i V_N(ℓ_i/N) по строкам
    """
    n, theta = spec.n, spec.theta
    lam = np.atleast_2d(np.asarray(lambdas, dtype=float))
    positions = lam + (n - 1 - np.arange(n)) * theta
    out = -n * np.sum(spec.potential.eval_finite_n(n, positions / n), axis=1)
    if n > 1:
        iu, ju = np.triu_indices(n, k=1)
        diffs = positions[:, iu] - positions[:, ju]
        if spec.interaction == "coulomb":
            out = out + spec.beta * np.sum(np.log(diffs), axis=1)
        else:
            out = out + np.sum(log_q_theta(diffs, theta), axis=1)
    return out


def log_weight(spec: EnsembleSpec, c: Configuration) -> LogValue:
    """
    Логарифм веса конфигурации в ансамбле.

    Raises:
        ValidationError: если конфигурация не принадлежит пространству ансамбля
    """
    _check_configuration(spec, c)
    return float(batch_log_weights(spec, np.asarray([c.lambdas]))[0])


def _state_chunks(spec: EnsembleSpec):
    if spec.cap is None:
        raise ValidationError("Точное перечисление требует конечного M")
    chunk = []
    for c in enumerate_states(spec.n, spec.cap, spec.theta):
        chunk.append(c.lambdas)
        if len(chunk) == _CHUNK:
            yield np.asarray(chunk, dtype=int)
            chunk = []
    if chunk:
        yield np.asarray(chunk, dtype=int)


def exact_log_partition(spec: EnsembleSpec) -> LogValue:
    """
    ln Z_N перечислением всех состояний с потоковым log-sum-exp.

    Raises:
        ResourceLimitError: если число состояний превышает бюджет
    """
    total = -math.inf
    for block in _state_chunks(spec):
        total = float(np.logaddexp(total, logsumexp(batch_log_weights(spec, block))))
    logger.debug(f"ln Z_N = {total:.15g} для {spec.to_dict()}")
    return total


def exact_pmf(spec: EnsembleSpec) -> Tuple[np.ndarray, np.ndarray]:
    """Все состояния (массив λ) и их вероятности."""
    blocks = list(_state_chunks(spec))
    lambdas = np.concatenate(blocks, axis=0)
    logw = np.concatenate([batch_log_weights(spec, b) for b in blocks])
    probs = np.exp(logw - logsumexp(logw))
    logger.info(f"Точное распределение: {len(probs)} состояний")
    return lambdas, probs


def exact_tail_log_probability(spec: EnsembleSpec, t: float, side: str) -> LogValue:
    """ln P(ℓ₁ ≥ tN) (side='upper') или ln P(ℓ₁ ≤ tN) (side='lower') перечислением."""
    if side not in ("upper", "lower"):
        raise ValidationError(f"Сторона хвоста должна быть upper или lower, получено: {side}")
    threshold = t * spec.n
    eps = 1e-9 * max(1.0, abs(threshold))
    hit, total = -math.inf, -math.inf
    for block in _state_chunks(spec):
        logw = batch_log_weights(spec, block)
        top = block[:, 0] + (spec.n - 1) * spec.theta
        mask = top >= threshold - eps if side == "upper" else top <= threshold + eps
        total = float(np.logaddexp(total, logsumexp(logw)))
        if np.any(mask):
            hit = float(np.logaddexp(hit, logsumexp(logw[mask])))
    return hit - total


def krawtchouk_log_partition(n: int, cap: int, theta: float) -> LogValue:
    """
    Замкнутая форма ln Z_N ансамбля Кравчука в нормировке весов e^{−N V_N}.

    Веса 1/(Γ(ℓ+1)Γ(M+Nθ−ℓ+1−θ)) отвечают мере Джека с β-специализацией
    в M переменных, равных θ⁻¹, поэтому
    Z = ∏_i 2^M Γ(iθ) / (Γ(M+θ(i−1)+1) Γ(θ)).
    """
    i = np.arange(1, n + 1)
    log_z = float(np.sum(cap * math.log(2.0) + log_gamma(i * theta) - log_gamma(theta)
                         - log_gamma(cap + theta * (i - 1) + 1.0)))
    log_d = (cap + n * theta + 2.0 - theta) * math.log(n) - (cap + n * theta - theta)
    return log_z + n * log_d


def jack_log_partition(n: int, t: float, theta: float, offset_a: float) -> LogValue:
    """ln Z_N ансамбля Джека–Планшереля (M = ∞), s = tN."""
    s = t * n
    i = np.arange(1, n + 1)
    return float(-n * n * offset_a - n * log_gamma(theta) + s * theta * n
                 + 0.5 * n * (n - 1) * math.log(s * theta) + np.sum(log_gamma(i * theta)))


def energy_of_atoms(mu: EmpiricalMeasure, v: Potential, theta: float, n: Optional[int] = None) -> float:
    """
    I_V(μ) = −(2θ/r²) Σ_{i<j} ln|x_i − x_j| + (1/r) Σ V(x_i).

    Args:
        mu: Атомарная мера
        v: Потенциал
        theta: Параметр θ
        n: Если задано, используется V_N вместо V

    Raises:
        DomainError: если атомы совпадают
    """
    x = np.asarray(mu.atoms, dtype=float)
    r = len(x)
    pot = v.eval_finite_n(n, x) if n is not None else v.eval_limit(x)
    if r == 1:
        return float(np.sum(pot))
    iu, ju = np.triu_indices(r, k=1)
    gaps = np.abs(x[iu] - x[ju])
    if np.any(gaps == 0):
        raise DomainError("Энергия атомарной меры не определена при совпадающих атомах")
    return float(-(2.0 * theta / r ** 2) * np.sum(np.log(gaps)) + np.sum(pot) / r)


def pmf_decomposition_residual(spec: EnsembleSpec, c: Configuration) -> float:
    """ln(Z_N·P_N(ℓ)) − θN(N−1) ln N + N²·I_{V_N}(μ_N)."""
    n, theta = spec.n, spec.theta
    energy = energy_of_atoms(empirical_measure(c), spec.potential, theta, n=n)
    return log_weight(spec, c) - theta * n * (n - 1) * math.log(n) + n * n * energy


def pmf_residual_bounds(c: Configuration) -> Tuple[float, float]:
    """Оценки (1+θ)³Σ_{i<j} 1/(ℓ_i−ℓ_j) и (1+θ)³θ⁻¹N(1+ln N)."""
    n, theta = c.n, c.theta
    factor = (1.0 + theta) ** 3
    if n == 1:
        return 0.0, factor / theta
    iu, ju = np.triu_indices(n, k=1)
    pair = factor * float(np.sum(1.0 / (c.positions[iu] - c.positions[ju])))
    return pair, factor / theta * n * (1.0 + math.log(n))
