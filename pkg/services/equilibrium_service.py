"""
Равновесная мера: минимизация I_V^θ на классе 𝒜_s^θ плотностей 0 ≤ φ ≤ θ⁻¹
с носителем в [0, s], замкнутые формы для семейств Кравчука и Джека,
метрика 𝒟 и полунорма H^{1/2}.
"""

import logging
import math
from typing import Callable, Optional, Sequence

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.integrate import quad, trapezoid
from scipy.linalg import matmul_toeplitz, toeplitz
from scipy.optimize import brentq

from config import Config
from models import EquilibriumSolution, GridDensity
from .exceptions import DomainError, SolverError, ValidationError
from .integrals_service import CellIntegral, closed_form_log_cells, rectangle_log_integral
from .measures_service import Potential, validate_potential

logger = logging.getLogger(__name__)

_GAUSS_POINTS = 4
_MIN_GRID = 64


class LogKernel:
    """
    Оператор M_{jk} = −∬_{ячейка j × ячейка k} ln|x−y| dx dy.

    На равномерной сетке матрица тёплицева: столбец строится по точным
    формулам для квадрата и сдвинутого квадрата. Выше Config.DENSE_LIMIT
    ячеек умножение выполняется через scipy.linalg.matmul_toeplitz.
    """

    def __init__(self, edges: np.ndarray, dense_limit: Optional[int] = None):
        self.edges = np.asarray(edges, dtype=float)
        self.size = len(self.edges) - 1
        dense_limit = Config.DENSE_LIMIT if dense_limit is None else dense_limit
        widths = np.diff(self.edges)
        self.uniform = bool(np.allclose(widths, widths[0], rtol=1e-12, atol=0.0))
        self._column = None
        self._matrix = None
        if self.uniform:
            column = _toeplitz_column(float(widths[0]), self.size)
            if self.size <= dense_limit:
                self._matrix = toeplitz(column)
            else:
                self._column = column
        else:
            a, b = self.edges[:-1], self.edges[1:]
            self._matrix = -rectangle_log_integral(a[:, None], b[:, None], a[None, :], b[None, :])

    def matvec(self, x: np.ndarray) -> np.ndarray:
        if self._matrix is not None:
            return self._matrix @ x
        return matmul_toeplitz(self._column, x, check_finite=False)

    def norm_bound(self) -> float:
        """Верхняя оценка спектральной нормы (максимум суммы модулей по строке)."""
        if self._matrix is not None:
            return float(np.max(np.sum(np.abs(self._matrix), axis=1)))
        return 2.0 * float(np.sum(np.abs(self._column)))


def _toeplitz_column(h: float, n: int) -> np.ndarray:
    column = np.empty(n)
    column[0] = -closed_form_log_cells(CellIntegral.SQUARE, 0.0, h)
    for d in range(1, n):
        column[d] = -closed_form_log_cells(CellIntegral.SHIFTED_SQUARE, h, c=d * h)
    return column


def cell_potential(v: Potential, edges: np.ndarray) -> np.ndarray:
    """∫ V по каждой ячейке (квадратура Гаусса–Лежандра)."""
    nodes, weights = leggauss(_GAUSS_POINTS)
    a, b = edges[:-1], edges[1:]
    half, mid = 0.5 * (b - a), 0.5 * (a + b)
    points = mid[:, None] + half[:, None] * nodes[None, :]
    return half * (np.asarray(v.eval_limit(points)) @ weights)


def kernel_energy(phi: GridDensity, v: Potential, theta: float) -> float:
    """
    Дискретная энергия I_V^θ(φ) = θ·φᵀMφ + Σ φ_j ∫_{ячейка j} V.

    Args:
        phi: Кусочно-постоянная плотность
        v: Потенциал
        theta: Параметр θ

    Returns:
        Значение энергии
    """
    kernel = LogKernel(phi.edges)
    values = np.asarray(phi.values, dtype=float)
    return float(theta * values @ kernel.matvec(values) + cell_potential(v, phi.edges) @ values)


def project_admissible(y: np.ndarray, widths: np.ndarray, upper: float) -> np.ndarray:
    """
    Евклидова проекция на {0 ≤ φ ≤ upper, Σ w_j φ_j = 1}: φ = clip(y − μ, 0, upper).

    Raises:
        ValidationError: если масса 1 недостижима (Σ w_j·upper < 1)
    """
    capacity = upper * float(np.sum(widths))
    if capacity < 1.0 - 1e-12:
        raise ValidationError(f"Класс плотностей пуст: максимальная масса {capacity:.6g} < 1")

    def excess(mu):
        return float(np.dot(widths, np.clip(y - mu, 0.0, upper))) - 1.0

    lo, hi = float(np.min(y)) - upper, float(np.max(y))
    if excess(lo) <= 0.0:
        return np.full_like(y, upper)
    mu = brentq(excess, lo, hi, xtol=1e-15, rtol=4.0 * np.finfo(float).eps, maxiter=400)
    return np.clip(y - mu, 0.0, upper)


def _diagnostics(phi, k_phi, cell_v, widths, edges, theta):
    upper = 1.0 / theta
    tau = 1e-4 / theta
    u = (theta * k_phi + 0.5 * cell_v) / widths + 0.5 * float(cell_v @ phi)
    interior = (phi > tau) & (phi < upper - tau)
    support = phi > tau
    if np.any(interior):
        kappa = float(np.median(u[interior]))
    else:
        kappa = float(np.max(u[support]))
    residuals = np.where(
        phi <= tau, np.maximum(0.0, kappa - u),
        np.where(phi >= upper - tau, np.maximum(0.0, u - kappa), np.abs(u - kappa)))
    idx = np.flatnonzero(support)
    support_edges = (float(edges[idx[0]]), float(edges[idx[-1] + 1]))
    return kappa, residuals, support_edges


def _check_problem(v: Potential, theta: float, s: float, n_grid: int, enforce_growth: bool):
    if not theta > 0:
        raise ValidationError(f"θ должно быть положительным, получено: {theta}")
    if s < theta * (1.0 - 1e-12):
        raise ValidationError(f"Требуется s ≥ θ, получено s={s}, θ={theta}")
    if n_grid < _MIN_GRID:
        raise ValidationError(f"Сетка должна содержать не менее {_MIN_GRID} ячеек, получено: {n_grid}")
    if v.window is not None and s > v.window * (1.0 + 1e-12):
        raise ValidationError(f"Потенциал определён на [0, {v.window}], а s = {s}")
    if enforce_growth and v.window is None:
        report = validate_potential(v, theta, n_values=())
        if not report.growth_ok:
            raise ValidationError(
                f"Потенциал {v.family} нарушает условие роста в x = {report.worst_x:.6g}")


def solve(v: Potential, theta: float, s: float, n_grid: int, enforce_growth: bool = True,
          max_iters: Optional[int] = None, tol: Optional[float] = None,
          raise_on_failure: bool = True) -> EquilibriumSolution:
    """
    Находит φ_V^{θ,s} проекционным градиентным спуском.

    Шаг Барзилаи–Борвейна задаёт направление d = P(φ − α∇I) − φ, вдоль
    которого выполняется точный линейный поиск (энергия квадратична),
    так что энергия не возрастает. Остановка: относительное убывание
    энергии за Config.SOLVER_WINDOW итераций меньше tol.

    Args:
        v: Потенциал
        theta: Параметр θ
        s: Правый конец носителя
        n_grid: Число ячеек равномерной сетки
        enforce_growth: Проверять условие роста для потенциалов на [0, ∞)
        max_iters: Предел числа итераций (по умолчанию Config.SOLVER_MAX_ITERS)
        tol: Порог относительного убывания (по умолчанию Config.SOLVER_TOL)
        raise_on_failure: Бросать SolverError при отсутствии сходимости

    Returns:
        EquilibriumSolution

    Raises:
        ValidationError: при некорректной постановке задачи
        SolverError: если сходимость не достигнута за max_iters итераций
    """
    _check_problem(v, theta, s, n_grid, enforce_growth)
    max_iters = Config.SOLVER_MAX_ITERS if max_iters is None else max_iters
    tol = Config.SOLVER_TOL if tol is None else tol
    window = Config.SOLVER_WINDOW

    edges = np.linspace(0.0, s, n_grid + 1)
    widths = np.diff(edges)
    upper = 1.0 / theta
    kernel = LogKernel(edges)
    cell_v = cell_potential(v, edges)

    phi = project_admissible(np.full(n_grid, 1.0 / s), widths, upper)
    k_phi = kernel.matvec(phi)
    energy = float(theta * phi @ k_phi + cell_v @ phi)
    history = [energy]
    step = 1.0 / (2.0 * theta * kernel.norm_bound())
    converged = False
    iterations = 0

    for iterations in range(1, max_iters + 1):
        grad = 2.0 * theta * k_phi + cell_v
        d = project_admissible(phi - step * grad, widths, upper) - phi
        slope = float(grad @ d)
        if np.max(np.abs(d)) < 1e-15 or slope >= 0.0:
            converged = True
            break
        k_d = kernel.matvec(d)
        curvature = theta * float(d @ k_d)
        t = 1.0 if curvature <= 0.0 else min(1.0, -slope / (2.0 * curvature))
        phi = phi + t * d
        k_phi = k_phi + t * k_d
        energy = float(theta * phi @ k_phi + cell_v @ phi)
        history.append(energy)
        if curvature > 0.0:
            step = float(d @ d) / (2.0 * curvature)
        if iterations >= window and history[-window - 1] - energy <= tol * max(1.0, abs(energy)):
            converged = True
            break
        if iterations % 1000 == 0:
            logger.debug(f"Итерация {iterations}: энергия {energy:.15g}, шаг {step:.3e}")

    phi = np.clip(phi, 0.0, upper)
    kappa, residuals, support_edges = _diagnostics(phi, k_phi, cell_v, widths, edges, theta)
    solution = EquilibriumSolution(
        density=GridDensity(edges=edges, values=phi),
        energy=energy,
        support_edges=support_edges,
        kappa=kappa,
        residuals=residuals,
        theta=theta,
        iterations=iterations,
        converged=converged,
    )
    if not converged:
        message = f"Решатель не сошёлся за {max_iters} итераций (s={s}, n_grid={n_grid})"
        logger.warning(message)
        if raise_on_failure:
            raise SolverError(message, best=solution, history=history)
        return solution

    logger.info(f"Равновесие {v.family}: s={s}, n_grid={n_grid}, F={energy:.12g}, "
                f"носитель [{support_edges[0]:.6g}, {support_edges[1]:.6g}], итераций {iterations}")
    return solution


def solve_unbounded(v: Potential, theta: float, n_grid: int = 1024, s0: Optional[float] = None,
                    cell_width: Optional[float] = None, max_doublings: int = 12,
                    **kwargs) -> EquilibriumSolution:
    """
    F_V^{θ,∞}: решение на [0, s] с удвоением s, пока b_V ≤ s − 2θ дважды подряд.

    Для потенциалов с конечным окном решается задача на всём окне.
    Шаг сетки при удвоении не меняется.
    """
    if v.window is not None:
        if cell_width is None:
            return solve(v, theta, v.window, n_grid, **kwargs)
        cells = int(math.floor(v.window / cell_width + 1e-9))
        return solve(v, theta, cells * cell_width, cells, **kwargs)

    s = s0 if s0 is not None else v.edge_hint() + 3.0 * theta
    s = max(s, theta)
    if cell_width is None:
        cell_width = s / n_grid
    cells = max(_MIN_GRID, int(math.ceil(s / cell_width - 1e-9)))
    previous = None
    for _ in range(max_doublings + 1):
        solution = solve(v, theta, cells * cell_width, cells, **kwargs)
        fits = solution.support_edges[1] <= solution.support_right - 2.0 * theta
        if fits and previous is not None:
            return previous
        previous = solution if fits else None
        cells *= 2
    raise SolverError(f"Носитель не стабилизировался за {max_doublings} удвоений", best=previous)


def uniform_energy(v: Potential, theta: float) -> float:
    """I_V^θ(θ⁻¹·1[0,θ]) = −θ ln θ + 3θ/2 + θ⁻¹∫₀^θ V."""
    log_part = -closed_form_log_cells(CellIntegral.SQUARE, 0.0, theta) / theta
    potential_part = quad(lambda x: float(v.eval_limit(x)), 0.0, theta, epsabs=1e-13, epsrel=1e-12,
                          limit=200)[0]
    return log_part + potential_part / theta


def _arccot(z):
    return 0.5 * np.pi - np.arctan(z)


def krawtchouk_density(x, m_rate: float, theta: float):
    """
    Плотность равновесной меры ансамбля Кравчука.

    При 𝙼 < θ у плотности есть плато θ⁻¹ у обоих концов [0, 𝙼+θ].
    """
    arr = np.asarray(x, dtype=float)
    if np.any(arr < 0):
        raise DomainError(f"Плотность определена при x ≥ 0, получено x = {x}")
    center = 0.5 * (m_rate + theta)
    radius2 = m_rate * theta - (arr - center) ** 2
    inside = radius2 > 0
    with np.errstate(divide="ignore", invalid="ignore"):
        bulk = _arccot((m_rate - theta) / (2.0 * np.sqrt(np.where(inside, radius2, 1.0)))) / (theta * np.pi)
    if m_rate >= theta:
        out = np.where(inside, bulk, 0.0)
    else:
        plateau = np.abs(arr - center) <= center
        out = np.where(inside, bulk, np.where(plateau, 1.0 / theta, 0.0))
    return float(out) if np.ndim(x) == 0 else out


def krawtchouk_edges(m_rate: float, theta: float):
    """Концы носителя (𝙼+θ)/2 ∓ √(𝙼θ) (при 𝙼 < θ носитель - всё [0, 𝙼+θ])."""
    if m_rate < theta:
        return 0.0, m_rate + theta
    center, radius = 0.5 * (m_rate + theta), math.sqrt(m_rate * theta)
    return center - radius, center + radius


def jack_density(x, t: float, theta: float):
    """Плотность равновесной меры ансамбля Джека–Планшереля (при t < 1 - плато θ⁻¹)."""
    arr = np.asarray(x, dtype=float)
    if np.any(arr < 0):
        raise DomainError(f"Плотность определена при x ≥ 0, получено x = {x}")
    lo, hi = theta * (math.sqrt(t) - 1.0) ** 2, theta * (math.sqrt(t) + 1.0) ** 2
    inside = (arr > lo) & (arr < hi)
    shifted = arr + theta * (t - 1.0)
    radius2 = 4.0 * theta * t * arr - shifted ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        bulk = _arccot(shifted / np.sqrt(np.where(inside, radius2, 1.0))) / (theta * np.pi)
    out = np.where(inside, bulk, 0.0)
    if t < 1.0:
        out = np.where(arr <= lo, 1.0 / theta, out)
    return float(out) if np.ndim(x) == 0 else out


def jack_edges(t: float, theta: float):
    """Концы носителя θ(√t ∓ 1)² (при t < 1 левый конец - 0)."""
    hi = theta * (math.sqrt(t) + 1.0) ** 2
    return (0.0 if t < 1.0 else theta * (math.sqrt(t) - 1.0) ** 2), hi


def closed_form_density(family: str, theta: float, **params) -> Callable:
    """Функция плотности по имени семейства ("krawtchouk" с m_rate, "jack" с t)."""
    if family == "krawtchouk":
        return lambda x: krawtchouk_density(x, params["m_rate"], theta)
    if family == "jack":
        return lambda x: jack_density(x, params["t"], theta)
    raise ValidationError(f"Замкнутая форма плотности неизвестна для семейства: {family}")


def density_cdf(x, density: Callable, breakpoints: Sequence[float] = ()) -> np.ndarray:
    """
    Функция распределения ∫₀^x φ для плотности, заданной функцией.

    Интеграл накапливается между соседними точками (отсортированными
    значениями x и точками излома).
    """
    arr = np.asarray(x, dtype=float)
    knots = np.unique(np.concatenate([[0.0], np.ravel(arr), np.asarray(breakpoints, dtype=float)]))
    knots = knots[knots >= 0.0]
    pieces = [quad(lambda u: float(density(u)), a, b, epsabs=1e-12, epsrel=1e-10, limit=200)[0]
              for a, b in zip(knots[:-1], knots[1:])]
    cumulative = np.concatenate([[0.0], np.cumsum(pieces)])
    return np.interp(np.maximum(arr, 0.0), knots, cumulative)


def grid_cdf(phi: GridDensity, x) -> np.ndarray:
    """Функция распределения кусочно-постоянной плотности (точно)."""
    cumulative = np.concatenate([[0.0], np.cumsum(phi.widths * phi.values)])
    return np.interp(np.asarray(x, dtype=float), phi.edges, cumulative)


def tabulate_density(density: Callable, s: float, n_grid: int, theta: float) -> GridDensity:
    """
    Средние по ячейкам равномерной сетки на [0, s], спроецированные в 𝒜_s^θ.
    """
    edges = np.linspace(0.0, s, n_grid + 1)
    nodes, weights = leggauss(8)
    half, mid = 0.5 * np.diff(edges), 0.5 * (edges[:-1] + edges[1:])
    points = mid[:, None] + half[:, None] * nodes[None, :]
    averages = 0.5 * (np.asarray(density(points)) @ weights)
    values = project_admissible(averages, np.diff(edges), 1.0 / theta)
    return GridDensity(edges=edges, values=values)


def _merge(nu: GridDensity, rho: GridDensity):
    edges = np.union1d(nu.edges, rho.edges)
    mid = 0.5 * (edges[:-1] + edges[1:])

    def lookup(g):
        idx = np.searchsorted(g.edges, mid, side="right") - 1
        inside = (idx >= 0) & (idx < g.cells)
        return np.where(inside, g.values[np.clip(idx, 0, g.cells - 1)], 0.0)

    return edges, lookup(nu) - lookup(rho)


def d_metric(nu: GridDensity, rho: GridDensity) -> float:
    """
    𝒟(ν, ρ) = (−∬ ln|x−y| (ν−ρ)(x)(ν−ρ)(y) dx dy)^{1/2}.

    Интеграл вычисляется точно по ячейкам объединённой сетки; малые
    отрицательные значения от округления обнуляются.
    """
    edges, diff = _merge(nu, rho)
    if not np.any(diff):
        return 0.0
    value = float(diff @ LogKernel(edges).matvec(diff))
    if value < 0.0:
        logger.debug(f"𝒟² = {value:.3e} < 0 обнулено")
    return math.sqrt(max(value, 0.0))


def d_metric_fourier(nu: GridDensity, rho: GridDensity, min_level: int = -20,
                     max_level: int = 12) -> float:
    """
    𝒟 через ∫₀^∞ |ν̂(ξ) − ρ̂(ξ)|²/ξ dξ на диадических отрезках [2^k, 2^{k+1}].

    Узлы Гаусса–Лежандра на каждом отрезке: число растёт с числом
    осцилляций e^{iξx} на носителе.
    """
    edges, diff = _merge(nu, rho)
    a, b = edges[:-1], edges[1:]
    length = float(edges[-1] - edges[0])
    total = 0.0
    for k in range(min_level, max_level):
        lo, hi = 2.0 ** k, 2.0 ** (k + 1)
        count = 16 + int(math.ceil(2.0 * hi * length / math.pi))
        nodes, weights = leggauss(count)
        xi = 0.5 * (hi - lo) * nodes + 0.5 * (hi + lo)
        phase = (np.exp(1j * np.outer(xi, b)) - np.exp(1j * np.outer(xi, a))) @ diff
        transform = phase / (1j * xi)
        total += 0.5 * (hi - lo) * float(weights @ (np.abs(transform) ** 2 / xi))
    return math.sqrt(max(total, 0.0))


def half_norm(g: Callable, support_radius: float, n_samples: int = 4001) -> float:
    """
    ‖g‖_{1/2} для липшицевой функции с носителем в [−R, R].

    [g] = ∬ |g(x)−g(y)|²/|x−y|² dx dy = 2∫₀^∞ D(h)/h² dh, D(h) = ∫|g(x+h)−g(x)|² dx,
    и ‖g‖²_{1/2} = [g]/(2π) в унитарной нормировке преобразования Фурье.
    """
    if support_radius <= 0:
        raise ValidationError(f"Радиус носителя должен быть положительным, получено: {support_radius}")
    x = np.linspace(-support_radius, support_radius, n_samples)
    dx = float(x[1] - x[0])
    values = np.asarray(np.vectorize(g, otypes=[float])(x), dtype=float)
    if not np.any(values):
        return 0.0
    energy = dx * float(np.sum(values ** 2))
    auto = dx * np.correlate(values, values, mode="full")[n_samples - 1:]
    shifts = dx * np.arange(n_samples)
    spread = 2.0 * energy - 2.0 * auto
    integrand = np.empty(n_samples)
    integrand[1:] = spread[1:] / shifts[1:] ** 2
    integrand[0] = integrand[1]
    inner = float(trapezoid(integrand, shifts))
    # при h ≥ 2R сдвиги не перекрываются и D(h) = 2∫g²
    tail = 2.0 * energy / shifts[-1]
    seminorm = 2.0 * (inner + tail)
    return math.sqrt(seminorm / (2.0 * math.pi))
