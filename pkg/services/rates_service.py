"""
Функции скорости для обоих хвостов ℓ₁: численные G_V, J_V и F_V^{θ,t} по
решению задачи равновесия и замкнутые формы для семейств Кравчука и Джека.
"""

import logging
import math
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import minimize_scalar

from models import EquilibriumSolution, RateProfile
from .equilibrium_service import jack_edges, krawtchouk_edges, solve, solve_unbounded
from .exceptions import DomainError, ValidationError
from .integrals_service import segment_log_integral
from .measures_service import Potential, exact_tail_log_probability, krawtchouk_spec
from .specfun_service import xlogx

logger = logging.getLogger(__name__)

_SCAN_POINTS = 200
_CHUNK = 512


def g_function(x, sol: EquilibriumSolution, v: Potential, theta: float):
    """
    G(x) = −2θ ∫ ln|x−y| φ(y) dy + V(x).

    Интеграл по каждой ячейке берётся точно, поэтому G вычислима и в
    точках носителя, включая b_V.
    """
    arr = np.atleast_1d(np.asarray(x, dtype=float))
    if np.any(arr < 0):
        raise DomainError(f"G определена при x ≥ 0, получено x = {x}")
    phi = sol.density
    a, b = phi.edges[:-1], phi.edges[1:]
    active = phi.values > 0
    a, b, weights = a[active], b[active], phi.values[active]
    out = np.empty(arr.shape)
    for start in range(0, len(arr), _CHUNK):
        block = arr[start:start + _CHUNK]
        logs = segment_log_integral(block[:, None], a[None, :], b[None, :])
        out[start:start + _CHUNK] = -2.0 * theta * (logs @ weights)
    out = out + np.asarray(v.eval_limit(arr))
    return float(out[0]) if np.ndim(x) == 0 else out


def _search_upper(sol: EquilibriumSolution, v: Potential, t: float) -> float:
    upper = max(sol.support_right, t)
    if v.window is not None:
        if t > v.window * (1.0 + 1e-12):
            raise DomainError(f"J определена на [0, {v.window}], получено t = {t}")
        upper = min(upper, v.window)
    return upper


def j_function(t: float, sol: EquilibriumSolution, v: Potential, theta: float,
               g_edge: Optional[float] = None) -> float:
    """
    J(t) = 0 при t ≤ b_V, иначе inf_{y ∈ [t, s]} G(y) − G(b_V).

    Инфимум ищется перебором по сетке и уточняется ограниченной
    минимизацией scipy с точностью 1e−8 по y.
    """
    if t < 0:
        raise DomainError(f"J определена при t ≥ 0, получено t = {t}")
    b_v = sol.support_edges[1]
    if t <= b_v:
        return 0.0
    upper = _search_upper(sol, v, t)
    g_edge = g_function(b_v, sol, v, theta) if g_edge is None else g_edge
    if upper - t <= 1e-12:
        return max(0.0, g_function(t, sol, v, theta) - g_edge)

    grid = np.linspace(t, upper, _SCAN_POINTS)
    values = g_function(grid, sol, v, theta)
    k = int(np.argmin(values))
    best = float(values[k])
    lo, hi = grid[max(k - 1, 0)], grid[min(k + 1, len(grid) - 1)]
    res = minimize_scalar(lambda y: g_function(y, sol, v, theta), bounds=(lo, hi), method="bounded",
                          options={"xatol": 1e-8})
    best = min(best, float(res.fun))
    return max(0.0, best - g_edge)


def _lower_tail_setup(v: Potential, theta: float, n_grid: int):
    s_ref = v.window if v.window is not None else v.edge_hint() + 3.0 * theta
    k = max(64, int(math.ceil(n_grid * theta / s_ref)))
    h = theta / k
    reference = solve_unbounded(v, theta, cell_width=h)
    return h, reference


def lower_tail_curve(ts: Sequence[float], v: Potential, theta: float, n_grid: int = 512) -> np.ndarray:
    """
    F_V^{θ,∞} − F_V^{θ,t} для набора t на общей сетке шага h = θ/k.

    Классы 𝒜_t^θ на сетке вложены: F_V^{θ,t} не возрастает по t, а разность не убывает.
    """
    ts = np.asarray(ts, dtype=float)
    if np.any(ts < theta * (1.0 - 1e-12)):
        raise ValidationError(f"Нижний хвост определён при t ≥ θ = {theta}")
    h, reference = _lower_tail_setup(v, theta, n_grid)
    cells_ref = reference.density.cells
    out = np.empty(len(ts))
    for i, t in enumerate(ts):
        cells = int(math.floor(t / h + 1e-9))
        if cells >= cells_ref:
            out[i] = 0.0
            continue
        constrained = solve(v, theta, cells * h, cells)
        out[i] = min(0.0, reference.energy - constrained.energy)
    logger.info(f"Нижний хвост {v.family}: {len(ts)} точек, F∞ = {reference.energy:.12g}")
    return out


def lower_tail_rate(t: float, v: Potential, theta: float, n_grid: int = 512) -> float:
    """
    F_V^{θ,∞} − F_V^{θ,t} ≤ 0; равно нулю при t ≥ b_V.

    Raises:
        ValidationError: если t < θ
    """
    return float(lower_tail_curve([t], v, theta, n_grid=n_grid)[0])


def krawtchouk_lambda(y, m_rate: float, theta: float):
    """Λ(y) для семейства Кравчука, y ≥ b_𝙼."""
    a, b = krawtchouk_edges(m_rate, theta)
    y = np.asarray(y, dtype=float)
    ra, rb = np.sqrt(y - a), np.sqrt(np.maximum(y - b, 0.0))
    low = ra + rb * math.sqrt(a / b)
    high = ra + rb * math.sqrt(b / a)
    out = (-y * np.log(low / high) - (m_rate + theta) * np.log(high)
           + (m_rate - theta) * np.log(ra + rb) + theta * math.log(b - a))
    return float(out) if np.ndim(out) == 0 else out


def krawtchouk_lambda_derivative(y, m_rate: float, theta: float):
    """Λ′(y) = −ln[(√(y−a)+√(y−b)√(a/b)) / (√(y−a)+√(y−b)√(b/a))]."""
    a, b = krawtchouk_edges(m_rate, theta)
    y = np.asarray(y, dtype=float)
    ra, rb = np.sqrt(y - a), np.sqrt(np.maximum(y - b, 0.0))
    out = -np.log((ra + rb * math.sqrt(a / b)) / (ra + rb * math.sqrt(b / a)))
    return float(out) if np.ndim(out) == 0 else out


def krawtchouk_j(y, m_rate: float, theta: float):
    """
    J(y) = 2Λ(y) + V(y) − V(b) − (y−b)V′(b) для ансамбля Кравчука (𝙼 > θ).

    Ниже b_𝙼 значение равно нулю.

    Raises:
        ValidationError: если 𝙼 ≤ θ
    """
    if m_rate <= theta:
        raise ValidationError(f"Замкнутая форма J требует 𝙼 > θ, получено 𝙼={m_rate}, θ={theta}")
    a, b = krawtchouk_edges(m_rate, theta)
    c = m_rate + theta
    y = np.asarray(y, dtype=float)
    if np.any(y > c * (1.0 + 1e-12)):
        raise DomainError(f"J определена на [0, 𝙼+θ] = [0, {c}], получено y = {y}")
    above = np.maximum(y, b)

    def potential(x):
        return xlogx(x) + xlogx(c - x)

    slope = math.log(b) - math.log(a)
    value = (2.0 * np.asarray(krawtchouk_lambda(above, m_rate, theta)) + potential(above)
             - potential(b) - (above - b) * slope)
    out = np.where(y > b, np.maximum(value, 0.0), 0.0)
    return float(out) if np.ndim(out) == 0 else out


def _jack_parts(alpha, t: float, theta: float):
    root = math.sqrt(t)
    c = 4.0 * root * theta
    ra = np.sqrt(alpha)
    rc = np.sqrt(c + alpha)
    numerator = ra + rc
    denominator = (root - 1.0) / (root + 1.0) * ra + rc
    return root, c, ra, numerator, denominator


def jack_lambda(alpha, t: float, theta: float):
    """Λ(α) для семейства Джека–Планшереля, α ≥ 0."""
    alpha = np.asarray(alpha, dtype=float)
    b = jack_edges(t, theta)[1]
    root, c, ra, numerator, denominator = _jack_parts(alpha, t, theta)
    out = ((b + alpha) * np.log(numerator / denominator) - 2.0 * root * theta * ra / numerator
           - 2.0 * theta * np.log(numerator / math.sqrt(c)))
    return float(out) if np.ndim(out) == 0 else out


def jack_lambda_derivative(alpha, t: float, theta: float):
    """Λ′(α) = ln[(√α + √(4√tθ+α)) / ((√t−1)/(√t+1)·√α + √(4√tθ+α))]."""
    alpha = np.asarray(alpha, dtype=float)
    _, _, _, numerator, denominator = _jack_parts(alpha, t, theta)
    out = np.log(numerator / denominator)
    return float(out) if np.ndim(out) == 0 else out


def jack_j(y, t: float, theta: float):
    """J(b+α) = 2Λ(α) + (b+α) ln((b+α)/b) − α; ноль при y ≤ b = θ(√t+1)²."""
    y = np.asarray(y, dtype=float)
    if np.any(y < 0):
        raise DomainError(f"J определена при y ≥ 0, получено y = {y}")
    b = jack_edges(t, theta)[1]
    alpha = np.maximum(y - b, 0.0)
    value = 2.0 * np.asarray(jack_lambda(alpha, t, theta)) + (b + alpha) * np.log1p(alpha / b) - alpha
    out = np.where(y > b, np.maximum(value, 0.0), 0.0)
    return float(out) if np.ndim(out) == 0 else out


def krawtchouk_edge_prefactor(m_rate: float, theta: float) -> float:
    """lim J(b+α)/α^{3/2} = 8√(2√(𝙼θ)) / (3(𝙼−θ))."""
    return 8.0 * math.sqrt(2.0 * math.sqrt(m_rate * theta)) / (3.0 * (m_rate - theta))


def jack_edge_prefactor(t: float, theta: float) -> float:
    """lim J(b+α)/α^{3/2} = 4 / (3√(θ√t)(√t+1))."""
    return 4.0 / (3.0 * math.sqrt(theta * math.sqrt(t)) * (math.sqrt(t) + 1.0))


def fit_edge_asymptotic(j: Callable, b: float, fit_range: Tuple[float, float] = (1e-4, 1e-2),
                        prefactor_range: Tuple[float, float] = (1e-4, 1e-3),
                        points: int = 41) -> Tuple[float, float]:
    """
    Показатель и множитель в J(b+α) ≈ C·α^p у края носителя.

    Показатель - наклон регрессии ln J по ln α на fit_range; множитель -
    медиана J(b+α)/α^{3/2} на prefactor_range.

    Raises:
        ValidationError: если J не положительна на диапазоне подгонки
    """
    alphas = np.geomspace(fit_range[0], fit_range[1], points)
    values = np.asarray([j(b + a) for a in alphas], dtype=float)
    if np.any(values <= 0):
        raise ValidationError("J должна быть положительной справа от края носителя")
    exponent = float(np.polyfit(np.log(alphas), np.log(values), 1)[0])
    near = np.geomspace(prefactor_range[0], prefactor_range[1], points)
    ratios = np.asarray([j(b + a) for a in near], dtype=float) / near ** 1.5
    prefactor = float(np.median(ratios))
    logger.info(f"Асимптотика у края b={b:.6g}: показатель {exponent:.4f}, множитель {prefactor:.6g}")
    return exponent, prefactor


def rate_profile(sol: EquilibriumSolution, v: Potential, theta: float, x: Optional[Sequence[float]] = None,
                 t_grid: Optional[Sequence[float]] = None, n_grid: int = 512,
                 source: Optional[str] = None) -> RateProfile:
    """
    Таблицы G и J на сетке x и (по запросу) кривая нижнего хвоста на t_grid.
    """
    b_v = sol.support_edges[1]
    if x is None:
        right = sol.support_right if v.window is None else min(sol.support_right, v.window)
        x = np.linspace(0.0, right, 201)
    x = np.asarray(x, dtype=float)
    g_values = g_function(x, sol, v, theta)
    g_edge = g_function(b_v, sol, v, theta)
    j_values = np.asarray([j_function(t, sol, v, theta, g_edge=g_edge) for t in x])
    if t_grid is not None:
        t_grid = np.asarray(t_grid, dtype=float)
        f_curve = lower_tail_curve(t_grid, v, theta, n_grid=n_grid)
    else:
        t_grid, f_curve = np.empty(0), np.empty(0)
    return RateProfile(source=source or v.family, b_v=b_v, x=x, g_values=g_values, j_values=j_values,
                       t_grid=t_grid, f_curve=f_curve)


def ldp_trend(ns: Iterable[int], m_rate: float = 2.0, theta: float = 1.0, lower_offset: float = 0.5,
              upper_offset: float = 0.5, n_grid: int = 256) -> Dict:
    """
    Нормированные логарифмы хвостов ансамбля Кравчука точным перебором.

    Для каждого N: (1/N²)·ln P(ℓ₁ ≤ t₋N) при t₋ = b − lower_offset и
    (1/N)·ln P(ℓ₁ ≥ t₊N) при t₊ = min(b + upper_offset, (b + 𝙼 + θ)/2).
    Невозможное событие даёт −inf.

    Returns:
        Словарь с порогами, строками по N и предельными значениями
    """
    _, b = krawtchouk_edges(m_rate, theta)
    t_lower = max(theta, b - lower_offset)
    t_upper = min(b + upper_offset, 0.5 * (b + m_rate + theta))
    rows: List[Dict] = []
    for n in ns:
        spec = krawtchouk_spec(n, m_rate, theta)
        lower = exact_tail_log_probability(spec, t_lower, "lower")
        upper = exact_tail_log_probability(spec, t_upper, "upper")
        rows.append({"n": n, "cap": spec.cap, "lower": lower / n ** 2, "upper": upper / n})
        logger.info(f"LDP N={n}: нижний {lower / n ** 2:.6g}, верхний {upper / n:.6g}")

    v = krawtchouk_spec(1, m_rate, theta).potential
    limits = {"lower": lower_tail_rate(t_lower, v, theta, n_grid=n_grid)}
    limits["upper"] = -float(krawtchouk_j(t_upper, m_rate, theta)) if m_rate > theta else None
    return {"t_lower": t_lower, "t_upper": t_upper, "b": b, "rows": rows, "limits": limits}
