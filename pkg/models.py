"""
Модели данных: конфигурации частиц, плотности, решения и отчёты.
"""
from dataclasses import dataclass, field
from datetime import datetime
from functools import cached_property
from typing import Dict, List, Optional, Tuple

import numpy as np


@dataclass(frozen=True)
class Configuration:
    """
    Конфигурация частиц ℓ_1 > … > ℓ_N из 𝕎_N^{θ,M}.

    Хранится целая часть λ_i; положения ℓ_i = λ_i + (N−i)·θ вычисляются
    по требованию, поэтому условие ℓ_i − (N−i)θ ∈ ℤ выполнено точно.
    """
    theta: float
    lambdas: Tuple[int, ...]
    cap: Optional[int] = None
    truncated: bool = False

    @property
    def n(self) -> int:
        return len(self.lambdas)

    @cached_property
    def positions(self) -> np.ndarray:
        n = self.n
        shifts = (n - 1 - np.arange(n)) * self.theta
        return np.asarray(self.lambdas, dtype=float) + shifts

    def to_dict(self) -> Dict:
        return {
            "theta": self.theta,
            "n": self.n,
            "cap": self.cap,
            "truncated": self.truncated,
            "lambda": list(self.lambdas),
        }

    def __repr__(self):
        return f"<Configuration θ={self.theta} λ={self.lambdas} M={self.cap}>"


@dataclass(frozen=True, eq=False)
class EmpiricalMeasure:
    """Атомарная мера: атомы ℓ_i/N с весом 1/N (или 1/r для частичной меры)."""
    atoms: np.ndarray
    weight: float
    theta: float
    n: int

    @property
    def mass(self) -> float:
        return self.weight * len(self.atoms)

    def to_dict(self) -> Dict:
        return {"atoms": self.atoms.tolist(), "weight": self.weight, "n": self.n}


@dataclass(frozen=True, eq=False)
class GridDensity:
    """
    Кусочно-постоянная плотность на [0, s].

    Ячейки задаются границами edges (n+1 точек), значения values - по ячейкам.
    Решатель использует равномерную сетку шага h = s/n.
    """
    edges: np.ndarray
    values: np.ndarray

    @classmethod
    def uniform(cls, s: float, values) -> "GridDensity":
        values = np.asarray(values, dtype=float)
        return cls(edges=np.linspace(0.0, s, len(values) + 1), values=values)

    @property
    def support_right(self) -> float:
        return float(self.edges[-1])

    @property
    def cells(self) -> int:
        return len(self.values)

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.edges)

    @property
    def midpoints(self) -> np.ndarray:
        return 0.5 * (self.edges[:-1] + self.edges[1:])

    @property
    def h(self) -> float:
        """Шаг равномерной сетки."""
        return self.support_right / self.cells

    @property
    def mass(self) -> float:
        return float(np.dot(self.widths, self.values))

    def admissibility_violation(self, theta: float) -> float:
        """Наибольшее нарушение условий 0 ≤ φ ≤ θ⁻¹ и ∫φ = 1."""
        below = max(0.0, -float(self.values.min(initial=0.0)))
        above = max(0.0, float(self.values.max(initial=0.0)) - 1.0 / theta)
        return max(below, above, abs(self.mass - 1.0))

    def to_dict(self) -> Dict:
        return {"edges": self.edges.tolist(), "values": self.values.tolist()}


@dataclass(frozen=True, eq=False)
class EquilibriumSolution:
    """Решение задачи min I_V^θ на 𝒜_s^θ."""
    density: GridDensity
    energy: float
    support_edges: Tuple[float, float]
    kappa: float
    residuals: np.ndarray
    theta: float
    iterations: int = 0
    converged: bool = True

    @property
    def support_right(self) -> float:
        return self.density.support_right

    def summary(self) -> Dict:
        return {
            "energy": self.energy,
            "support_left": self.support_edges[0],
            "support_right": self.support_edges[1],
            "kappa": self.kappa,
            "s": self.support_right,
            "n_grid": self.density.cells,
            "iterations": self.iterations,
            "converged": self.converged,
            "residual_max": float(np.max(self.residuals)) if len(self.residuals) else 0.0,
            "residual_p99": float(np.quantile(self.residuals, 0.99)) if len(self.residuals) else 0.0,
        }


@dataclass(frozen=True)
class PartitionBox:
    """Клетка диаграммы Юнга (нумерация с единицы) и её статистики."""
    row: int
    col: int
    arm: int
    leg: int
    coarm: int
    coleg: int


@dataclass(frozen=True)
class Partition:
    """Разбиение λ_1 ≥ λ_2 ≥ … > 0 (нулевые части отбрасываются)."""
    parts: Tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "parts", tuple(int(p) for p in self.parts if p != 0))

    @cached_property
    def conjugate(self) -> Tuple[int, ...]:
        if not self.parts:
            return ()
        return tuple(sum(1 for p in self.parts if p >= j) for j in range(1, self.parts[0] + 1))

    @property
    def length(self) -> int:
        return len(self.parts)

    @property
    def size(self) -> int:
        return sum(self.parts)

    def boxes(self):
        conj = self.conjugate
        for i, row_len in enumerate(self.parts, start=1):
            for j in range(1, row_len + 1):
                yield PartitionBox(
                    row=i,
                    col=j,
                    arm=row_len - j,
                    leg=conj[j - 1] - i,
                    coarm=j - 1,
                    coleg=i - 1,
                )

    def padded(self, n: int) -> Tuple[int, ...]:
        return self.parts + (0,) * (n - len(self.parts))

    def __repr__(self):
        return f"<Partition {self.parts}>"


@dataclass(frozen=True)
class Specialization:
    """Jack-положительная специализация (α, β, γ)."""
    alphas: Tuple[float, ...] = ()
    betas: Tuple[float, ...] = ()
    gamma: float = 0.0

    @classmethod
    def pure_alpha(cls, n: int) -> "Specialization":
        return cls(alphas=(1.0,) * n)

    @classmethod
    def pure_beta(cls, m: int) -> "Specialization":
        return cls(betas=(1.0,) * m)

    @classmethod
    def plancherel(cls, s: float) -> "Specialization":
        return cls(gamma=s)


@dataclass(frozen=True)
class PotentialReport:
    """Результат проверки потенциала на условия роста."""
    family: str
    growth_required: bool
    growth_ok: bool
    growth_margin: float
    worst_x: float
    derivative_envelope: float
    convergence_constant: Optional[float] = None
    messages: Tuple[str, ...] = ()

    def to_dict(self) -> Dict:
        return {
            "family": self.family,
            "growth_required": self.growth_required,
            "growth_ok": self.growth_ok,
            "growth_margin": self.growth_margin,
            "worst_x": self.worst_x,
            "derivative_envelope": self.derivative_envelope,
            "convergence_constant": self.convergence_constant,
            "messages": list(self.messages),
        }


@dataclass(frozen=True, eq=False)
class RateProfile:
    """Таблицы G, J и кривой F^{θ,t}."""
    source: str
    b_v: float
    x: np.ndarray
    g_values: np.ndarray
    j_values: np.ndarray
    t_grid: np.ndarray = field(default_factory=lambda: np.empty(0))
    f_curve: np.ndarray = field(default_factory=lambda: np.empty(0))


@dataclass(frozen=True)
class ChainConfig:
    """Параметры запуска цепочек Метрополиса–Гастингса."""
    spec: object
    steps: int
    burn_in: int = 0
    thin: int = 1
    seed: int = 0
    chains: int = 1


@dataclass(frozen=True)
class TailEstimate:
    """Оценка вероятности хвоста P(ℓ₁ ≥ tN) или P(ℓ₁ ≤ tN)."""
    threshold: float
    side: str
    p_hat: float
    stderr: float
    n_effective: float
    n_samples: int
    zero_hits: bool = False
    rule_of_three_bound: Optional[float] = None
    truncation_cap: Optional[int] = None

    def to_dict(self) -> Dict:
        return {
            "threshold": self.threshold,
            "side": self.side,
            "p_hat": self.p_hat,
            "stderr": self.stderr,
            "n_effective": self.n_effective,
            "n_samples": self.n_samples,
            "zero_hits": self.zero_hits,
            "rule_of_three_bound": self.rule_of_three_bound,
            "truncation_cap": self.truncation_cap,
        }


@dataclass
class RunManifest:
    """Манифест запуска командной строки."""
    command: str
    parameters: Dict
    version: str
    seed: Optional[int] = None
    started_at: str = field(default_factory=lambda: datetime.utcnow().isoformat())
    finished_at: Optional[str] = None
    outputs: List[Dict] = field(default_factory=list)

    def to_dict(self) -> Dict:
        return {
            "command": self.command,
            "parameters": self.parameters,
            "version": self.version,
            "seed": self.seed,
            "started_at": self.started_at,
            "finished_at": self.finished_at,
            "outputs": self.outputs,
        }
