"""
Набор проверок тождеств: интегралы логарифма, суммы Коши для многочленов
Джека, оценки Q_θ и Γ, детальный баланс сэмплера.
"""

import logging
import math
from typing import Callable, Dict, List

import numpy as np
from scipy.integrate import quad

from .exceptions import EnsembleLabError, ValidationError, VerificationError
from .integrals_service import (
    CellIntegral,
    LogIdentity,
    closed_form_log_cells,
    log_integral_identities,
    log_integral_quadrature,
    segment_log_integral,
)
from .jack_service import verify_cauchy_sum
from .measures_service import krawtchouk_spec
from .sampler_service import transition_matrix
from .specfun_service import gamma_sandwich_check, log_q_theta, q_theta_bound

logger = logging.getLogger(__name__)

SANDWICH_THETAS = (0.3, 0.5, 1.0, 2.0, 3.7)


def _draw_identity_args(case: LogIdentity, rng: np.random.Generator) -> Dict[str, float]:
    a, b = rng.uniform(0.1, 3.0, size=2)
    if case in (LogIdentity.I_MINUS_2, LogIdentity.I_PLUS_2, LogIdentity.J_2):
        c = d = 1.0
    else:
        c, d = rng.uniform(0.2, 3.0, size=2)
    return {"a": float(a), "b": float(b), "c": float(c), "d": float(d)}


def identity_rows(draws: int = 100, seed: int = 0) -> List[Dict]:
    """
    Сравнение замкнутых форм интегралов с адаптивной квадратурой.

    Returns:
        Строки {identity, a, b, c, d, closed_form, quadrature, rel_error}
    """
    rng = np.random.default_rng(seed)
    rows = []
    for case in LogIdentity:
        for _ in range(draws):
            args = _draw_identity_args(case, rng)
            exact = log_integral_identities(case, **args)
            numeric = log_integral_quadrature(case, **args)
            rows.append({"identity": case.value, **args, "closed_form": exact, "quadrature": numeric,
                         "rel_error": abs(exact - numeric) / max(1.0, abs(exact))})
    return rows


def cell_rows(draws: int = 20, seed: int = 0) -> List[Dict]:
    """Замкнутые формы интегралов по ячейкам против квадратуры."""
    rng = np.random.default_rng(seed)
    opts = dict(epsabs=1e-14, epsrel=1e-13, limit=200)
    rows = []
    for _ in range(draws):
        a = float(rng.uniform(0.0, 2.0))
        b = a + float(rng.uniform(0.1, 2.0))
        c = float(rng.uniform(a - 1.0, b + 1.0))

        exact = closed_form_log_cells(CellIntegral.SEGMENT, a, b, c)
        points = [c] if a < c < b else None
        numeric = quad(lambda v: math.log(abs(v - c)), a, b, points=points, **opts)[0]
        rows.append({"kind": CellIntegral.SEGMENT.value, "a": a, "b": b, "c": c,
                     "closed_form": exact, "quadrature": numeric})

        exact = closed_form_log_cells(CellIntegral.SQUARE, a, b)
        numeric = quad(lambda w: float(segment_log_integral(w, a, b)), a, b, **opts)[0]
        rows.append({"kind": CellIntegral.SQUARE.value, "a": a, "b": b, "c": 0.0,
                     "closed_form": exact, "quadrature": numeric})

        side = b - a
        shift = side + float(rng.uniform(0.0, 2.0))
        exact = closed_form_log_cells(CellIntegral.SHIFTED_SQUARE, side, c=shift)
        numeric = quad(lambda x: float(segment_log_integral(shift + x, 0.0, side)), 0.0, side, **opts)[0]
        rows.append({"kind": CellIntegral.SHIFTED_SQUARE.value, "a": side, "b": 0.0, "c": shift,
                     "closed_form": exact, "quadrature": numeric})
    for row in rows:
        row["abs_error"] = abs(row["closed_form"] - row["quadrature"])
    return rows


def _check_identities() -> Dict:
    worst = max(row["rel_error"] for row in identity_rows())
    return {"max_error": worst, "tolerance": 1e-8}


def _check_cells() -> Dict:
    worst = max(row["abs_error"] for row in cell_rows())
    return {"max_error": worst, "tolerance": 1e-10}


def _check_q_sandwich() -> Dict:
    worst = 0.0
    for theta in SANDWICH_THETAS:
        x = np.geomspace(theta, 1e6, 1000)
        excess = np.abs(log_q_theta(x, theta) - 2.0 * theta * np.log(x)) - q_theta_bound(x, theta)
        worst = max(worst, float(np.max(excess)))
    return {"max_error": max(worst, 0.0), "tolerance": 0.0}


def _check_gamma_sandwich() -> Dict:
    failures = sum(not gamma_sandwich_check(float(x)) for x in np.geomspace(1.0, 1e6, 200))
    return {"max_error": float(failures), "tolerance": 0.0}


def _check_cauchy() -> Dict:
    worst = 0.0
    for theta in (0.5, 1.0, 2.0):
        for n in range(1, 5):
            for m in range(1, 5):
                worst = max(worst, verify_cauchy_sum(n, m, theta, "pure_beta"))
    plancherel = verify_cauchy_sum(1, 0.1, 1.0, "plancherel_truncated", tol=1e-8)
    return {"max_error": worst, "tolerance": 1e-10, "plancherel": plancherel,
            "passed": worst <= 1e-10 and plancherel <= 1e-8}


def _check_detailed_balance() -> Dict:
    spec = krawtchouk_spec(2, 1.5, 1.0)
    _, matrix, pi = transition_matrix(spec)
    flow = pi[:, None] * matrix
    return {"max_error": float(np.max(np.abs(flow - flow.T))), "tolerance": 1e-14,
            "states": len(pi)}


SUITES: Dict[str, Dict[str, Callable[[], Dict]]] = {
    "identities": {
        "log_integral_identities": _check_identities,
        "cell_integrals": _check_cells,
        "q_theta_sandwich": _check_q_sandwich,
        "gamma_sandwich": _check_gamma_sandwich,
        "cauchy_sums": _check_cauchy,
        "detailed_balance": _check_detailed_balance,
    },
}


def run_suite(name: str = "identities", raise_on_failure: bool = True) -> Dict:
    """
    Запускает набор проверок.

    Returns:
        Отчёт {suite, passed, checks: {имя: {max_error, tolerance, passed, ...}}}

    Raises:
        ValidationError: если набор неизвестен
        VerificationError: если хотя бы одна проверка не прошла (при raise_on_failure)
    """
    if name not in SUITES:
        raise ValidationError(f"Неизвестный набор проверок: {name}. Доступны: {list(SUITES)}")
    checks = {}
    for check_name, check in SUITES[name].items():
        try:
            result = check()
            result["passed"] = bool(result.get("passed", result["max_error"] <= result["tolerance"]))
        except EnsembleLabError as e:
            logger.error(f"Проверка {check_name} завершилась ошибкой: {e}")
            result = {"max_error": float("inf"), "tolerance": 0.0, "passed": False, "error": str(e)}
        checks[check_name] = result
        status = "пройдена" if result["passed"] else "НЕ пройдена"
        logger.info(f"Проверка {check_name} {status}: ошибка {result['max_error']:.3e}")

    report = {"suite": name, "passed": all(c["passed"] for c in checks.values()), "checks": checks}
    if not report["passed"] and raise_on_failure:
        failed = [k for k, c in checks.items() if not c["passed"]]
        raise VerificationError(f"Не пройдены проверки: {failed}", report=report)
    return report
