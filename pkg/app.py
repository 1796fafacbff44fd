"""
Командная строка лаборатории дискретных β-ансамблей.

Подкоманды: equilibrium, rate, sample, enumerate, verify, identities.
Каждый запуск пишет CSV-таблицы и manifest.json с параметрами и
контрольными суммами файлов.
"""
import argparse
import hashlib
import json
import logging
import math
import os
import sys
from datetime import datetime
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from config import Config
from models import ChainConfig, RunManifest
from services.equilibrium_service import (
    closed_form_density,
    density_cdf,
    jack_edges,
    krawtchouk_edges,
    solve,
    solve_unbounded,
    tabulate_density,
)
from services.exceptions import (
    DivergenceError,
    DomainError,
    ResourceLimitError,
    SolverError,
    TableProcessingError,
    ValidationError,
    VerificationError,
)
from services.measures_service import (
    EnsembleSpec,
    batch_log_weights,
    exact_log_partition,
    exact_pmf,
    jack_potential,
    jack_spec,
    krawtchouk_log_partition,
    krawtchouk_potential,
    krawtchouk_spec,
    tabulated_potential,
)
from services.rates_service import (
    fit_edge_asymptotic,
    jack_edge_prefactor,
    jack_j,
    j_function,
    krawtchouk_edge_prefactor,
    krawtchouk_j,
    rate_profile,
)
from services.sampler_service import (
    empirical_positions,
    ks_distance,
    run_chains,
    tail_from_samples,
    trajectory_digest,
)
from services.statespace_service import quantile_configuration
from services.table_service import read_potential_table, write_csv, write_xlsx
from services.verify_service import SUITES, cell_rows, identity_rows, run_suite

# Настройка логирования
logging.basicConfig(
    level=getattr(logging, Config.LOG_LEVEL.upper(), logging.INFO),
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
)
logger = logging.getLogger(__name__)

FAMILIES = ("krawtchouk", "jack", "tabulated")

SCHEMAS = {
    "density": "density/v1",
    "rate": "rate/v1",
    "samples": "samples/v1",
    "histogram": "histogram/v1",
    "states": "states/v1",
    "identities": "identities/v1",
    "cells": "cells/v1",
}

EXIT_OK = 0
EXIT_NUMERICAL = 1
EXIT_USAGE = 2


class UsageError(Exception):
    """Некорректное сочетание аргументов командной строки."""
    pass


# Разбор аргументов

def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="JSON-файл с параметрами (флаги имеют приоритет)")
    p.add_argument("--output-dir", dest="output_dir", default=Config.OUTPUT_DIR,
                   help="Каталог для CSV и manifest.json")
    p.add_argument("--xlsx", action="store_true", help="Дополнительно записать книгу Excel")
    p.add_argument("--json", action="store_true", help="Напечатать сводку JSON в stdout")
    p.add_argument("--verbose", action="store_true", help="Подробный журнал (DEBUG)")


def _add_family(p: argparse.ArgumentParser):
    p.add_argument("--family", choices=FAMILIES, help="Семейство потенциала")
    p.add_argument("--theta", type=float, default=1.0, help="Параметр θ > 0")
    p.add_argument("--t", type=float, help="Параметр t ансамбля Джека–Планшереля")
    p.add_argument("--potential-file", dest="potential_file",
                   help="Таблица потенциала .csv/.xlsx с колонками x, v[, dv]")
    p.add_argument("--window", type=float, help="Правый конец области табличного потенциала")


def build_parser() -> Tuple[argparse.ArgumentParser, Dict[str, argparse.ArgumentParser]]:
    parser = argparse.ArgumentParser(prog="ensemble-lab",
                                     description="Дискретные β-ансамбли: равновесие, скорости, выборки")
    parser.add_argument("--version", action="version", version=f"%(prog)s {Config.VERSION}")
    sub = parser.add_subparsers(dest="command", required=True)
    commands = {}

    p = sub.add_parser("equilibrium", help="Равновесная мера")
    _add_common(p)
    _add_family(p)
    p.add_argument("--m", type=float, help="Параметр 𝙼 ансамбля Кравчука")
    p.add_argument("--s", type=float, help="Ограничение носителя [0, s] (по умолчанию s = ∞)")
    p.add_argument("--n-grid", dest="n_grid", type=int, default=1024)
    p.add_argument("--no-growth-check", dest="no_growth_check", action="store_true")
    commands["equilibrium"] = p

    p = sub.add_parser("rate", help="Функции скорости J и F")
    _add_common(p)
    _add_family(p)
    p.add_argument("--m", type=float, help="Параметр 𝙼 ансамбля Кравчука")
    p.add_argument("--n-grid", dest="n_grid", type=int, default=1024)
    p.add_argument("--points", type=int, default=101, help="Число точек сетки t")
    p.add_argument("--t-min", dest="t_min", type=float)
    p.add_argument("--t-max", dest="t_max", type=float)
    p.add_argument("--lower-tail", dest="lower_tail", action="store_true",
                   help="Вычислить кривую нижнего хвоста F (по решению на каждую точку)")
    p.add_argument("--asymptotic", action="store_true", help="Подгонка J(b+α) ≈ Cα^{3/2}")
    commands["rate"] = p

    p = sub.add_parser("sample", help="Выборки Метрополиса–Гастингса")
    _add_common(p)
    _add_family(p)
    p.add_argument("--m", type=float, help="Параметр 𝙼 ансамбля Кравчука (M = ⌊𝙼N⌋)")
    p.add_argument("--n", type=int, help="Число частиц N")
    p.add_argument("--cap", type=int, help="Целое M (для Джека - усечение)")
    p.add_argument("--steps", type=int, default=100000)
    p.add_argument("--burnin", type=int, default=10000)
    p.add_argument("--thin", type=int, default=100)
    p.add_argument("--chains", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--start", choices=("zero", "quantile"), default="quantile",
                   help="Начальное состояние цепочки")
    p.add_argument("--bins", type=int, default=50)
    p.add_argument("--tail", type=float, help="Порог t для оценки хвоста ℓ₁/N")
    p.add_argument("--side", choices=("upper", "lower"), default="upper")
    commands["sample"] = p

    p = sub.add_parser("enumerate", help="Точное перечисление состояний")
    _add_common(p)
    _add_family(p)
    p.add_argument("--n", type=int, help="Число частиц N")
    p.add_argument("--m", type=int, help="Целое M (λ_1 ≤ M)")
    p.add_argument("--pmf", action="store_true", help="Добавить вероятности состояний")
    commands["enumerate"] = p

    p = sub.add_parser("verify", help="Набор проверок тождеств")
    _add_common(p)
    p.add_argument("--suite", choices=tuple(SUITES), default="identities")
    commands["verify"] = p

    p = sub.add_parser("identities", help="Замкнутые формы интегралов против квадратуры")
    _add_common(p)
    p.add_argument("--draws", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    commands["identities"] = p

    return parser, commands


def load_config_file(path: str) -> Dict:
    """
    Читает JSON-файл параметров; ключи пишутся как имена флагов
    (дефисы допускаются).

    Raises:
        UsageError: если файл не читается или не содержит объект JSON
    """
    try:
        with open(path, encoding="utf-8") as f:
            data = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise UsageError(f"Не удалось прочитать файл конфигурации {path}: {e}") from e
    if not isinstance(data, dict):
        raise UsageError(f"Файл конфигурации {path} должен содержать объект JSON")
    return {str(k).replace("-", "_"): v for k, v in data.items()}


def parse_arguments(argv: Optional[Sequence[str]] = None) -> argparse.Namespace:
    """Разбор с приоритетом флаги > --config > значения по умолчанию."""
    parser, commands = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        overrides = load_config_file(args.config)
        sub = commands[args.command]
        known = {a.dest for a in sub._actions}
        unknown = sorted(set(overrides) - known)
        if unknown:
            sub.error(f"неизвестные ключи в {args.config}: {unknown}")
        sub.set_defaults(**overrides)
        args = parser.parse_args(argv)
    return args


# Общие помощники

def _require(args: argparse.Namespace, *names: str):
    missing = [f"--{n.replace('_', '-')}" for n in names if getattr(args, n, None) is None]
    if missing:
        raise UsageError(f"Для команды {args.command} требуются аргументы: {', '.join(missing)}")


def _potential(args: argparse.Namespace):
    """Потенциал по флагам семейства."""
    _require(args, "family")
    if args.family == "krawtchouk":
        _require(args, "m")
        return krawtchouk_potential(float(args.m), args.theta)
    if args.family == "jack":
        _require(args, "t")
        return jack_potential(args.t, args.theta)
    _require(args, "potential_file")
    table = read_potential_table(args.potential_file)
    return tabulated_potential(table["x"], table["v"], args.theta, derivatives=table["dv"],
                               window=args.window)


def _family_params(args: argparse.Namespace) -> Dict:
    if args.family == "krawtchouk":
        return {"m_rate": float(args.m)}
    if args.family == "jack":
        return {"t": args.t}
    return {}


def _closed_edges(args: argparse.Namespace) -> Optional[Tuple[float, float]]:
    if args.family == "krawtchouk":
        return krawtchouk_edges(float(args.m), args.theta)
    if args.family == "jack":
        return jack_edges(args.t, args.theta)
    return None


def _solve(args: argparse.Namespace, v):
    if getattr(args, "s", None) is not None:
        return solve(v, args.theta, args.s, args.n_grid, enforce_growth=not args.no_growth_check)
    return solve_unbounded(v, args.theta, n_grid=args.n_grid)


def _sha256(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 16), b""):
            digest.update(block)
    return digest.hexdigest()


def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_jsonable(v) for v in value.tolist()]
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else str(value)
    return value


def _write_json(data: Dict, path: str) -> str:
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(_jsonable(data), f, ensure_ascii=False, indent=2)
        f.write("\n")
    return path


def _effective_parameters(args: argparse.Namespace) -> Dict:
    skip = {"config", "verbose", "json"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def _write_outputs(args: argparse.Namespace, tables: Dict[str, pd.DataFrame], summary: Dict) -> Dict:
    """
    Пишет таблицы, сводку и манифест запуска.

    Returns:
        Словарь манифеста
    """
    manifest = RunManifest(command=args.command, parameters=_effective_parameters(args),
                           version=Config.VERSION, seed=getattr(args, "seed", None))
    out_dir = args.output_dir
    for name, frame in tables.items():
        path = write_csv(frame, os.path.join(out_dir, f"{args.command}_{name}.csv"))
        manifest.outputs.append({"path": os.path.basename(path), "schema": SCHEMAS[name],
                                 "columns": list(frame.columns), "rows": len(frame),
                                 "sha256": _sha256(path)})
    if args.xlsx and tables:
        path = write_xlsx(tables, os.path.join(out_dir, f"{args.command}.xlsx"))
        manifest.outputs.append({"path": os.path.basename(path), "schema": "workbook/v1",
                                 "sha256": _sha256(path)})
    path = _write_json(summary, os.path.join(out_dir, f"{args.command}_summary.json"))
    manifest.outputs.append({"path": os.path.basename(path), "schema": f"{args.command}-summary/v1",
                             "sha256": _sha256(path)})
    manifest.finished_at = datetime.utcnow().isoformat()
    _write_json(manifest.to_dict(), os.path.join(out_dir, "manifest.json"))
    logger.info(f"Результаты {args.command} записаны в {out_dir}")
    return manifest.to_dict()


# Подкоманды

def cmd_equilibrium(args: argparse.Namespace) -> Tuple[Dict[str, pd.DataFrame], Dict]:
    """Плотность равновесной меры и сводка (F, концы носителя, κ, невязки)."""
    v = _potential(args)
    sol = _solve(args, v)
    density = sol.density
    frame = pd.DataFrame({"x": density.midpoints, "phi_numeric": density.values})
    summary = {"family": args.family, "theta": args.theta, **_family_params(args), **sol.summary()}

    edges = _closed_edges(args)
    if edges is not None:
        exact = closed_form_density(args.family, args.theta, **_family_params(args))
        closed = np.asarray(exact(density.midpoints), dtype=float)
        frame["phi_closed_form"] = closed
        away = np.abs(density.midpoints - edges[0]) > 0.05
        away &= np.abs(density.midpoints - edges[1]) > 0.05
        summary["closed_form_left"], summary["closed_form_right"] = edges
        summary["sup_error_away_from_edges"] = (float(np.max(np.abs(closed - density.values)[away]))
                                                if np.any(away) else None)
    frame["residual"] = sol.residuals
    return {"density": frame}, summary


def _closed_j(args: argparse.Namespace):
    if args.family == "jack":
        return lambda y: jack_j(y, args.t, args.theta)
    if args.family == "krawtchouk" and float(args.m) > args.theta:
        return lambda y: krawtchouk_j(y, float(args.m), args.theta)
    return None


def cmd_rate(args: argparse.Namespace) -> Tuple[Dict[str, pd.DataFrame], Dict]:
    """Таблицы J (численно и в замкнутой форме) и кривая нижнего хвоста F."""
    v = _potential(args)
    sol = solve_unbounded(v, args.theta, n_grid=args.n_grid)
    right = sol.support_right if v.window is None else min(sol.support_right, v.window)
    t_min = 0.0 if args.t_min is None else args.t_min
    t_max = right if args.t_max is None else min(args.t_max, right)
    if not t_max > t_min:
        raise ValidationError(f"Пустой диапазон t: [{t_min}, {t_max}]")
    ts = np.linspace(t_min, t_max, args.points)

    t_lower = ts[ts >= args.theta] if args.lower_tail else None
    profile = rate_profile(sol, v, args.theta, x=ts, t_grid=t_lower, n_grid=min(args.n_grid, 512))
    frame = pd.DataFrame({"t": profile.x, "J_numeric": profile.j_values})
    closed_j = _closed_j(args)
    if closed_j is not None:
        frame["J_closed"] = np.asarray(closed_j(profile.x), dtype=float)
    if args.lower_tail:
        f_column = np.full(len(ts), np.nan)
        f_column[ts >= args.theta] = profile.f_curve
        frame["F_lower_tail"] = f_column

    summary = {"family": args.family, "theta": args.theta, **_family_params(args), "b_v": profile.b_v,
               "energy": sol.energy}
    beyond = profile.x > profile.b_v
    if np.any(beyond):
        positive = bool(np.all(profile.j_values[beyond] > 0))
        summary["j_positive_beyond_edge"] = positive
        if not positive:
            logger.warning(f"Численная J обращается в ноль правее b_V = {profile.b_v:.6g}")
    edges = _closed_edges(args)
    if edges is not None:
        summary["b_closed_form"] = edges[1]
    if args.asymptotic:
        if closed_j is not None:
            b = edges[1]
            exponent, prefactor = fit_edge_asymptotic(closed_j, b)
            expected = (jack_edge_prefactor(args.t, args.theta) if args.family == "jack"
                        else krawtchouk_edge_prefactor(float(args.m), args.theta))
        else:
            b = profile.b_v
            exponent, prefactor = fit_edge_asymptotic(lambda y: j_function(y, sol, v, args.theta), b)
            expected = None
        summary["asymptotic"] = {"b": b, "exponent": exponent, "prefactor": prefactor,
                                 "prefactor_closed_form": expected}
    return {"rate": frame}, summary


def _sample_spec(args: argparse.Namespace) -> EnsembleSpec:
    _require(args, "family", "n")
    if args.family == "krawtchouk":
        if args.cap is not None:
            return krawtchouk_spec(args.n, args.cap / args.n, args.theta)
        _require(args, "m")
        return krawtchouk_spec(args.n, float(args.m), args.theta)
    if args.family == "jack":
        _require(args, "t")
        return jack_spec(args.n, args.t, args.theta, cap=args.cap)
    _require(args, "cap")
    return EnsembleSpec(n=args.n, theta=args.theta, cap=args.cap, potential=_potential(args))


def _spec_params(spec: EnsembleSpec) -> Dict:
    if spec.potential.family == "krawtchouk":
        return {"m_rate": spec.potential.m_rate}
    if spec.potential.family == "jack":
        return {"t": spec.potential.t}
    return {}


def _quantile_start(spec: EnsembleSpec):
    """Начальное состояние по квантилям равновесной плотности."""
    family = spec.potential.family
    if family not in ("krawtchouk", "jack"):
        return None
    density = closed_form_density(family, spec.theta, **_spec_params(spec))
    s = spec.potential.window or jack_edges(spec.potential.t, spec.theta)[1] + spec.theta
    try:
        phi = tabulate_density(density, s, 1024, spec.theta)
        return quantile_configuration(phi, spec.n, spec.n, spec.cap, spec.theta)
    except ValidationError as e:
        logger.warning(f"Квантильное начальное состояние недоступно, старт из нуля: {e}")
        return None


def cmd_sample(args: argparse.Namespace) -> Tuple[Dict[str, pd.DataFrame], Dict]:
    """Цепочки Метрополиса–Гастингса, гистограмма ℓ_i/N и оценка хвоста."""
    spec = _sample_spec(args)
    cfg = ChainConfig(spec=spec, steps=args.steps, burn_in=args.burnin, thin=args.thin,
                      seed=args.seed, chains=args.chains)
    initial = _quantile_start(spec) if args.start == "quantile" else None
    chains = run_chains(cfg, initial)

    shift = (spec.n - 1) * spec.theta
    rows = []
    for k, states in enumerate(chains):
        for index, lam in enumerate(states):
            rows.append({"chain": k, "sample": index, "l1_over_n": (lam[0] + shift) / spec.n})
    samples = pd.DataFrame(rows, columns=["chain", "sample", "l1_over_n"])

    positions = empirical_positions(chains, spec)
    upper = (spec.cap + shift) / spec.n
    counts, bins = np.histogram(positions, bins=args.bins, range=(0.0, upper))
    widths = np.diff(bins)
    histogram = pd.DataFrame({"bin_left": bins[:-1], "bin_right": bins[1:], "count": counts,
                              "density": counts / (max(len(positions), 1) * widths)})

    summary = {"spec": spec.to_dict(), "steps": args.steps, "burn_in": args.burnin, "thin": args.thin,
               "chains": args.chains, "seed": args.seed, "start": "zero" if initial is None else "quantile",
               "saved_states": int(sum(len(c) for c in chains)),
               "digests": [trajectory_digest(c) for c in chains]}
    family = spec.potential.family
    if family in ("krawtchouk", "jack"):
        density = closed_form_density(family, spec.theta, **_spec_params(spec))
        edges = (krawtchouk_edges(spec.potential.m_rate, spec.theta) if family == "krawtchouk"
                 else jack_edges(spec.potential.t, spec.theta))
        summary["ks_distance"] = ks_distance(positions, lambda x: density_cdf(x, density, breakpoints=edges))
    if args.tail is not None:
        summary["tail"] = tail_from_samples(chains, spec, args.tail, args.side).to_dict()
    return {"samples": samples, "histogram": histogram}, summary


def cmd_enumerate(args: argparse.Namespace) -> Tuple[Dict[str, pd.DataFrame], Dict]:
    """Все состояния 𝕎_N^{θ,M}, их лог-веса и (по запросу) вероятности."""
    _require(args, "family", "n", "m")
    if args.family == "krawtchouk":
        spec = krawtchouk_spec(args.n, args.m / args.n, args.theta)
    elif args.family == "jack":
        _require(args, "t")
        spec = jack_spec(args.n, args.t, args.theta, cap=args.m)
    else:
        spec = EnsembleSpec(n=args.n, theta=args.theta, cap=args.m, potential=_potential(args))

    lambdas, probs = exact_pmf(spec)
    frame = pd.DataFrame(lambdas, columns=[f"lambda_{i}" for i in range(1, spec.n + 1)])
    frame["log_weight"] = batch_log_weights(spec, lambdas)
    if args.pmf:
        frame["probability"] = probs

    summary = {"spec": spec.to_dict(), "states": len(frame), "log_partition": exact_log_partition(spec)}
    if args.family == "krawtchouk":
        summary["log_partition_closed_form"] = krawtchouk_log_partition(spec.n, spec.cap, spec.theta)
    if args.pmf:
        summary["probability_sum"] = float(np.sum(probs))
    return {"states": frame}, summary


def cmd_verify(args: argparse.Namespace) -> Tuple[Dict[str, pd.DataFrame], Dict]:
    """Набор проверок тождеств; при неудаче - VerificationError с отчётом."""
    report = run_suite(args.suite)
    return {}, report


def cmd_identities(args: argparse.Namespace) -> Tuple[Dict[str, pd.DataFrame], Dict]:
    identities = pd.DataFrame(identity_rows(args.draws, args.seed))
    cells = pd.DataFrame(cell_rows(max(1, args.draws // 5), args.seed))
    summary = {"identity_max_rel_error": float(identities["rel_error"].max()),
               "cell_max_abs_error": float(cells["abs_error"].max()),
               "identity_rows": len(identities), "cell_rows": len(cells)}
    return {"identities": identities, "cells": cells}, summary


COMMANDS = {
    "equilibrium": cmd_equilibrium,
    "rate": cmd_rate,
    "sample": cmd_sample,
    "enumerate": cmd_enumerate,
    "verify": cmd_verify,
    "identities": cmd_identities,
}


def _diagnostics(args: argparse.Namespace, error: Exception) -> Dict:
    data = {"command": args.command, "error": type(error).__name__, "message": str(error),
            "parameters": _effective_parameters(args)}
    if isinstance(error, SolverError):
        data["best"] = error.best.summary() if error.best is not None else None
        data["history"] = list(error.history)[-20:]
    if isinstance(error, VerificationError):
        data["report"] = error.report
    return data


def main(argv: Optional[Sequence[str]] = None) -> int:
    """
    Точка входа командной строки.

    Returns:
        Код выхода: 0 - успех, 1 - численная ошибка, 2 - ошибка использования
    """
    try:
        args = parse_arguments(argv)
    except SystemExit as e:
        return int(e.code or 0)
    except UsageError as e:
        logger.error(str(e))
        return EXIT_USAGE

    if args.verbose:
        logging.getLogger().setLevel(logging.DEBUG)

    try:
        tables, summary = COMMANDS[args.command](args)
        manifest = _write_outputs(args, tables, summary)
        if args.json:
            print(json.dumps(_jsonable({"summary": summary, "manifest": manifest}), ensure_ascii=False))
        return EXIT_OK

    except (UsageError, ValidationError, DomainError, ResourceLimitError, TableProcessingError) as e:
        logger.error(f"Ошибка параметров: {e}")
        return EXIT_USAGE
    except (SolverError, DivergenceError, VerificationError) as e:
        logger.error(f"Численная ошибка: {e}")
        try:
            path = _write_json(_diagnostics(args, e), os.path.join(args.output_dir, f"{args.command}_error.json"))
            logger.info(f"Диагностика записана в {path}")
        except OSError as write_error:
            logger.error(f"Не удалось записать диагностику: {write_error}")
        return EXIT_NUMERICAL
    except Exception as e:
        logger.error(f"Неожиданная ошибка в команде {args.command}: {e}", exc_info=True)
        return EXIT_NUMERICAL


if __name__ == '__main__':
    sys.exit(main())
