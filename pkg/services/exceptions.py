"""
Исключения библиотеки дискретных β-ансамблей.
"""


class EnsembleLabError(Exception):
    """Базовая ошибка библиотеки."""
    pass


class DomainError(EnsembleLabError):
    """Аргумент вне области определения функции."""
    pass


class ValidationError(EnsembleLabError):
    """Некорректная конфигурация, разбиение, потенциал или параметры."""
    pass


class ResourceLimitError(EnsembleLabError):
    """Превышен бюджет перечисления."""

    def __init__(self, message: str, count: int, budget: int):
        super().__init__(message)
        self.count = count
        self.budget = budget


class DivergenceError(EnsembleLabError):
    """Ряд нормировки расходится."""
    pass


class SolverError(EnsembleLabError):
    """Решатель не сошёлся; хранит лучшую найденную итерацию."""

    def __init__(self, message: str, best=None, history=None):
        super().__init__(message)
        self.best = best
        self.history = history or []


class TableProcessingError(EnsembleLabError):
    """Ошибка чтения или записи таблицы (CSV/Excel)."""
    pass


class VerificationError(EnsembleLabError):
    """Набор проверок тождеств завершился с ошибками."""

    def __init__(self, message: str, report=None):
        super().__init__(message)
        self.report = report
