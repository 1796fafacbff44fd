"""
Конфигурация библиотеки и командной строки.
"""
import os


class Config:
    """Настройки, читаемые из переменных окружения."""

    # Параллелизм цепочек Монте-Карло
    THREADS = int(os.environ.get("ENSEMBLE_LAB_THREADS", str(os.cpu_count() or 1)))

    # Перечисление состояний
    ENUM_BUDGET = int(float(os.environ.get("ENSEMBLE_LAB_ENUM_BUDGET", "1e7")))

    # Доля массы, отбрасываемая при усечении M = ∞
    TRUNCATION_EPS = float(os.environ.get("ENSEMBLE_LAB_TRUNCATION_EPS", "1e-12"))

    # Решатель равновесной задачи
    DENSE_LIMIT = int(os.environ.get("ENSEMBLE_LAB_DENSE_LIMIT", "4096"))
    SOLVER_MAX_ITERS = int(os.environ.get("ENSEMBLE_LAB_SOLVER_MAX_ITERS", "20000"))
    SOLVER_TOL = float(os.environ.get("ENSEMBLE_LAB_SOLVER_TOL", "1e-10"))
    SOLVER_WINDOW = 50

    # Выходные файлы
    OUTPUT_DIR = os.environ.get("ENSEMBLE_LAB_OUTPUT_DIR", "results")
    LOG_LEVEL = os.environ.get("LOG_LEVEL", "INFO")

    VERSION = "0.4.0"

    @staticmethod
    def get_threads() -> int:
        """Возвращает число рабочих потоков (не меньше 1)."""
        return max(1, Config.THREADS)

    @staticmethod
    def get_enum_budget() -> int:
        """Возвращает максимальное число состояний для перечисления."""
        return Config.ENUM_BUDGET
