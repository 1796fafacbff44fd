"""
Сервис табличного ввода-вывода: таблицы потенциалов из CSV/Excel и запись
результатов в CSV и Excel.
"""

import io
import logging
import os
from typing import Dict, List, Optional, Union

import pandas as pd
from openpyxl import load_workbook

from .exceptions import TableProcessingError

logger = logging.getLogger(__name__)

CSV_FLOAT_FORMAT = "%.17g"
POTENTIAL_COLUMNS = ("x", "v", "dv")


def _to_float(value) -> float:
    """Число из ячейки; допускает десятичную запятую и экспоненциальную запись."""
    if isinstance(value, (int, float)):
        return float(value)
    text = str(value).strip().replace(",", ".")
    return float(text)


def _read_xlsx_with_precision(source: Union[io.BytesIO, str]) -> Optional[List[List]]:
    """
    Читает строки активного листа через openpyxl (точные значения ячеек).

    Returns:
        Список строк или None, если openpyxl не смог прочитать файл
    """
    try:
        if isinstance(source, io.BytesIO):
            source.seek(0)
        wb = load_workbook(source, data_only=True, read_only=True)
        ws = wb.active
        rows = [list(row) for row in ws.iter_rows(values_only=True)
                if any(cell is not None for cell in row)]
        wb.close()
        return rows
    except Exception as e:
        logger.warning(f"Не удалось прочитать через openpyxl, используем pandas: {e}")
        return None


def _frame_from_rows(rows: List[List]) -> pd.DataFrame:
    header = [str(cell).strip().lower() if cell is not None else "" for cell in rows[0]]
    return pd.DataFrame(rows[1:], columns=header)


def read_potential_table(path: Union[io.BytesIO, str]) -> Dict[str, List[float]]:
    """
    Читает таблицу потенциала с колонками x, v и необязательной dv.

    Args:
        path: Путь к .csv/.xlsx или BytesIO с книгой Excel

    Returns:
        Словарь {"x": [...], "v": [...], "dv": [...] или None}

    Raises:
        TableProcessingError: если файл не читается или колонки отсутствуют
    """
    try:
        is_csv = isinstance(path, str) and path.lower().endswith(".csv")
        if is_csv:
            frame = pd.read_csv(path, sep=None, engine="python", dtype=str, keep_default_na=False)
            frame.columns = [str(c).strip().lower() for c in frame.columns]
        else:
            rows = _read_xlsx_with_precision(path)
            if rows is None:
                frame = pd.read_excel(path, sheet_name=0, dtype=str, keep_default_na=False)
                frame.columns = [str(c).strip().lower() for c in frame.columns]
            elif not rows:
                raise TableProcessingError("Таблица потенциала пуста")
            else:
                frame = _frame_from_rows(rows)

        if frame.empty:
            raise TableProcessingError("Таблица потенциала пуста")
        missing = [c for c in POTENTIAL_COLUMNS[:2] if c not in frame.columns]
        if missing:
            raise TableProcessingError(
                f"В таблице нет колонок {missing}. Найдены колонки: {list(frame.columns)}")

        frame = frame[[c for c in POTENTIAL_COLUMNS if c in frame.columns]]
        frame = frame[(frame["x"].astype(str).str.strip() != "") & (frame["v"].astype(str).str.strip() != "")]
        table = {
            "x": [_to_float(item) for item in frame["x"]],
            "v": [_to_float(item) for item in frame["v"]],
            "dv": [_to_float(item) for item in frame["dv"]] if "dv" in frame.columns else None,
        }
        logger.info(f"Прочитано {len(table['x'])} узлов потенциала")
        return table

    except TableProcessingError:
        raise
    except ValueError as e:
        logger.error(f"Нечисловое значение в таблице потенциала: {e}")
        raise TableProcessingError(f"Нечисловое значение в таблице: {e}") from e
    except pd.errors.EmptyDataError as e:
        logger.error(f"Файл таблицы пуст: {e}")
        raise TableProcessingError("Файл таблицы пуст или повреждён") from e
    except Exception as e:
        logger.error(f"Неожиданная ошибка при чтении таблицы: {e}", exc_info=True)
        raise TableProcessingError(f"Ошибка при чтении таблицы: {e}") from e


def write_csv(frame: pd.DataFrame, path: str) -> str:
    """
    Записывает таблицу в CSV (UTF-8, запятая, заголовок, 17 значащих цифр).

    Raises:
        TableProcessingError: при ошибке записи
    """
    try:
        directory = os.path.dirname(path)
        if directory:
            os.makedirs(directory, exist_ok=True)
        frame.to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT, encoding="utf-8")
        logger.info(f"Записан CSV {path}: {len(frame)} строк")
        return path
    except OSError as e:
        logger.error(f"Не удалось записать {path}: {e}")
        raise TableProcessingError(f"Не удалось записать {path}: {e}") from e


def write_xlsx(sheets: Dict[str, pd.DataFrame], path: str) -> str:
    """
    Записывает несколько таблиц в книгу Excel (по листу на таблицу).

    Raises:
        TableProcessingError: при ошибке записи
    """
    try:
        directory = os.path.dirname(path)
        if directory:
            os.makedirs(directory, exist_ok=True)
        with pd.ExcelWriter(path, engine="openpyxl") as writer:
            for name, frame in sheets.items():
                frame.to_excel(writer, sheet_name=name[:31], index=False)
        logger.info(f"Записана книга Excel {path}: листы {list(sheets)}")
        return path
    except Exception as e:
        logger.error(f"Ошибка при записи Excel {path}: {e}", exc_info=True)
        raise TableProcessingError(f"Не удалось записать Excel {path}: {e}") from e
