#!/usr/bin/env python3
"""
Утилиты для ввода-вывода данных: чтение CSV, контрольные суммы,
описательная таблица и запись файлов результатов
"""

import hashlib
import json
import logging
from pathlib import Path
from typing import Any, Dict, Iterable, Sequence

import numpy as np
import pandas as pd

from .errors import DataError
from .gibbs import PosteriorDraws

logger = logging.getLogger(__name__)

MANIFEST_SCHEMA_VERSION = 1
DIAGNOSTICS_SCHEMA_VERSION = 1


def file_checksum(path: Path) -> str:
    """sha256 содержимого файла"""
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def load_csv(path: Path, categorical: Sequence[str] = ()) -> pd.DataFrame:
    """
    Читает CSV: строка заголовка обязательна, разделитель запятая,
    десятичная точка, UTF-8. Категориальные колонки читаются как строки.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"Файл данных {path} не найден", path=str(path))
    try:
        frame = pd.read_csv(path, sep=",", decimal=".", encoding="utf-8",
                            dtype={name: str for name in categorical})
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise DataError(f"Не удалось прочитать {path}: {e}", path=str(path)) from e
    if frame.empty:
        raise DataError(f"Файл {path} не содержит строк", path=str(path))
    logger.info(f"Прочитано {len(frame)} строк и {len(frame.columns)} колонок из {path}")
    return frame


def describe_frame(frame: pd.DataFrame, categorical: Sequence[str] = ()) -> pd.DataFrame:
    """min, max, mean, sd и n по числовым колонкам; частоты уровней категориальных"""
    rows = []
    for column in frame.columns:
        values = frame[column].dropna()
        if column in categorical or not pd.api.types.is_numeric_dtype(values):
            for level, count in values.astype(str).value_counts().sort_index().items():
                rows.append({"column": column, "level": level, "n": int(count)})
            continue
        rows.append({
            "column": column,
            "level": "",
            "n": int(values.size),
            "min": float(values.min()),
            "max": float(values.max()),
            "mean": float(values.mean()),
            "sd": float(values.std(ddof=1)) if values.size > 1 else float("nan"),
        })
    return pd.DataFrame(rows, columns=["column", "level", "n", "min", "max", "mean", "sd"])


def write_csv(frame: pd.DataFrame, path: Path) -> Path:
    frame.to_csv(path, index=False, float_format="%.10g", lineterminator="\n")
    logger.info(f"Записан {path} ({len(frame)} строк)")
    return path


def _json_default(value: Any) -> Any:
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, Path):
        return str(value)
    raise TypeError(f"Тип {type(value).__name__} не сериализуется в JSON")


def write_json(payload: Dict[str, Any], path: Path) -> Path:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f, ensure_ascii=False, indent=2, default=_json_default)
    return path


def read_json(path: Path) -> Dict[str, Any]:
    with open(path, encoding="utf-8") as f:
        return json.load(f)


def draws_frame(draws: Iterable[PosteriorDraws]) -> pd.DataFrame:
    """Одна строка на сохранённый проход: tau, chain, sweep и все скалярные величины"""
    frames = []
    for item in draws:
        columns = {"tau": item.tau, "chain": item.chain, "sweep": item.sweeps}
        columns.update(item.scalar_columns())
        frames.append(pd.DataFrame(columns))
    return pd.concat(frames, ignore_index=True)


def describe_draw_columns(columns: Sequence[str]) -> Dict[str, str]:
    """Описания колонок draws.csv для манифеста"""
    prefixes = {
        "gamma": "индикатор включения блока",
        "zeta2": "квадрат параметра важности блока",
        "psi2": "гипердисперсия slab блока",
        "omega": "вероятность включения блока",
        "mandatory": "обязательный коэффициент",
    }
    described = {
        "tau": "уровень квантиля",
        "chain": "номер цепи",
        "sweep": "номер прохода",
        "delta2": "масштаб delta^2 асимметричного Лапласа",
    }
    for column in columns:
        if column in described:
            continue
        prefix = column.split("[", 1)[0]
        described[column] = prefixes.get(prefix, "")
    return {column: described[column] for column in columns}


class RunManifest:
    """manifest.json: пишется до сэмплирования и дополняется по ходу запуска"""

    def __init__(self, path: Path, base: Dict[str, Any]):
        self.path = Path(path)
        self.payload = {"schema_version": MANIFEST_SCHEMA_VERSION, "status": "started",
                        "stages": {}, "warnings": [], **base}
        self.flush()

    def stage(self, name: str, seconds: float) -> None:
        self.payload["stages"][name] = round(seconds, 4)
        logger.info(f"Этап '{name}': {seconds:.2f} с")
        self.flush()

    def update(self, **values: Any) -> None:
        self.payload.update(values)
        self.flush()

    def finalize(self, status: str = "completed") -> None:
        self.payload["status"] = status
        self.flush()

    def flush(self) -> None:
        write_json(self.payload, self.path)


def ensure_output_dir(path: Path) -> Path:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    return path


def software_versions() -> Dict[str, str]:
    import scipy
    import pydantic
    import yaml

    return {
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "pandas": pd.__version__,
        "pydantic": pydantic.VERSION,
        "pyyaml": yaml.__version__,
    }

