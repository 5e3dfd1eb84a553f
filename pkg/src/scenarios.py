#!/usr/bin/env python3
"""
Каталог синтетических сценариев для команды simulate и приёмочных проверок
"""

import logging
from pathlib import Path
from typing import Any, Callable, Dict, Tuple

import numpy as np
import pandas as pd
from scipy import stats

from .data_processing import ensure_output_dir, write_csv, write_json
from .distributions import RandomStream, make_stream
from .errors import DomainError

logger = logging.getLogger(__name__)


def _sparse_linear(n: int, rng: RandomStream) -> Tuple[pd.DataFrame, Dict[str, Any]]:
    x = rng.uniform(size=(n, 4))
    noise_sd = 0.5
    y = 1.0 + 2.0 * x[:, 0] - 1.5 * x[:, 1] + noise_sd * rng.standard_normal(n)
    truth = {
        "formula": "y = 1 + 2 x1 - 1.5 x2 + 0.5 eps, eps ~ N(0, 1)",
        "noise": {"family": "normal", "sd": noise_sd},
        "effects": {
            "x1": {"linear": True, "nonlinear": False, "form": "2 x"},
            "x2": {"linear": True, "nonlinear": False, "form": "-1.5 x"},
            "x3": {"linear": False, "nonlinear": False, "form": "0"},
            "x4": {"linear": False, "nonlinear": False, "form": "0"},
        },
    }
    return _frame(y, x), truth


def _sparse_nonlinear(n: int, rng: RandomStream) -> Tuple[pd.DataFrame, Dict[str, Any]]:
    x = rng.uniform(size=(n, 4))
    noise_sd = 0.3
    y = 1.0 + 1.5 * x[:, 0] + np.sin(2.0 * np.pi * x[:, 1]) + noise_sd * rng.standard_normal(n)
    truth = {
        "formula": "y = 1 + 1.5 x1 + sin(2 pi x2) + 0.3 eps, eps ~ N(0, 1)",
        "noise": {"family": "normal", "sd": noise_sd},
        "effects": {
            "x1": {"linear": True, "nonlinear": False, "form": "1.5 x"},
            "x2": {"linear": None, "nonlinear": True, "form": "sin(2 pi x)"},
            "x3": {"linear": False, "nonlinear": False, "form": "0"},
            "x4": {"linear": False, "nonlinear": False, "form": "0"},
        },
    }
    return _frame(y, x), truth


def _heteroskedastic_linear(n: int, rng: RandomStream) -> Tuple[pd.DataFrame, Dict[str, Any]]:
    x = rng.uniform(size=(n, 1))
    y = 1.0 + 2.0 * x[:, 0] + (1.0 + x[:, 0]) * rng.standard_normal(n)
    truth = {
        "formula": "y = 1 + 2 x1 + (1 + x1) eps, eps ~ N(0, 1)",
        "noise": {"family": "normal", "sd": "1 + x1"},
        "effects": {"x1": {"linear": True, "nonlinear": False, "form": "2 x + (1 + x) z_tau"}},
        "quantile": "1 + 2 x1 + (1 + x1) Phi^-1(tau)",
    }
    return _frame(y, x), truth


def _frame(y: np.ndarray, x: np.ndarray) -> pd.DataFrame:
    columns = {"y": y}
    for j in range(x.shape[1]):
        columns[f"x{j + 1}"] = x[:, j]
    return pd.DataFrame(columns)


SCENARIOS: Dict[str, Callable[[int, RandomStream], Tuple[pd.DataFrame, Dict[str, Any]]]] = {
    "sparse-linear": _sparse_linear,
    "sparse-nonlinear": _sparse_nonlinear,
    "heteroskedastic-linear": _heteroskedastic_linear,
}


def simulate(scenario: str, seed: int, n: int) -> Tuple[pd.DataFrame, Dict[str, Any]]:
    """Синтетические данные и описание истинной модели"""
    if scenario not in SCENARIOS:
        raise DomainError(f"Неизвестный сценарий '{scenario}', доступны: {sorted(SCENARIOS)}", scenario=scenario)
    if n < 10:
        raise DomainError(f"Слишком мало наблюдений: n={n}")
    frame, truth = SCENARIOS[scenario](n, make_stream(seed))
    truth.update({"scenario": scenario, "seed": int(seed), "n": int(n), "response": "y"})
    logger.info(f"Сценарий '{scenario}': n={n}, seed={seed}")
    return frame, truth


def true_quantile(scenario: str, frame: pd.DataFrame, tau: float) -> np.ndarray:
    """Истинный условный tau-квантиль отклика в строках frame"""
    z = stats.norm.ppf(tau)
    if scenario == "heteroskedastic-linear":
        x1 = frame["x1"].to_numpy()
        return 1.0 + 2.0 * x1 + (1.0 + x1) * z
    if scenario == "sparse-linear":
        return 1.0 + 2.0 * frame["x1"].to_numpy() - 1.5 * frame["x2"].to_numpy() + 0.5 * z
    if scenario == "sparse-nonlinear":
        return (1.0 + 1.5 * frame["x1"].to_numpy()
                + np.sin(2.0 * np.pi * frame["x2"].to_numpy()) + 0.3 * z)
    raise DomainError(f"Неизвестный сценарий '{scenario}'", scenario=scenario)


def write_scenario(scenario: str, seed: int, n: int, output_dir: Path) -> Tuple[Path, Path]:
    """Пишет <scenario>.csv и <scenario>_truth.json"""
    output_dir = ensure_output_dir(output_dir)
    frame, truth = simulate(scenario, seed, n)
    data_path = write_csv(frame, output_dir / f"{scenario}.csv")
    truth_path = write_json(truth, output_dir / f"{scenario}_truth.json")
    return data_path, truth_path
