#!/usr/bin/env python3
"""
Сводки по сохранённым розыгрышам: вероятности включения, кривые эффектов
с поточечными интервалами, подогнанные квантили и диагностика цепей.
"""

import logging
from collections import defaultdict
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import arviz as az
import numpy as np
import pandas as pd

from .distributions import check_loss
from .errors import DomainError
from .gibbs import PosteriorDraws
from .model_spec import EffectBlock, back_transform

logger = logging.getLogger(__name__)

SELECTION_THRESHOLD = 0.5
DEFAULT_GRID_SIZE = 200
DEFAULT_LEVEL = 0.95


@dataclass
class EffectCurve:
    covariate: str
    part: str
    tau: float
    x: np.ndarray
    mean: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "covariate": self.covariate,
            "part": self.part,
            "tau": self.tau,
            "x": self.x,
            "mean": self.mean,
            "lo95": self.lower,
            "hi95": self.upper,
        })


def _group_by_tau(draws: Iterable[PosteriorDraws]) -> Dict[float, List[PosteriorDraws]]:
    groups = defaultdict(list)
    for item in draws:
        groups[item.tau].append(item)
    if not groups:
        raise DomainError("Нет сохранённых розыгрышей")
    for tau, chains in groups.items():
        if any(c.num_draws == 0 for c in chains):
            raise DomainError(f"Пустая цепь для tau={tau}")
    return dict(sorted(groups.items()))


def _interval(values: np.ndarray, level: float) -> Tuple[np.ndarray, np.ndarray]:
    """Поточечные эмпирические перцентили (тип 7) по оси розыгрышей"""
    tail = (1.0 - level) / 2.0
    lower, upper = np.quantile(values, [tail, 1.0 - tail], axis=0, method="linear")
    return lower, upper


def inclusion_probabilities(draws: Iterable[PosteriorDraws]) -> pd.DataFrame:
    """
    Апостериорное среднее gamma для каждого выбираемого блока и tau
    (цепи объединяются). selected: inclusion_prob >= 0.5.
    """
    rows = []
    for tau, chains in _group_by_tau(draws).items():
        gamma = np.vstack([c.gamma for c in chains])
        first = chains[0]
        for j, block_id in enumerate(first.selectable_ids):
            prob = float(gamma[:, j].mean())
            rows.append({
                "covariate": first.covariates[block_id],
                "part": first.parts[block_id],
                "tau": tau,
                "inclusion_prob": prob,
                "selected": prob >= SELECTION_THRESHOLD,
            })
    return pd.DataFrame(rows, columns=["covariate", "part", "tau", "inclusion_prob", "selected"])


def inclusion_table_wide(table: pd.DataFrame) -> pd.DataFrame:
    """Раскладка «ковариата, часть, по столбцу на tau»"""
    wide = table.pivot_table(index=["covariate", "part"], columns="tau", values="inclusion_prob", sort=False)
    wide.columns = [f"tau={tau:g}" for tau in wide.columns]
    return wide.reset_index()


def effect_curves(draws: Iterable[PosteriorDraws], blocks: Sequence[EffectBlock],
                  standardization: Dict[str, Tuple[float, float]], grid_size: int = DEFAULT_GRID_SIZE,
                  level: float = DEFAULT_LEVEL, grid: Optional[Sequence[float]] = None,
                  mask_excluded: bool = True) -> List[EffectCurve]:
    """
    Кривые f_unpen, f_pen и f = f_unpen + f_pen на сетке для каждой ковариаты.

    grid задаётся в исходных единицах и должна лежать в обучающем диапазоне;
    по умолчанию grid_size равноотстоящих точек. При mask_excluded розыгрыш
    блока умножается на gamma, т.е. исключённый блок даёт нулевой вклад.
    """
    if not 0.0 < level < 1.0:
        raise DomainError(f"Уровень интервала {level} вне (0, 1)")
    by_covariate = defaultdict(list)
    for block in blocks:
        by_covariate[block.covariate].append(block)

    curves = []
    for tau, chains in _group_by_tau(draws).items():
        selectable_ids = chains[0].selectable_ids
        for covariate, cov_blocks in by_covariate.items():
            lo, hi = standardization[covariate]
            if grid is None:
                z = np.linspace(0.0, 1.0, grid_size)
            else:
                x = np.asarray(grid, dtype=float)
                if x.min() < lo or x.max() > hi:
                    raise DomainError(f"Сетка для '{covariate}' выходит за [{lo}, {hi}]", covariate=covariate)
                if np.any(np.diff(x) <= 0):
                    raise DomainError("Сетка должна строго возрастать")
                z = (x - lo) / (hi - lo)
            x_grid = back_transform(z, (lo, hi))

            total = None
            for block in cov_blocks:
                beta = np.vstack([c.coefficients[block.id] for c in chains])
                values = beta @ block.design_at(z).T
                if mask_excluded and block.id in selectable_ids:
                    j = selectable_ids.index(block.id)
                    gamma = np.concatenate([c.gamma[:, j] for c in chains])
                    values = values * gamma[:, None]
                total = values if total is None else total + values
                curves.append(_summarize_curve(covariate, block.part, tau, x_grid, values, level))
            if len(cov_blocks) > 1:
                curves.append(_summarize_curve(covariate, "total", tau, x_grid, total, level))
    return curves


def _summarize_curve(covariate: str, part: str, tau: float, x: np.ndarray,
                     values: np.ndarray, level: float) -> EffectCurve:
    lower, upper = _interval(values, level)
    mean = values.mean(axis=0)
    # у редко включаемого блока среднее может лежать вне перцентилей: границы расширяются до среднего
    return EffectCurve(covariate=covariate, part=part, tau=tau, x=x, mean=mean,
                       lower=np.minimum(lower, mean), upper=np.maximum(upper, mean))


def curves_frame(curves: Iterable[EffectCurve]) -> pd.DataFrame:
    frames = [curve.to_frame() for curve in curves]
    if not frames:
        return pd.DataFrame(columns=["covariate", "part", "tau", "x", "mean", "lo95", "hi95"])
    return pd.concat(frames, ignore_index=True)


def fitted_quantiles(draws: Iterable[PosteriorDraws], y: Optional[Sequence[float]] = None,
                     level: float = DEFAULT_LEVEL) -> pd.DataFrame:
    """Апостериорное среднее и интервал eta_tau в каждой обучающей строке"""
    frames = []
    for tau, chains in _group_by_tau(draws).items():
        eta = np.vstack([c.eta for c in chains])
        lower, upper = _interval(eta, level)
        frame = pd.DataFrame({
            "row": np.arange(eta.shape[1]),
            "tau": tau,
            "eta_mean": eta.mean(axis=0),
            "eta_lo95": lower,
            "eta_hi95": upper,
        })
        if y is not None:
            frame.insert(1, "y", np.asarray(y, dtype=float))
        frames.append(frame)
    return pd.concat(frames, ignore_index=True)


def fitted_quantiles_wide(fitted: pd.DataFrame) -> pd.DataFrame:
    """По паре столбцов (среднее, интервал) на каждый tau"""
    index = ["row", "y"] if "y" in fitted.columns else ["row"]
    wide = fitted.pivot(index=index, columns="tau", values=["eta_mean", "eta_lo95", "eta_hi95"])
    wide.columns = [f"{name}[{tau:g}]" for name, tau in wide.columns]
    return wide.reset_index()


def quantile_crossings(fitted: pd.DataFrame) -> Dict[str, int]:
    """
    Число строк, где подогнанный квантиль для большего tau меньше, чем для
    соседнего меньшего tau. Нарушения пишутся в лог, но не являются ошибкой.
    """
    means = fitted.pivot(index="row", columns="tau", values="eta_mean")
    taus = list(means.columns)
    report = {}
    for low, high in zip(taus, taus[1:]):
        count = int((means[high] < means[low]).sum())
        report[f"{low:g}<{high:g}"] = count
        if count:
            logger.warning(f"Пересечение квантилей tau={low:g} и tau={high:g} в {count} строках")
    return report


def below_fraction(y: Sequence[float], eta: Sequence[float]) -> float:
    """Доля наблюдений не выше подогнанного квантиля"""
    y = np.asarray(y, dtype=float)
    eta = np.asarray(eta, dtype=float)
    return float(np.mean(y <= eta))


def pinball_score(y: Sequence[float], fitted: Sequence[float], tau: float) -> float:
    """Средняя функция потерь rho_tau по строкам"""
    y = np.asarray(y, dtype=float)
    fitted = np.asarray(fitted, dtype=float)
    if y.shape != fitted.shape:
        raise DomainError(f"Длины не совпадают: {y.shape} и {fitted.shape}")
    return float(np.mean(check_loss(tau, y - fitted)))


def effective_sample_size(chains: np.ndarray) -> float:
    """ESS среднего (arviz, method="mean"); chains: (число цепей, число розыгрышей)"""
    chains = np.atleast_2d(np.asarray(chains, dtype=float))
    if chains.shape[1] < 4:
        raise DomainError("Для ESS нужно хотя бы 4 розыгрыша на цепь")
    return float(az.ess(chains, method="mean"))


def split_rhat(chains: np.ndarray) -> float:
    """Split-R^ (arviz, method="split"); NaN для постоянных цепей"""
    chains = np.atleast_2d(np.asarray(chains, dtype=float))
    if np.ptp(chains) == 0:
        return float("nan")
    return float(az.rhat(chains, method="split"))


def batch_means_se(x: Sequence[float]) -> float:
    """Стандартная ошибка среднего методом батч-средних, размер батча ~ sqrt(n)"""
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    size = int(np.floor(np.sqrt(n)))
    count = n // size
    if count < 2:
        raise DomainError("Слишком короткий ряд для батч-средних")
    batches = x[:count * size].reshape(count, size).mean(axis=1)
    variance = size * np.sum((batches - x[:count * size].mean()) ** 2) / (count - 1)
    return float(np.sqrt(variance / (count * size)))


def diagnostics(draws: Iterable[PosteriorDraws]) -> Dict[str, Dict]:
    """
    ESS и split-R^ по каждой скалярной величине для каждого tau.
    При одной цепи R^ не вычисляется, в отчёт добавляется пометка.
    """
    report = {}
    for tau, chains in _group_by_tau(draws).items():
        notices = []
        if len(chains) < 2:
            notices.append("одна цепь: R-hat не вычисляется")
            logger.warning(f"tau={tau}: одна цепь, R-hat пропущен")
        length = min(c.num_draws for c in chains)
        columns = [c.scalar_columns() for c in chains]
        per_scalar = {}
        for name in columns[0]:
            stacked = np.vstack([col[name][:length] for col in columns])
            entry = {"mean": float(stacked.mean()), "ess": None, "rhat": None}
            if length >= 4:
                entry["ess"] = effective_sample_size(stacked)
                if len(chains) > 1:
                    rhat = split_rhat(stacked)
                    entry["rhat"] = None if np.isnan(rhat) else rhat
            per_scalar[name] = entry
        report[f"{tau:g}"] = {
            "num_chains": len(chains),
            "draws_per_chain": length,
            "max_constraint_violation": max(c.max_constraint_violation for c in chains),
            "scalars": per_scalar,
            "notices": notices,
        }
    return report
