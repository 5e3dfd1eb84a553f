#!/usr/bin/env python3
"""
B-сплайны, штраф случайного блуждания второго порядка, матрицы ограничений
и разложение эффекта на линейную и нелинейную части.
"""

import logging
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np
from scipy.interpolate import BSpline

from .errors import DomainError

logger = logging.getLogger(__name__)

EIGEN_TOLERANCE = 1e-10


@dataclass(frozen=True)
class BasisConfig:
    """
    degree: степень сплайна; num_knots: число равноотстоящих узлов на [0, 1]
    (включая концы). Размерность базиса D = num_knots + degree - 1.
    """

    degree: int = 3
    num_knots: int = 7

    def __post_init__(self):
        if self.degree < 1:
            raise DomainError(f"Степень сплайна должна быть >= 1, получено {self.degree}")
        if self.num_knots < 2:
            raise DomainError(f"Число узлов должно быть >= 2, получено {self.num_knots}")

    @property
    def dimension(self) -> int:
        return self.num_knots + self.degree - 1

    def knots(self) -> np.ndarray:
        """Узлы на [0, 1], дополненные degree узлами с каждой стороны"""
        dx = 1.0 / (self.num_knots - 1)
        inner = np.linspace(0.0, 1.0, self.num_knots)
        return np.concatenate((
            np.linspace(-self.degree * dx, -dx, self.degree),
            inner,
            np.linspace(1.0 + dx, 1.0 + self.degree * dx, self.degree),
        ))


@dataclass
class PenaltySpec:
    matrix: np.ndarray
    rank: int
    kernel_basis: np.ndarray = field(repr=False)


@dataclass
class BlockComponents:
    """Составные части блока эффекта до назначения гиперпараметров"""

    part: str
    design: np.ndarray
    penalty: np.ndarray
    constraint: np.ndarray
    rank: int
    x_mean: float = 0.0


def bspline_design(x: np.ndarray, cfg: BasisConfig) -> np.ndarray:
    """Матрица значений B-сплайнов n x D для x из [0, 1]"""
    x = np.asarray(x, dtype=float).ravel()
    outside = np.flatnonzero((x < 0.0) | (x > 1.0) | ~np.isfinite(x))
    if outside.size:
        row = int(outside[0])
        raise DomainError(f"Значение ковариаты {x[row]} в строке {row} вне [0, 1]", row=row)
    return BSpline.design_matrix(x, cfg.knots(), cfg.degree).toarray()


def rw2_penalty(dimension: int) -> PenaltySpec:
    """K = D2' D2 для вторых разностей; ядро натянуто на константу и линейный тренд"""
    if dimension < 3:
        raise DomainError(f"Для RW2 нужна размерность >= 3, получено {dimension}")
    diff = np.diff(np.eye(dimension), n=2, axis=0)
    index = np.arange(dimension, dtype=float)
    kernel = np.column_stack((np.ones(dimension), index - index.mean()))
    return PenaltySpec(matrix=diff.T @ diff, rank=dimension - 2, kernel_basis=kernel)


def identity_penalty(dimension: int = 1) -> PenaltySpec:
    return PenaltySpec(matrix=np.eye(dimension), rank=dimension,
                       kernel_basis=np.zeros((dimension, 0)))


def constraint_matrix(spec: PenaltySpec) -> np.ndarray:
    """A = span(ker K)': (D - rank) x D"""
    return spec.kernel_basis.T.copy()


def penalty_rank(matrix: np.ndarray) -> int:
    """Число собственных значений выше 1e-10 * max"""
    eigenvalues = np.linalg.eigvalsh(matrix)
    return int(np.sum(eigenvalues > EIGEN_TOLERANCE * eigenvalues.max()))


def decompose_effect(x: np.ndarray, cfg: Optional[BasisConfig] = None) -> Tuple[BlockComponents, BlockComponents]:
    """
    Разложение эффекта f = f_unpen + f_pen.

    Линейная часть: столбец (x - mean(x)), K = I(1), без ограничений.
    Нелинейная часть: B-сплайны, RW2-штраф, A = [1'B / n; t'] (см. nonlinear_effect).
    """
    cfg = cfg or BasisConfig()
    x = np.asarray(x, dtype=float).ravel()
    if np.ptp(x) == 0:
        raise DomainError("covariate has zero variance")
    return linear_effect(x), nonlinear_effect(x, cfg)


def linear_effect(x: np.ndarray) -> BlockComponents:
    """Центрированный линейный столбец без штрафа на ранг и без ограничений"""
    x = np.asarray(x, dtype=float).ravel()
    x_mean = float(x.mean())
    penalty = identity_penalty(1)
    return BlockComponents(
        part="linear",
        design=(x - x_mean)[:, None],
        penalty=penalty.matrix,
        constraint=constraint_matrix(penalty),
        rank=penalty.rank,
        x_mean=x_mean,
    )


def nonlinear_effect(x: np.ndarray, cfg: BasisConfig) -> BlockComponents:
    """
    P-сплайн с RW2-штрафом. Ограничения A = [1'B / n; t']: нулевое среднее
    по наблюдениям вместо ортогональности константе и ортогональность
    линейному тренду ядра. {A beta = 0} пересекается с ker K только в нуле,
    поэтому штраф положительно определён на подпространстве размерности
    D - 2, а свободный член и линейный блок вместе с ним покрывают весь
    сплайновый базис.
    """
    x = np.asarray(x, dtype=float).ravel()
    x_mean = float(x.mean())
    design = bspline_design(x, cfg)
    penalty = rw2_penalty(cfg.dimension)
    trend = constraint_matrix(penalty)[1:]
    constraint = centering_constraint(design, trend)

    return BlockComponents(
        part="nonlinear",
        design=design,
        penalty=penalty.matrix,
        constraint=constraint,
        rank=penalty.rank,
        x_mean=x_mean,
    )


def centering_constraint(design: np.ndarray, trend: np.ndarray) -> np.ndarray:
    """Строка средних по данным поверх строк тренда; полный строчный ранг обязателен"""
    constraint = np.vstack((design.mean(axis=0), trend))
    if np.linalg.matrix_rank(constraint) < constraint.shape[0]:
        raise DomainError("Ограничение центрирования вырождено")
    return constraint
