#!/usr/bin/env python3
"""
Элиситация гиперпараметров b (масштаб slab) и r (множитель spike) по
вероятностным утверждениям о sup-норме эффекта.

Используется свойство масштабирования бета-простого распределения:
f = sqrt(2 r b) * zeta_tilde * B beta_tilde, поэтому одной симуляции
sup|zeta_tilde * B beta_tilde| и двух квантилей достаточно.
"""

import json
import logging
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np
from scipy import linalg

from .distributions import (
    RandomStream,
    derive_stream,
    empirical_quantile,
    sample_gamma,
    sample_inverse_gamma,
    sample_sqrt_beta_prime,
)
from .errors import DomainError, NumericalError
from .model_spec import EffectBlock
from .splines import EIGEN_TOLERANCE

logger = logging.getLogger(__name__)

MIN_DRAWS = 10_000
DEFAULT_DRAWS = 100_000
CHUNK_SIZE = 5_000


@dataclass
class ElicitationResult:
    block_id: str
    a: float
    b: float
    r: float
    c: float
    alpha: float
    num_draws: int
    q_slab: float
    q_spike: float

    def to_dict(self) -> Dict[str, float]:
        return asdict(self)


def prior_coefficient_draws(block: EffectBlock, size: int, rng: RandomStream) -> np.ndarray:
    """
    Розыгрыши beta_tilde с плотностью ~ exp(-beta' K beta / 2) на {A beta = 0}
    (D x size). Параметризация beta = N z, N - базис null(A), точность z
    равна N' K N; на её нулевом подпространстве берётся псевдообратная.
    """
    constraint = block.constraint
    if constraint.shape[0]:
        basis = linalg.null_space(constraint)
    else:
        basis = np.eye(block.penalty.shape[0])
    precision = basis.T @ block.penalty @ basis
    eigenvalues, eigenvectors = np.linalg.eigh(precision)
    keep = eigenvalues > EIGEN_TOLERANCE * eigenvalues.max()
    root = basis @ (eigenvectors[:, keep] / np.sqrt(eigenvalues[keep]))
    return root @ rng.standard_normal((int(keep.sum()), size))


def _sup_rows(block: EffectBlock) -> np.ndarray:
    """Различные строки дизайна: sup по наблюдённым значениям ковариаты"""
    return np.unique(block.design, axis=0)


def simulate_supnorm(block: EffectBlock, a: float, num_draws: int, rng: RandomStream) -> np.ndarray:
    """Выборка sup_i |zeta_tilde * (B beta_tilde)_i| объёма num_draws"""
    if num_draws < MIN_DRAWS:
        raise DomainError(f"Для элиситации нужно не меньше {MIN_DRAWS} розыгрышей, получено {num_draws}",
                          block_id=block.id)
    rows = _sup_rows(block)
    sample = np.empty(num_draws)
    for start in range(0, num_draws, CHUNK_SIZE):
        stop = min(start + CHUNK_SIZE, num_draws)
        beta = prior_coefficient_draws(block, stop - start, rng)
        scale = sample_sqrt_beta_prime(a, rng, size=stop - start)
        sample[start:stop] = scale * np.abs(rows @ beta).max(axis=0)
    return sample


def solve_slab_scale(c: float, alpha: float, sample: Sequence[float]) -> float:
    """b = c^2 / (2 q*^2), q* - alpha-квантиль выборки sup-нормы"""
    if c <= 0 or not 0.0 < alpha < 1.0:
        raise DomainError(f"Некорректные c={c}, alpha={alpha}")
    if len(sample) == 0:
        raise DomainError("Пустая выборка sup-нормы")
    q_slab = empirical_quantile(sample, alpha)
    if q_slab <= 0:
        raise NumericalError("Вырожденная выборка sup-нормы: q* = 0")
    return c ** 2 / (2.0 * q_slab ** 2)


def solve_spike_factor(c: float, alpha: float, b: float, sample: Sequence[float],
                       block_id: Optional[str] = None) -> float:
    """r = c^2 / (2 b q**^2), q** - (1 - alpha)-квантиль"""
    q_spike = empirical_quantile(sample, 1.0 - alpha)
    if q_spike <= 0:
        raise NumericalError("Вырожденная выборка sup-нормы: q** = 0", block_id=block_id)
    r = c ** 2 / (2.0 * b * q_spike ** 2)
    if r >= 1.0:
        logger.warning(f"Блок {block_id}: r={r:.4g} >= 1, spike не уже slab; проверьте (c, alpha)")
    return r


def elicit_block(block: EffectBlock, rng: RandomStream, num_draws: int = DEFAULT_DRAWS) -> ElicitationResult:
    sample = simulate_supnorm(block, block.a, num_draws, rng)
    b = solve_slab_scale(block.c, block.alpha, sample)
    r = solve_spike_factor(block.c, block.alpha, b, sample, block_id=block.id)
    return ElicitationResult(
        block_id=block.id,
        a=block.a,
        b=b,
        r=r,
        c=block.c,
        alpha=block.alpha,
        num_draws=num_draws,
        q_slab=empirical_quantile(sample, block.alpha),
        q_spike=empirical_quantile(sample, 1.0 - block.alpha),
    )


def elicit_blocks(blocks: Iterable[EffectBlock], seed: int,
                  num_draws: int = DEFAULT_DRAWS) -> List[ElicitationResult]:
    """Элиситация всех выбираемых блоков; у каждого блока свой поток"""
    results = []
    for index, block in enumerate(blocks):
        if not block.selectable:
            continue
        result = elicit_block(block, derive_stream(seed, 7, index), num_draws)
        logger.info(f"Блок {block.id}: b={result.b:.5g}, r={result.r:.5g}")
        results.append(result)
    return results


def apply_elicitation(blocks: Iterable[EffectBlock], results: Iterable[ElicitationResult]) -> None:
    by_id = {res.block_id: res for res in results}
    for block in blocks:
        if not block.selectable:
            continue
        if block.id not in by_id:
            raise DomainError(f"Нет результата элиситации для блока {block.id}", block_id=block.id)
        block.b = by_id[block.id].b
        block.r = by_id[block.id].r


def forward_supnorm_probability(block: EffectBlock, b: float, r: float, gamma: int,
                                num_draws: int, rng: RandomStream) -> float:
    """
    P(sup|f| <= c | gamma) прямой симуляцией полной иерархии:
    psi^2 ~ IG(a, b), zeta^2 ~ Ga(1/2, rate 1 / (2 r(gamma) psi^2)), beta_tilde из априорного.
    """
    scale_r = 1.0 if gamma == 1 else r
    rows = _sup_rows(block)
    hits = 0
    for start in range(0, num_draws, CHUNK_SIZE):
        size = min(CHUNK_SIZE, num_draws - start)
        psi2 = sample_inverse_gamma(block.a, b, rng, size=size)
        zeta2 = sample_gamma(0.5, 1.0 / (2.0 * scale_r * psi2), rng, size=size)
        beta = prior_coefficient_draws(block, size, rng)
        sup = np.sqrt(zeta2) * np.abs(rows @ beta).max(axis=0)
        hits += int(np.sum(sup <= block.c))
    return hits / num_draws


def save_elicitation(results: Iterable[ElicitationResult], path: Path, meta: Optional[Dict] = None) -> None:
    payload = {"meta": meta or {}, "blocks": {res.block_id: res.to_dict() for res in results}}
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f, ensure_ascii=False, indent=2)


def load_elicitation(path: Path) -> Dict:
    """Читает elicitation.json: {'meta': ..., 'results': [ElicitationResult]}"""
    with open(path, encoding="utf-8") as f:
        payload = json.load(f)
    results = [ElicitationResult(**entry) for entry in payload.get("blocks", {}).values()]
    return {"meta": payload.get("meta", {}), "results": results}
