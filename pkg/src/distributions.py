#!/usr/bin/env python3
"""
Генераторы случайных величин и плотности для сэмплера и элиситации.

Все генераторы получают поток явно (numpy Generator на PCG64); общий поток
нельзя делить между параллельными вызывающими.
"""

import logging
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np
from scipy import linalg, stats

from .errors import DomainError, NumericalError

logger = logging.getLogger(__name__)

RandomStream = np.random.Generator
ArrayLike = Union[float, np.ndarray]

SIGMA_CONVENTIONS = ("variance", "std")


def make_stream(seed: int) -> RandomStream:
    """Поток с заданным 64-битным сидом"""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed))))


def derive_stream(seed: int, *keys: int) -> RandomStream:
    """Независимый под-поток: (сид, ключи) -> собственное состояние"""
    sequence = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(np.random.PCG64(sequence))


def _check_tau(tau: float) -> None:
    if not 0.0 < tau < 1.0:
        raise DomainError(f"Уровень квантиля tau={tau} вне интервала (0, 1)", tau=tau)


def _check_positive(name: str, value: ArrayLike) -> None:
    arr = np.asarray(value, dtype=float)
    if arr.size == 0 or not np.all(np.isfinite(arr)) or np.any(arr <= 0):
        raise DomainError(f"Параметр {name} должен быть положительным, получено {value}")


@dataclass(frozen=True)
class GigParams:
    """GIG с плотностью ~ x^(p-1) exp(-(a x + b / x) / 2), x > 0"""

    p: float
    a: float
    b: float

    def __post_init__(self):
        if not np.isfinite(self.p):
            raise DomainError(f"Порядок GIG должен быть конечным, получено p={self.p}")
        _check_positive("a (GIG)", self.a)
        _check_positive("b (GIG)", self.b)


@dataclass(frozen=True)
class QuantileConstants:
    tau: float
    xi: float
    sigma2: float


def quantile_constants(tau: float, convention: str = "variance") -> QuantileConstants:
    """
    Константы смеси xi и sigma^2 для уровня tau.

    convention="variance": sigma^2 = 2 / (tau (1 - tau)), при этом смесь
    воспроизводит ALD и P(Y <= eta) = tau.
    convention="std": sigma^2 = (2 / (tau (1 - tau)))^2, буквальное прочтение
    для проверки чувствительности.
    """
    _check_tau(tau)
    if convention not in SIGMA_CONVENTIONS:
        raise DomainError(f"Неизвестное соглашение для sigma: {convention}")
    base = 2.0 / (tau * (1.0 - tau))
    xi = (1.0 - 2.0 * tau) / (tau * (1.0 - tau))
    sigma2 = base if convention == "variance" else base ** 2
    return QuantileConstants(tau=tau, xi=xi, sigma2=sigma2)


def check_loss(tau: float, u: ArrayLike) -> ArrayLike:
    """Кусочно-линейная функция потерь rho_tau(u) = u (tau - 1{u < 0})"""
    _check_tau(tau)
    u = np.asarray(u, dtype=float)
    loss = u * (tau - (u < 0))
    return float(loss) if loss.ndim == 0 else loss


def ald_log_density(y: ArrayLike, eta: ArrayLike, delta2: float, tau: float) -> ArrayLike:
    _check_tau(tau)
    _check_positive("delta2", delta2)
    return (np.log(tau) + np.log1p(-tau) + np.log(delta2)
            - delta2 * check_loss(tau, np.asarray(y, dtype=float) - eta))


def ald_cdf(y: ArrayLike, eta: ArrayLike, delta2: float, tau: float) -> ArrayLike:
    """Замкнутая функция распределения ALD(eta, delta2, tau)"""
    _check_tau(tau)
    _check_positive("delta2", delta2)
    u = np.asarray(y, dtype=float) - eta
    below = tau * np.exp(np.minimum(u, 0.0) * delta2 * (1.0 - tau))
    above = 1.0 - (1.0 - tau) * np.exp(-np.maximum(u, 0.0) * delta2 * tau)
    cdf = np.where(u < 0, below, above)
    return float(cdf) if cdf.ndim == 0 else cdf


def simulate_ald_mixture(eta: float, delta2: float, tau: float, size: int, rng: RandomStream,
                         convention: str = "variance") -> np.ndarray:
    """Y = eta + xi W + sigma Z sqrt(W / delta2), W ~ Exp(rate delta2), Z ~ N(0, 1)"""
    _check_positive("delta2", delta2)
    constants = quantile_constants(tau, convention)
    w = rng.exponential(1.0 / delta2, size=size)
    z = rng.standard_normal(size)
    return eta + constants.xi * w + np.sqrt(constants.sigma2) * z * np.sqrt(w / delta2)


def sample_inverse_gaussian(mean: ArrayLike, shape: ArrayLike, rng: RandomStream,
                            size: Optional[int] = None) -> ArrayLike:
    """
    Обратное гауссовское (mean, shape): преобразование с отбором
    Майкла-Шукани-Хааса. Корень x = 4 m^2 l v / (m v + S)^2 записан без
    вычитания близких чисел, поэтому mean >> shape (малые остатки в шаге
    весов) не даёт отрицательных розыгрышей.
    """
    _check_positive("mean", mean)
    _check_positive("shape", shape)
    mean, shape = np.broadcast_arrays(np.asarray(mean, dtype=float), np.asarray(shape, dtype=float))
    out_shape = mean.shape if size is None else size
    nu = rng.standard_normal(out_shape) ** 2
    mean_nu = mean * nu
    root = np.sqrt(4.0 * mean * shape * nu + mean_nu ** 2)
    with np.errstate(divide="ignore", invalid="ignore"):
        x = np.where(root > 0, 4.0 * mean ** 2 * shape * nu / (mean_nu + root) ** 2, mean)
        u = rng.uniform(size=out_shape)
        draws = np.where(u <= mean / (mean + x), x, mean ** 2 / x)
    return float(draws) if np.ndim(draws) == 0 else draws


def sample_gig(params: GigParams, rng: RandomStream, size: Optional[int] = None) -> ArrayLike:
    """
    Розыгрыш GIG(p, a, b).

    p = -1/2 совпадает с обратным гауссовским (mean = sqrt(b/a), shape = b);
    иначе отношение равномерных со сдвигом моды из scipy.stats.geninvgauss.
    """
    if params.p == -0.5:
        return sample_inverse_gaussian(np.sqrt(params.b / params.a), params.b, rng, size=size)
    scale = np.sqrt(params.b / params.a)
    draws = stats.geninvgauss.rvs(params.p, np.sqrt(params.a * params.b), scale=scale,
                                  size=size, random_state=rng)
    return float(draws) if size is None else draws


def sample_gamma(shape: float, rate: float, rng: RandomStream, size: Optional[int] = None) -> ArrayLike:
    _check_positive("shape", shape)
    _check_positive("rate", rate)
    return rng.gamma(shape, 1.0 / rate, size=size)


def sample_inverse_gamma(shape: float, scale: float, rng: RandomStream,
                         size: Optional[int] = None) -> ArrayLike:
    _check_positive("shape", shape)
    _check_positive("scale", scale)
    return scale / rng.gamma(shape, 1.0, size=size)


def sample_beta(a: float, b: float, rng: RandomStream, size: Optional[int] = None) -> ArrayLike:
    _check_positive("a", a)
    _check_positive("b", b)
    return rng.beta(a, b, size=size)


def sample_bernoulli(prob: float, rng: RandomStream) -> int:
    if not 0.0 <= prob <= 1.0:
        raise DomainError(f"Вероятность {prob} вне [0, 1]")
    return int(rng.random() < prob)


def sample_sqrt_beta_prime(a: float, rng: RandomStream, size: Optional[int] = None) -> ArrayLike:
    """sqrt(X / Y), X ~ Ga(1/2, 1), Y ~ Ga(a, 1); квадрат распределён как BP(1/2, a)"""
    _check_positive("a", a)
    x = rng.gamma(0.5, 1.0, size=size)
    y = rng.gamma(a, 1.0, size=size)
    return np.sqrt(x / y)


def _cholesky(precision: np.ndarray, block_id: Optional[str]) -> np.ndarray:
    try:
        return linalg.cholesky(precision, lower=True, check_finite=True)
    except (linalg.LinAlgError, ValueError) as exc:
        raise NumericalError(f"Матрица точности не положительно определена: {exc}",
                             block_id=block_id) from exc


def _draw_from_factor(chol: np.ndarray, linear: np.ndarray, rng: RandomStream) -> np.ndarray:
    # x = L^-T (L^-1 h + z): E[x] = P^-1 h, Cov[x] = P^-1
    u = linalg.solve_triangular(chol, linear, lower=True)
    z = rng.standard_normal(linear.shape[0])
    return linalg.solve_triangular(chol, u + z, lower=True, trans="T")


def sample_mvn_canonical(precision: np.ndarray, linear: np.ndarray, rng: RandomStream,
                         block_id: Optional[str] = None) -> np.ndarray:
    """Розыгрыш N(P^-1 h, P^-1) в канонической форме"""
    precision = np.atleast_2d(np.asarray(precision, dtype=float))
    linear = np.atleast_1d(np.asarray(linear, dtype=float))
    chol = _cholesky(precision, block_id)
    return _draw_from_factor(chol, linear, rng)


def sample_constrained_mvn(precision: np.ndarray, linear: np.ndarray, constraint: np.ndarray,
                           rng: RandomStream, block_id: Optional[str] = None) -> np.ndarray:
    """
    Розыгрыш N(P^-1 h, P^-1) при условии A x = 0 (conditioning by kriging):
    x* = x - P^-1 A' (A P^-1 A')^-1 A x.
    """
    precision = np.atleast_2d(np.asarray(precision, dtype=float))
    linear = np.atleast_1d(np.asarray(linear, dtype=float))
    constraint = np.asarray(constraint, dtype=float).reshape(-1, linear.shape[0])
    if constraint.shape[0] == 0:
        return sample_mvn_canonical(precision, linear, rng, block_id=block_id)
    if np.linalg.matrix_rank(constraint) < constraint.shape[0]:
        raise DomainError("Матрица ограничений не полного строчного ранга", block_id=block_id)

    chol = _cholesky(precision, block_id)
    x = _draw_from_factor(chol, linear, rng)
    v = linalg.cho_solve((chol, True), constraint.T)
    w = constraint @ v
    return x - v @ np.linalg.solve(w, constraint @ x)


def gig_order(rank: int) -> float:
    """Порядок GIG для zeta^2 при ранге штрафа rank"""
    return -0.5 * rank + 0.5


def normal_log_density(x: float, variance: float) -> float:
    return float(stats.norm.logpdf(x, loc=0.0, scale=np.sqrt(variance)))


def empirical_quantile(sample: Sequence[float], prob: float) -> float:
    """Квантиль по линейной интерполяции порядковых статистик (тип 7)"""
    return float(np.quantile(np.asarray(sample, dtype=float), prob, method="linear"))
