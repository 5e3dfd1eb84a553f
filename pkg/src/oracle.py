#!/usr/bin/env python3
"""
Независимые проверочные инструменты: точный решатель линейной квантильной
регрессии, численные функции распределения и совместный тест Geweke для
сэмплера Гиббса.
"""

import itertools
import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy import integrate, optimize

from .distributions import (
    RandomStream,
    check_loss,
    derive_stream,
    sample_bernoulli,
    sample_beta,
    sample_gamma,
    sample_inverse_gamma,
)
from .elicitation import prior_coefficient_draws
from .errors import DomainError
from .gibbs import GibbsSampler
from .model_spec import (
    BuiltModel,
    CovariateSpec,
    EffectBlock,
    HyperDefaults,
    ModelSpec,
    SamplerConfig,
    build_blocks,
)
from .splines import BasisConfig
from .summaries import batch_means_se

logger = logging.getLogger(__name__)

EXACT_MAX_ROWS = 30
EXACT_MAX_COLUMNS = 4
SUPPORTED_DISTRIBUTIONS = ("gig", "inverse_gaussian", "beta_prime")

# Версионированный список тестовых функций Geweke
GEWEKE_TEST_FUNCTIONS_VERSION = 1
GEWEKE_TEST_FUNCTIONS = (
    "mean_y",
    "mean_y2",
    "zeta2[x1:linear]",
    "zeta2[x2:nonlinear]",
    "gamma[x1:linear]",
    "gamma[x2:nonlinear]",
    "psi2[x1:linear]",
    "psi2[x2:nonlinear]",
    "delta2",
    "beta_sq[x1:linear]",
    "beta_sq[x2:nonlinear]",
    "omega[x1:linear]",
)


def _total_loss(X: np.ndarray, y: np.ndarray, tau: float, beta: np.ndarray) -> float:
    return float(np.sum(check_loss(tau, y - X @ beta)))


def _exact_path(X: np.ndarray, y: np.ndarray, tau: float) -> np.ndarray:
    n, p = X.shape
    subsets = np.array(list(itertools.combinations(range(n), p)))
    systems = X[subsets]
    dets = np.linalg.det(systems)
    scale = max(1.0, float(np.abs(X).max()) ** p)
    keep = np.abs(dets) > 1e-12 * scale
    if not keep.any():
        raise DomainError("Нет невырожденного интерполирующего подмножества строк")
    coefs = np.linalg.solve(systems[keep], y[subsets[keep]][..., None])[..., 0]
    losses = np.sum(check_loss(tau, y[None, :] - coefs @ X.T), axis=1)
    best = losses.min()
    ties = coefs[losses <= best + 1e-10 * max(1.0, abs(best))]
    # лексикографически наименьший вектор среди оптимальных
    order = np.lexsort(ties.T[::-1])
    return ties[order[0]]


def _iterative_path(X: np.ndarray, y: np.ndarray, tau: float) -> np.ndarray:
    n, p = X.shape
    beta = np.linalg.lstsq(X, y, rcond=None)[0]
    for h in (1.0, 1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6):
        def objective(b):
            u = y - X @ b
            root = np.sqrt(u ** 2 + h ** 2)
            grad = (tau - 0.5) + 0.5 * u / root
            return float(np.sum(u * (tau - 0.5) + 0.5 * root)), -X.T @ grad

        beta = optimize.minimize(objective, beta, jac=True, method="BFGS").x

    # доводка: интерполяция по p строкам с наименьшими невязками
    best, best_loss = beta, _total_loss(X, y, tau, beta)
    order = np.argsort(np.abs(y - X @ beta))
    for rows in itertools.combinations(order[:min(n, p + 2)], p):
        rows = list(rows)
        if np.linalg.matrix_rank(X[rows]) < p:
            continue
        candidate = np.linalg.solve(X[rows], y[rows])
        loss = _total_loss(X, y, tau, candidate)
        if loss < best_loss:
            best, best_loss = candidate, loss
    return best


def subgradient_holds(X: np.ndarray, y: np.ndarray, tau: float, beta: np.ndarray) -> bool:
    """Число отрицательных остатков в [n tau - p, n tau + p]"""
    n, p = X.shape
    negatives = int(np.sum(y - X @ beta < -1e-9))
    return n * tau - p <= negatives <= n * tau + p


def linear_qr_exact(X: np.ndarray, y: np.ndarray, tau: float) -> np.ndarray:
    """
    Минимизатор sum rho_tau(y - X beta).

    При n <= 30 и p <= 4 перебираются все p-подмножества строк
    (оптимум интерполирует p точек); иначе сглаженная минимизация с
    убывающим сглаживанием и доводкой.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    n, p = X.shape
    if y.shape[0] != n:
        raise DomainError(f"Размеры X ({n}) и y ({y.shape[0]}) не совпадают")
    if np.linalg.matrix_rank(X) < p:
        raise DomainError("Матрица X не полного столбцового ранга")
    if n <= EXACT_MAX_ROWS and p <= EXACT_MAX_COLUMNS:
        return _exact_path(X, y, tau)
    beta = _iterative_path(X, y, tau)
    if not subgradient_holds(X, y, tau, beta):
        logger.warning("Итеративный путь: условие субградиента не выполнено")
    return beta


def _log_density(dist: str, params: Dict[str, float]) -> Tuple[Callable[[np.ndarray], np.ndarray], float]:
    """Ненормированная лог-плотность и характерная точка (мода или единица)"""
    if dist == "gig":
        p, a, b = params["p"], params["a"], params["b"]
        if a <= 0 or b <= 0:
            raise DomainError("GIG: a и b должны быть положительными")
        mode = ((p - 1.0) + np.sqrt((p - 1.0) ** 2 + a * b)) / a
        return (lambda x: (p - 1.0) * np.log(x) - 0.5 * (a * x + b / x)), mode
    if dist == "inverse_gaussian":
        mean, shape = params["mean"], params["shape"]
        if mean <= 0 or shape <= 0:
            raise DomainError("Обратное гауссовское: параметры должны быть положительными")
        ratio = mean / shape
        mode = mean * (np.sqrt(1.0 + 2.25 * ratio ** 2) - 1.5 * ratio)
        return (lambda x: -1.5 * np.log(x) - shape * (x - mean) ** 2 / (2.0 * mean ** 2 * x)), mode
    if dist == "beta_prime":
        alpha, beta = params["alpha"], params["beta"]
        if alpha <= 0 or beta <= 0:
            raise DomainError("Бета-простое: параметры должны быть положительными")
        mode = (alpha - 1.0) / (beta + 1.0) if alpha >= 1 else 1.0
        return (lambda x: (alpha - 1.0) * np.log(x) - (alpha + beta) * np.log1p(x)), mode
    raise DomainError(f"Неподдерживаемое распределение '{dist}', доступны: {SUPPORTED_DISTRIBUTIONS}")


def _quad(density: Callable[[float], float], lo: float, hi: float) -> float:
    return integrate.quad(density, lo, hi, epsabs=1e-13, epsrel=1e-11, limit=200)[0]


def numeric_cdf(dist: str, params: Dict[str, float], x: Sequence[float], num_nodes: int = 512) -> np.ndarray:
    """
    F(x) квадратурой заявленной плотности.

    Между узлами (квантили x) интеграл считается адаптивно (quad), от узла
    до точки 32-точечным правилом Гаусса-Лежандра по s = sqrt(t); точки
    первого отрезка [0, узел] интегрируются адаптивно.
    """
    log_density, center = _log_density(dist, params)

    def density(t):
        t = np.asarray(t, dtype=float)
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            values = np.exp(log_density(t))
        return np.where(t > 0, np.nan_to_num(values, nan=0.0, posinf=0.0), 0.0)

    def scalar_density(t):
        return float(density(t))

    split = max(float(center), 1e-12)
    total = _quad(scalar_density, 0.0, split) + _quad(scalar_density, split, np.inf)
    if not total > 0:
        raise DomainError(f"Не удалось нормировать плотность '{dist}'")

    x = np.atleast_1d(np.asarray(x, dtype=float))
    result = np.zeros_like(x)
    positive = x > 0
    finite = positive & np.isfinite(x)
    result[positive & ~np.isfinite(x)] = 1.0
    if not finite.any():
        return result

    values = x[finite]
    nodes = np.unique(np.concatenate(([0.0], np.quantile(values, np.linspace(0.0, 1.0, num_nodes)))))
    segments = np.array([_quad(scalar_density, lo, hi) for lo, hi in zip(nodes[:-1], nodes[1:])])
    at_nodes = np.concatenate(([0.0], np.cumsum(segments)))

    index = np.clip(np.searchsorted(nodes, values, side="right") - 1, 0, nodes.size - 1)
    lower = nodes[index]
    gl_points, gl_weights = np.polynomial.legendre.leggauss(32)
    # замена t = s^2 снимает особенность вида t^(-1/2) у нуля
    s_lo, s_hi = np.sqrt(lower), np.sqrt(values)
    half = (s_hi - s_lo) / 2.0
    s = s_lo[:, None] + half[:, None] * (gl_points[None, :] + 1.0)
    partial = half * ((density(s ** 2) * 2.0 * s) @ gl_weights)
    first = index == 0
    partial[first] = [_quad(scalar_density, 0.0, v) for v in values[first]]
    cdf = (at_nodes[index] + partial) / total
    result[finite] = np.clip(cdf, 0.0, 1.0)

    infinite = positive & ~np.isfinite(x)
    if infinite.any():
        tail = _quad(scalar_density, nodes[-1], np.inf)
        result[infinite] = (at_nodes[-1] + tail) / total
    return result


@dataclass
class GewekeConfig:
    """Редуцированная модель: n строк, x1 линейный блок, x2 нелинейный блок"""

    n: int = 20
    tau: float = 0.5
    b: float = 0.5
    r: float = 0.05
    hyper: HyperDefaults = field(default_factory=lambda: HyperDefaults(
        a=5.0, a0=1.0, b0=1.0, a_delta=10.0, b_delta=10.0, mandatory_precision=1.0))
    basis: BasisConfig = field(default_factory=BasisConfig)
    sigma_convention: str = "variance"


@dataclass
class GewekeResult:
    names: List[str]
    z_scores: np.ndarray
    forward_means: np.ndarray
    successive_means: np.ndarray
    sweeps: int
    version: int = GEWEKE_TEST_FUNCTIONS_VERSION

    def max_abs_z(self) -> float:
        return float(np.max(np.abs(self.z_scores)))

    def to_dict(self) -> Dict:
        return {
            "version": self.version,
            "sweeps": self.sweeps,
            "z_scores": dict(zip(self.names, map(float, self.z_scores))),
            "forward_means": dict(zip(self.names, map(float, self.forward_means))),
            "successive_means": dict(zip(self.names, map(float, self.successive_means))),
        }


class HalvedScaleSampler(GibbsSampler):
    """Сэмплер с испорченным шагом 4 (масштаб IG вдвое меньше) для проверки чувствительности"""

    def update_hypervariance(self, block: EffectBlock) -> float:
        scale_r = 1.0 if block.state.gamma == 1 else block.r
        scale = 0.5 * (block.b + block.state.zeta2 / (2.0 * scale_r))
        block.state.psi2 = float(sample_inverse_gamma(block.a + 0.5, scale, self.rng))
        return block.state.psi2


def _check_proper(cfg: GewekeConfig) -> None:
    hyper = cfg.hyper
    # моменты y^2 конечны при a_delta > 2; обязательные коэффициенты требуют собственного априорного
    if hyper.a_delta <= 2.0 or hyper.mandatory_precision < 1e-2:
        raise DomainError("Тест Geweke требует собственного совместного распределения: "
                          "a_delta > 2 и mandatory_precision >= 0.01")
    if hyper.a <= 2.0:
        raise DomainError("Тест Geweke требует a > 2 (конечная дисперсия psi^2)")
    if cfg.b <= 0 or not 0.0 < cfg.r < 1.0:
        raise DomainError(f"Некорректные b={cfg.b}, r={cfg.r}")


def reduced_model(cfg: GewekeConfig, rng: RandomStream) -> BuiltModel:
    """Ковариаты равномерны на [0, 1]; y заполняется прямой симуляцией"""
    frame = pd.DataFrame({
        "y": np.zeros(cfg.n),
        "x1": rng.uniform(size=cfg.n),
        "x2": rng.uniform(size=cfg.n),
    })
    spec = ModelSpec(
        response="y",
        covariates=(CovariateSpec("x1", kind="linear"), CovariateSpec("x2", kind="nonlinear")),
        quantiles=(cfg.tau,),
        hyper=cfg.hyper,
        basis=cfg.basis,
    )
    model = build_blocks(frame, spec)
    for block in model.blocks:
        block.b = cfg.b
        block.r = cfg.r
    return model


def _draw_parameters(sampler: GibbsSampler, rng: RandomStream) -> None:
    """Розыгрыш всех параметров из априорного распределения прямо в состояние сэмплера"""
    hyper = sampler.hyper
    for block in sampler.blocks:
        block.state.omega = float(sample_beta(block.a0, block.b0, rng))
        block.state.gamma = sample_bernoulli(block.state.omega, rng)
        block.state.psi2 = float(sample_inverse_gamma(block.a, block.b, rng))
        scale_r = 1.0 if block.state.gamma == 1 else block.r
        block.state.zeta2 = float(sample_gamma(0.5, 1.0 / (2.0 * scale_r * block.state.psi2), rng))
        block.state.beta_tilde = prior_coefficient_draws(block, 1, rng)[:, 0]
    design = sampler.model.mandatory_design
    sampler.state.mandatory = rng.normal(0.0, 1.0 / np.sqrt(hyper.mandatory_precision), design.shape[1])
    sampler.state.delta2 = float(sample_gamma(hyper.a_delta, hyper.b_delta, rng))
    sampler.state.w = rng.exponential(1.0 / sampler.state.delta2, size=sampler.model.n)
    sampler.refresh_predictor()


def _draw_response(sampler: GibbsSampler, rng: RandomStream) -> None:
    """y ~ N(eta + xi w, sigma^2 w / delta^2)"""
    state, constants = sampler.state, sampler.constants
    sd = np.sqrt(constants.sigma2 * state.w / state.delta2)
    sampler.y = state.eta + constants.xi * state.w + sd * rng.standard_normal(sampler.model.n)


def _test_functions(sampler: GibbsSampler) -> np.ndarray:
    by_id = {block.id: block for block in sampler.blocks}
    lin, nonlin = by_id["x1:linear"], by_id["x2:nonlinear"]
    return np.array([
        sampler.y.mean(),
        np.mean(sampler.y ** 2),
        lin.state.zeta2,
        nonlin.state.zeta2,
        lin.state.gamma,
        nonlin.state.gamma,
        lin.state.psi2,
        nonlin.state.psi2,
        sampler.state.delta2,
        float(lin.coefficients @ lin.coefficients),
        float(nonlin.coefficients @ nonlin.coefficients),
        lin.state.omega,
    ])


def geweke_joint_test(cfg: Optional[GewekeConfig], sweeps: int, seed: int,
                      forward_draws: Optional[int] = None,
                      sampler_class: type = GibbsSampler) -> GewekeResult:
    """
    Сравнение моментов тестовых функций: (i) прямая симуляция
    «априорное -> правдоподобие», (ii) последовательно-условная симуляция,
    где после каждого прохода Гиббса данные переразыгрываются.
    z = (m_f - m_s) / sqrt(se_f^2 + se_s^2); se_s по батч-средним.
    """
    cfg = cfg or GewekeConfig()
    _check_proper(cfg)
    forward_draws = forward_draws or sweeps
    model = reduced_model(cfg, derive_stream(seed, 0))
    sampler_cfg = SamplerConfig(iterations=2, burn_in=0, thin=1, seed=seed, num_chains=1,
                                sigma_convention=cfg.sigma_convention)

    forward_rng = derive_stream(seed, 1)
    forward = GibbsSampler(model, cfg.tau, sampler_cfg, cfg.hyper, forward_rng)
    forward_values = np.empty((forward_draws, len(GEWEKE_TEST_FUNCTIONS)))
    for i in range(forward_draws):
        _draw_parameters(forward, forward_rng)
        _draw_response(forward, forward_rng)
        forward_values[i] = _test_functions(forward)

    chain_rng = derive_stream(seed, 2)
    successive = sampler_class(model, cfg.tau, sampler_cfg, cfg.hyper, chain_rng)
    _draw_parameters(successive, chain_rng)
    _draw_response(successive, chain_rng)
    chain_values = np.empty((sweeps, len(GEWEKE_TEST_FUNCTIONS)))
    for i in range(sweeps):
        successive.sweep()
        _draw_response(successive, chain_rng)
        chain_values[i] = _test_functions(successive)
        if i % 10000 == 0:
            logger.debug(f"Geweke: проход {i}/{sweeps}")

    forward_mean = forward_values.mean(axis=0)
    forward_se = forward_values.std(axis=0, ddof=1) / np.sqrt(forward_draws)
    chain_mean = chain_values.mean(axis=0)
    chain_se = np.array([batch_means_se(chain_values[:, k]) for k in range(chain_values.shape[1])])
    z = (forward_mean - chain_mean) / np.sqrt(forward_se ** 2 + chain_se ** 2)
    logger.info(f"Geweke: max |z| = {np.max(np.abs(z)):.2f} по {len(z)} тестовым функциям")
    return GewekeResult(names=list(GEWEKE_TEST_FUNCTIONS), z_scores=z, forward_means=forward_mean,
                        successive_means=chain_mean, sweeps=sweeps)


def mutated_geweke_test(cfg: Optional[GewekeConfig], sweeps: int, seed: int,
                        forward_draws: Optional[int] = None) -> GewekeResult:
    return geweke_joint_test(cfg, sweeps, seed, forward_draws=forward_draws, sampler_class=HalvedScaleSampler)
