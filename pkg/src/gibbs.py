#!/usr/bin/env python3
"""
Сэмплер Гиббса для отбора эффектов в аддитивной квантильной регрессии.

За один проход: для каждого блока шаги 1-5 (коэффициенты, важность,
индикатор, гипердисперсия, вероятность включения), затем шаг 6 (латентные
веса) и шаг 7 (масштаб delta^2).
"""

import logging
import time
from dataclasses import dataclass, field
from typing import Dict, List, Sequence

import numpy as np
from scipy import optimize, special

from .distributions import (
    GigParams,
    QuantileConstants,
    RandomStream,
    gig_order,
    normal_log_density,
    quantile_constants,
    sample_beta,
    sample_bernoulli,
    sample_constrained_mvn,
    sample_gamma,
    sample_gig,
    sample_inverse_gamma,
    sample_inverse_gaussian,
    sample_mvn_canonical,
)
from .errors import DomainError, NumericalError
from .model_spec import (
    BuiltModel,
    EffectBlock,
    HyperDefaults,
    SamplerConfig,
    posterior_inclusion_prior,
    predictor_vector,
)

logger = logging.getLogger(__name__)

RESIDUAL_CLAMP = 1e-10


@dataclass
class ChainState:
    blocks: List[EffectBlock]
    mandatory: np.ndarray
    w: np.ndarray
    delta2: float
    eta: np.ndarray


@dataclass
class PosteriorDraws:
    """Прореженные пост-burn-in проекции состояния одной цепи"""

    tau: float
    chain: int
    seed: int
    block_ids: List[str]
    selectable_ids: List[str]
    covariates: Dict[str, str]
    parts: Dict[str, str]
    sweeps: np.ndarray
    gamma: np.ndarray
    zeta2: np.ndarray
    psi2: np.ndarray
    omega: np.ndarray
    delta2: np.ndarray
    mandatory: np.ndarray
    mandatory_names: List[str]
    eta: np.ndarray
    coefficients: Dict[str, np.ndarray] = field(repr=False)
    max_constraint_violation: float = 0.0

    @property
    def num_draws(self) -> int:
        return self.sweeps.shape[0]

    def scalar_columns(self) -> Dict[str, np.ndarray]:
        """Скалярные величины по столбцам для draws.csv и диагностики"""
        columns = {}
        for j, block_id in enumerate(self.selectable_ids):
            columns[f"gamma[{block_id}]"] = self.gamma[:, j]
            columns[f"zeta2[{block_id}]"] = self.zeta2[:, j]
            columns[f"psi2[{block_id}]"] = self.psi2[:, j]
            columns[f"omega[{block_id}]"] = self.omega[:, j]
        columns["delta2"] = self.delta2
        for k, name in enumerate(self.mandatory_names):
            columns[f"mandatory[{name}]"] = self.mandatory[:, k]
        return columns


def _spike_factor(block: EffectBlock) -> float:
    return 1.0 if block.state.gamma == 1 else block.r


def _weighted_system(design: np.ndarray, target: np.ndarray, w: np.ndarray, scale: float):
    weighted = design.T / w
    return scale * weighted @ design, scale * weighted @ target


def step_coefficients(block: EffectBlock, state: ChainState, y: np.ndarray,
                      constants: QuantileConstants, rng: RandomStream,
                      mandatory_precision: float = 1e-6) -> np.ndarray:
    """
    Шаг 1: beta = zeta * beta_tilde из ограниченного гауссовского полного
    условного. Априорная точность (K + A'A) / zeta^2 для выбираемых блоков;
    добавка A'A не меняет распределение на {A beta = 0}.
    """
    old = block.contribution()
    eta_rest = state.eta - old
    scale = state.delta2 / constants.sigma2
    data_precision, linear = _weighted_system(block.design, y - constants.xi * state.w - eta_rest,
                                              state.w, scale)
    prior = block.penalty + block.constraint.T @ block.constraint
    if block.selectable:
        prior = prior / block.state.zeta2
    else:
        prior = prior * mandatory_precision
    beta = sample_constrained_mvn(prior + data_precision, linear, block.constraint, rng, block_id=block.id)
    block.state.beta_tilde = beta / block.zeta
    state.eta = eta_rest + block.design @ beta
    return block.state.beta_tilde


def step_mandatory(state: ChainState, design: np.ndarray, y: np.ndarray, constants: QuantileConstants,
                   rng: RandomStream, precision: float) -> np.ndarray:
    """Шаг 1 для обязательных коэффициентов с диффузным гауссовским априорным"""
    if design.shape[1] == 0:
        return state.mandatory
    eta_rest = state.eta - design @ state.mandatory
    scale = state.delta2 / constants.sigma2
    data_precision, linear = _weighted_system(design, y - constants.xi * state.w - eta_rest, state.w, scale)
    prior = precision * np.eye(design.shape[1])
    state.mandatory = sample_mvn_canonical(prior + data_precision, linear, rng, block_id="mandatory")
    state.eta = eta_rest + design @ state.mandatory
    return state.mandatory


def step_importance(block: EffectBlock, rng: RandomStream) -> float:
    """
    Шаг 2: zeta^2 ~ GIG(p = -rank/2 + 1/2, a = 1 / (r(gamma) psi^2), b = beta' K beta)
    при фиксированном beta; затем beta_tilde = beta / zeta_new.
    """
    beta = block.coefficients
    quad = float(beta @ block.penalty @ beta)
    rate_term = 1.0 / (_spike_factor(block) * block.state.psi2)
    if quad <= 0.0:
        zeta2 = float(sample_gamma(0.5, 0.5 * rate_term, rng))
    else:
        zeta2 = float(sample_gig(GigParams(p=gig_order(block.rank), a=rate_term, b=quad), rng))
    block.state.zeta2 = zeta2
    block.state.beta_tilde = beta / np.sqrt(zeta2)
    return zeta2


def inclusion_probability(block: EffectBlock) -> float:
    """P(gamma = 1 | ...) = (1 + phi(zeta; 0, r psi^2)(1 - omega) / (phi(zeta; 0, psi^2) omega))^-1"""
    zeta = np.sqrt(block.state.zeta2)
    psi2, omega = block.state.psi2, block.state.omega
    with np.errstate(divide="ignore"):
        log_odds = (normal_log_density(zeta, psi2) + np.log(omega)
                    - normal_log_density(zeta, block.r * psi2) - np.log1p(-omega))
    return float(special.expit(log_odds))


def step_indicator(block: EffectBlock, rng: RandomStream) -> int:
    """Шаг 3"""
    block.state.gamma = sample_bernoulli(inclusion_probability(block), rng)
    return block.state.gamma


def step_hypervariance(block: EffectBlock, rng: RandomStream) -> float:
    """Шаг 4: psi^2 ~ IG(a + 1/2, b + zeta^2 / (2 r(gamma)))"""
    scale = block.b + block.state.zeta2 / (2.0 * _spike_factor(block))
    block.state.psi2 = float(sample_inverse_gamma(block.a + 0.5, scale, rng))
    return block.state.psi2


def step_inclusion_prob(block: EffectBlock, rng: RandomStream) -> float:
    """Шаг 5: omega ~ Beta(a0 + gamma, b0 + 1 - gamma)"""
    gamma = block.state.gamma
    block.state.omega = float(sample_beta(block.a0 + gamma, block.b0 + 1 - gamma, rng))
    return block.state.omega


def step_weights(state: ChainState, y: np.ndarray, constants: QuantileConstants, rng: RandomStream) -> np.ndarray:
    """Шаг 6: 1/w_i ~ IG(sqrt((xi^2 + 2 sigma^2) / (y_i - eta_i)^2), delta^2 (xi^2 + 2 sigma^2) / sigma^2)"""
    residual = np.maximum(np.abs(y - state.eta), RESIDUAL_CLAMP)
    numerator = constants.xi ** 2 + 2.0 * constants.sigma2
    mean = np.sqrt(numerator) / residual
    shape = state.delta2 * numerator / constants.sigma2
    reciprocal = sample_inverse_gaussian(mean, shape, rng)
    if not np.all(np.isfinite(reciprocal)) or np.any(reciprocal <= 0):
        raise NumericalError("Неположительный обратный вес", step="step6")
    state.w = 1.0 / reciprocal
    return state.w


def step_scale(state: ChainState, y: np.ndarray, constants: QuantileConstants, hyper: HyperDefaults,
               rng: RandomStream) -> float:
    """Шаг 7: delta^2 ~ Ga(a_delta + 3n/2, b_delta + sum((y - eta - xi w)^2 / w) / (2 sigma^2) + sum(w))"""
    n = y.shape[0]
    shape = hyper.a_delta + 1.5 * n
    rate = (hyper.b_delta
            + np.sum((y - state.eta - constants.xi * state.w) ** 2 / state.w) / (2.0 * constants.sigma2)
            + np.sum(state.w))
    state.delta2 = float(sample_gamma(shape, rate, rng))
    return state.delta2


class GibbsSampler:
    """Одна цепь для одного уровня tau; блоки клонируются и принадлежат цепи"""

    def __init__(self, model: BuiltModel, tau: float, config: SamplerConfig, hyper: HyperDefaults,
                 rng: RandomStream, chain: int = 0):
        self.model = model
        self.tau = tau
        self.config = config
        self.hyper = hyper
        self.rng = rng
        self.chain = chain
        self.constants = quantile_constants(tau, config.sigma_convention)
        self.y = model.y.copy()
        self.blocks = [block.clone() for block in model.blocks]
        for block in self.blocks:
            if block.selectable and (block.b is None or block.r is None):
                raise DomainError(f"Блок {block.id} не прошёл элиситацию (b, r)", block_id=block.id)
        self.state = self.initial_state()

    def initial_state(self) -> ChainState:
        for block in self.blocks:
            block.state.beta_tilde = np.zeros(block.dimension)
            block.state.zeta2 = 1.0
            block.state.gamma = 1
            if block.selectable:
                block.state.psi2 = block.b / (block.a - 1.0) if block.a > 1.0 else block.b
                block.state.omega = posterior_inclusion_prior(block.a0, block.b0)
        design = self.model.mandatory_design
        mandatory = np.zeros(design.shape[1])
        if design.shape[1]:
            mandatory = np.linalg.lstsq(design, self.y, rcond=None)[0]
        state = ChainState(blocks=self.blocks, mandatory=mandatory, w=np.ones(self.model.n),
                           delta2=1.0, eta=np.zeros(self.model.n))
        state.eta = predictor_vector(self.model, self.blocks, mandatory)
        return state

    def refresh_predictor(self) -> np.ndarray:
        self.state.eta = predictor_vector(self.model, self.blocks, self.state.mandatory)
        return self.state.eta

    def update_block(self, block: EffectBlock) -> None:
        step = "step1"
        try:
            step_coefficients(block, self.state, self.y, self.constants, self.rng,
                              mandatory_precision=self.hyper.mandatory_precision)
            if not block.selectable:
                return
            step = "step2"
            step_importance(block, self.rng)
            step = "step3"
            step_indicator(block, self.rng)
            step = "step4"
            self.update_hypervariance(block)
            step = "step5"
            step_inclusion_prob(block, self.rng)
        except NumericalError as exc:
            raise NumericalError(exc.message, block_id=block.id, step=step) from exc

    def update_hypervariance(self, block: EffectBlock) -> float:
        return step_hypervariance(block, self.rng)

    def sweep(self) -> None:
        try:
            step_mandatory(self.state, self.model.mandatory_design, self.y, self.constants, self.rng,
                           self.hyper.mandatory_precision)
        except NumericalError as exc:
            raise NumericalError(exc.message, block_id="mandatory", step="step1") from exc
        for block in self.blocks:
            self.update_block(block)
        self.refresh_predictor()
        step_weights(self.state, self.y, self.constants, self.rng)
        step_scale(self.state, self.y, self.constants, self.hyper, self.rng)

    def run(self) -> PosteriorDraws:
        """Выполняет config.iterations проходов и сохраняет прореженные проекции"""
        cfg = self.config
        stored_sweeps = list(range(cfg.burn_in, cfg.iterations, cfg.thin))
        num = len(stored_sweeps)
        selectable = [b for b in self.blocks if b.selectable]
        J, p, n = len(selectable), self.model.mandatory_design.shape[1], self.model.n
        gamma = np.zeros((num, J), dtype=int)
        zeta2, psi2, omega = np.zeros((num, J)), np.zeros((num, J)), np.zeros((num, J))
        delta2, mandatory, eta = np.zeros(num), np.zeros((num, p)), np.zeros((num, n))
        coefficients = {b.id: np.zeros((num, b.dimension)) for b in self.blocks}
        violation = 0.0

        started = time.perf_counter()
        slot = 0
        for sweep in range(cfg.iterations):
            try:
                self.sweep()
            except NumericalError as exc:
                logger.error(f"Цепь {self.chain}, tau={self.tau}: сбой на проходе {sweep}, шаг {exc.step}")
                raise NumericalError(exc.message, block_id=exc.block_id, sweep=sweep, step=exc.step) from exc
            if sweep % 1000 == 0:
                logger.debug(f"tau={self.tau}, цепь {self.chain}: проход {sweep}/{cfg.iterations}")
            if slot < num and sweep == stored_sweeps[slot]:
                for j, block in enumerate(selectable):
                    gamma[slot, j] = block.state.gamma
                    zeta2[slot, j] = block.state.zeta2
                    psi2[slot, j] = block.state.psi2
                    omega[slot, j] = block.state.omega
                for block in self.blocks:
                    coefficients[block.id][slot] = block.coefficients
                    if block.constraint.shape[0]:
                        violation = max(violation, float(np.abs(block.constraint @ block.state.beta_tilde).max()))
                delta2[slot] = self.state.delta2
                mandatory[slot] = self.state.mandatory
                eta[slot] = self.state.eta
                slot += 1

        logger.info(f"tau={self.tau}, цепь {self.chain}: {cfg.iterations} проходов за "
                    f"{time.perf_counter() - started:.1f} с, сохранено {num}")
        return PosteriorDraws(
            tau=self.tau,
            chain=self.chain,
            seed=cfg.seed,
            block_ids=[b.id for b in self.blocks],
            selectable_ids=[b.id for b in selectable],
            covariates={b.id: b.covariate for b in self.blocks},
            parts={b.id: b.part for b in self.blocks},
            sweeps=np.asarray(stored_sweeps, dtype=int),
            gamma=gamma,
            zeta2=zeta2,
            psi2=psi2,
            omega=omega,
            delta2=delta2,
            mandatory=mandatory,
            mandatory_names=list(self.model.mandatory_names),
            eta=eta,
            coefficients=coefficients,
            max_constraint_violation=violation,
        )


def run_chain(model: BuiltModel, tau: float, config: SamplerConfig, hyper: HyperDefaults,
              rng: RandomStream, chain: int = 0) -> PosteriorDraws:
    return GibbsSampler(model, tau, config, hyper, rng, chain=chain).run()


def _smoothed_check(u: np.ndarray, tau: float, h: float):
    root = np.sqrt(u ** 2 + h ** 2)
    return u * (tau - 0.5) + 0.5 * root, (tau - 0.5) + 0.5 * u / root


def ald_posterior_mode(X: np.ndarray, y: np.ndarray, tau: float, delta2: float = 1.0,
                       prior_precision: float = 1e-6,
                       smoothing: Sequence[float] = (1.0, 1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8)) -> np.ndarray:
    """
    Мода апостериорного распределения линейного предиктора при ALD-правдоподобии
    с фиксированным delta^2 и диффузным гауссовским априорным: минимизация
    delta^2 sum rho_tau(y - X beta) + prior_precision |beta|^2 / 2 со
    сглаживанием |u| ~ sqrt(u^2 + h^2) и убывающим h.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    beta = np.linalg.lstsq(X, y, rcond=None)[0]

    for h in smoothing:
        def objective(b):
            value, grad = _smoothed_check(y - X @ b, tau, h)
            return (delta2 * value.sum() + 0.5 * prior_precision * b @ b,
                    -delta2 * X.T @ grad + prior_precision * b)

        result = optimize.minimize(objective, beta, jac=True, method="BFGS", options={"gtol": 1e-10})
        beta = result.x
    return beta
