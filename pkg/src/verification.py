#!/usr/bin/env python3
"""
Наборы приёмочных проверок для команды verify: distributions, geweke,
qr-mode, calibration, selection
"""

import logging
import time
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional

import numpy as np
from scipy import stats

from .data_processing import write_json
from .distributions import (
    GigParams,
    ald_cdf,
    derive_stream,
    sample_gig,
    sample_inverse_gaussian,
    sample_sqrt_beta_prime,
    simulate_ald_mixture,
)
from .elicitation import DEFAULT_DRAWS, MIN_DRAWS, apply_elicitation, elicit_blocks
from .errors import DomainError, VerificationError
from .gibbs import ald_posterior_mode, run_chain
from .model_spec import CovariateSpec, HyperDefaults, ModelSpec, SamplerConfig, build_blocks
from .oracle import GewekeConfig, geweke_joint_test, linear_qr_exact, mutated_geweke_test, numeric_cdf
from .scenarios import simulate, true_quantile
from .summaries import below_fraction, fitted_quantiles, inclusion_probabilities

logger = logging.getLogger(__name__)

KS_LEVEL = 0.01
GIG_CASES = ({"p": -3.0, "a": 2.0, "b": 1.0}, {"p": 0.0, "a": 1.0, "b": 1.0}, {"p": 0.5, "a": 2.0, "b": 3.0})
INVERSE_GAUSSIAN_CASES = ({"mean": 1.0, "shape": 2.0}, {"mean": 0.5, "shape": 4.0})
CALIBRATION_QUANTILES = (0.6, 0.8, 0.9)
CALIBRATION_TOLERANCE = 0.03
SIGNAL_PARTS = (("x1", "linear"), ("x2", "nonlinear"))
NOISE_PARTS = (("x3", "linear"), ("x3", "nonlinear"), ("x4", "linear"), ("x4", "nonlinear"))


def _check(name: str, passed: bool, **details: Any) -> Dict[str, Any]:
    level = logging.INFO if passed else logging.WARNING
    logger.log(level, f"{'OK' if passed else 'FAIL'} {name}")
    return {"name": name, "passed": bool(passed), **details}


def _ks_check(name: str, draws: np.ndarray, cdf: Callable[[np.ndarray], np.ndarray]) -> Dict[str, Any]:
    result = stats.kstest(draws, cdf)
    return _check(name, result.pvalue >= KS_LEVEL, statistic=float(result.statistic), p_value=float(result.pvalue))


def suite_distributions(seed: int, draws: int = 100_000, **_: Any) -> List[Dict[str, Any]]:
    """KS-тесты генераторов против численных функций распределения и тождество смеси ALD"""
    checks = []
    for k, params in enumerate(GIG_CASES):
        sample = sample_gig(GigParams(**params), derive_stream(seed, 1, k), size=draws)
        checks.append(_ks_check(f"gig{params}", sample, lambda x, p=params: numeric_cdf("gig", p, x)))
    for k, params in enumerate(INVERSE_GAUSSIAN_CASES):
        sample = sample_inverse_gaussian(params["mean"], params["shape"], derive_stream(seed, 2, k), size=draws)
        checks.append(_ks_check(f"inverse_gaussian{params}", sample,
                                lambda x, p=params: numeric_cdf("inverse_gaussian", p, x)))
    sample = sample_sqrt_beta_prime(5.0, derive_stream(seed, 3), size=draws) ** 2
    checks.append(_ks_check("beta_prime(0.5, 5)", sample,
                            lambda x: numeric_cdf("beta_prime", {"alpha": 0.5, "beta": 5.0}, x)))

    for k, tau in enumerate(CALIBRATION_QUANTILES):
        sample = simulate_ald_mixture(0.0, 1.0, tau, draws, derive_stream(seed, 4, k))
        checks.append(_ks_check(f"ald_mixture(tau={tau})", sample, lambda x, t=tau: ald_cdf(x, 0.0, 1.0, t)))
        share = float(np.mean(sample <= 0.0))
        checks.append(_check(f"ald_below_eta(tau={tau})", abs(share - tau) <= 0.01, share=share))
    return checks


def suite_geweke(seed: int, sweeps: int = 200_000, **_: Any) -> List[Dict[str, Any]]:
    """Совместный тест на редуцированной модели и проверка его чувствительности"""
    cfg = GewekeConfig()
    result = geweke_joint_test(cfg, sweeps, seed)
    checks = [_check("geweke_correct_sampler", result.max_abs_z() < 3.0, **result.to_dict())]
    mutated = mutated_geweke_test(cfg, max(sweeps // 4, 10_000), seed)
    checks.append(_check("geweke_detects_halved_step4", mutated.max_abs_z() > 5.0, **mutated.to_dict()))
    return checks


def suite_qr_mode(seed: int, instances: int = 5, **_: Any) -> List[Dict[str, Any]]:
    """Мода ALD-апостериорного против точного минимизатора функции потерь"""
    checks = []
    for k in range(instances):
        rng = derive_stream(seed, 5, k)
        x = rng.uniform(size=15)
        X = np.column_stack((np.ones(15), x))
        y = 1.0 + 2.0 * x + rng.standard_normal(15)
        for tau in (0.5, 0.8):
            exact = linear_qr_exact(X, y, tau)
            mode = ald_posterior_mode(X, y, tau)
            gap = float(np.max(np.abs(exact - mode)))
            checks.append(_check(f"qr_mode[{k}](tau={tau})", gap <= 1e-2, max_abs_diff=gap,
                                 exact=exact.tolist(), mode=mode.tolist()))
    return checks


def suite_calibration(seed: int, n: int = 1000, iterations: int = 3000, **_: Any) -> List[Dict[str, Any]]:
    """
    Доля y не выше подогнанного квантиля на гетероскедастичном сценарии.
    В отчёт также идут доля под истинным квантилем и средняя ошибка eta.
    """
    frame, _truth = simulate("heteroskedastic-linear", seed, n)
    spec = ModelSpec(
        response="y",
        covariates=(CovariateSpec("x1", kind="linear"),),
        quantiles=CALIBRATION_QUANTILES,
        hyper=HyperDefaults(),
        sampler=SamplerConfig(iterations=iterations, burn_in=iterations // 3, thin=5, seed=seed, num_chains=1),
    )
    model = build_blocks(frame, spec)
    apply_elicitation(model.blocks, elicit_blocks(model.blocks, seed, MIN_DRAWS))
    checks = []
    for k, tau in enumerate(spec.quantiles):
        draws = run_chain(model, tau, spec.sampler, spec.hyper, derive_stream(seed, k, 0))
        eta = fitted_quantiles([draws])["eta_mean"].to_numpy()
        share = below_fraction(model.y, eta)
        truth = true_quantile("heteroskedastic-linear", frame, tau)
        checks.append(_check(f"calibration(tau={tau})", abs(share - tau) <= CALIBRATION_TOLERANCE, share=share,
                             truth_share=below_fraction(model.y, truth),
                             truth_mae=float(np.mean(np.abs(eta - truth)))))
    return checks


def suite_selection(seed: int, replicates: int = 10, n: int = 500, iterations: int = 3000,
                    **_: Any) -> List[Dict[str, Any]]:
    """Восстановление разреженной структуры: повторные подгонки sparse-nonlinear при tau = 0.5"""
    signal_hits = 0
    noise_hits = 0
    checks = []
    for k in range(replicates):
        replicate_seed = seed + k
        frame, _truth = simulate("sparse-nonlinear", replicate_seed, n)
        spec = ModelSpec(
            response="y",
            covariates=tuple(CovariateSpec(f"x{j}") for j in range(1, 5)),
            quantiles=(0.5,),
            sampler=SamplerConfig(iterations=iterations, burn_in=iterations // 3, thin=5,
                                  seed=replicate_seed, num_chains=1),
        )
        model = build_blocks(frame, spec)
        apply_elicitation(model.blocks, elicit_blocks(model.blocks, replicate_seed, DEFAULT_DRAWS))
        draws = run_chain(model, 0.5, spec.sampler, spec.hyper, derive_stream(replicate_seed, 0, 0))
        table = inclusion_probabilities([draws])
        prob = {(row.covariate, row.part): float(row.inclusion_prob) for row in table.itertuples()}
        signal_ok = all(prob[part] > 0.5 for part in SIGNAL_PARTS)
        noise_ok = all(prob[part] < 0.5 for part in NOISE_PARTS)
        signal_hits += signal_ok
        noise_hits += noise_ok
        logger.info(f"Повтор {k}: сигнал {signal_ok}, шум {noise_ok}")
    required = int(np.ceil(0.9 * replicates))
    checks.append(_check("selection_signal_parts", signal_hits >= required, hits=signal_hits, replicates=replicates))
    checks.append(_check("selection_noise_parts", noise_hits >= required, hits=noise_hits, replicates=replicates))
    return checks


SUITES: Dict[str, Callable[..., List[Dict[str, Any]]]] = {
    "distributions": suite_distributions,
    "geweke": suite_geweke,
    "qr-mode": suite_qr_mode,
    "calibration": suite_calibration,
    "selection": suite_selection,
}


def run_suite(name: str, seed: int = 20240101, report_path: Optional[Path] = None, **options: Any) -> Dict[str, Any]:
    """
    Выполняет набор и пишет JSON-отчёт; при любом непройденном пункте
    поднимает VerificationError (после записи отчёта).
    """
    if name not in SUITES:
        raise DomainError(f"Неизвестный набор '{name}', доступны: {sorted(SUITES)}", suite=name)
    started = time.perf_counter()
    checks = SUITES[name](seed, **{k: v for k, v in options.items() if v is not None})
    report = {
        "suite": name,
        "seed": seed,
        "passed": all(check["passed"] for check in checks),
        "seconds": round(time.perf_counter() - started, 3),
        "checks": checks,
    }
    if report_path is not None:
        write_json(report, Path(report_path))
        logger.info(f"Отчёт проверки записан в {report_path}")
    if not report["passed"]:
        failed = [check["name"] for check in checks if not check["passed"]]
        raise VerificationError(f"Набор '{name}' не пройден", failed=failed)
    return report
