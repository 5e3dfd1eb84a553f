#!/usr/bin/env python3
"""
Тесты элиситации гиперпараметров b и r
"""

import sys
import os
import tempfile
import unittest
from pathlib import Path

import numpy as np
import pandas as pd

sys.path.append(os.path.dirname(os.path.dirname(__file__)))

from src.distributions import derive_stream, sample_sqrt_beta_prime
from src.elicitation import (
    CHUNK_SIZE,
    MIN_DRAWS,
    apply_elicitation,
    elicit_block,
    elicit_blocks,
    forward_supnorm_probability,
    load_elicitation,
    prior_coefficient_draws,
    save_elicitation,
    simulate_supnorm,
    solve_slab_scale,
    solve_spike_factor,
)
from src.errors import DomainError
from src.model_spec import CovariateSpec, ModelSpec, build_blocks


def make_model(n: int = 200, seed: int = 2, **covariate_options):
    rng = np.random.default_rng(seed)
    frame = pd.DataFrame({"y": rng.standard_normal(n), "x1": rng.uniform(size=n), "x2": rng.uniform(size=n)})
    covariates = (CovariateSpec("x1", **covariate_options), CovariateSpec("x2", kind="linear", selectable=False))
    return build_blocks(frame, ModelSpec(response="y", covariates=covariates, quantiles=(0.5,)))


class TestFormulas(unittest.TestCase):
    """Тесты формул b и r"""

    def test_slab_scale(self):
        """Тест b = c^2 / (2 q*^2)"""
        sample = np.linspace(0.0, 2.0, 101)
        q_slab = np.quantile(sample, 0.1)
        self.assertAlmostEqual(solve_slab_scale(0.1, 0.1, sample), 0.01 / (2.0 * q_slab ** 2))

    def test_spike_factor(self):
        """Тест r = c^2 / (2 b q**^2)"""
        sample = np.linspace(0.0, 2.0, 101)
        b = solve_slab_scale(0.1, 0.1, sample)
        q_spike = np.quantile(sample, 0.9)
        r = solve_spike_factor(0.1, 0.1, b, sample)
        self.assertAlmostEqual(r, 0.01 / (2.0 * b * q_spike ** 2))
        self.assertLess(r, 1.0)
        print(f"✅ b={b:.5g}, r={r:.5g}")

    def test_spike_not_narrower_warns(self):
        """Тест предупреждения при r >= 1"""
        sample = np.full(100, 1.0)
        with self.assertLogs("src.elicitation", level="WARNING"):
            r = solve_spike_factor(0.1, 0.1, 0.001, sample, block_id="x1:linear")
        self.assertGreaterEqual(r, 1.0)

    def test_invalid_arguments(self):
        """Тест отказа при некорректных c и alpha"""
        with self.assertRaises(DomainError):
            solve_slab_scale(0.0, 0.1, [1.0])
        with self.assertRaises(DomainError):
            solve_slab_scale(0.1, 1.0, [1.0])
        with self.assertRaises(DomainError):
            solve_slab_scale(0.1, 0.1, [])


class TestSimulation(unittest.TestCase):
    """Тесты симуляции sup-нормы"""

    def setUp(self):
        self.model = make_model()
        self.linear, self.nonlinear, self.fixed = self.model.blocks

    def test_prior_draws_satisfy_constraint(self):
        """Тест: априорные розыгрыши лежат на {A beta = 0}"""
        draws = prior_coefficient_draws(self.nonlinear, 500, derive_stream(1))
        self.assertEqual(draws.shape, (9, 500))
        self.assertLess(float(np.abs(self.nonlinear.constraint @ draws).max()), 1e-8)

    def test_prior_draws_centered_on_data(self):
        """Тест: априорные нелинейные эффекты имеют нулевое среднее по наблюдениям"""
        nonlinear = make_model(n=500, seed=11).blocks[1]
        draws = prior_coefficient_draws(nonlinear, 2000, derive_stream(6))
        means = (nonlinear.design @ draws).mean(axis=0)
        self.assertLess(float(np.abs(means).max()), 1e-8)
        # розыгрыши заполняют всё подпространство размерности D - 2
        self.assertEqual(np.linalg.matrix_rank(draws), 7)

    def test_linear_supnorm_identity(self):
        """Тест: для линейного блока на [0, 1] sup-норма равна 0.5 |zeta_tilde beta_tilde|"""
        x = np.linspace(0.0, 1.0, 201)
        frame = pd.DataFrame({"y": np.zeros(201), "x1": x})
        spec = ModelSpec(response="y", covariates=(CovariateSpec("x1", kind="linear"),), quantiles=(0.5,))
        block = build_blocks(frame, spec).blocks[0]
        sample = simulate_supnorm(block, 5.0, MIN_DRAWS, derive_stream(31))
        rng = derive_stream(31)
        expected = []
        for _ in range(MIN_DRAWS // CHUNK_SIZE):
            beta = prior_coefficient_draws(block, CHUNK_SIZE, rng)[0]
            scale = sample_sqrt_beta_prime(5.0, rng, size=CHUNK_SIZE)
            expected.append(0.5 * np.abs(scale * beta))
        np.testing.assert_allclose(sample, np.concatenate(expected), rtol=1e-12)

    def test_supnorm_repeatable_across_seeds(self):
        """Тест: при 10^5 розыгрышах медиана и верхний квантиль стабильны до 2%"""
        first = simulate_supnorm(self.nonlinear, 5.0, 100_000, derive_stream(41))
        second = simulate_supnorm(self.nonlinear, 5.0, 100_000, derive_stream(42))
        for prob in (0.5, 0.9):
            ratio = np.quantile(first, prob) / np.quantile(second, prob)
            self.assertAlmostEqual(float(ratio), 1.0, delta=0.02)

    def test_default_block_fixture(self):
        """Тест (b, r) для блока D = 9 при a = 5, c = alpha = 0.1"""
        self.assertEqual((self.nonlinear.a, self.nonlinear.c, self.nonlinear.alpha), (5.0, 0.1, 0.1))
        result = elicit_block(self.nonlinear, derive_stream(3, 1), num_draws=100_000)
        sample = simulate_supnorm(self.nonlinear, 5.0, 100_000, derive_stream(3, 1))
        q_slab, q_spike = np.quantile(sample, 0.1), np.quantile(sample, 0.9)
        self.assertAlmostEqual(result.q_slab, float(q_slab), places=12)
        self.assertAlmostEqual(result.q_spike, float(q_spike), places=12)
        self.assertAlmostEqual(result.b / (0.01 / (2.0 * q_slab ** 2)), 1.0, places=10)
        self.assertAlmostEqual(result.r / (q_slab / q_spike) ** 2, 1.0, places=10)
        self.assertTrue(1e-5 < result.r < 0.05)
        self.assertGreater(result.b, 0.0)
        print(f"✅ D = 9: b={result.b:.5g}, r={result.r:.5g}")

    def test_scaling_in_c(self):
        """Тест: b пропорционально c^2, r от c не зависит"""
        sample = simulate_supnorm(self.nonlinear, 5.0, MIN_DRAWS, derive_stream(8))
        b_small = solve_slab_scale(0.1, 0.1, sample)
        b_large = solve_slab_scale(0.2, 0.1, sample)
        self.assertAlmostEqual(b_large / b_small, 4.0, places=10)
        r_small = solve_spike_factor(0.1, 0.1, b_small, sample)
        r_large = solve_spike_factor(0.2, 0.1, b_large, sample)
        self.assertAlmostEqual(r_large / r_small, 1.0, places=10)

    def test_too_few_draws(self):
        """Тест отказа при числе розыгрышей меньше минимума"""
        with self.assertRaises(DomainError):
            simulate_supnorm(self.linear, 5.0, MIN_DRAWS - 1, derive_stream(2))

    def test_deterministic_blocks(self):
        """Тест: одинаковый сид даёт одинаковые (b, r); фиксированные блоки пропускаются"""
        first = elicit_blocks(self.model.blocks, seed=5, num_draws=MIN_DRAWS)
        second = elicit_blocks(self.model.blocks, seed=5, num_draws=MIN_DRAWS)
        self.assertEqual([res.block_id for res in first], ["x1:linear", "x1:nonlinear"])
        self.assertEqual([(r.b, r.r) for r in first], [(r.b, r.r) for r in second])

    def test_covariate_override(self):
        """Тест собственного c ковариаты"""
        model = make_model(c=0.3)
        self.assertEqual(model.blocks[0].c, 0.3)
        self.assertEqual(model.blocks[2].c, 0.1)

    def test_apply_and_persist(self):
        """Тест применения и сохранения результатов"""
        results = elicit_blocks(self.model.blocks, seed=5, num_draws=MIN_DRAWS)
        apply_elicitation(self.model.blocks, results)
        self.assertEqual(self.linear.b, results[0].b)
        self.assertIsNone(self.fixed.b)
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "elicitation.json"
            save_elicitation(results, path, meta={"seed": 5})
            stored = load_elicitation(path)
        self.assertEqual(stored["meta"], {"seed": 5})
        self.assertEqual(stored["results"], results)

    def test_apply_missing_block(self):
        """Тест отказа, если для блока нет результата"""
        results = elicit_blocks(self.model.blocks[:1], seed=5, num_draws=MIN_DRAWS)
        with self.assertRaises(DomainError):
            apply_elicitation(self.model.blocks, results)

    def test_forward_probabilities(self):
        """Тест: прямая симуляция воспроизводит заданные вероятности"""
        for k, block in enumerate((self.linear, self.nonlinear)):
            result = elicit_block(block, derive_stream(3, k), num_draws=100_000)
            slab = forward_supnorm_probability(block, result.b, result.r, 1, 100_000, derive_stream(4, k))
            spike = forward_supnorm_probability(block, result.b, result.r, 0, 100_000, derive_stream(5, k))
            self.assertAlmostEqual(slab, block.alpha, delta=0.02)
            self.assertAlmostEqual(spike, 1.0 - block.alpha, delta=0.02)
            print(f"✅ {block.id}: P(sup <= c | slab) = {slab:.3f}, P(sup <= c | spike) = {spike:.3f}")


if __name__ == "__main__":
    unittest.main(verbosity=2)
