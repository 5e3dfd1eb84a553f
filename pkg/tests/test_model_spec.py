#!/usr/bin/env python3
"""
Тесты описания модели: сборка блоков, обязательные члены, предиктор
"""

import sys
import os
import unittest
from unittest.mock import patch

import numpy as np
import pandas as pd

sys.path.append(os.path.dirname(os.path.dirname(__file__)))

from src.errors import DataError, DomainError, NumericalError
from src.model_spec import (
    CovariateSpec,
    HyperDefaults,
    MandatoryTerm,
    ModelSpec,
    SamplerConfig,
    back_transform,
    build_blocks,
    evaluate_predictor,
    posterior_inclusion_prior,
    predictor_vector,
    standardize,
)


def make_frame(n: int = 60, seed: int = 1) -> pd.DataFrame:
    rng = np.random.default_rng(seed)
    x1 = rng.uniform(2.0, 12.0, size=n)
    x2 = rng.uniform(-1.0, 1.0, size=n)
    year = np.array(["2016", "2017", "2018"])[np.arange(n) % 3]
    y = 1.0 + 0.5 * x1 + np.sin(3.0 * x2) + rng.standard_normal(n)
    return pd.DataFrame({"y": y, "x1": x1, "x2": x2, "year": year})


def make_spec(**overrides) -> ModelSpec:
    options = dict(
        response="y",
        covariates=(CovariateSpec("x1"), CovariateSpec("x2", kind="nonlinear")),
        mandatory_terms=(MandatoryTerm("year", "2016"),),
        quantiles=(0.5, 0.9),
    )
    options.update(overrides)
    return ModelSpec(**options)


class TestSettings(unittest.TestCase):
    """Тесты гиперпараметров и настроек сэмплера"""

    def test_hyper_defaults(self):
        """Тест значений по умолчанию и проверки гиперпараметров"""
        hyper = HyperDefaults()
        self.assertEqual((hyper.a, hyper.a0, hyper.b0, hyper.alpha, hyper.c), (5.0, 1.0, 1.0, 0.1, 0.1))
        with self.assertRaises(DomainError):
            HyperDefaults(a=0.0)
        with self.assertRaises(DomainError):
            HyperDefaults(alpha=1.0)
        self.assertAlmostEqual(posterior_inclusion_prior(1.0, 1.0), 0.5)

    def test_sampler_config(self):
        """Тест burn_in < iterations и числа сохраняемых проходов"""
        with self.assertRaises(DomainError):
            SamplerConfig(iterations=100, burn_in=100)
        self.assertEqual(SamplerConfig(iterations=11, burn_in=10, thin=1).num_stored, 1)
        self.assertEqual(SamplerConfig(iterations=12000, burn_in=2000, thin=10).num_stored, 1000)

    def test_quantiles_validation(self):
        """Тест проверки списка квантилей"""
        with self.assertRaises(DomainError):
            make_spec(quantiles=(0.9, 0.5))
        with self.assertRaises(DomainError):
            make_spec(quantiles=(0.0, 0.5))
        with self.assertRaises(DomainError):
            make_spec(quantiles=())

    def test_duplicate_names(self):
        """Тест отказа при повторе имени ковариаты"""
        with self.assertRaises(DomainError):
            make_spec(covariates=(CovariateSpec("x1"), CovariateSpec("x1", kind="linear")))
        with self.assertRaises(DomainError):
            CovariateSpec("x1", kind="spline")


class TestBuildBlocks(unittest.TestCase):
    """Тесты сборки блоков"""

    def setUp(self):
        self.frame = make_frame()
        self.model = build_blocks(self.frame, make_spec())

    def test_blocks(self):
        """Тест состава блоков"""
        ids = [block.id for block in self.model.blocks]
        self.assertEqual(ids, ["x1:linear", "x1:nonlinear", "x2:nonlinear"])
        self.assertTrue(all(block.selectable for block in self.model.blocks))
        self.assertEqual(self.model.n, 60)
        self.assertEqual(self.model.standardization["x1"], (float(self.frame.x1.min()), float(self.frame.x1.max())))
        print(f"✅ Собрано блоков: {len(ids)}")

    def test_nine_covariates_with_years(self):
        """Тест: 9 разложенных ковариат и 4 года дают 18 блоков и 4 обязательных столбца"""
        rng = np.random.default_rng(9)
        n = 120
        names = [f"x{k}" for k in range(1, 10)]
        frame = pd.DataFrame({name: rng.uniform(size=n) for name in names})
        frame["y"] = rng.standard_normal(n)
        frame["year"] = np.array(["2016", "2017", "2018", "2019"])[np.arange(n) % 4]
        spec = ModelSpec(response="y", covariates=tuple(CovariateSpec(name) for name in names),
                         mandatory_terms=(MandatoryTerm("year", "2016"),), quantiles=(0.6, 0.8, 0.9))
        model = build_blocks(frame, spec)
        self.assertEqual(len(model.blocks), 18)
        self.assertEqual(sum(block.part == "nonlinear" for block in model.blocks), 9)
        self.assertEqual(model.mandatory_design.shape, (n, 4))
        self.assertEqual(model.mandatory_names, ["intercept", "year[2017]", "year[2018]", "year[2019]"])
        self.assertEqual({block.rank for block in model.blocks}, {1, 7})

    def test_penalty_rank_mismatch(self):
        """Тест отказа, если численный ранг штрафа расходится с ожидаемым"""
        with patch("src.model_spec.penalty_rank", return_value=0):
            with self.assertRaises(NumericalError) as ctx:
                build_blocks(self.frame, make_spec())
        self.assertEqual(ctx.exception.block_id, "x1:linear")

    def test_mandatory_dummies(self):
        """Тест фиктивных переменных без опорного уровня"""
        self.assertEqual(self.model.mandatory_names, ["intercept", "year[2017]", "year[2018]"])
        self.assertEqual(self.model.mandatory_design.shape, (60, 3))
        np.testing.assert_array_equal(self.model.mandatory_design[:3, 1:], [[0, 0], [1, 0], [0, 1]])

    def test_missing_column(self):
        """Тест отказа при отсутствующей колонке"""
        with self.assertRaises(DataError):
            build_blocks(self.frame.drop(columns=["x2"]), make_spec())

    def test_missing_reference_level(self):
        """Тест отказа при отсутствии опорного уровня"""
        with self.assertRaises(DataError):
            build_blocks(self.frame, make_spec(mandatory_terms=(MandatoryTerm("year", "2015"),)))

    def test_constant_covariate(self):
        """Тест отказа для постоянной ковариаты"""
        frame = self.frame.assign(x2=1.0)
        with self.assertRaises(DataError):
            build_blocks(frame, make_spec())

    def test_rows_with_missing_values(self):
        """Тест удаления строк с пропусками"""
        frame = self.frame.copy()
        frame.loc[[0, 5], "x1"] = np.nan
        model = build_blocks(frame, make_spec())
        self.assertEqual(model.dropped_rows, 2)
        self.assertEqual(model.n, 58)


class TestPredictor(unittest.TestCase):
    """Тесты вычисления предиктора"""

    def setUp(self):
        self.frame = make_frame()
        self.model = build_blocks(self.frame, make_spec())
        rng = np.random.default_rng(7)
        for block in self.model.blocks:
            block.state.beta_tilde = rng.standard_normal(block.dimension)
            block.state.zeta2 = 2.0
        self.mandatory = np.array([1.0, -0.5, 0.25])

    def test_standardize_roundtrip(self):
        """Тест стандартизации и обратного преобразования"""
        z, entry = standardize(self.frame.x1)
        self.assertAlmostEqual(float(z.min()), 0.0)
        self.assertAlmostEqual(float(z.max()), 1.0)
        np.testing.assert_allclose(back_transform(z, entry), self.frame.x1)

    def test_row_index_matches_vector(self):
        """Тест: eta по индексу строки совпадает с вектором предиктора"""
        eta = predictor_vector(self.model, self.model.blocks, self.mandatory)
        for row in (0, 17, 59):
            self.assertAlmostEqual(evaluate_predictor(self.model, self.model.blocks, self.mandatory, row),
                                   eta[row], places=10)

    def test_new_row_in_original_units(self):
        """Тест: строка в исходных единицах даёт тот же eta"""
        eta = predictor_vector(self.model, self.model.blocks, self.mandatory)
        record = self.frame.iloc[4]
        row = {"x1": record.x1, "x2": record.x2, "year": record.year}
        self.assertAlmostEqual(evaluate_predictor(self.model, self.model.blocks, self.mandatory, row),
                               eta[4], places=10)
        print("✅ Предиктор в исходных единицах совпадает")

    def test_extrapolation_refused(self):
        """Тест отказа при экстраполяции"""
        row = {"x1": float(self.frame.x1.max()) + 1.0, "x2": 0.0, "year": "2017"}
        with self.assertRaises(DomainError):
            evaluate_predictor(self.model, self.model.blocks, self.mandatory, row)

    def test_unknown_level(self):
        """Тест отказа при неизвестном уровне категории"""
        row = {"x1": float(self.frame.x1.mean()), "x2": 0.0, "year": "1999"}
        with self.assertRaises(DomainError):
            evaluate_predictor(self.model, self.model.blocks, self.mandatory, row)


if __name__ == "__main__":
    unittest.main(verbosity=2)
