#!/usr/bin/env python3
"""
Тесты обработки данных
Проверка чтения CSV, описательной таблицы, файлов результатов и сценариев
"""
import sys
import os
import tempfile
import unittest
from pathlib import Path

import numpy as np
import pandas as pd

sys.path.append(os.path.dirname(os.path.dirname(__file__)))

from src.data_processing import (
    RunManifest,
    describe_draw_columns,
    describe_frame,
    file_checksum,
    load_csv,
    read_json,
    write_csv,
    write_json,
)
from src.errors import DataError, DomainError
from src.scenarios import SCENARIOS, simulate, true_quantile, write_scenario


class TestDataProcessing(unittest.TestCase):
    """Тесты обработки данных"""

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = Path(self.tmp.name)

    def tearDown(self):
        self.tmp.cleanup()

    def test_load_csv(self):
        """Тест чтения CSV с категориальной колонкой"""
        path = self.dir / "data.csv"
        path.write_text("y,x1,year\n1.5,0.2,2016\n2.5,0.4,2017\n", encoding="utf-8")
        frame = load_csv(path, categorical=["year"])
        self.assertEqual(len(frame), 2)
        self.assertEqual(list(frame["year"]), ["2016", "2017"])
        self.assertTrue(pd.api.types.is_float_dtype(frame["x1"]))

    def test_load_csv_errors(self):
        """Тест отсутствующего и пустого файла"""
        with self.assertRaises(DataError):
            load_csv(self.dir / "missing.csv")
        empty = self.dir / "empty.csv"
        empty.write_text("", encoding="utf-8")
        with self.assertRaises(DataError):
            load_csv(empty)
        header_only = self.dir / "header.csv"
        header_only.write_text("y,x1\n", encoding="utf-8")
        with self.assertRaises(DataError):
            load_csv(header_only)

    def test_describe_frame(self):
        """Тест описательной таблицы"""
        frame = pd.DataFrame({"x": [1.0, 2.0, 3.0, np.nan], "year": ["2016", "2016", "2017", "2017"]})
        table = describe_frame(frame, categorical=["year"])
        numeric = table[table.column == "x"].iloc[0]
        self.assertEqual(numeric["n"], 3)
        self.assertEqual(numeric["min"], 1.0)
        self.assertEqual(numeric["max"], 3.0)
        self.assertAlmostEqual(numeric["mean"], 2.0)
        self.assertAlmostEqual(numeric["sd"], 1.0)
        levels = table[table.column == "year"]
        self.assertEqual(list(levels["level"]), ["2016", "2017"])
        self.assertEqual(list(levels["n"]), [2, 2])
        print("✅ Описательная таблица построена")

    def test_csv_is_deterministic(self):
        """Тест: одинаковые таблицы дают одинаковые байты"""
        frame = pd.DataFrame({"a": [0.1, 1.0 / 3.0], "b": ["x", "y"]})
        first = write_csv(frame, self.dir / "first.csv")
        second = write_csv(frame.copy(), self.dir / "second.csv")
        self.assertEqual(file_checksum(first), file_checksum(second))
        self.assertEqual(first.read_text(encoding="utf-8").splitlines()[1], "0.1,x")

    def test_json_numpy_values(self):
        """Тест записи numpy-значений в JSON"""
        path = write_json({"n": np.int64(3), "x": np.float64(0.5), "v": np.arange(3), "p": Path("a/b")},
                          self.dir / "values.json")
        self.assertEqual(read_json(path), {"n": 3, "x": 0.5, "v": [0, 1, 2], "p": "a/b"})

    def test_manifest_lifecycle(self):
        """Тест манифеста: пишется при создании и дополняется"""
        manifest = RunManifest(self.dir / "manifest.json", {"config_hash": "abc"})
        self.assertEqual(read_json(self.dir / "manifest.json")["status"], "started")
        manifest.stage("load", 0.25)
        manifest.update(warnings=["удалено строк с пропусками: 2"])
        manifest.finalize()
        stored = read_json(self.dir / "manifest.json")
        self.assertEqual(stored["status"], "completed")
        self.assertEqual(stored["stages"], {"load": 0.25})
        self.assertEqual(stored["config_hash"], "abc")
        self.assertEqual(len(stored["warnings"]), 1)

    def test_draw_column_descriptions(self):
        """Тест описаний колонок draws.csv"""
        described = describe_draw_columns(["tau", "chain", "sweep", "gamma[x1:linear]", "delta2", "mandatory[intercept]"])
        self.assertEqual(list(described), ["tau", "chain", "sweep", "gamma[x1:linear]", "delta2", "mandatory[intercept]"])
        self.assertTrue(all(described.values()))


class TestScenarios(unittest.TestCase):
    """Тесты синтетических сценариев"""

    def test_catalogue(self):
        """Тест каталога сценариев"""
        self.assertEqual(sorted(SCENARIOS), ["heteroskedastic-linear", "sparse-linear", "sparse-nonlinear"])
        with self.assertRaises(DomainError):
            simulate("dense", 1, 100)
        with self.assertRaises(DomainError):
            simulate("sparse-linear", 1, 5)

    def test_deterministic(self):
        """Тест: одинаковый сид даёт одинаковые данные"""
        first, truth = simulate("sparse-nonlinear", 9, 50)
        second, _ = simulate("sparse-nonlinear", 9, 50)
        pd.testing.assert_frame_equal(first, second)
        self.assertEqual(list(first.columns), ["y", "x1", "x2", "x3", "x4"])
        self.assertEqual(truth["seed"], 9)
        self.assertTrue(truth["effects"]["x2"]["nonlinear"])

    def test_true_quantile_coverage(self):
        """Тест: доля y ниже истинного квантиля близка к tau"""
        frame, _ = simulate("heteroskedastic-linear", 3, 20_000)
        for tau in (0.6, 0.9):
            share = float(np.mean(frame.y <= true_quantile("heteroskedastic-linear", frame, tau)))
            self.assertAlmostEqual(share, tau, delta=0.015)

    def test_write_scenario(self):
        """Тест записи данных и истинной модели"""
        with tempfile.TemporaryDirectory() as tmp:
            data_path, truth_path = write_scenario("sparse-linear", 2, 40, Path(tmp) / "data")
            self.assertEqual(len(pd.read_csv(data_path)), 40)
            self.assertEqual(read_json(truth_path)["scenario"], "sparse-linear")


if __name__ == "__main__":
    unittest.main(verbosity=2)
