#!/usr/bin/env python3
"""
Оркестрация запуска: данные -> блоки -> элиситация -> цепи по (tau, chain)
-> сводки -> файлы результатов
"""

import asyncio
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from contextlib import contextmanager
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Tuple

import pandas as pd
import yaml

from .config_utils import RunConfig, max_workers
from .data_processing import (
    DIAGNOSTICS_SCHEMA_VERSION,
    RunManifest,
    describe_draw_columns,
    describe_frame,
    draws_frame,
    ensure_output_dir,
    file_checksum,
    load_csv,
    read_json,
    software_versions,
    write_csv,
    write_json,
)
from .distributions import derive_stream
from .elicitation import ElicitationResult, apply_elicitation, elicit_blocks, load_elicitation, save_elicitation
from .errors import StaqError
from .gibbs import PosteriorDraws, run_chain
from .model_spec import BuiltModel, HyperDefaults, ModelSpec, SamplerConfig, build_blocks
from .summaries import (
    below_fraction,
    curves_frame,
    diagnostics,
    effect_curves,
    fitted_quantiles,
    fitted_quantiles_wide,
    inclusion_probabilities,
    inclusion_table_wide,
    pinball_score,
    quantile_crossings,
)

logger = logging.getLogger(__name__)

STAQ_VERSION = "1.0.0"
ELICITATION_FILE = "elicitation.json"


def _chain_task(model: BuiltModel, tau: float, tau_index: int, chain: int,
                config: SamplerConfig, hyper: HyperDefaults) -> PosteriorDraws:
    """Одна цепь; верхний уровень модуля, чтобы задача сериализовалась в процесс"""
    rng = derive_stream(config.seed, tau_index, chain)
    return run_chain(model, tau, config, hyper, rng, chain=chain)


class FitManager:
    """Менеджер для запуска подгонки и элиситации по RunConfig"""

    def __init__(self, config: RunConfig, workers: Optional[int] = None):
        self.config = config
        self.spec: ModelSpec = config.to_model_spec()
        self.workers = workers or max_workers()
        self.output_dir = Path(config.output_dir)
        self.data_path = Path(config.data)
        self.timings: Dict[str, float] = {}
        self.warnings: List[str] = []
        self.manifest: Optional[RunManifest] = None

    @contextmanager
    def _stage(self, name: str) -> Iterator[None]:
        started = time.perf_counter()
        yield
        seconds = time.perf_counter() - started
        self.timings[name] = seconds
        if self.manifest is not None:
            self.manifest.stage(name, seconds)
        else:
            logger.info(f"Этап '{name}': {seconds:.2f} с")

    def _categorical(self) -> List[str]:
        return [term.name for term in self.spec.mandatory_terms]

    def prepare(self) -> Tuple[pd.DataFrame, BuiltModel, str]:
        with self._stage("load"):
            frame = load_csv(self.data_path, categorical=self._categorical())
            checksum = file_checksum(self.data_path)
        with self._stage("build"):
            model = build_blocks(frame, self.spec)
        if model.dropped_rows:
            self.warnings.append(f"удалено строк с пропусками: {model.dropped_rows}")
        return frame, model, checksum

    def _elicitation_meta(self, checksum: str) -> Dict:
        return {
            "config_hash": self.config.elicitation_hash(),
            "seed": self.spec.sampler.seed,
            "data_checksum": checksum,
            "num_draws": self.config.elicitation.num_draws,
        }

    def _reusable_elicitation(self, checksum: str) -> Optional[List[ElicitationResult]]:
        path = self.output_dir / ELICITATION_FILE
        if not self.config.elicitation.reuse or not path.exists():
            return None
        stored = load_elicitation(path)
        if stored["meta"] != self._elicitation_meta(checksum):
            logger.info("Сохранённая элиситация не соответствует конфигурации, выполняется заново")
            return None
        logger.info(f"Используется сохранённая элиситация из {path}")
        return stored["results"]

    def elicit_model(self, model: BuiltModel, checksum: str) -> List[ElicitationResult]:
        with self._stage("elicit"):
            results = self._reusable_elicitation(checksum)
            if results is None:
                results = elicit_blocks(model.blocks, self.spec.sampler.seed, self.config.elicitation.num_draws)
                save_elicitation(results, self.output_dir / ELICITATION_FILE, self._elicitation_meta(checksum))
            apply_elicitation(model.blocks, results)
        for res in results:
            if res.r >= 1.0:
                self.warnings.append(f"блок {res.block_id}: r={res.r:.4g} >= 1")
        return results

    async def elicit(self) -> Path:
        """Только элиситация: elicitation.json без сэмплирования"""
        ensure_output_dir(self.output_dir)
        _, model, checksum = self.prepare()
        self.elicit_model(model, checksum)
        return self.output_dir / ELICITATION_FILE

    async def sample(self, model: BuiltModel) -> List[PosteriorDraws]:
        """Цепи по всем (tau, chain); при одном исполнителе последовательно в процессе"""
        sampler, hyper = self.spec.sampler, self.spec.hyper
        tasks = [(model, tau, tau_index, chain, sampler, hyper)
                 for tau_index, tau in enumerate(self.spec.quantiles)
                 for chain in range(sampler.num_chains)]
        logger.info(f"Запуск {len(tasks)} цепей, исполнителей: {self.workers}")
        if self.workers <= 1:
            return [_chain_task(*task) for task in tasks]

        loop = asyncio.get_running_loop()
        with ProcessPoolExecutor(max_workers=self.workers) as pool:
            futures = [loop.run_in_executor(pool, _chain_task, *task) for task in tasks]
            return list(await asyncio.gather(*futures))

    async def fit(self) -> Path:
        """Полный запуск; возвращает директорию результатов"""
        out = ensure_output_dir(self.output_dir)
        frame, model, checksum = self.prepare()

        with open(out / "config.yaml", "w", encoding="utf-8") as f:
            yaml.safe_dump(self.config.model_dump(mode="json"), f, allow_unicode=True, sort_keys=False)

        self.manifest = RunManifest(out / "manifest.json", {
            "software": {"staq": STAQ_VERSION, **software_versions()},
            "config": self.config.model_dump(mode="json"),
            "config_hash": self.config.config_hash(),
            "data": {"path": str(self.data_path), "sha256": checksum, "rows_used": model.n,
                     "rows_dropped": model.dropped_rows},
            "seeds": {
                "base": self.spec.sampler.seed,
                "elicitation": "derive_stream(seed, 7, block_index)",
                "chains": "derive_stream(seed, tau_index, chain)",
            },
            "standardization": {k: list(v) for k, v in model.standardization.items()},
            "stages": {k: round(v, 4) for k, v in self.timings.items()},
        })

        try:
            results = self.elicit_model(model, checksum)
            self.manifest.update(elicited={res.block_id: {"b": res.b, "r": res.r} for res in results})

            started = time.perf_counter()
            draws = await self.sample(model)
            self.manifest.stage("sample", time.perf_counter() - started)

            with self._stage("summarize"):
                outputs = self.summarize(draws, model)
            with self._stage("write"):
                written = self.write_outputs(outputs, draws)
        except StaqError:
            self.manifest.update(warnings=self.warnings)
            self.manifest.finalize("failed")
            raise

        self.manifest.update(
            warnings=self.warnings,
            draw_columns=describe_draw_columns(list(outputs["draws"].columns)),
            outputs={name: file_checksum(path) for name, path in written.items()},
        )
        self.manifest.finalize()
        logger.info(f"Результаты записаны в {out}")
        return out

    def summarize(self, draws: List[PosteriorDraws], model: BuiltModel) -> Dict:
        multi_tau = len(self.spec.quantiles) > 1
        inclusion = inclusion_probabilities(draws)
        curves = curves_frame(effect_curves(draws, model.blocks, model.standardization))
        fitted = fitted_quantiles(draws, y=model.y)
        report = diagnostics(draws)
        for tau_key, entry in report.items():
            tau = float(tau_key)
            eta = fitted.loc[fitted["tau"] == tau, "eta_mean"].to_numpy()
            entry["pinball_score"] = pinball_score(model.y, eta, tau)
            entry["below_fraction"] = below_fraction(model.y, eta)
            self.warnings.extend(f"tau={tau_key}: {notice}" for notice in entry["notices"])
        crossings = quantile_crossings(fitted) if multi_tau else {}
        for pair, count in crossings.items():
            if count:
                self.warnings.append(f"пересечение квантилей {pair}: {count} строк")
        return {
            "inclusion": inclusion,
            "inclusion_wide": inclusion_table_wide(inclusion) if multi_tau else None,
            "curves": curves,
            "fitted": fitted_quantiles_wide(fitted),
            "draws": draws_frame(draws),
            "diagnostics": {"schema_version": DIAGNOSTICS_SCHEMA_VERSION, "per_tau": report, "quantile_crossings": crossings},
        }

    def write_outputs(self, outputs: Dict, draws: List[PosteriorDraws]) -> Dict[str, Path]:
        out = self.output_dir
        written = {
            "inclusion_table.csv": write_csv(outputs["inclusion"], out / "inclusion_table.csv"),
            "effect_curves.csv": write_csv(outputs["curves"], out / "effect_curves.csv"),
            "fitted_quantiles.csv": write_csv(outputs["fitted"], out / "fitted_quantiles.csv"),
            "draws.csv": write_csv(outputs["draws"], out / "draws.csv"),
            "diagnostics.json": write_json(outputs["diagnostics"], out / "diagnostics.json"),
        }
        if outputs["inclusion_wide"] is not None:
            written["inclusion_table_wide.csv"] = write_csv(outputs["inclusion_wide"], out / "inclusion_table_wide.csv")
        return written

    async def describe(self, output: Optional[Path] = None) -> Path:
        """Описательная таблица подготовленного CSV"""
        frame = load_csv(self.data_path, categorical=self._categorical())
        output = Path(output) if output else ensure_output_dir(self.output_dir) / "describe.csv"
        return write_csv(describe_frame(frame, categorical=self._categorical()), output)


def load_run_outputs(output_dir: Path) -> Dict:
    """Манифест и диагностика завершённого запуска"""
    output_dir = Path(output_dir)
    return {
        "manifest": read_json(output_dir / "manifest.json"),
        "diagnostics": read_json(output_dir / "diagnostics.json"),
    }
