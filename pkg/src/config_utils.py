#!/usr/bin/env python3
"""
Утилиты для работы с конфигурацией запуска (RunConfig)
"""

import hashlib
import json
import logging
import os
from typing import Any, Dict, List, Literal, Optional, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .distributions import SIGMA_CONVENTIONS
from .elicitation import DEFAULT_DRAWS, MIN_DRAWS
from .errors import ConfigError, DomainError
from .model_spec import (
    COVARIATE_KINDS,
    DEFAULT_QUANTILES,
    CovariateSpec,
    HyperDefaults,
    MandatoryTerm,
    ModelSpec,
    SamplerConfig,
)
from .splines import BasisConfig

logger = logging.getLogger(__name__)

DEFAULT_CONFIG_PATH = "model.yaml"


class StrictModel(BaseModel):
    model_config = ConfigDict(extra="forbid")


class CovariateConfig(StrictModel):
    name: str
    kind: Literal[COVARIATE_KINDS] = "decomposed"
    selectable: bool = True
    c: Optional[float] = Field(default=None, gt=0)
    alpha: Optional[float] = Field(default=None, gt=0, lt=1)


class MandatoryConfig(StrictModel):
    name: str
    reference: str

    @field_validator("reference", mode="before")
    @classmethod
    def _level_as_text(cls, value: Any) -> str:
        # уровни вроде 2016 в YAML читаются как числа
        return str(value)


class BasisSection(StrictModel):
    degree: int = Field(default=3, ge=1)
    num_knots: int = Field(default=7, ge=2)


class ModelSection(StrictModel):
    response: str
    covariates: List[CovariateConfig] = Field(default_factory=list)
    mandatory: List[MandatoryConfig] = Field(default_factory=list)
    basis: BasisSection = Field(default_factory=BasisSection)

    @field_validator("covariates", mode="before")
    @classmethod
    def _expand_shorthand(cls, value: Any) -> Any:
        if isinstance(value, list):
            return [parse_covariate_config(item) for item in value]
        return value


class HyperSection(StrictModel):
    a: float = Field(default=5.0, gt=0)
    a0: float = Field(default=1.0, gt=0)
    b0: float = Field(default=1.0, gt=0)
    alpha: float = Field(default=0.1, gt=0, lt=1)
    c: float = Field(default=0.1, gt=0)
    a_delta: float = Field(default=0.001, gt=0)
    b_delta: float = Field(default=0.001, gt=0)
    mandatory_precision: float = Field(default=1e-6, gt=0)


class SamplerSection(StrictModel):
    iterations: int = Field(default=12000, ge=1)
    burn_in: int = Field(default=2000, ge=0)
    thin: int = Field(default=10, ge=1)
    chains: int = Field(default=2, ge=1)
    seed: int = Field(default=20240101, ge=0)
    sigma_convention: Literal[SIGMA_CONVENTIONS] = "variance"

    @model_validator(mode="after")
    def _burn_in_below_iterations(self) -> "SamplerSection":
        if self.burn_in >= self.iterations:
            raise ValueError(f"burn_in ({self.burn_in}) должен быть меньше iterations ({self.iterations})")
        return self


class ElicitationSection(StrictModel):
    num_draws: int = Field(default=DEFAULT_DRAWS, ge=MIN_DRAWS)
    reuse: bool = True


class RunConfig(StrictModel):
    data: str
    output_dir: str = "results"
    model: ModelSection
    quantiles: List[float] = Field(default_factory=lambda: list(DEFAULT_QUANTILES))
    hyper: HyperSection = Field(default_factory=HyperSection)
    sampler: SamplerSection = Field(default_factory=SamplerSection)
    elicitation: ElicitationSection = Field(default_factory=ElicitationSection)

    @field_validator("quantiles")
    @classmethod
    def _valid_quantiles(cls, value: List[float]) -> List[float]:
        if not value:
            raise ValueError("список квантилей пуст")
        if any(not 0.0 < q < 1.0 for q in value):
            raise ValueError(f"квантили должны лежать в (0, 1): {value}")
        if any(b <= a for a, b in zip(value, value[1:])):
            raise ValueError(f"квантили должны строго возрастать без повторов: {value}")
        return value

    def to_model_spec(self) -> ModelSpec:
        """Перевод проверенной конфигурации в ModelSpec"""
        try:
            return ModelSpec(
                response=self.model.response,
                covariates=tuple(CovariateSpec(**cov.model_dump()) for cov in self.model.covariates),
                mandatory_terms=tuple(MandatoryTerm(term.name, term.reference) for term in self.model.mandatory),
                quantiles=tuple(self.quantiles),
                hyper=HyperDefaults(**self.hyper.model_dump()),
                sampler=SamplerConfig(
                    iterations=self.sampler.iterations,
                    burn_in=self.sampler.burn_in,
                    thin=self.sampler.thin,
                    seed=self.sampler.seed,
                    num_chains=self.sampler.chains,
                    sigma_convention=self.sampler.sigma_convention,
                ),
                basis=BasisConfig(**self.model.basis.model_dump()),
            )
        except DomainError as exc:
            raise ConfigError(exc.message, **exc.context) from exc

    def config_hash(self) -> str:
        """sha256 канонического JSON конфигурации"""
        payload = json.dumps(self.model_dump(mode="json"), sort_keys=True, ensure_ascii=False)
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()

    def elicitation_hash(self) -> str:
        """Хеш только тех разделов, от которых зависят (b, r)"""
        relevant = {
            "model": self.model.model_dump(mode="json"),
            "hyper": self.hyper.model_dump(mode="json"),
            "elicitation": {"num_draws": self.elicitation.num_draws},
            "data": self.data,
        }
        payload = json.dumps(relevant, sort_keys=True, ensure_ascii=False)
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def parse_covariate_config(config: Union[str, Dict[str, Any]]) -> Dict[str, Any]:
    """Парсит описание ковариаты: простой формат (имя) и расширенный (словарь)"""
    if isinstance(config, str):
        return {"name": config}
    if isinstance(config, dict):
        return config
    logger.warning(f"Некорректный формат ковариаты: {config}")
    return {"name": str(config)}


def _format_validation_error(exc: ValidationError) -> List[str]:
    return [f"{'.'.join(str(part) for part in err['loc'])}: {err['msg']}" for err in exc.errors()]


def parse_run_config(raw: Dict[str, Any]) -> RunConfig:
    """Валидирует словарь конфигурации; неизвестные ключи отклоняются"""
    if not isinstance(raw, dict):
        raise ConfigError("Конфигурация должна быть словарём верхнего уровня")
    try:
        config = RunConfig.model_validate(raw)
    except ValidationError as exc:
        problems = _format_validation_error(exc)
        for problem in problems:
            logger.error(f"Ошибка конфигурации: {problem}")
        raise ConfigError("Конфигурация не прошла проверку", problems=problems) from exc
    config.to_model_spec()
    return config


def load_run_config(config_path: str = DEFAULT_CONFIG_PATH) -> RunConfig:
    """Загружает и валидирует YAML-конфигурацию запуска"""
    if not os.path.exists(config_path):
        logger.error(f"Файл {config_path} не найден")
        raise ConfigError(f"Файл конфигурации {config_path} не найден", path=config_path)

    with open(config_path, encoding="utf-8") as f:
        try:
            raw_config = yaml.safe_load(f) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"Некорректный YAML в {config_path}: {exc}", path=config_path) from exc

    config = parse_run_config(raw_config)
    logger.info(f"Конфигурация {config_path}: отклик '{config.model.response}', "
                f"ковариат {len(config.model.covariates)}, квантили {config.quantiles}")
    return config


def env_int(name: str, default: int) -> int:
    """Целое из окружения (.env подхватывается load_dotenv в точке входа)"""
    value = os.getenv(name)
    if value is None or value == "":
        return default
    try:
        return int(value)
    except ValueError as exc:
        raise ConfigError(f"Переменная окружения {name}={value!r} должна быть целым числом") from exc


def max_workers() -> int:
    return max(1, env_int("STAQ_MAX_WORKERS", 1))
