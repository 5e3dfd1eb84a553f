#!/usr/bin/env python3
"""
Исключения STAQ и коды возврата CLI
"""

from typing import Any, Dict, Optional


class StaqError(Exception):
    """Базовая ошибка проекта"""

    exit_code = 1

    def __init__(self, message: str, **context: Any):
        super().__init__(message)
        self.message = message
        self.context = {k: v for k, v in context.items() if v is not None}

    def to_dict(self) -> Dict[str, Any]:
        """Структурированное описание ошибки для stderr"""
        return {"error": type(self).__name__, "message": self.message, **self.context}


class ConfigError(StaqError, ValueError):
    """Конфигурация не прошла валидацию"""

    exit_code = 2


class DataError(StaqError, ValueError):
    """Проблемы с входными данными"""

    exit_code = 3


class DomainError(StaqError, ValueError):
    """Аргумент вне области определения"""

    exit_code = 3


class NumericalError(StaqError, RuntimeError):
    """Численный сбой: факторизация, вырожденная выборка и т.п."""

    exit_code = 4

    def __init__(self, message: str, block_id: Optional[str] = None,
                 sweep: Optional[int] = None, step: Optional[str] = None):
        super().__init__(message, block_id=block_id, sweep=sweep, step=step)
        self.block_id = block_id
        self.sweep = sweep
        self.step = step


class VerificationError(StaqError):
    """Проверочный набор не пройден"""

    exit_code = 5
