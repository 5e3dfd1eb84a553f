#!/usr/bin/env python3
"""
STAQ: байесовский отбор эффектов в структурной аддитивной квантильной регрессии.
Командная строка: fit, elicit, simulate, verify, describe
"""

import argparse
import asyncio
import json
import logging
import os
import sys
from pathlib import Path
from typing import List, Optional

from dotenv import load_dotenv

from src.config_utils import DEFAULT_CONFIG_PATH, load_run_config
from src.errors import StaqError
from src.pipeline import FitManager
from src.scenarios import SCENARIOS, write_scenario
from src.verification import SUITES, run_suite

logger = logging.getLogger("staq")


def setup_logging() -> None:
    """Уровень из STAQ_LOG_LEVEL, файл журнала из STAQ_LOG_FILE"""
    handlers = [logging.StreamHandler(sys.stderr)]
    log_file = os.getenv("STAQ_LOG_FILE")
    if log_file:
        handlers.append(logging.FileHandler(log_file))
    logging.basicConfig(
        level=getattr(logging, os.getenv("STAQ_LOG_LEVEL", "INFO").upper(), logging.INFO),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        handlers=handlers,
        force=True,
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="staq_cli.py",
        description="Отбор эффектов в аддитивной квантильной регрессии (spike-and-slab, Гиббс)",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    fit = commands.add_parser("fit", help="Полный запуск: элиситация, цепи, сводки")
    fit.add_argument("config", nargs="?", default=DEFAULT_CONFIG_PATH, help="YAML-конфигурация запуска")
    fit.add_argument("--workers", type=int, default=None, help="Число процессов (по умолчанию STAQ_MAX_WORKERS)")

    elicit = commands.add_parser("elicit", help="Только элиситация (b, r) в elicitation.json")
    elicit.add_argument("config", nargs="?", default=DEFAULT_CONFIG_PATH)

    simulate = commands.add_parser("simulate", help="Синтетические данные и истинная модель")
    simulate.add_argument("scenario", choices=sorted(SCENARIOS))
    simulate.add_argument("--seed", type=int, default=1)
    simulate.add_argument("--n", type=int, default=500)
    simulate.add_argument("--output-dir", default="data")

    verify = commands.add_parser("verify", help="Приёмочный набор проверок")
    verify.add_argument("suite", choices=sorted(SUITES))
    verify.add_argument("--seed", type=int, default=20240101)
    verify.add_argument("--report", default=None, help="Путь JSON-отчёта (по умолчанию verify_<suite>.json)")
    verify.add_argument("--sweeps", type=int, default=None, help="Число проходов для geweke")
    verify.add_argument("--draws", type=int, default=None, help="Объём выборок для distributions")

    describe = commands.add_parser("describe", help="Описательная таблица входного CSV")
    describe.add_argument("config", nargs="?", default=DEFAULT_CONFIG_PATH)
    describe.add_argument("--output", default=None)
    return parser


async def run_command(args: argparse.Namespace) -> None:
    if args.command == "fit":
        manager = FitManager(load_run_config(args.config), workers=args.workers)
        await manager.fit()
    elif args.command == "elicit":
        await FitManager(load_run_config(args.config)).elicit()
    elif args.command == "describe":
        await FitManager(load_run_config(args.config)).describe(args.output)
    elif args.command == "simulate":
        write_scenario(args.scenario, args.seed, args.n, Path(args.output_dir))
    elif args.command == "verify":
        report = args.report or f"verify_{args.suite}.json"
        run_suite(args.suite, seed=args.seed, report_path=Path(report), sweeps=args.sweeps, draws=args.draws)


def main(argv: Optional[List[str]] = None) -> int:
    """Точка входа; возвращает код завершения"""
    load_dotenv()
    setup_logging()
    args = build_parser().parse_args(argv)
    try:
        asyncio.run(run_command(args))
    except StaqError as e:
        logger.error(f"{type(e).__name__}: {e.message}")
        print(json.dumps(e.to_dict(), ensure_ascii=False, default=str), file=sys.stderr)
        return e.exit_code
    except Exception as e:
        logger.exception(f"Непредвиденная ошибка: {e}")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
