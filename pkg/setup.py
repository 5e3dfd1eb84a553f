#!/usr/bin/env python3
"""
Кроссплатформенный скрипт установки STAQ
Создаёт venv, ставит зависимости, проверяет окружение быстрым набором qr-mode
"""

import argparse
import os
import platform
import subprocess
import sys
from pathlib import Path

MIN_PYTHON = (3, 9)
ENV_DEFAULTS = {
    "STAQ_LOG_LEVEL": "INFO",
    "STAQ_LOG_FILE": "staq.log",
    "STAQ_MAX_WORKERS": "4",
}


def run_command(cmd, cwd=None):
    """Выполнить команду и вернуть (успех, вывод)"""
    try:
        result = subprocess.run(cmd, shell=True, check=True, cwd=cwd, capture_output=True, text=True)
        return True, result.stdout
    except subprocess.CalledProcessError as e:
        return False, e.stderr


def venv_paths(script_dir):
    windows = platform.system() == "Windows"
    bin_dir = script_dir / "venv" / ("Scripts" if windows else "bin")
    suffix = ".exe" if windows else ""
    return bin_dir / f"python{suffix}", bin_dir / f"pip{suffix}"


def ensure_venv(script_dir):
    if (script_dir / "venv").exists():
        print("Виртуальное окружение уже существует")
        return
    print("Создание виртуального окружения...")
    success, output = run_command(f'"{sys.executable}" -m venv venv', cwd=script_dir)
    if not success:
        print(f"Ошибка создания виртуального окружения: {output}")
        sys.exit(1)


def install_requirements(script_dir, venv_pip):
    success, output = run_command(f'"{venv_pip}" install --upgrade pip', cwd=script_dir)
    if not success:
        print(f"Предупреждение: не удалось обновить pip: {output}")
    print("Установка numpy, scipy, arviz, pandas, pydantic, pyyaml, python-dotenv...")
    success, output = run_command(f'"{venv_pip}" install -r requirements.txt', cwd=script_dir)
    if not success:
        print(f"Ошибка установки зависимостей: {output}")
        sys.exit(1)


def write_env_file(script_dir):
    """.env с настройками по умолчанию, если его ещё нет"""
    env_path = script_dir / ".env"
    if env_path.exists():
        return
    env_path.write_text("".join(f"{k}={v}\n" for k, v in ENV_DEFAULTS.items()), encoding="utf-8")
    print(f"Создан {env_path.name}: {', '.join(ENV_DEFAULTS)}")


def smoke_check(script_dir, venv_python):
    """Набор qr-mode занимает секунды и затрагивает решатель, оптимизатор и запись отчёта"""
    print("Проверка установки: staq_cli.py verify qr-mode ...")
    report = script_dir / "verify_qr-mode.json"
    success, output = run_command(f'"{venv_python}" staq_cli.py verify qr-mode --report "{report}"', cwd=script_dir)
    print("Проверка пройдена" if success else f"Проверка не пройдена: {output}")
    return success


def write_launcher(script_dir, venv_python):
    """staq.bat (Windows) или staq.sh рядом с staq_cli.py"""
    if platform.system() == "Windows":
        path = script_dir / "staq.bat"
        content = f'@echo off\ncd /d "{script_dir}"\n"{venv_python}" "{script_dir / "staq_cli.py"}" %*\n'
    else:
        path = script_dir / "staq.sh"
        content = f'#!/bin/sh\ncd "{script_dir}"\nexec "{venv_python}" "{script_dir / "staq_cli.py"}" "$@"\n'
    with open(path, "w", encoding="utf-8") as f:
        f.write(content)
    if platform.system() != "Windows":
        os.chmod(path, 0o755)
    return path


def main():
    parser = argparse.ArgumentParser(description="Установка STAQ")
    parser.add_argument("--skip-check", action="store_true", help="Не запускать verify qr-mode после установки")
    args = parser.parse_args()

    print("=== Установка STAQ (отбор эффектов в квантильной регрессии) ===")
    if sys.version_info < MIN_PYTHON:
        print(f"Нужен Python {'.'.join(map(str, MIN_PYTHON))}+, текущий {platform.python_version()}")
        sys.exit(1)

    script_dir = Path(__file__).parent.absolute()
    print(f"Директория проекта: {script_dir}, ОС: {platform.system()}")

    venv_python, venv_pip = venv_paths(script_dir)
    ensure_venv(script_dir)
    install_requirements(script_dir, venv_pip)
    write_env_file(script_dir)
    if not (script_dir / "model.yaml").exists():
        print("Предупреждение: model.yaml не найден (конфигурация запуска по умолчанию)")

    launcher = write_launcher(script_dir, venv_python)
    if not args.skip_check and not smoke_check(script_dir, venv_python):
        sys.exit(1)

    print("\n=== Установка завершена ===")
    print(f"Запуск подгонки: {launcher.name} fit model.yaml")


if __name__ == "__main__":
    # pip/setuptools build hooks (egg_info, dist_info, editable_wheel, ...) call this file
    # with a command name; metadata lives in pyproject.toml. Plain runs stay the installer.
    if len(sys.argv) > 1 and not sys.argv[1].startswith("-"):
        from setuptools import setup

        setup()
    else:
        main()
