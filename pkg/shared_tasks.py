#!/usr/bin/env python3
# === shared_tasks.py ===
# Shared helpers for the command line entry point: settings from the environment,
# logging setup, console markers and provenance lookups.

import os
import sys
import logging
import subprocess
from dataclasses import dataclass

from dotenv import load_dotenv

DEFAULT_LOG_FILE = "uav_planner.log"
LOG_FORMAT = "%(asctime)s - %(levelname)s - %(message)s"


# ANSI color codes for terminal output
class Colors:
    HEADER = '\033[95m'
    BLUE = '\033[94m'
    GREEN = '\033[92m'
    YELLOW = '\033[93m'
    RED = '\033[91m'
    ENDC = '\033[0m'
    BOLD = '\033[1m'


# Console markers go to stderr so stdout only carries JSON/CSV payloads.
def print_section(title):
    """Print a formatted section title"""
    print(f"{Colors.HEADER}{Colors.BOLD}=== {title} ==={Colors.ENDC}", file=sys.stderr)


def print_step(step):
    """Print a formatted step description"""
    print(f"{Colors.BLUE}{Colors.BOLD}>> {step}{Colors.ENDC}", file=sys.stderr)


def print_success(message):
    """Print a success message"""
    print(f"{Colors.GREEN}{Colors.BOLD}✓ {message}{Colors.ENDC}", file=sys.stderr)


def print_warning(message):
    """Print a warning message"""
    print(f"{Colors.YELLOW}{Colors.BOLD}⚠ {message}{Colors.ENDC}", file=sys.stderr)


def print_error(message):
    """Print an error message"""
    print(f"{Colors.RED}{Colors.BOLD}✗ {message}{Colors.ENDC}", file=sys.stderr)


@dataclass(frozen=True)
class Settings:
    """Environment-driven knobs. Everything else comes from scenario/config files."""

    threads: int
    log_file: str
    exhaustive_cap: int
    dp_cap: int


def _int_env(name, default):
    raw = os.getenv(name)
    if raw is None or raw.strip() == "":
        return default
    try:
        value = int(raw)
    except ValueError:
        logging.warning(f"Ignoring {name}={raw!r}: not an integer, using {default}")
        return default
    if value < 1:
        logging.warning(f"Ignoring {name}={value}: must be >= 1, using {default}")
        return default
    return value


def load_settings():
    """Load .env (if present) and read the UAV_TSPTW_* variables."""
    load_dotenv()
    return Settings(
        threads=_int_env("UAV_TSPTW_THREADS", os.cpu_count() or 1),
        log_file=os.getenv("UAV_TSPTW_LOG_FILE", DEFAULT_LOG_FILE),
        exhaustive_cap=_int_env("UAV_TSPTW_EXHAUSTIVE_CAP", 10),
        dp_cap=_int_env("UAV_TSPTW_DP_CAP", 20),
    )


def configure_logging(log_file=DEFAULT_LOG_FILE, verbose=False):
    """Install file + stream handlers on the root logger (called once by master.py)."""
    handlers = [logging.StreamHandler()]
    if log_file:
        handlers.insert(0, logging.FileHandler(log_file))
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format=LOG_FORMAT,
        handlers=handlers,
        force=True,
    )


def run_command(command, cwd=None):
    """Run a command and return the CompletedProcess, logging stderr on failure."""
    command_str = command if isinstance(command, str) else ' '.join(command)
    logging.debug(f"Running command: {command_str}")
    result = subprocess.run(
        command,
        check=False,
        stdout=subprocess.PIPE,
        stderr=subprocess.PIPE,
        text=True,
        cwd=cwd,
    )
    if result.returncode != 0 and result.stderr:
        logging.debug(f"Command stderr:\n{result.stderr.strip()}")
    return result


def git_describe(cwd=None):
    """Return `git describe --always --dirty` for provenance, or 'unknown'."""
    try:
        result = run_command(["git", "describe", "--always", "--dirty"], cwd=cwd)
    except OSError as e:
        logging.debug(f"git not available: {e}")
        return "unknown"
    if result.returncode != 0:
        return "unknown"
    return result.stdout.strip() or "unknown"
