# Copyright (c) 2025-2026 Luc Vincent. All Rights Reserved.
"""
Configuration management for Envelopes.
Handles loading, validation, defaults and serialization of run settings.
"""

import os
import yaml
from pathlib import Path
from typing import Any, Dict, List, Optional
from dataclasses import dataclass, field, fields
import logging

from .errors import ConfigError

logger = logging.getLogger(__name__)

# Default paths, first match wins
DEFAULT_CONFIG_PATHS = [
    "./envelopes.yaml",
    os.path.expanduser("~/.config/envelopes/config.yaml"),
]

SEED_ENV_VAR = "ENVELOPES_SEED"
FALLBACK_SEED = 12345

COMMANDS = ["envelope-naive", "envelope-pure", "envelope-lln", "envelope-bayes", "stpetersburg"]
CRITERIA = ["expectation", "probability", "both"]
OUTPUT_FORMATS = ["json", "csv"]

# Runtime destination, not part of what a report reproduces
RUNTIME_FIELDS = ("output", "format")


def default_seed() -> int:
    """Seed from ENVELOPES_SEED, else the fixed fallback."""
    value = os.environ.get(SEED_ENV_VAR)
    if value is None or value == "":
        return FALLBACK_SEED
    try:
        return int(value)
    except ValueError:
        raise ConfigError(f"{SEED_ENV_VAR} must be an integer, got '{value}'") from None


@dataclass
class RunConfig:
    """Everything one CLI run depends on. Flat so the config file stays key: value."""
    command: str = "envelope-naive"
    # Grid over the amount in the smaller envelope
    grid_lo: float = 0.0
    grid_hi: float = 30.0
    grid_n: int = 30000
    grid_align: str = "right"            # "right" (lattice) or "midpoint"
    # Prior density (scipy.stats name and parameters)
    density: str = "expon"
    density_loc: float = 0.0
    density_scale: float = 1.0
    density_shape: Optional[float] = None
    # Envelope amounts
    alpha: float = 2.0                   # measured value
    v1: float = 10.0
    v2: float = 20.0
    omega: Optional[float] = None        # shorthand for v1 = omega, v2 = 2*omega
    # Sampling
    trials: int = 100000
    seed: int = field(default_factory=default_seed)
    chunk_size: int = 65536
    workers: int = 1
    max_table_cells: int = 1_000_000
    trace_stride: int = 1
    # St. Petersburg
    k_max: int = 10
    m: int = 3
    criterion: str = "both"
    formulation: str = "pure"            # "pure" or "statistical"
    labeling: str = "coin"               # "coin" or "pin"
    # Output
    output: Optional[str] = None
    format: Optional[str] = None         # "json" or "csv"; inferred from output if None


def config_from_dict(data: Dict[str, Any]) -> RunConfig:
    """Build a RunConfig from a flat mapping, ignoring unknown keys with a warning."""
    if not isinstance(data, dict):
        raise ConfigError(f"Config must be a mapping of key: value pairs, got {type(data).__name__}")

    known = {f.name for f in fields(RunConfig)}
    kwargs = {}
    for key, value in data.items():
        name = str(key).replace("-", "_")
        if name not in known:
            logger.warning(f"Ignoring unknown config key '{key}'")
            continue
        kwargs[name] = value
    return RunConfig(**kwargs)


def load_config_data(config_path: Optional[str] = None) -> Dict[str, Any]:
    """
    Read the flat YAML mapping from a config file.

    Args:
        config_path: Path to config file. If None, searches default locations.

    Returns:
        The mapping, or {} when no file is found.
    """
    if config_path:
        paths_to_try = [config_path]
        if not os.path.exists(os.path.expanduser(config_path)):
            raise ConfigError(f"Config file not found: {config_path}")
    else:
        paths_to_try = DEFAULT_CONFIG_PATHS

    for path in paths_to_try:
        expanded_path = os.path.expanduser(path)
        if not os.path.exists(expanded_path):
            continue
        try:
            with open(expanded_path, 'r') as f:
                config_data = yaml.safe_load(f) or {}
        except (OSError, yaml.YAMLError) as e:
            raise ConfigError(f"Failed to load config from {expanded_path}: {e}") from e
        if not isinstance(config_data, dict):
            raise ConfigError(f"Config file {expanded_path} is not a key: value mapping")
        logger.info(f"Loaded config from {expanded_path}")
        return config_data

    logger.info("No config file found, using defaults")
    return {}


def load_config(config_path: Optional[str] = None) -> RunConfig:
    """Load a RunConfig from a config file (or defaults)."""
    return config_from_dict(load_config_data(config_path))


def config_to_dict(config: RunConfig, include_runtime: bool = False) -> Dict[str, Any]:
    """Convert config to a dictionary for embedding in reports."""
    result = {}
    for f in fields(config):
        if f.name in RUNTIME_FIELDS and not include_runtime:
            continue  # Skip runtime destination
        result[f.name] = getattr(config, f.name)
    return result


def save_config(config: RunConfig, config_path: str) -> str:
    """Write the config as a flat YAML file and return its path."""
    path = Path(os.path.expanduser(config_path))
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w') as f:
        yaml.safe_dump(config_to_dict(config), f, default_flow_style=False, sort_keys=False)
    logger.info(f"Saved config to {path}")
    return str(path)


def _is_number(value: Any) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def _is_int(value: Any) -> bool:
    return isinstance(value, int) and not isinstance(value, bool)


def validate_config(config: RunConfig) -> List[str]:
    """
    Validate configuration and return list of errors.

    Returns:
        List of error messages. Empty if valid.
    """
    errors = []

    if config.command not in COMMANDS:
        errors.append(f"Unknown command '{config.command}'. Must be one of: {COMMANDS}")

    # Check grid settings
    if not (_is_number(config.grid_lo) and _is_number(config.grid_hi)):
        errors.append("grid_lo and grid_hi must be numbers")
    elif config.grid_lo >= config.grid_hi:
        errors.append(f"grid_lo ({config.grid_lo}) must be below grid_hi ({config.grid_hi})")
    elif config.grid_lo < 0:
        errors.append("grid_lo must be >= 0 (amounts are non-negative)")
    if not _is_int(config.grid_n) or config.grid_n < 2:
        errors.append("grid_n must be an integer >= 2")
    if config.grid_align not in ("right", "midpoint"):
        errors.append("grid_align must be 'right' or 'midpoint'")

    # Check density settings
    if not isinstance(config.density, str) or not config.density:
        errors.append("density must be a scipy.stats distribution name")
    if not _is_number(config.density_scale) or config.density_scale <= 0:
        errors.append("density_scale must be a positive number")
    if config.density_shape is not None and (
        not _is_number(config.density_shape) or config.density_shape <= 0
    ):
        errors.append("density_shape must be a positive number when set")

    # Check amounts
    if not _is_number(config.alpha) or config.alpha < 0:
        errors.append("alpha must be a non-negative number")
    for name in ("v1", "v2"):
        value = getattr(config, name)
        if not _is_number(value) or value < 0:
            errors.append(f"{name} must be a non-negative number")
    if config.omega is not None and (not _is_number(config.omega) or config.omega < 0):
        errors.append("omega must be a non-negative number when set")

    # Check sampling settings
    if not _is_int(config.trials) or config.trials < 1:
        errors.append("trials must be an integer >= 1")
    if not _is_int(config.seed) or not 0 <= config.seed < 2 ** 64:
        errors.append("seed must be an integer in [0, 2^64)")
    if not _is_int(config.chunk_size) or config.chunk_size < 1:
        errors.append("chunk_size must be an integer >= 1")
    if not _is_int(config.workers) or config.workers < 1:
        errors.append("workers must be an integer >= 1")
    if not _is_int(config.max_table_cells) or config.max_table_cells < 1:
        errors.append("max_table_cells must be an integer >= 1")
    if not _is_int(config.trace_stride) or config.trace_stride < 1:
        errors.append("trace_stride must be an integer >= 1")

    # Check St. Petersburg settings
    if not _is_int(config.k_max) or not 1 <= config.k_max <= 60:
        errors.append("k_max must be an integer between 1 and 60")
    if not _is_int(config.m) or config.m < 1:
        errors.append("m must be an integer >= 1")
    if config.criterion not in CRITERIA:
        errors.append(f"criterion must be one of: {CRITERIA}")
    if config.formulation not in ("pure", "statistical"):
        errors.append("formulation must be 'pure' or 'statistical'")
    if config.labeling not in ("coin", "pin"):
        errors.append("labeling must be 'coin' or 'pin'")
    elif config.labeling == "pin" and config.formulation != "statistical":
        errors.append("labeling 'pin' requires formulation 'statistical'")

    # Check output settings
    if config.format is not None and config.format not in OUTPUT_FORMATS:
        errors.append(f"format must be one of: {OUTPUT_FORMATS}")

    return errors
