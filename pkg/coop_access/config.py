"""
Configuration loading for experiments

Settings are flat KEY=value lines (dotenv syntax) whose prefixes name the
section they belong to. Values are applied in order: dataclass defaults,
preset, config file, environment (a .env file is honored), explicit
overrides.
"""

import logging
import os
from dataclasses import replace
from enum import Enum
from pathlib import Path
from typing import Any, Callable, Dict, Mapping, Optional, Tuple, Union

from dotenv import dotenv_values, load_dotenv

from coop_access.core.models import (
    DetectionMode, ExperimentConfig, FronthaulMode, PRESETS,
)

logger = logging.getLogger(__name__)


def _parse_bool(value: str) -> bool:
    text = str(value).strip().lower()
    if text in ('1', 'true', 'yes', 'on'):
        return True
    if text in ('0', 'false', 'no', 'off'):
        return False
    raise ValueError(f"not a boolean: {value!r}")


def _optional(convert: Callable[[str], Any]) -> Callable[[str], Any]:
    def parse(value):
        if value is None or str(value).strip().lower() in ('', 'none', 'null'):
            return None
        return convert(value)
    return parse


def _enum(kind) -> Callable[[str], Enum]:
    return lambda value: value if isinstance(value, kind) else kind(str(value).strip().lower())


# key -> (section, field, parser); section 'experiment' is the top level
CONFIG_KEYS: Dict[str, Tuple[str, str, Callable[[str], Any]]] = {
    'NETWORK_TIERS': ('network', 'tiers', int),
    'NETWORK_USERS_PER_CELL': ('network', 'users_per_cell', int),
    'NETWORK_HALF_SPACING_KM': ('network', 'half_spacing_km', float),
    'NETWORK_D_MAX_KM': ('network', 'd_max_km', float),
    'TRAFFIC_P_A': ('traffic', 'p_a', float),
    'TRAFFIC_BETA': ('traffic', 'beta', float),
    'SYSTEM_RHO0_DBM': ('system', 'rho0_dbm', float),
    'SYSTEM_NOISE_PSD_DBM_HZ': ('system', 'noise_psd_dbm_hz', float),
    'SYSTEM_BANDWIDTH_HZ': ('system', 'bandwidth_hz', float),
    'SYSTEM_ANTENNAS_PER_AP': ('system', 'antennas_per_ap', int),
    'SYSTEM_NOISE_VAR_OVERRIDE_MW': ('system', 'noise_var_override_mw', _optional(float)),
    'WINDOW_N_FRAMES': ('window', 'n_frames', int),
    'WINDOW_WINDOW_SIZE': ('window', 'window_size', int),
    'WINDOW_STEP': ('window', 'step', int),
    'WINDOW_TARGET_OFFSET': ('window', 'target_offset', int),
    'INFERENCE_EPS_CONV': ('inference', 'eps_conv', float),
    'INFERENCE_I_MAX': ('inference', 'i_max', int),
    'INFERENCE_EPS_P': ('inference', 'eps_p', float),
    'INFERENCE_DAMPING': ('inference', 'damping', float),
    'INFERENCE_THRESHOLD': ('inference', 'threshold', float),
    'INFERENCE_MODE': ('inference', 'mode', _enum(DetectionMode)),
    'INFERENCE_EM_ENABLED': ('inference', 'em_enabled', _parse_bool),
    'FRONTHAUL_MODE': ('fronthaul', 'mode', _enum(FronthaulMode)),
    'FRONTHAUL_BUDGET_BITS': ('fronthaul', 'budget_bits', _optional(int)),
    'FRONTHAUL_BITS_PER_SAMPLE': ('fronthaul', 'bits_per_sample', _optional(int)),
    'FRONTHAUL_BITS_PER_LLR': ('fronthaul', 'bits_per_llr', _optional(int)),
    'FRONTHAUL_CLIP': ('fronthaul', 'clip', float),
    'FRONTHAUL_LLR_CLIP': ('fronthaul', 'llr_clip', float),
    'FRONTHAUL_EM_IN_QF': ('fronthaul', 'em_in_qf', _parse_bool),
    'EXPERIMENT_PILOT_LENGTH': ('experiment', 'pilot_length', int),
    'EXPERIMENT_TRIALS': ('experiment', 'trials', int),
    'EXPERIMENT_SEED': ('experiment', 'seed', int),
    'EXPERIMENT_WORKERS': ('experiment', 'workers', int),
    'EXPERIMENT_SE_SAMPLES': ('experiment', 'se_samples', int),
    'EXPERIMENT_OUTPUT_PATH': ('experiment', 'output_path', _optional(str)),
    'EXPERIMENT_LAYOUT_PATH': ('experiment', 'layout_path', _optional(str)),
}

SECTION_ORDER = ('network', 'traffic', 'system', 'window', 'inference', 'fronthaul', 'experiment')


def apply_settings(config: ExperimentConfig, settings: Mapping[str, Any],
                   source: str = "settings") -> ExperimentConfig:
    """
    Return a copy of config with the recognized keys applied.

    Args:
        config: Base configuration
        settings: KEY -> value (strings are parsed, typed values pass through)
        source: Name used in log and error messages

    Returns:
        New ExperimentConfig
    """
    updated = replace(config)
    for key, raw in settings.items():
        if key not in CONFIG_KEYS:
            continue
        section, name, parse = CONFIG_KEYS[key]
        try:
            value = parse(raw) if isinstance(raw, str) or raw is None else raw
        except ValueError as e:
            raise ValueError(f"{source}: invalid value for {key}: {raw!r} ({e})") from e
        if section == 'experiment':
            updated = replace(updated, **{name: value})
        else:
            part = replace(getattr(updated, section), **{name: value})
            updated = replace(updated, **{section: part})
        logger.debug(f"{source}: {key}={value}")
    return updated


def read_config_file(path: Union[str, Path]) -> Dict[str, Optional[str]]:
    """Read a KEY=value file, warning about keys outside the schema"""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Config file not found: {path}")
    values = dotenv_values(path)
    for key in values:
        if key not in CONFIG_KEYS:
            logger.warning(f"{path}: unknown key {key} ignored")
    return dict(values)


def environment_settings(dotenv_path: Optional[Union[str, Path]] = None) -> Dict[str, str]:
    """Recognized keys from the environment (and a .env file when present)"""
    load_dotenv(dotenv_path=dotenv_path)
    return {key: os.environ[key] for key in CONFIG_KEYS if key in os.environ}


def load_config(path: Optional[Union[str, Path]] = None, preset: Optional[str] = None,
                overrides: Optional[Mapping[str, Any]] = None,
                use_env: bool = True) -> ExperimentConfig:
    """
    Build and validate an experiment configuration.

    Args:
        path: Optional config file
        preset: Optional preset name ('full' or 'desk')
        overrides: Explicit KEY -> value settings (highest precedence)
        use_env: Whether environment variables are consulted

    Returns:
        Validated ExperimentConfig

    Raises:
        ValueError: Unknown preset, unparsable value or failed validation
        FileNotFoundError: Missing config file
    """
    if preset is not None:
        if preset not in PRESETS:
            raise ValueError(f"Unknown preset '{preset}'. Available: {', '.join(sorted(PRESETS))}")
        config = PRESETS[preset]()
    else:
        config = ExperimentConfig()

    if path is not None:
        config = apply_settings(config, read_config_file(path), source=str(path))
    if use_env:
        config = apply_settings(config, environment_settings(), source="environment")
    if overrides:
        config = apply_settings(config, overrides, source="overrides")

    errors = config.validate()
    if errors:
        raise ValueError("Invalid configuration: " + "; ".join(errors))
    return config


def _format_value(value: Any) -> str:
    if value is None:
        return "none"
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, bool):
        return "true" if value else "false"
    return repr(value) if isinstance(value, float) else str(value)


def config_to_text(config: ExperimentConfig) -> str:
    """Serialize every schema key, grouped under section headers"""
    lines = []
    for section in SECTION_ORDER:
        lines.append(f"# [{section}]")
        source = config if section == 'experiment' else getattr(config, section)
        for key, (owner, name, _) in CONFIG_KEYS.items():
            if owner == section:
                lines.append(f"{key}={_format_value(getattr(source, name))}")
        lines.append("")
    return "\n".join(lines)


def write_config(config: ExperimentConfig, path: Union[str, Path]) -> bool:
    """Write config in file format; returns False on I/O failure"""
    try:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(config_to_text(config), encoding='utf-8')
        return True
    except OSError as e:
        logger.error(f"Failed to write config {path}: {e}")
        return False


__all__ = [
    'CONFIG_KEYS',
    'apply_settings',
    'read_config_file',
    'environment_settings',
    'load_config',
    'config_to_text',
    'write_config',
]
