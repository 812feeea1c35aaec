"""
Scenario configuration and run manifests.

Settings are resolved from layers, lowest precedence first:
defaults -> AOI_<KEY> environment variables -> config file -> CLI flags.

A config file is flat `key = value` text (read with python-dotenv), or a JSON
run manifest whose "config" section is used. `snr` (linear) and `snr_db` are
one setting: the highest layer naming either wins.
"""

import json
import logging
import os
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Union

from dotenv import dotenv_values

from src import __version__
from src.aoi_analytic import Scenario
from src.aoi_sim import DEFAULT_REPLICATIONS, DEFAULT_SEED, SimSettings
from src.errors import ExportError, ValidationError
from src.fbl_channel import ChannelParams

logger = logging.getLogger(__name__)

ENV_PREFIX = "AOI_"

# key -> expected type
CONFIG_KEYS = {
    "sensors": int,
    "bits_per_sensor": int,
    "alpha": int,
    "rate": float,
    "snr": float,
    "snr_db": float,
    "slot_duration": float,
    "frames": int,
    "warmup": int,
    "replications": int,
    "seed": int,
    "forced_error": float,
}

DEFAULTS: Dict[str, Any] = {
    "sensors": 4,
    "bits_per_sensor": 120,
    "alpha": 0,
    "rate": 0.8,
    "snr": 3.0,
    "slot_duration": 1.0,
    "frames": 100_000,
    "warmup": None,
    "replications": DEFAULT_REPLICATIONS,
    "seed": DEFAULT_SEED,
    "forced_error": None,
}

SNR_KEYS = ("snr", "snr_db")

PathLike = Union[str, Path]


@dataclass(frozen=True)
class RunConfig:
    scenario: Scenario
    settings: SimSettings
    values: Dict[str, Any]


# ---------------------------
# LAYERS
# ---------------------------

def _coerce(key: str, raw: Any) -> Any:
    expected = CONFIG_KEYS[key]
    if raw is None:
        raise ValidationError(key, f"expected {expected.__name__}, got no value")
    if isinstance(raw, bool):
        raise ValidationError(key, f"expected {expected.__name__}", raw)
    try:
        if expected is int:
            if isinstance(raw, float):
                if not raw.is_integer():
                    raise ValueError
                return int(raw)
            return int(str(raw).strip())
        return float(str(raw).strip()) if isinstance(raw, str) else float(raw)
    except (TypeError, ValueError):
        raise ValidationError(key, f"expected {expected.__name__}", raw) from None


def _check_layer(layer: Mapping[str, Any], source: str) -> Dict[str, Any]:
    unknown = sorted(k for k in layer if k not in CONFIG_KEYS)
    if unknown:
        raise ValidationError(unknown[0], f"unknown configuration key (from {source})")
    if all(k in layer for k in SNR_KEYS):
        raise ValidationError("snr", f"give either snr or snr_db, not both (from {source})")
    return {key: _coerce(key, value) for key, value in layer.items()}


def env_layer(environ: Optional[Mapping[str, str]] = None) -> Dict[str, str]:
    environ = os.environ if environ is None else environ
    return {
        name[len(ENV_PREFIX):].lower(): value
        for name, value in environ.items()
        if name.startswith(ENV_PREFIX)
    }


def file_layer(path: PathLike) -> Dict[str, Any]:
    path = Path(path)
    if not path.is_file():
        raise ValidationError("config", "config file not found", str(path))
    if path.suffix.lower() == ".json":
        return dict(RunManifest.read(path).get("config", {}))
    values = dotenv_values(path)
    return {key.strip().lower(): value for key, value in values.items()}


def merge_layers(layers: List[Mapping[str, Any]], sources: Optional[List[str]] = None) -> Dict[str, Any]:
    sources = sources or [f"layer {i}" for i in range(len(layers))]
    merged = dict(DEFAULTS)
    for layer, source in zip(layers, sources):
        checked = _check_layer(layer, source)
        if any(k in checked for k in SNR_KEYS):
            for k in SNR_KEYS:
                merged.pop(k, None)
        merged.update(checked)
    return merged


# ---------------------------
# BUILDING
# ---------------------------

def build_run_config(values: Mapping[str, Any]) -> RunConfig:
    """Validated Scenario + SimSettings from resolved flat values."""
    if "snr_db" in values:
        channel = ChannelParams.from_db(values["snr_db"], values["slot_duration"])
    else:
        channel = ChannelParams(values["snr"], values["slot_duration"])
    scenario = Scenario(
        num_sensors=values["sensors"],
        per_sensor_bits=values["bits_per_sensor"],
        redundancy_bits=values["alpha"],
        coding_rate=values["rate"],
        channel=channel,
    )
    settings = SimSettings(
        frames=values["frames"],
        warmup_frames=values["warmup"],
        replications=values["replications"],
        seed=values["seed"],
        forced_error_rate=values["forced_error"],
    )
    return RunConfig(scenario, settings, dict(values))


def parse_config(flags: Optional[Mapping[str, Any]] = None, config_path: Optional[PathLike] = None,
                 environ: Optional[Mapping[str, str]] = None) -> RunConfig:
    """
    Resolve every layer into a validated scenario and simulation settings.

    `flags` holds only options given on the command line (None values are
    dropped as "not given").
    """
    layers = [env_layer(environ)]
    sources = ["environment"]
    if config_path is not None:
        layers.append(file_layer(config_path))
        sources.append(str(config_path))
    if flags:
        layers.append({k: v for k, v in flags.items() if v is not None})
        sources.append("flags")
    values = merge_layers(layers, sources)
    logger.debug("resolved configuration: %s", values)
    return build_run_config(values)


# ---------------------------
# RUN MANIFEST
# ---------------------------

def _scenario_summary(sc: Scenario) -> Dict[str, Any]:
    return {
        "num_sensors": sc.num_sensors,
        "per_sensor_bits": sc.per_sensor_bits,
        "redundancy_bits": sc.redundancy_bits,
        "coding_rate": sc.coding_rate,
        "snr_linear": sc.channel.snr_linear,
        "slot_duration": sc.channel.slot_duration,
        "joint_bits": sc.joint_bits,
        "joint_blocklength": sc.joint_blocklength,
        "sensor_blocklength": sc.sensor_blocklength,
    }


@dataclass
class RunManifest:
    """Everything needed to re-run a command and get the same numbers."""
    command: str
    scenario: Scenario
    settings: Optional[SimSettings]
    config: Dict[str, Any]
    arguments: Dict[str, Any] = field(default_factory=dict)
    tool_version: str = __version__
    timestamp: str = field(default_factory=lambda: datetime.now(timezone.utc).isoformat())

    def to_dict(self) -> Dict[str, Any]:
        return {
            "command": self.command,
            "scenario": _scenario_summary(self.scenario),
            "settings": asdict(self.settings) if self.settings is not None else None,
            "config": {k: v for k, v in self.config.items() if v is not None},
            "arguments": self.arguments,
            "tool_version": self.tool_version,
            "timestamp": self.timestamp,
        }

    def write(self, path: PathLike):
        path = Path(path)
        try:
            path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n",
                            encoding="utf-8")
        except OSError as e:
            raise ExportError(str(path), e.strerror or str(e)) from e

    @staticmethod
    def read(path: PathLike) -> Dict[str, Any]:
        try:
            with open(path, "r", encoding="utf-8") as f:
                data = json.load(f)
        except json.JSONDecodeError as e:
            raise ValidationError("config", f"manifest is not valid JSON: {e.msg}", str(path))
        if not isinstance(data, dict) or not isinstance(data.get("config", {}), dict):
            raise ValidationError("config", "manifest must be a JSON object with a config section",
                                  str(path))
        return data

    @classmethod
    def load(cls, path: PathLike) -> "RunManifest":
        data = cls.read(path)
        run = build_run_config(merge_layers([data.get("config", {})], [str(path)]))
        return cls(
            command=data.get("command", ""),
            scenario=run.scenario,
            settings=run.settings,
            config=run.values,
            arguments=data.get("arguments", {}) or {},
            tool_version=data.get("tool_version", ""),
            timestamp=data.get("timestamp", ""),
        )
