# fingerprints/services/config.py

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from types import MappingProxyType
from typing import Any, Dict, Iterable, Mapping, Optional, Tuple

from django.conf import settings
from dotenv import dotenv_values

from fingerprints.serializers import SECTION_SERIALIZERS, RunSerializer
from fingerprints.services.changes import VariabilityModel
from fingerprints.services.errors import ConfigError
from fingerprints.services.kernel import KernelParams, QueryConfig
from fingerprints.services.positioning import PositioningConfig
from fingerprints.services.robust import ResampleConfig

logger = logging.getLogger(__name__)

GLOBAL_KEYS = ("SEED", "WORKERS")


def split_key(key: str) -> Tuple[str, str]:
    """'KERNEL_LENGTH_SCALE' -> ('KERNEL', 'length_scale'); 'SEED' -> ('RUN', 'seed')."""
    if key in GLOBAL_KEYS:
        return "RUN", key.lower()
    section, _, name = key.partition("_")
    if section not in SECTION_SERIALIZERS or not name:
        raise ConfigError(f"Unknown configuration key '{key}'.")
    return section, name.lower()


def parse_assignment(text: str) -> Tuple[str, str]:
    """Parse a KEY=VALUE command-line assignment."""
    key, sep, value = text.partition("=")
    key = key.strip().upper()
    if not sep or not key:
        raise ConfigError(f"Expected KEY=VALUE, got '{text}'.")
    return key, value.strip()


def read_config_file(path: str | Path) -> Dict[str, str]:
    """Key-value config file in dotenv syntax; every key must be known."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"Config file '{path}' does not exist.")
    values: Dict[str, str] = {}
    for key, value in dotenv_values(path).items():
        if value is None:
            raise ConfigError(f"Config file '{path}': key '{key}' has no value.")
        values[key.strip().upper()] = value
    return values


@dataclass(frozen=True)
class RunConfig:
    """
    The effective, validated configuration of one command run.

    `values` maps every flat key to its typed value; the builder methods turn
    sections into the service-layer parameter objects.
    """
    values: Mapping[str, Any]

    def __post_init__(self) -> None:
        object.__setattr__(self, "values", MappingProxyType(dict(sorted(self.values.items()))))

    def __getitem__(self, key: str) -> Any:
        try:
            return self.values[key]
        except KeyError:
            raise ConfigError(f"Unknown configuration key '{key}'.") from None

    def as_dict(self) -> Dict[str, Any]:
        return dict(self.values)

    @property
    def seed(self) -> int:
        return self.values["SEED"]

    @property
    def workers(self) -> int:
        return self.values["WORKERS"]

    def kernel_params(self) -> KernelParams:
        return KernelParams(
            length_scale=self["KERNEL_LENGTH_SCALE"],
            amplitude=self["KERNEL_AMPLITUDE"],
            reg=self["KERNEL_REG"],
            prior_mean=self["KERNEL_PRIOR_MEAN"],
            literal_normal_equations=self["KERNEL_LITERAL_NORMAL_EQUATIONS"],
        )

    def query_config(self) -> QueryConfig:
        return QueryConfig(scale=self["QUERY_SCALE"])

    def positioning_config(self) -> PositioningConfig:
        return PositioningConfig(
            k=self["POSITIONING_K"],
            dissimilarity=self["POSITIONING_DISSIMILARITY"],
            lambda_cdm=self["POSITIONING_LAMBDA_CDM"],
            missing_value=self["POSITIONING_MISSING_VALUE"],
            weighted=self["POSITIONING_WEIGHTED"],
        )

    def resample_config(self) -> ResampleConfig:
        return ResampleConfig(
            n_res=self["RESAMPLE_N"],
            alpha=self["RESAMPLE_ALPHA"],
            min_features=self["RESAMPLE_MIN_FEATURES"],
            seed=self.seed,
        )

    def variability_model(self) -> VariabilityModel:
        return VariabilityModel(
            slope=self["DETECTION_SLOPE"],
            intercept=self["DETECTION_INTERCEPT"],
            floor=self["DETECTION_SIGMA_FLOOR"],
        )


def _validate_section(section: str, raw: Dict[str, str]) -> Dict[str, Any]:
    serializer_class = RunSerializer if section == "RUN" else SECTION_SERIALIZERS[section]
    serializer = serializer_class(data=raw)
    if serializer.is_valid():
        return dict(serializer.validated_data)

    problems = []
    for field_name, messages in serializer.errors.items():
        if field_name == "non_field_errors":
            label = section
        elif section == "RUN":
            label = field_name.upper()
        else:
            label = f"{section}_{field_name.upper()}"
        problems.append(f"{label}: {' '.join(str(m) for m in messages)}")
    raise ConfigError("Invalid configuration: " + "; ".join(problems))


def build_run_config(raw: Mapping[str, str]) -> RunConfig:
    """Validate a complete flat key-value mapping section by section."""
    sections: Dict[str, Dict[str, str]] = {}
    for key, value in raw.items():
        section, name = split_key(key)
        sections.setdefault(section, {})[name] = value

    values: Dict[str, Any] = {}
    for section, fields in sections.items():
        for name, typed in _validate_section(section, fields).items():
            key = name.upper() if section == "RUN" else f"{section}_{name.upper()}"
            values[key] = typed
    return RunConfig(values)


def load_run_config(
    *,
    config_path: Optional[str | Path] = None,
    assignments: Iterable[str] = (),
    seed: Optional[int] = None,
    workers: Optional[int] = None,
) -> RunConfig:
    """
    Layer settings defaults (already carrying RFM_ environment overrides), the
    optional config file, then --set assignments and the --seed/--workers flags.
    """
    raw: Dict[str, str] = {key: str(value) for key, value in settings.RFM_DEFAULTS.items()}

    layers = []
    if config_path:
        layers.append(("config file", read_config_file(config_path)))
    layers.append(("--set", dict(parse_assignment(a) for a in assignments)))
    for origin, layer in layers:
        for key, value in layer.items():
            if key not in raw:
                raise ConfigError(f"Unknown configuration key '{key}' (from {origin}).")
            raw[key] = value

    if seed is not None:
        raw["SEED"] = str(seed)
    if workers is not None:
        raw["WORKERS"] = str(workers)

    config = build_run_config(raw)
    logger.debug("Effective configuration: %s", config.as_dict())
    return config
