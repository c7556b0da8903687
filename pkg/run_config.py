"""This module defines the run configuration document and its validation."""

import copy
import hashlib
import json
import logging
from pathlib import Path
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, FilePath, ValidationError, model_validator
from pydantic_core import PydanticCustomError

from REGRET_DEFAULTS import (
    DefaultAdmmMaxIterations,
    DefaultAdmmRho,
    DefaultFirOrder,
    DefaultGridPoints,
    DefaultTopologyFile,
    LpTolerance,
    SdpTolerance,
)

logger = logging.getLogger(__name__)

RegretModes = ["spreg2", "spreg-inf", "spreg-inf-admm"]
SubcommandModes = {
    "synth": ["oracle", *RegretModes],
    "analyze": ["analyze"],
    "simulate": ["simulate"],
    "experiment": ["experiment"],
}


class ConfigError(ValueError):
    """Run configuration could not be read or validated."""

    def __init__(self, message: str, details: list[str] | None = None) -> None:
        """Keeps the list of field errors next to the message.

        Params:
            message: summary of the problem
            details: one "dotted.path: message" entry per error
        """
        super().__init__(message)
        self.details = details or []


def _missing(field: str, mode: str) -> PydanticCustomError:
    return PydanticCustomError(
        "missing_for_mode", "{field} is required for mode {mode}", {"field": field, "mode": mode}
    )


class PlantSource(BaseModel):
    """Plant file or generator with its parameters."""

    model_config = ConfigDict(extra="forbid")

    file: FilePath | None = None
    generator: Literal["power_grid", "toy", "random"] | None = None
    topology: FilePath = Path(DefaultTopologyFile)
    subsystem: str = "full"
    params: dict[str, float | int] = Field(default_factory=dict)

    @model_validator(mode="after")
    def _one_source(self) -> "PlantSource":
        if (self.file is None) == (self.generator is None):
            msg = "exactly one of file and generator must be given"
            raise ValueError(msg)
        return self


class DisturbanceConfig(BaseModel):
    """Disturbance of simulate and analyze runs."""

    model_config = ConfigDict(extra="forbid")

    kind: Literal["impulse", "localized_cosines", "random_phase_sum"] = "localized_cosines"
    bus: int = Field(0, ge=0)
    horizon: int = Field(500, ge=1)
    seed: int = 0


class RunConfig(BaseModel):
    """One run of the command line tool."""

    model_config = ConfigDict(extra="forbid")

    mode: Literal[
        "oracle", "spreg2", "spreg-inf", "spreg-inf-admm", "analyze", "simulate", "experiment"
    ]
    plant: PlantSource | None = None
    graph: FilePath | None = None
    oracle_graph: FilePath | Literal["grid"] | None = None
    criterion: Literal["H2", "Hinf", "L1"] = "H2"
    q_file: FilePath | None = None
    q_hat_file: FilePath | None = None
    experiment: Literal["five_bus_spreg2", "sixteen_bus_spreg_inf"] | None = None

    fir_order: int = Field(DefaultFirOrder, ge=0)
    grid_points: int = Field(DefaultGridPoints, ge=1)
    lp_tol: float = Field(LpTolerance, gt=0)
    sdp_tol: float = Field(SdpTolerance, gt=0)
    solver: str | None = None
    stabilization_pattern: Literal["graph", "block-diagonal"] = "graph"
    seed: int = 0

    admm_rho: float = Field(DefaultAdmmRho, gt=0)
    admm_max_iter: int = Field(DefaultAdmmMaxIterations, ge=1)
    adapt_rho: bool = True
    workers: int | None = Field(None, ge=1)

    disturbance: DisturbanceConfig = Field(default_factory=DisturbanceConfig)
    realizations: int = Field(100, ge=1)
    output_dir: Path = Path("runs/latest")

    @model_validator(mode="after")
    def _mode_requirements(self) -> "RunConfig":
        required = {
            "oracle": ["plant"],
            "spreg2": ["plant", "oracle_graph"],
            "spreg-inf": ["plant", "oracle_graph"],
            "spreg-inf-admm": ["plant", "oracle_graph"],
            "analyze": ["plant", "q_file", "q_hat_file"],
            "simulate": ["plant", "q_file"],
            "experiment": ["experiment"],
        }[self.mode]
        for name in required:
            if getattr(self, name) is None:
                raise _missing(name, self.mode)
        if self.oracle_graph == "grid" and (
            self.plant is None or self.plant.generator != "power_grid"
        ):
            raise PydanticCustomError(
                "grid_oracle",
                "{field} 'grid' needs the power_grid generator",
                {"field": "oracle_graph"},
            )
        return self

    def config_hash(self) -> str:
        """SHA-256 of the canonical json dump."""
        canonical = json.dumps(self.model_dump(mode="json"), sort_keys=True)
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _parse_value(text: str) -> object:
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(content: dict, overrides: list[str]) -> dict:
    """Copy of a config document with key=value overrides applied.

    Params:
        content: parsed config document
        overrides: entries like "fir_order=20" or "plant.params.coupling=10",
            values are read as json and kept as string otherwise
    Returns:
        updated copy
    """
    result = copy.deepcopy(content)
    for entry in overrides:
        key, separator, value = entry.partition("=")
        if not separator or not key:
            msg = f"override {entry} is not of the form key=value"
            raise ConfigError(msg, [f"{entry}: expected key=value"])
        target = result
        *parents, leaf = key.split(".")
        for parent in parents:
            target = target.setdefault(parent, {})
            if not isinstance(target, dict):
                msg = f"override {key} descends into a value"
                raise ConfigError(msg, [f"{key}: not a section"])
        target[leaf] = _parse_value(value)
        logger.debug("Override %s = %s", key, value)
    return result


def _error_messages(error: ValidationError) -> list[str]:
    messages = []
    for item in error.errors():
        path = ".".join(str(part) for part in item["loc"])
        if not path:
            path = str(item.get("ctx", {}).get("field", "<root>"))
        messages.append(f"{path}: {item['msg']}")
    return messages


def read_document(path: Path | str) -> dict:
    """Parsed json config document."""
    try:
        with Path(path).open(encoding="utf-8") as file:
            content = json.load(file)
    except FileNotFoundError as error:
        msg = f"config file {path} not found"
        raise ConfigError(msg, [f"<root>: {error}"]) from error
    except json.JSONDecodeError as error:
        msg = f"config file {path} is not valid json"
        raise ConfigError(msg, [f"<root>: {error}"]) from error
    if not isinstance(content, dict):
        msg = "config document must be a json object"
        raise ConfigError(msg, ["<root>: expected an object"])
    return content


def build_config(content: dict) -> RunConfig:
    """Validated RunConfig, ConfigError with field paths otherwise."""
    try:
        return RunConfig.model_validate(content)
    except ValidationError as error:
        details = _error_messages(error)
        msg = f"config has {len(details)} error(s)"
        raise ConfigError(msg, details) from error


def validate_config(path: Path | str, overrides: list[str] | None = None) -> list[str]:
    """Checks a config document, an empty list means it is valid.

    Params:
        path: location of the json document
        overrides: key=value entries applied before validation
    Returns:
        one "dotted.path: message" entry per problem
    """
    try:
        build_config(apply_overrides(read_document(path), overrides or []))
    except ConfigError as error:
        logger.info("Config %s is invalid: %s", path, error)
        return error.details
    return []
