"""Simulation configuration: JSON schema, strict validation, default set.

The file format is versioned JSON with one section per parameter group;
unknown keys anywhere are rejected.  One top-level seed drives every random
stream: consumers receive children derived via SeedSequence spawn keys (see
``variability.derive_seed``), so runs are reproducible end to end.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path

from .conduction import ConductionParams
from .crossbar import BiasKind, BiasScheme
from .device import DeviceParams, UpdateScheme
from .errors import ConfigError
from .variability import VariabilityParams, derive_seed

SCHEMA_VERSION = 1

# Spawn-key indices of the master seed, one per random-stream consumer.
STREAM_VARIABILITY = 0   # device noise / population sampling
STREAM_WORKLOAD = 1      # workload generation (targets, inputs, write order)
STREAM_TRAINING = 2      # float-baseline weight initialization
STREAM_EVAL_BASE = 16    # + replica index, one per Monte-Carlo seed


@dataclass(frozen=True)
class CrossbarConfig:
    rows: int = 64
    cols: int = 64
    bias: BiasScheme = BiasScheme()

    def __post_init__(self) -> None:
        if self.rows < 1 or self.cols < 1:
            raise ValueError(f"array dimensions must be >= 1, got {self.rows}x{self.cols}")


@dataclass(frozen=True)
class SimConfig:
    schema_version: int = SCHEMA_VERSION
    seed: int = 12345
    output_dir: str = "out"
    device: DeviceParams = DeviceParams()
    variability: VariabilityParams = VariabilityParams()
    crossbar: CrossbarConfig = CrossbarConfig()
    scheme: UpdateScheme = UpdateScheme.AMPLITUDE_RAMP

    def __post_init__(self) -> None:
        if self.schema_version != SCHEMA_VERSION:
            raise ValueError(f"unsupported schema_version {self.schema_version}")
        if not (0 <= self.seed < 2**64):
            raise ValueError(f"seed must be an unsigned 64-bit integer, got {self.seed}")
        self.crossbar.bias.validate_against(self.device)

    def to_dict(self) -> dict:
        dev = dataclasses.asdict(self.device)
        conduction = dev.pop("conduction")
        bias = dataclasses.asdict(self.crossbar.bias)
        bias["kind"] = self.crossbar.bias.kind.value
        return {
            "schema_version": self.schema_version,
            "seed": self.seed,
            "output_dir": self.output_dir,
            "scheme": self.scheme.value,
            "conduction": conduction,
            "device": dev,
            "variability": dataclasses.asdict(self.variability),
            "crossbar": {"rows": self.crossbar.rows, "cols": self.crossbar.cols, "bias": bias},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"


def _build(cls, section: dict, name: str, **extra):
    """Instantiate a parameter dataclass from one JSON section, strictly."""
    if not isinstance(section, dict):
        raise ConfigError(f"section '{name}' must be an object")
    allowed = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(section) - allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) {unknown} in section '{name}'")
    try:
        return cls(**section, **extra)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name}: {exc}") from exc


def config_from_dict(raw: dict) -> SimConfig:
    if not isinstance(raw, dict):
        raise ConfigError("top-level config must be a JSON object")
    known = {"schema_version", "seed", "output_dir", "scheme",
             "conduction", "device", "variability", "crossbar"}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigError(f"unknown top-level key(s) {unknown}")

    conduction = _build(ConductionParams, raw.get("conduction", {}), "conduction")
    device = _build(DeviceParams, raw.get("device", {}), "device", conduction=conduction)
    variability = _build(VariabilityParams, raw.get("variability", {}), "variability")

    xbar_raw = dict(raw.get("crossbar", {}))
    bias_raw = dict(xbar_raw.pop("bias", {}))
    if "kind" in bias_raw:
        try:
            bias_raw["kind"] = BiasKind(bias_raw["kind"])
        except ValueError as exc:
            raise ConfigError(f"crossbar.bias: {exc}") from exc
    bias = _build(BiasScheme, bias_raw, "crossbar.bias")
    crossbar = _build(CrossbarConfig, xbar_raw, "crossbar", bias=bias)

    try:
        scheme = UpdateScheme(raw.get("scheme", UpdateScheme.AMPLITUDE_RAMP.value))
    except ValueError as exc:
        raise ConfigError(f"scheme: {exc}") from exc

    try:
        return SimConfig(
            schema_version=raw.get("schema_version", SCHEMA_VERSION),
            seed=raw.get("seed", 12345),
            output_dir=raw.get("output_dir", "out"),
            device=device,
            variability=variability,
            crossbar=crossbar,
            scheme=scheme,
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path: str | Path | None = None) -> SimConfig:
    """Read and validate a config file; None loads the built-in default set."""
    if path is None:
        return SimConfig()
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON in {path}: {exc}") from exc
    return config_from_dict(raw)


def default_config_text() -> str:
    """The defaults file shipped with the package."""
    return resources.files("ftjsim").joinpath("data/defaults.json").read_text()


def apply_master_seed(config: SimConfig, master_seed: int) -> SimConfig:
    """Reseed every stream of a config from one top-level seed."""
    if not (0 <= master_seed < 2**64):
        raise ConfigError(f"seed must be an unsigned 64-bit integer, got {master_seed}")
    vp = replace(config.variability, seed=derive_seed(master_seed, STREAM_VARIABILITY))
    return replace(config, seed=master_seed, variability=vp)
