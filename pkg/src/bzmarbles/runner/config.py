"""Declarative experiment configuration: YAML in, validated dataclasses out."""
from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from ..analysis import DetectionParams
from ..array import CONTACT_ZONE_MM, PlacementConfig
from ..errors import ConfigurationError
from ..kinetics import PRESETS, KineticsParams

__all__ = [
    "SCENARIOS",
    "MarbleConfig",
    "KineticsConfig",
    "CouplingConfig",
    "SolverConfig",
    "PacemakerConfig",
    "StimulusConfig",
    "GateConfig",
    "OutputConfig",
    "ExperimentConfig",
    "load_config",
    "preset_path",
    "list_presets",
    "derive_seed",
]

SCENARIOS = ("single", "disordered", "ordered", "gate")
PRESET_DIR = Path(__file__).resolve().parent.parent / "presets"


def _build(cls, data: Any, where: str):
    """Instantiate dataclass ``cls`` from a mapping, rejecting unknown keys."""
    if data is None:
        data = {}
    if isinstance(data, cls):
        return data
    if not isinstance(data, dict):
        raise ConfigurationError(f"{where}: expected a mapping, got {type(data).__name__}")
    names = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigurationError(f"{where}: unknown keys {unknown}")
    try:
        return cls(**data)
    except TypeError as exc:
        raise ConfigurationError(f"{where}: {exc}") from exc


@dataclass(frozen=True)
class MarbleConfig:
    volume_ul: float = 50.0
    cells_per_diameter: float = 24.0

    def __post_init__(self):
        if not self.volume_ul > 0:
            raise ConfigurationError("marble.volume_ul must be > 0")
        if not self.cells_per_diameter >= 20:
            raise ConfigurationError("marble.cells_per_diameter must be >= 20")


@dataclass(frozen=True)
class KineticsConfig:
    preset: str = "excitable"
    overrides: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.preset not in PRESETS:
            raise ConfigurationError(f"kinetics.preset must be one of {sorted(PRESETS)}, got {self.preset!r}")
        allowed = {f.name for f in fields(KineticsParams)}
        bad = sorted(set(self.overrides) - allowed)
        if bad:
            raise ConfigurationError(f"kinetics.overrides: unknown parameters {bad}")
        self.params()

    def params(self) -> KineticsParams:
        return dataclasses.replace(PRESETS[self.preset], **{k: float(v) for k, v in self.overrides.items()})


@dataclass(frozen=True)
class CouplingConfig:
    k_median: float = 30.0
    sigma: float = 0.0
    gate_prob: float = 1.0
    tolerance_mm: float = 0.1
    contact_zone_mm: float = CONTACT_ZONE_MM

    def __post_init__(self):
        if self.k_median < 0 or self.sigma < 0:
            raise ConfigurationError("coupling.k_median and coupling.sigma must be >= 0")
        if not 0 <= self.gate_prob <= 1:
            raise ConfigurationError("coupling.gate_prob must lie in [0, 1]")
        if self.tolerance_mm < 0 or self.contact_zone_mm <= 0:
            raise ConfigurationError("coupling.tolerance_mm must be >= 0 and contact_zone_mm > 0")


@dataclass(frozen=True)
class SolverConfig:
    """``dt`` is dimensionless; ``None`` picks the largest stable step up to ``dt_max``."""

    dt: float | None = None
    safety: float = 0.5
    dt_max: float = 8e-4

    def __post_init__(self):
        if not 0 < self.safety <= 1:
            raise ConfigurationError("solver.safety must lie in (0, 1]")
        if self.dt is not None and not self.dt > 0:
            raise ConfigurationError("solver.dt must be > 0")
        if not self.dt_max > 0:
            raise ConfigurationError("solver.dt_max must be > 0")


@dataclass(frozen=True)
class PacemakerConfig:
    """Periodic rim stimuli standing in for spontaneous wave sources.

    ``period_s`` is a number or a ``[low, high]`` range sampled per marble.
    ``phase_s`` and ``angle_deg`` are drawn per marble when left ``None``;
    drawn sites keep ``clearance_mm`` away from every contact point.
    """

    enabled: bool = False
    period_s: Any = 180.0
    phase_s: float | None = None
    angle_deg: float | None = None
    radius_mm: float = 0.35
    amplitude: float = 0.8
    clearance_mm: float = 1.0
    marbles: list | None = None

    def __post_init__(self):
        lo, hi = self.period_range
        if not 0 < lo <= hi:
            raise ConfigurationError("pacemakers.period_s must be positive (and low <= high)")
        if self.phase_s is not None and self.phase_s < 0:
            raise ConfigurationError("pacemakers.phase_s must be >= 0")
        if self.radius_mm < 0 or self.amplitude <= 0 or self.clearance_mm < 0:
            raise ConfigurationError("pacemakers: radius_mm >= 0, amplitude > 0, clearance_mm >= 0 required")

    @property
    def period_range(self) -> tuple[float, float]:
        p = self.period_s
        if isinstance(p, (list, tuple)):
            if len(p) != 2:
                raise ConfigurationError("pacemakers.period_s range must have two entries")
            return float(p[0]), float(p[1])
        return float(p), float(p)


@dataclass(frozen=True)
class StimulusConfig:
    """One explicit initiation; ``where`` is ``centre``, ``rim`` (at ``angle_deg``) or a cell index."""

    time_s: float
    marble: int = 0
    where: Any = "centre"
    angle_deg: float = 180.0
    radius_mm: float = 0.2
    amplitude: float = 0.8

    def __post_init__(self):
        if self.time_s < 0:
            raise ConfigurationError("stimuli: time_s must be >= 0")
        if not (self.where in ("centre", "rim") or isinstance(self.where, int)):
            raise ConfigurationError(f"stimuli: where must be 'centre', 'rim' or a cell index, got {self.where!r}")
        if self.radius_mm < 0 or self.amplitude <= 0:
            raise ConfigurationError("stimuli: radius_mm >= 0 and amplitude > 0 required")


@dataclass(frozen=True)
class GateConfig:
    """Two inputs and a junction in a row, the output touching the junction."""

    phi_low: float = 0.05
    phi_high: float = 0.09
    input_time_s: float = 1.0
    read_window_s: float = 150.0
    input_angle_deg: float | None = None
    sweep: list | None = None

    def __post_init__(self):
        if self.phi_low < 0 or self.phi_high < 0:
            raise ConfigurationError("gate: phi values must be >= 0")
        if self.read_window_s <= 0 or self.input_time_s < 0:
            raise ConfigurationError("gate: read_window_s > 0 and input_time_s >= 0 required")


@dataclass(frozen=True)
class OutputConfig:
    stats_csv: str = "statistics.csv"
    events_csv: str = "events.csv"
    manifest: str = "manifest.txt"
    frames_every_s: float | None = None
    frame_format: str = "pgm"
    sample_every_s: float = 0.5

    def __post_init__(self):
        if self.frame_format != "pgm":
            raise ConfigurationError("output.frame_format must be 'pgm'")
        if self.frames_every_s is not None and not self.frames_every_s > 0:
            raise ConfigurationError("output.frames_every_s must be > 0")
        if not self.sample_every_s > 0:
            raise ConfigurationError("output.sample_every_s must be > 0")


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: str
    seed: int
    duration_s: float
    marble: MarbleConfig = field(default_factory=MarbleConfig)
    kinetics: KineticsConfig = field(default_factory=KineticsConfig)
    placement: PlacementConfig = field(default_factory=lambda: PlacementConfig(mode="ordered", rows=1, cols=1))
    coupling: CouplingConfig = field(default_factory=CouplingConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    detection: DetectionParams = field(default_factory=DetectionParams)
    pacemakers: PacemakerConfig = field(default_factory=PacemakerConfig)
    stimuli: tuple = ()
    gate: GateConfig = field(default_factory=GateConfig)
    output: OutputConfig = field(default_factory=OutputConfig)
    name: str = ""
    notes: str = ""

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ConfigurationError(f"scenario must be one of {SCENARIOS}, got {self.scenario!r}")
        if isinstance(self.seed, bool) or not isinstance(self.seed, (int, np.integer)) or self.seed < 0:
            raise ConfigurationError(f"seed must be an explicit non-negative integer, got {self.seed!r}")
        if not self.duration_s > 0:
            raise ConfigurationError(f"duration_s must be > 0, got {self.duration_s}")
        object.__setattr__(self, "stimuli", tuple(self.stimuli))

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigurationError("config root must be a mapping")
        data = dict(data)
        for key in ("scenario", "seed", "duration_s"):
            if key not in data or data[key] is None:
                raise ConfigurationError(f"config is missing required key {key!r}")
        sub = {
            "marble": MarbleConfig,
            "kinetics": KineticsConfig,
            "placement": PlacementConfig,
            "coupling": CouplingConfig,
            "solver": SolverConfig,
            "detection": DetectionParams,
            "pacemakers": PacemakerConfig,
            "gate": GateConfig,
            "output": OutputConfig,
        }
        known = set(sub) | {"scenario", "seed", "duration_s", "stimuli", "name", "notes"}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigurationError(f"unknown top-level keys {unknown}")
        kwargs = {key: _build(typ, data.get(key), key) for key, typ in sub.items() if key in data}
        if "placement" in data and isinstance(data["placement"], dict) and "seed" in data["placement"]:
            raise ConfigurationError("placement.seed is derived from the top-level seed; remove it")
        stim = data.get("stimuli") or []
        if not isinstance(stim, list):
            raise ConfigurationError("stimuli must be a list")
        kwargs["stimuli"] = tuple(_build(StimulusConfig, s, f"stimuli[{n}]") for n, s in enumerate(stim))
        for key in ("scenario", "seed", "duration_s", "name", "notes"):
            if key in data:
                kwargs[key] = data[key]
        if isinstance(kwargs.get("duration_s"), (int, float)):
            kwargs["duration_s"] = float(kwargs["duration_s"])
        return cls(**kwargs)

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["placement"].pop("seed", None)
        out["stimuli"] = [dataclasses.asdict(s) for s in self.stimuli]
        return out

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)

    def config_hash(self) -> str:
        """sha256 of the canonical JSON form of the config."""
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    def with_seed(self, seed: int) -> "ExperimentConfig":
        return dataclasses.replace(self, seed=int(seed))

    def kinetics_params(self) -> KineticsParams:
        return self.kinetics.params()


def derive_seed(seed: int, stream: str) -> int:
    """Independent, reproducible sub-seed for one random stream of a run."""
    key = int.from_bytes(hashlib.sha256(stream.encode("utf-8")).digest()[:4], "little")
    return int(np.random.SeedSequence([int(seed), key]).generate_state(1)[0])


def preset_path(name: str) -> Path:
    return PRESET_DIR / f"{name}.yaml"


def list_presets() -> list[str]:
    return sorted(p.stem for p in PRESET_DIR.glob("*.yaml"))


def load_config(source, **overrides) -> ExperimentConfig:
    """Load a config from a YAML path, a preset name or a mapping.

    ``overrides`` replace top-level keys after loading (``seed`` for example).
    """
    if isinstance(source, dict):
        data = dict(source)
    else:
        path = Path(source)
        if not path.exists() and preset_path(str(source)).exists():
            path = preset_path(str(source))
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
        try:
            data = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigurationError(f"{path}: invalid YAML: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigurationError(f"{path}: config root must be a mapping")
    data.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig.from_dict(data)
