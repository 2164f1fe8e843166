"""Scenario configuration stored as a flat file of dotted ``key = value`` lines.

The file is TOML restricted to top-level dotted keys, for example::

    schema_version = 1
    seed = 3
    path.kind = "circle"
    mpc.n_c = 20

Unknown keys are rejected so typos surface as configuration errors.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields, is_dataclass, replace
from pathlib import Path

import numpy as np

try:  # Python >= 3.11
    import tomllib
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib

from .errors import ConfigError
from .mhe import MheWeights
from .mpc import MpcConfig, MpcWeights
from .plant import DropoutSchedule, SensorConfig, TractionProfile

SCHEMA_VERSION = 1


@dataclass
class PathSection:
    kind: str = "rounded_rectangle"
    speed: float = 0.5
    lam: int = 0
    length: float = 36.0
    width: float = 12.0
    radius: float = 10.0
    n_rows: int = 4
    row_length: float = 40.0
    turn_radius: float = 6.0
    heading: float = 0.0
    duration: float = 600.0
    file: str = ""
    periodic: bool = False

    def options(self) -> dict:
        if self.kind == "rounded_rectangle":
            return {"length": self.length, "width": self.width, "radius": self.radius}
        if self.kind == "circle":
            return {"radius": self.radius}
        if self.kind == "straight":
            return {"duration": self.duration, "heading": self.heading}
        if self.kind == "row_headland":
            return {"row_length": self.row_length, "n_rows": self.n_rows, "turn_radius": self.turn_radius}
        if self.kind == "csv":
            return {"file": self.file, "periodic": self.periodic}
        raise ConfigError(f"unknown path kind {self.kind!r}")


@dataclass
class StartSection:
    lateral_offset: float = 0.5
    heading_offset: float = 0.0


@dataclass
class PlantSection:
    tau_act: float = 0.3
    v_cmd: float = 0.5


@dataclass
class TractionSection:
    mu: float = 0.85
    kappa: float = 0.9
    step_time: float = -1.0  # negative disables the step
    mu_after: float = 0.85
    kappa_after: float = 0.9
    smooth: float = 0.0

    def profile(self) -> TractionProfile:
        mu = [(0.0, self.mu)]
        kappa = [(0.0, self.kappa)]
        if self.step_time > 0:
            mu.append((self.step_time, self.mu_after))
            kappa.append((self.step_time, self.kappa_after))
        return TractionProfile(tuple(mu), tuple(kappa), self.smooth)


@dataclass
class SensorSection:
    sigma_x: float = 0.03
    sigma_y: float = 0.03
    sigma_v: float = 0.05
    sigma_omega: float = 0.0175
    rate: float = 5.0

    def build(self) -> SensorConfig:
        return SensorConfig(self.sigma_x, self.sigma_y, self.sigma_v, self.sigma_omega, self.rate)


@dataclass
class DropoutSection:
    intervals: list = field(default_factory=list)  # [[start, end], ...] in seconds
    burst_start: float = -1.0  # first sample time of a contiguous dropout, negative disables
    burst_length: int = 0
    scattered: int = 0  # single missing samples placed at random

    def schedule(self, dt: float, n_samples: int, seed: int) -> DropoutSchedule:
        samples = set()
        if self.burst_start >= 0 and self.burst_length > 0:
            k0 = int(round(self.burst_start / dt))
            samples.update(range(k0, k0 + self.burst_length))
        if self.scattered > 0:
            rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(101,)))
            # keep scattered samples isolated from each other and from the burst
            blocked = set(samples) | {k + d for k in samples for d in (-1, 1)} | {0, 1, 2}
            chosen = []
            candidates = rng.permutation(np.arange(3, n_samples))
            for k in candidates:
                k = int(k)
                if k in blocked:
                    continue
                chosen.append(k)
                blocked.update((k - 1, k, k + 1))
                if len(chosen) == self.scattered:
                    break
            if len(chosen) < self.scattered:
                raise ConfigError("too many scattered dropouts for the run length")
            samples.update(chosen)
        sched = DropoutSchedule.from_samples(samples, dt)
        merged = sorted(list(sched.intervals) + [tuple(map(float, iv)) for iv in self.intervals])
        return DropoutSchedule(tuple(merged))


@dataclass
class MheSection:
    n_e: int = 30
    # matched to the simulated sensor noise; MheWeights() defaults to the looser gyro/speed weights
    output_sigmas: list = field(default_factory=lambda: [0.03, 0.03, 0.05, 0.0175])
    arrival_sigmas: list = field(default_factory=lambda: [10.0, 10.0, 0.1, 1.0, 0.25, 0.25])
    initial_mu: float = 0.75
    initial_kappa: float = 0.75
    min_baseline: float = 0.3
    dropout_mode: str = "ignore"  # or "hold": keep full weight on held fixes

    def weights(self) -> MheWeights:
        return MheWeights(tuple(self.output_sigmas), tuple(self.arrival_sigmas))


@dataclass
class MpcSection:
    n_c: int = 20
    omega_bound: float = 0.1
    input_reference: str = "last_measured"
    q: list = field(default_factory=lambda: [1.0, 1.0, 1.0])
    r: float = 1.0
    q_terminal: list = field(default_factory=lambda: [10.0, 10.0, 10.0])
    start_after: int = 10  # samples of open-loop driving while the estimator settles
    use_estimated_traction: bool = True

    def weights(self) -> MpcWeights:
        return MpcWeights(tuple(self.q), self.r, tuple(self.q_terminal))

    def build(self, dt: float) -> MpcConfig:
        return MpcConfig(self.n_c, self.omega_bound, self.input_reference, dt)


@dataclass
class MetricsSection:
    on_track_threshold: float = 0.10
    on_track_samples: int = 10
    violation_threshold: float = 0.12
    histogram_bin: float = 2.5


@dataclass
class CountingSection:
    s_min: float = 0.3
    p: int = 3
    q: int = 5
    frame_width: int = 640
    frame_height: int = 480
    plots: int = 53
    objects_mean: float = 17.0
    objects_spread: int = 4
    dropout_max: int = 5
    dropout_prob: float = 0.0
    spurious_max: int = 0
    position_noise: float = 0.0
    camera_speed: float = 6.0

    def params(self):
        from .tracking.counter import CountingParams

        return CountingParams(self.s_min, self.p, self.q)

    def synth(self):
        from .tracking.synth import SynthConfig

        return SynthConfig(
            width=self.frame_width, height=self.frame_height,
            objects_mean=self.objects_mean, objects_spread=self.objects_spread,
            camera_speed=self.camera_speed, dropout_max=self.dropout_max,
            dropout_prob=self.dropout_prob, spurious_max=self.spurious_max,
            spurious_frames=self.p, position_noise=self.position_noise,
        )


@dataclass
class LogSection:
    telemetry: bool = False


@dataclass
class ScenarioConfig:
    schema_version: int = SCHEMA_VERSION
    seed: int = 0
    duration: float = 300.0
    path: PathSection = field(default_factory=PathSection)
    start: StartSection = field(default_factory=StartSection)
    plant: PlantSection = field(default_factory=PlantSection)
    traction: TractionSection = field(default_factory=TractionSection)
    sensors: SensorSection = field(default_factory=SensorSection)
    dropout: DropoutSection = field(default_factory=DropoutSection)
    mhe: MheSection = field(default_factory=MheSection)
    mpc: MpcSection = field(default_factory=MpcSection)
    metrics: MetricsSection = field(default_factory=MetricsSection)
    counting: CountingSection = field(default_factory=CountingSection)
    log: LogSection = field(default_factory=LogSection)

    @property
    def dt(self) -> float:
        return 1.0 / self.sensors.rate

    @property
    def n_samples(self) -> int:
        return int(round(self.duration / self.dt))

    def validate(self) -> "ScenarioConfig":
        if self.schema_version != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema_version {self.schema_version}")
        if not (self.duration > 0 and math.isfinite(self.duration)):
            raise ConfigError("duration must be positive")
        if self.path.lam not in (0, 1):
            raise ConfigError("path.lam must be 0 or 1")
        if self.plant.tau_act < 0:
            raise ConfigError("plant.tau_act must be >= 0")
        self.path.options()
        self.traction.profile()
        self.sensors.build()
        self.mhe.weights()
        self.mpc.weights()
        self.mpc.build(self.dt)
        if self.mhe.n_e < 2:
            raise ConfigError("mhe.n_e must be >= 2")
        c = self.counting
        c.params()
        if c.plots < 1 or c.camera_speed <= 0:
            raise ConfigError("counting.plots and counting.camera_speed must be positive")
        return self

    def with_seed(self, seed: int) -> "ScenarioConfig":
        return replace(self, seed=int(seed))


def _flatten(obj, prefix="") -> dict:
    out = {}
    for f in fields(obj):
        value = getattr(obj, f.name)
        key = prefix + f.name
        if is_dataclass(value):
            out.update(_flatten(value, key + "."))
        else:
            out[key] = value
    return out


def to_flat(cfg: ScenarioConfig) -> dict:
    return _flatten(cfg)


def _coerce(current, value, key):
    if isinstance(current, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{key}: expected true/false")
        return value
    if isinstance(current, int):
        if isinstance(value, bool) or not isinstance(value, (int, float)) or int(value) != value:
            raise ConfigError(f"{key}: expected an integer")
        return int(value)
    if isinstance(current, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{key}: expected a number")
        return float(value)
    if isinstance(current, str):
        if not isinstance(value, str):
            raise ConfigError(f"{key}: expected a string")
        return value
    if isinstance(current, list):
        if not isinstance(value, list):
            raise ConfigError(f"{key}: expected a list")
        return value
    return value


def from_flat(values: dict) -> ScenarioConfig:
    cfg = ScenarioConfig()
    for key, value in values.items():
        parts = key.split(".")
        target = cfg
        for part in parts[:-1]:
            if not hasattr(target, part) or not is_dataclass(getattr(target, part)):
                raise ConfigError(f"unknown config section in {key!r}")
            target = getattr(target, part)
        name = parts[-1]
        if not hasattr(target, name) or is_dataclass(getattr(target, name)):
            raise ConfigError(f"unknown config key {key!r}")
        setattr(target, name, _coerce(getattr(target, name), value, key))
    return cfg.validate()


def _flatten_toml(tree: dict, prefix="") -> dict:
    out = {}
    for key, value in tree.items():
        if isinstance(value, dict):
            out.update(_flatten_toml(value, prefix + key + "."))
        else:
            out[prefix + key] = value
    return out


def loads(text: str) -> ScenarioConfig:
    try:
        tree = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    return from_flat(_flatten_toml(tree))


def load(path) -> ScenarioConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return loads(text)


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, float)):
        return repr(value)
    if isinstance(value, str):
        return json.dumps(value)
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_format(v) for v in value) + "]"
    raise ConfigError(f"cannot serialize {value!r}")


def dumps(cfg: ScenarioConfig) -> str:
    return "".join(f"{k} = {_format(v)}\n" for k, v in to_flat(cfg).items())


def save(cfg: ScenarioConfig, path) -> None:
    Path(path).write_text(dumps(cfg))
