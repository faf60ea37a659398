"""Run configuration: one YAML document drives every command.

See ``configs/README.md`` next to the shipped defaults for the full key
reference.  Relative paths are resolved against the config file's directory.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Any

import yaml

from .cfsim import ControllerConfig
from .data import SLICE_LABELS
from .federation import FederationConfig
from .gp import HyperParams
from .personalize import PersonalizationConfig
from .trainer import TrainingConfig

__all__ = [
    "ConfigError",
    "OscillationSpec",
    "ScenarioSource",
    "Experiment1Config",
    "Experiment2Config",
    "TrainCommandConfig",
    "SimulateConfig",
    "RunConfig",
    "load_config",
    "default_config_path",
]


class ConfigError(ValueError):
    """Invalid or missing configuration; the CLI maps this to exit code 2."""


@dataclass(frozen=True)
class OscillationSpec:
    base_speed: float = 15.0
    dip_speed: float = 5.0
    durations: tuple[float, float, float, float] = (5.0, 4.0, 4.0, 6.7)
    dt: float = 0.1


@dataclass(frozen=True)
class ScenarioSource:
    """A trajectory either read from CSV or synthesized.

    Synthesized trajectories simulate ``controller`` behind the generated
    ``oscillation`` and keep the half-open sample ``window`` (whole profile
    when ``None``).
    """

    csv: Path | None = None
    oscillation: OscillationSpec | None = None
    window: tuple[int, int] | None = None
    label: str = "custom"


@dataclass(frozen=True)
class Experiment1Config:
    controller: str
    scenarios: dict[str, ScenarioSource]
    test: ScenarioSource
    blind_max: float = 0.2
    shared_min: float = 0.6
    noise_std: float = 0.0  # synthetic speed-sensor noise on training scenarios
    data_seed: int = 0


@dataclass(frozen=True)
class Experiment2Config:
    leader: ScenarioSource
    vehicles: dict[str, str]  # vehicle id -> controller name
    heldout_leader: ScenarioSource | None = None
    evaluate_on: str = "training"  # or "heldout"


@dataclass(frozen=True)
class SimulateConfig:
    controller: str
    leader: ScenarioSource


@dataclass(frozen=True)
class TrainCommandConfig:
    datasets: tuple[Path, ...] = ()
    anchor: Path | None = None


@dataclass(frozen=True)
class RunConfig:
    seed: int
    initial_params: HyperParams
    training: TrainingConfig
    rounds: int
    personalization: PersonalizationConfig
    controllers: dict[str, ControllerConfig]
    experiment1: Experiment1Config | None
    experiment2: Experiment2Config | None
    train: TrainCommandConfig = field(default_factory=TrainCommandConfig)
    simulate: SimulateConfig | None = None
    output_dir: Path = Path("out")
    source: dict = field(default_factory=dict, repr=False)

    @property
    def federation(self) -> FederationConfig:
        return FederationConfig(self.rounds, self.training, self.initial_params)

    def with_seed(self, seed: int) -> "RunConfig":
        src = copy.deepcopy(self.source)
        src["seed"] = int(seed)
        return replace(
            self,
            seed=int(seed),
            training=replace(self.training, seed=int(seed)),
            personalization=replace(
                self.personalization, training=replace(self.personalization.training, seed=int(seed))
            ),
            source=src,
        )

    def echo(self) -> dict:
        """The parsed config as plain data, for embedding in reports."""
        return copy.deepcopy(self.source)


def default_config_path() -> Path:
    return Path(str(resources.files("drivershare") / "configs" / "default.yaml"))


def _section(d: dict, key: str, where: str, required: bool = True) -> Any:
    if key not in d or d[key] is None:
        if required:
            raise ConfigError(f"missing key {where}{key}")
        return None
    return d[key]


def _num(d: dict, key: str, where: str, kind=float, default=None):
    if key not in d:
        if default is None:
            raise ConfigError(f"missing key {where}{key}")
        return default
    try:
        return kind(d[key])
    except (TypeError, ValueError):
        raise ConfigError(f"{where}{key}: expected {kind.__name__}, got {d[key]!r}") from None


def _path(value, base: Path, where: str, must_exist: bool = True) -> Path:
    p = Path(value)
    if not p.is_absolute():
        p = base / p
    if must_exist and not p.exists():
        raise ConfigError(f"{where}: file not found: {p}")
    return p


def _oscillation(d: dict, where: str) -> OscillationSpec:
    durations = d.get("durations", OscillationSpec.durations)
    if not isinstance(durations, (list, tuple)) or len(durations) != 4:
        raise ConfigError(f"{where}durations: expected four phase durations, got {durations!r}")
    return OscillationSpec(
        base_speed=_num(d, "base_speed", where, default=OscillationSpec.base_speed),
        dip_speed=_num(d, "dip_speed", where, default=OscillationSpec.dip_speed),
        durations=tuple(float(x) for x in durations),
        dt=_num(d, "dt", where, default=OscillationSpec.dt),
    )


def _source(d, base: Path, where: str) -> ScenarioSource:
    if not isinstance(d, dict):
        raise ConfigError(f"{where}: expected a mapping, got {d!r}")
    label = str(d.get("label", "custom"))
    if label not in SLICE_LABELS:
        raise ConfigError(f"{where}.label: unknown label {label!r}; expected one of {SLICE_LABELS}")
    if "csv" in d:
        return ScenarioSource(csv=_path(d["csv"], base, f"{where}.csv"), label=label)
    window = d.get("window")
    if window is not None:
        if not isinstance(window, (list, tuple)) or len(window) != 2:
            raise ConfigError(f"{where}.window: expected [start, end], got {window!r}")
        window = (int(window[0]), int(window[1]))
    return ScenarioSource(oscillation=_oscillation(d, where + "."), window=window, label=label)


def _controller(d: dict, where: str) -> ControllerConfig:
    try:
        return ControllerConfig(
            gains=tuple(d["gains"]),
            time_gap=float(d["time_gap"]),
            standstill=float(d["standstill"]),
            accel_limit=float(d.get("accel_limit", 3.0)),
        )
    except KeyError as exc:
        raise ConfigError(f"missing key {where}.{exc.args[0]}") from None
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


def parse_config(raw: dict, base: Path) -> RunConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a mapping")
    seed = _num(raw, "seed", "", int, default=0)
    try:
        ip = _section(raw, "initial_params", "")
        initial = HyperParams(
            _num(ip, "sigma0", "initial_params."),
            _num(ip, "length_scale", "initial_params."),
            _num(ip, "sigma_eps", "initial_params."),
        )
        tr = _section(raw, "training", "")
        training = TrainingConfig(
            local_updates=_num(tr, "local_updates", "training.", int),
            learning_rate=_num(tr, "learning_rate", "training."),
            lr_decay=_num(tr, "lr_decay", "training.", default=1.0),
            batch_size=_num(tr, "batch_size", "training.", int),
            seed=seed,
        )
        rounds = _num(_section(raw, "federation", ""), "rounds", "federation.", int)
        FederationConfig(rounds, training, initial)
        pr = _section(raw, "personalization", "")
        steps = pr.get("steps")
        if steps is None:
            steps = (rounds * training.local_updates) // 4
        personalization = PersonalizationConfig(
            omega=_num(pr, "omega", "personalization."),
            steps=int(steps),
            training=replace(
                training,
                learning_rate=_num(pr, "learning_rate", "personalization.", default=training.learning_rate),
                lr_decay=_num(pr, "lr_decay", "personalization.", default=training.lr_decay),
                batch_size=_num(pr, "batch_size", "personalization.", int, default=training.batch_size),
            ),
        )
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from None

    controllers = {
        str(name): _controller(c, f"controllers.{name}") for name, c in (raw.get("controllers") or {}).items()
    }

    def need_controller(name, where):
        if name not in controllers:
            raise ConfigError(f"{where}: unknown controller {name!r} (defined: {sorted(controllers)})")
        return name

    exp1 = None
    if raw.get("experiment1") is not None:
        e = raw["experiment1"]
        scen = e.get("scenarios") or {}
        if len(scen) != 3:
            present = sorted(scen)
            missing = [v for v in ("vehicle_1", "vehicle_2", "vehicle_3") if v not in scen]
            raise ConfigError(
                f"experiment1.scenarios: need exactly 3 vehicle scenarios, got {present}"
                + (f"; missing {missing}" if missing else "")
            )
        exp1 = Experiment1Config(
            controller=need_controller(_section(e, "controller", "experiment1."), "experiment1.controller"),
            scenarios={str(k): _source(v, base, f"experiment1.scenarios.{k}") for k, v in scen.items()},
            test=_source(_section(e, "test", "experiment1."), base, "experiment1.test"),
            blind_max=_num(e, "blind_max", "experiment1.", default=0.2),
            shared_min=_num(e, "shared_min", "experiment1.", default=0.6),
            noise_std=_num(e, "noise_std", "experiment1.", default=0.0),
            data_seed=_num(e, "data_seed", "experiment1.", int, default=0),
        )
        if exp1.noise_std < 0:
            raise ConfigError(f"experiment1.noise_std must be >= 0, got {exp1.noise_std}")

    exp2 = None
    if raw.get("experiment2") is not None:
        e = raw["experiment2"]
        vehicles = _section(e, "vehicles", "experiment2.")
        if not isinstance(vehicles, dict) or len(vehicles) < 1:
            raise ConfigError("experiment2.vehicles: expected a mapping vehicle id -> controller name")
        exp2 = Experiment2Config(
            leader=_source(_section(e, "leader", "experiment2."), base, "experiment2.leader"),
            vehicles={str(k): need_controller(v, f"experiment2.vehicles.{k}") for k, v in vehicles.items()},
            heldout_leader=(
                _source(e["heldout_leader"], base, "experiment2.heldout_leader") if e.get("heldout_leader") else None
            ),
            evaluate_on=str(e.get("evaluate_on", "training")),
        )
        if exp2.evaluate_on not in ("training", "heldout"):
            raise ConfigError(f"experiment2.evaluate_on: expected 'training' or 'heldout', got {exp2.evaluate_on!r}")
        if exp2.evaluate_on == "heldout" and exp2.heldout_leader is None:
            raise ConfigError("experiment2.evaluate_on is 'heldout' but experiment2.heldout_leader is not set")

    sim = None
    if raw.get("simulate") is not None:
        sm = raw["simulate"]
        sim = SimulateConfig(
            controller=need_controller(_section(sm, "controller", "simulate."), "simulate.controller"),
            leader=_source(_section(sm, "leader", "simulate."), base, "simulate.leader"),
        )

    t = raw.get("train") or {}
    train = TrainCommandConfig(
        datasets=tuple(_path(p, base, "train.datasets") for p in (t.get("datasets") or ())),
        anchor=_path(t["anchor"], base, "train.anchor") if t.get("anchor") else None,
    )
    out = raw.get("output_dir", "out")
    return RunConfig(
        seed=seed,
        initial_params=initial,
        training=training,
        rounds=rounds,
        personalization=personalization,
        controllers=controllers,
        experiment1=exp1,
        experiment2=exp2,
        train=train,
        simulate=sim,
        output_dir=_path(out, base, "output_dir", must_exist=False),
        source=copy.deepcopy(raw),
    )


def load_config(path=None) -> RunConfig:
    path = Path(path) if path is not None else default_config_path()
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: not valid YAML: {exc}") from None
    return parse_config(raw, path.parent)
