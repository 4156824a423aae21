"""Experiment configuration: a flat, diff-friendly ``section.key = value``
text format, lossless round-tripping, and the named presets that reproduce
the reference experiments in one command."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .market import ExecutionSetup, IntensityModel, PenaltySpec
from .optimizer import StepSchedule

__all__ = ["ExperimentConfig", "parse_config_text", "preset", "PRESET_NAMES"]

MODES = ("cost-curve", "run-sa", "calibrate", "check-criteria", "comonotony-test", "replay-sa")

# Stream-id namespaces: the cost curve and the learner must never share
# replications, whatever their sample sizes.
CURVE_STREAM_BASE = 0
SA_STREAM_BASE = 1_000_000
PROBE_STREAM_BASE = 2_000_000


@dataclass
class ExperimentConfig:
    mode: str = "cost-curve"
    # model.*
    base_rate: float = 5.0
    decay: float = 1.0
    # penalty.*
    penalty_kind: str = "identity"
    impact_scale: float = 0.0
    impact_growth: float = 0.0
    # setup.*
    quantity: int = 10
    horizon: float = 5.0
    kappa: float = 1.0
    delta_max: float = 3.0
    s0: float = 100.0
    # source.*
    source_kind: str = "brownian"
    sigma: float = 0.01
    steps: int = 20
    diffusion: str = "black-scholes"  # euler source family
    drift_rate: float = 0.0
    tick_file: str = ""
    calibration_file: str = ""
    cycle_length: int = 15
    shift: int = 0  # 0 = one cycle length (disjoint windows)
    # schedule.*
    gamma1: float = 0.01
    rho: float = 1.0
    averaging: bool = True
    # run.*
    n_paths: int = 10_000
    n_steps: int = 100
    seed: int = 20260810
    threads: int = 1
    delta0: float = -1.0  # -1 = delta_max / 2
    reference_curve: bool = True
    sharp: bool = False
    # grid.*
    grid_start: float = 0.0
    grid_stop: float = -1.0  # -1 = delta_max
    grid_count: int = 200
    # output.*
    out_dir: str = "out"
    plots: bool = True

    # -- resolved views -------------------------------------------------

    def model(self) -> IntensityModel:
        return IntensityModel(base_rate=self.base_rate, decay=self.decay)

    def penalty(self) -> PenaltySpec:
        if self.penalty_kind == "identity":
            return PenaltySpec.identity()
        return PenaltySpec.exponential_impact(self.impact_scale, self.impact_growth)

    def setup(self) -> ExecutionSetup:
        return ExecutionSetup(
            quantity=self.quantity,
            horizon=self.horizon,
            kappa=self.kappa,
            delta_max=self.delta_max,
            s0=self.s0,
        )

    def schedule(self) -> StepSchedule:
        return StepSchedule(gamma1=self.gamma1, rho=self.rho)

    def delta_grid(self) -> np.ndarray:
        stop = self.delta_max if self.grid_stop < 0 else self.grid_stop
        if self.grid_count < 2:
            raise ConfigError(f"grid.count must be >= 2, got {self.grid_count}")
        if not (0.0 <= self.grid_start < stop <= self.delta_max):
            raise ConfigError(
                f"grid [{self.grid_start}, {stop}] must sit inside [0, {self.delta_max}]"
            )
        return np.linspace(self.grid_start, stop, self.grid_count)

    def start_delta(self) -> float:
        return self.delta_max / 2.0 if self.delta0 < 0 else self.delta0

    def validate(self) -> None:
        """Raise ConfigError on the first inconsistency; cheap enough to run
        before every experiment and for --dry-run."""
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        try:
            self.model()
            self.penalty()
            self.setup()
            if self.mode in ("run-sa", "replay-sa"):
                self.schedule()
            self.delta_grid()
        except (ValueError, ConfigError) as exc:
            raise ConfigError(str(exc)) from exc
        if self.source_kind not in ("brownian", "euler", "replay"):
            raise ConfigError(
                f"source.kind must be brownian, euler or replay, got {self.source_kind!r}"
            )
        if self.source_kind == "euler" and self.diffusion not in ("bachelier", "black-scholes"):
            raise ConfigError(
                "source.diffusion must be bachelier or black-scholes, "
                f"got {self.diffusion!r}"
            )
        if self.mode == "replay-sa" or self.source_kind == "replay":
            if self.mode not in ("calibrate",) and not self.tick_file:
                raise ConfigError("replay experiments need source.tick_file")
            if self.tick_file and not Path(self.tick_file).exists():
                raise ConfigError(f"tick file {self.tick_file} does not exist")
            if self.cycle_length < 2:
                raise ConfigError(f"cycle_length must be >= 2, got {self.cycle_length}")
            if self.shift < 0:
                raise ConfigError(f"shift must be >= 0, got {self.shift}")
        if self.mode == "calibrate":
            if not self.calibration_file:
                raise ConfigError("calibrate mode needs source.calibration_file")
            if not Path(self.calibration_file).exists():
                raise ConfigError(f"calibration file {self.calibration_file} does not exist")
        if self.n_paths < 2:
            raise ConfigError(f"run.n_paths must be >= 2, got {self.n_paths}")
        if self.n_steps < 1:
            raise ConfigError(f"run.n_steps must be >= 1, got {self.n_steps}")
        if not (0 <= self.seed < 2**64):
            raise ConfigError(f"run.seed must fit in 64 bits, got {self.seed}")
        if self.threads < 1:
            raise ConfigError(f"run.threads must be >= 1, got {self.threads}")
        if self.delta0 >= 0 and not (0.0 < self.delta0 < self.delta_max):
            raise ConfigError(f"run.delta0 must lie in (0, delta_max), got {self.delta0}")
        if self.sigma < 0:
            raise ConfigError(f"source.sigma must be >= 0, got {self.sigma}")
        if self.steps < 1:
            raise ConfigError(f"source.steps must be >= 1, got {self.steps}")


_KEYS: dict[str, str] = {
    "mode": "mode",
    "model.base_rate": "base_rate",
    "model.decay": "decay",
    "penalty.kind": "penalty_kind",
    "penalty.impact_scale": "impact_scale",
    "penalty.impact_growth": "impact_growth",
    "setup.quantity": "quantity",
    "setup.horizon": "horizon",
    "setup.kappa": "kappa",
    "setup.delta_max": "delta_max",
    "setup.s0": "s0",
    "source.kind": "source_kind",
    "source.sigma": "sigma",
    "source.steps": "steps",
    "source.diffusion": "diffusion",
    "source.drift_rate": "drift_rate",
    "source.tick_file": "tick_file",
    "source.calibration_file": "calibration_file",
    "source.cycle_length": "cycle_length",
    "source.shift": "shift",
    "schedule.gamma1": "gamma1",
    "schedule.rho": "rho",
    "schedule.averaging": "averaging",
    "run.n_paths": "n_paths",
    "run.n_steps": "n_steps",
    "run.seed": "seed",
    "run.threads": "threads",
    "run.delta0": "delta0",
    "run.reference_curve": "reference_curve",
    "run.sharp": "sharp",
    "grid.start": "grid_start",
    "grid.stop": "grid_stop",
    "grid.count": "grid_count",
    "output.dir": "out_dir",
    "output.plots": "plots",
}

_FIELD_TYPES = {f.name: f.type for f in fields(ExperimentConfig)}


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return f"{value:.17g}"
    return str(value)


def _parse_value(attr: str, raw: str):
    kind = _FIELD_TYPES[attr]
    raw = raw.strip()
    try:
        if kind == "bool":
            if raw not in ("true", "false"):
                raise ValueError(f"expected true/false, got {raw!r}")
            return raw == "true"
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        return raw
    except ValueError as exc:
        raise ConfigError(f"cannot parse {attr} from {raw!r}: {exc}") from exc


def config_to_text(config: ExperimentConfig) -> str:
    lines = [f"{key} = {_format_value(getattr(config, attr))}" for key, attr in _KEYS.items()]
    return "\n".join(lines) + "\n"


def parse_config_text(text: str, base: ExperimentConfig | None = None) -> ExperimentConfig:
    """Parse the flat format; unknown keys are errors, omitted keys keep the
    base (default) value, later lines win."""
    config = replace(base) if base is not None else ExperimentConfig()
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw_line!r}")
        key, _, raw_value = line.partition("=")
        key = key.strip()
        if key not in _KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        attr = _KEYS[key]
        setattr(config, attr, _parse_value(attr, raw_value))
    return config


def load_config(path: str | Path, base: ExperimentConfig | None = None) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    return parse_config_text(text, base)


def config_digest(config: ExperimentConfig) -> str:
    return hashlib.sha256(config_to_text(config).encode()).hexdigest()


def _sim_setting_1() -> ExperimentConfig:
    return ExperimentConfig(
        mode="cost-curve",
        base_rate=5.0,
        decay=1.0,
        penalty_kind="exponential_impact",
        impact_scale=1.0,
        impact_growth=0.01,
        quantity=10,
        horizon=5.0,
        kappa=6.0,
        delta_max=3.0,
        s0=100.0,
        source_kind="brownian",
        sigma=0.01,
        steps=20,
        gamma1=1.0 / 100.0,
        rho=1.0,
        averaging=True,
        n_paths=10_000,
        n_steps=100,
    )


def _sim_setting_2() -> ExperimentConfig:
    cfg = _sim_setting_1()
    cfg.penalty_kind = "identity"
    cfg.impact_scale = 0.0
    cfg.impact_growth = 0.0
    cfg.kappa = 12.0
    return cfg


def _market_setting_1() -> ExperimentConfig:
    return ExperimentConfig(
        mode="replay-sa",
        base_rate=1.0 / 50.0,
        decay=50.0,
        penalty_kind="exponential_impact",
        impact_scale=0.001,
        impact_growth=0.0005,
        quantity=100,
        horizon=15.0,
        kappa=1.0,
        delta_max=0.08,
        s0=30.0,
        source_kind="replay",
        cycle_length=15,
        shift=0,
        gamma1=1.0 / 550.0,
        rho=0.95,
        averaging=True,
        n_paths=220,
        n_steps=220,
    )


def _market_setting_2() -> ExperimentConfig:
    cfg = _market_setting_1()
    cfg.penalty_kind = "identity"
    cfg.impact_scale = 0.0
    cfg.impact_growth = 0.0
    cfg.kappa = 1.001
    cfg.gamma1 = 1.0 / 450.0
    return cfg


def _zero_noise() -> ExperimentConfig:
    cfg = _sim_setting_1()
    cfg.mode = "run-sa"
    cfg.sigma = 0.0
    cfg.n_steps = 2_000
    cfg.n_paths = 2
    cfg.gamma1 = 0.02
    cfg.rho = 0.8
    return cfg


_PRESETS = {
    "sim-setting-1": _sim_setting_1,
    "sim-setting-2": _sim_setting_2,
    "market-setting-1": _market_setting_1,
    "market-setting-2": _market_setting_2,
    "zero-noise": _zero_noise,
}

PRESET_NAMES = tuple(sorted(_PRESETS))


def preset(name: str) -> ExperimentConfig:
    try:
        factory = _PRESETS[name]
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(PRESET_NAMES)}")
    return factory()
