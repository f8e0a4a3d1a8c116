"""Experiment configuration: defaults, JSON file loading, validation.

A configuration fully determines a run: plant geometry, controller gains,
quantization, key size, decoy policy, reference path, attack policy, seed,
and endpoint.  Validation collects every problem before anything (keys,
sockets, files) is touched, so a bad config fails fast with one report.

Randomness is split into named streams derived from the single seed, so the
plant, cloud, key generator, and pool builder draw from independent
deterministic sources.
"""

from __future__ import annotations

import dataclasses
import json
import random
from dataclasses import dataclass
from pathlib import Path

from . import robot
from .fixed_point import DELTA_DEFAULT
from .robot import PIGains, RobotParams

ATTACK_KINDS = ("replay", "guess_and_tamper", "constant_decoy_replay")

KEY_BITS_DEFAULT = 512
KEY_BITS_MIN = 24  # below this the message space cannot hold delta**2-scale values


class ConfigError(Exception):
    """Invalid configuration; `problems` lists every violation found."""

    def __init__(self, problems: list[str]):
        self.problems = problems
        super().__init__("; ".join(problems))


@dataclass
class ExperimentConfig:
    steps: int = 400
    t_s: float = robot.T_S_DEFAULT
    b: float = robot.OFFSET_B_DEFAULT
    k_p: float = robot.K_P_DEFAULT
    k_i: float = robot.K_I_DEFAULT
    delta: float = DELTA_DEFAULT
    wheel_radius: float = robot.WHEEL_RADIUS_DEFAULT
    axle_length: float = robot.AXLE_LENGTH_DEFAULT
    key_bits: int = KEY_BITS_DEFAULT       # prime size in bits
    key_file: str | None = None            # reuse keys from `keygen` output
    n_d: int = 1                           # decoys per step (0 disables checking)
    pool_size: int = 2                     # N_d; 2 selects the stock pool
    pool_file: str | None = None           # overrides pool_size when set
    allow_single_decoy: bool = False       # permit the degenerate N_d=1 pool
    waypoint_file: str | None = None       # default: built-in figure-eight
    speed: float = robot.SPEED_DEFAULT
    attack: str | None = None
    k_a: int = 200
    tamper_factor: int = 2
    seed: int = 0
    endpoint: str | None = None            # "host:port" TCP; None = loopback
    grace_steps: int = 10                  # zero-command steps logged after a halt
    pace: bool = False                     # pace the loop at t_s wall-clock

    def robot_params(self) -> RobotParams:
        return RobotParams(wheel_radius=self.wheel_radius,
                           axle_length=self.axle_length,
                           t_s=self.t_s, b=self.b)

    def gains(self) -> PIGains:
        return PIGains(k_p=self.k_p, k_i=self.k_i, t_s=self.t_s)

    def rng(self, stream: str) -> random.Random:
        """Deterministic per-purpose randomness derived from the seed."""
        return random.Random(f"{self.seed}/{stream}")

    def validate(self) -> None:
        problems = []
        if self.steps < 0:
            problems.append("steps must be nonnegative")
        for name in ("t_s", "b", "delta", "wheel_radius", "axle_length", "speed"):
            if getattr(self, name) <= 0:
                problems.append(f"{name} must be positive")
        if self.key_bits < KEY_BITS_MIN:
            problems.append(f"key_bits must be at least {KEY_BITS_MIN}")
        if self.n_d < 0:
            problems.append("n_d must be nonnegative")
        if self.pool_file is None:
            if self.pool_size < 1:
                problems.append("pool_size must be at least 1")
            elif self.pool_size == 1 and not self.allow_single_decoy:
                problems.append(
                    "pool_size 1 is unsafe (known-decoy replay defeats it); "
                    "set allow_single_decoy to reproduce the degenerate case"
                )
        if self.attack is not None and self.attack not in ATTACK_KINDS:
            problems.append(f"attack must be one of {ATTACK_KINDS} or null")
        if self.k_a < 0:
            problems.append("k_a must be nonnegative")
        if self.grace_steps < 0:
            problems.append("grace_steps must be nonnegative")
        if self.seed < 0:
            problems.append("seed must be nonnegative")
        if self.endpoint is not None:
            host, sep, port = self.endpoint.rpartition(":")
            if not sep or not host or not port.isdigit():
                problems.append("endpoint must look like host:port")
        for name in ("key_file", "pool_file", "waypoint_file"):
            value = getattr(self, name)
            if value is not None and not Path(value).is_file():
                problems.append(f"{name} {value!r} does not exist")
        if problems:
            raise ConfigError(problems)


def from_dict(data: dict) -> ExperimentConfig:
    fields = {f.name for f in dataclasses.fields(ExperimentConfig)}
    unknown = sorted(set(data) - fields)
    if unknown:
        raise ConfigError([f"unknown config key {k!r}" for k in unknown])
    try:
        return ExperimentConfig(**data)
    except TypeError as exc:
        raise ConfigError([str(exc)]) from exc


def load_config(path: str | Path) -> ExperimentConfig:
    try:
        data = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError([f"cannot read config {path}: {exc}"]) from exc
    except json.JSONDecodeError as exc:
        raise ConfigError([f"config {path} is not valid JSON: {exc}"]) from exc
    if not isinstance(data, dict):
        raise ConfigError([f"config {path} must hold a JSON object"])
    return from_dict(data)


def save_config(path: str | Path, cfg: ExperimentConfig) -> None:
    Path(path).write_text(json.dumps(dataclasses.asdict(cfg), indent=2) + "\n")


def apply_overrides(cfg: ExperimentConfig, overrides: dict) -> ExperimentConfig:
    """New config with the given fields replaced (None values are skipped)."""
    changes = {k: v for k, v in overrides.items() if v is not None}
    return dataclasses.replace(cfg, **changes)
