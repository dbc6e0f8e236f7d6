"""
Randomized Pico-tier network instances
Draws user distances and per-RB fading, and builds the received-power tensor
"""

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Tuple, Union

import numpy as np

from channel import ChannelParams, dbm_to_mw, noise_power_mw, rayleigh_power_gains, received_power_mw
from errors import ConfigError, DomainError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ScenarioConfig:
    """Model parameters; defaults are the Pico-tier evaluation settings"""
    num_pbs: int = 2
    rbs_per_pbs: int = 5
    num_users: int = 10
    num_normal: int = 7
    distance_range: Tuple[float, float] = (40.0, 100.0)
    tx_per_rb_dbm: float = 17.0
    max_power_per_connection_dbm: float = 23.0
    channel: ChannelParams = field(default_factory=ChannelParams)
    fading: bool = True
    # Carried for completeness only; the macro tier is spectrum-partitioned away.
    mbs_rbs: int = 10
    system_bandwidth_hz: float = 3e6

    def __post_init__(self):
        object.__setattr__(self, "distance_range", tuple(float(d) for d in self.distance_range))
        if self.num_pbs < 1 or self.rbs_per_pbs < 1 or self.num_users < 1:
            raise ConfigError("num_pbs, rbs_per_pbs and num_users must be >= 1")
        if not 0 <= self.num_normal < self.num_users:
            raise ConfigError(
                f"num_normal must satisfy 0 <= NU < K, got NU={self.num_normal}, K={self.num_users}")
        if self.num_pbs * self.rbs_per_pbs < self.num_users:
            raise ConfigError(
                f"B*N = {self.num_pbs * self.rbs_per_pbs} slots cannot give each of "
                f"{self.num_users} users an RB")
        if len(self.distance_range) != 2:
            raise ConfigError("distance_range must be a (min, max) pair")
        low, high = self.distance_range
        if not 0 < low <= high:
            raise ConfigError(f"distance_range must satisfy 0 < min <= max, got {self.distance_range}")
        for name in ("tx_per_rb_dbm", "max_power_per_connection_dbm"):
            if not math.isfinite(getattr(self, name)):
                raise ConfigError(f"{name} must be finite")
        if max_rbs_per_user(self) < 1:
            raise ConfigError("max power per connection is below the per-RB power")

    @property
    def num_outpatients(self) -> int:
        return self.num_users - self.num_normal

    @property
    def num_slots(self) -> int:
        return self.num_pbs * self.rbs_per_pbs

    def to_dict(self) -> dict:
        """JSON-ready field dict; channel parameters nested"""
        return {
            "num_pbs": self.num_pbs,
            "rbs_per_pbs": self.rbs_per_pbs,
            "num_users": self.num_users,
            "num_normal": self.num_normal,
            "distance_range": list(self.distance_range),
            "tx_per_rb_dbm": self.tx_per_rb_dbm,
            "max_power_per_connection_dbm": self.max_power_per_connection_dbm,
            "channel": self.channel.to_dict(),
            "fading": self.fading,
            "mbs_rbs": self.mbs_rbs,
            "system_bandwidth_hz": self.system_bandwidth_hz,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioConfig":
        """Inverse of to_dict; bad fields raise ConfigError"""
        data = dict(data)
        try:
            if "channel" in data:
                data["channel"] = ChannelParams.from_dict(data["channel"])
            return cls(**data)
        except TypeError as e:
            raise ConfigError(f"invalid scenario config: {e}") from e
        except DomainError as e:
            raise ConfigError(f"invalid channel parameters: {e}") from e


@dataclass(frozen=True, eq=False)
class Scenario:
    """One network instance

    omega[k, n, b] is the power (mW) received at PBS b from user k on RB n.
    """
    config: ScenarioConfig
    omega: np.ndarray
    sigma: float
    op_flags: Tuple[bool, ...]
    seed: int

    def __post_init__(self):
        omega = np.array(self.omega, dtype=float)
        expected = (self.config.num_users, self.config.rbs_per_pbs, self.config.num_pbs)
        if omega.shape != expected:
            raise DomainError(f"omega has shape {omega.shape}, expected {expected}")
        if not np.all(np.isfinite(omega)) or np.any(omega < 0):
            raise DomainError("omega entries must be finite and >= 0")
        if not self.sigma > 0:
            raise DomainError(f"sigma must be > 0, got {self.sigma}")
        flags = tuple(bool(f) for f in self.op_flags)
        if len(flags) != self.config.num_users:
            raise DomainError("op_flags must have one entry per user")
        # allocator weights users by index, so the outpatients must be the last K - NU
        if flags != op_flags_for(self.config):
            raise DomainError(
                f"op_flags must mark exactly the last {self.config.num_outpatients} users as outpatients")
        omega.flags.writeable = False
        object.__setattr__(self, "omega", omega)
        object.__setattr__(self, "op_flags", flags)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Scenario):
            return NotImplemented
        return (self.config == other.config and self.sigma == other.sigma
                and self.op_flags == other.op_flags and self.seed == other.seed
                and np.array_equal(self.omega, other.omega))

    def to_dict(self) -> dict:
        """JSON-ready form; omega as nested lists in [k][n][b] order"""
        return {
            "config": self.config.to_dict(),
            "seed": self.seed,
            "op_flags": list(self.op_flags),
            "sigma": self.sigma,
            "omega": self.omega.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Scenario":
        """Inverse of to_dict; missing keys raise ConfigError"""
        try:
            return cls(
                config=ScenarioConfig.from_dict(data["config"]),
                omega=np.array(data["omega"], dtype=float),
                sigma=float(data["sigma"]),
                op_flags=tuple(data["op_flags"]),
                seed=int(data["seed"]),
            )
        except KeyError as e:
            raise ConfigError(f"scenario file is missing {e}") from e


def op_flags_for(config: ScenarioConfig) -> Tuple[bool, ...]:
    """The last K - NU users are the outpatients"""
    return tuple(k >= config.num_normal for k in range(config.num_users))


def generate(config: ScenarioConfig, seed: int) -> Scenario:
    """Draw one instance; the same (config, seed) always gives the same omega"""
    rng = np.random.default_rng(seed)
    K, N, B = config.num_users, config.rbs_per_pbs, config.num_pbs
    low, high = config.distance_range

    distances = rng.uniform(low, high, size=(K, B))
    if config.fading:
        gains = rayleigh_power_gains(rng, (K, N, B))
    else:
        gains = np.ones((K, N, B))

    omega = received_power_mw(config.channel, config.tx_per_rb_dbm, distances[:, np.newaxis, :], gains)
    scenario = Scenario(config, omega, noise_power_mw(config.channel), op_flags_for(config), int(seed))
    logger.debug(f"Generated scenario seed={seed}: omega in [{omega.min():.3e}, {omega.max():.3e}] mW")
    return scenario


def max_rbs_per_user(config: ScenarioConfig) -> int:
    """RB-count form of the per-connection power cap"""
    ratio = dbm_to_mw(config.max_power_per_connection_dbm) / dbm_to_mw(config.tx_per_rb_dbm)
    # 20 dBm over 20 dBm must give exactly 1, not 0.999...
    return int(math.floor(ratio + 1e-9))


def derive_seeds(master_seed: int, count: int) -> List[int]:
    """Independent 64-bit scenario seeds, one per Monte Carlo instance"""
    children = np.random.SeedSequence(master_seed).spawn(count)
    return [int(child.generate_state(1, dtype=np.uint64)[0]) for child in children]


def save_scenario(scenario: Scenario, path: Union[str, Path]):
    """Write a scenario as JSON"""
    try:
        with open(path, "w") as f:
            json.dump(scenario.to_dict(), f, indent=2)
        logger.info(f"Saved scenario seed={scenario.seed} to {path}")
    except OSError as e:
        logger.error(f"Error saving scenario: {e}")
        raise


def load_scenario(path: Union[str, Path]) -> Scenario:
    """Read a scenario written by save_scenario; invalid files raise ConfigError or DomainError"""
    with open(path, "r") as f:
        try:
            data = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path} is not valid JSON: {e}") from e
    return Scenario.from_dict(data)
