"""
Radio-physics primitives for the Pico tier uplink
Unit conversion, path loss, Rayleigh power gain, received power and noise
"""

import logging
import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from errors import DomainError

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]

# Power gain draws of exactly zero are replaced by this floor so omega stays > 0.
MIN_FADING_GAIN = np.finfo(float).tiny


@dataclass(frozen=True)
class ChannelParams:
    """Path loss and noise constants (dB / dBm)"""
    pl_intercept: float = 140.7
    pl_slope: float = 36.7
    noise_density_dbm_hz: float = -162.0
    rb_bandwidth_hz: float = 180e3

    def __post_init__(self):
        if not self.pl_slope > 0:
            raise DomainError(f"pl_slope must be > 0, got {self.pl_slope}")
        if not self.rb_bandwidth_hz > 0:
            raise DomainError(f"rb_bandwidth_hz must be > 0, got {self.rb_bandwidth_hz}")
        for name in ("pl_intercept", "noise_density_dbm_hz"):
            if not math.isfinite(getattr(self, name)):
                raise DomainError(f"{name} must be finite")

    def to_dict(self) -> dict:
        """Plain dict for JSON configs"""
        return {
            "pl_intercept": self.pl_intercept,
            "pl_slope": self.pl_slope,
            "noise_density_dbm_hz": self.noise_density_dbm_hz,
            "rb_bandwidth_hz": self.rb_bandwidth_hz,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ChannelParams":
        """Inverse of to_dict; unknown keys raise DomainError"""
        return cls(**data)


def dbm_to_mw(x: ArrayLike) -> ArrayLike:
    """Convert dBm to milliwatts: 10^(x/10)"""
    if np.ndim(x) == 0:
        if not math.isfinite(x):
            raise DomainError(f"power in dBm must be finite, got {x}")
        return 10.0 ** (x / 10.0)
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise DomainError("power in dBm must be finite")
    return np.power(10.0, x / 10.0)


def mw_to_dbm(p: ArrayLike) -> ArrayLike:
    """Convert milliwatts to dBm; p must be strictly positive"""
    if np.ndim(p) == 0:
        if not p > 0:
            raise DomainError(f"power in mW must be > 0, got {p}")
        return 10.0 * math.log10(p)
    p = np.asarray(p, dtype=float)
    if not np.all(p > 0):
        raise DomainError("power in mW must be > 0")
    return 10.0 * np.log10(p)


def path_loss_db(params: ChannelParams, distance: ArrayLike) -> ArrayLike:
    """Log-distance path loss, distance in meters"""
    if np.ndim(distance) == 0:
        if not distance > 0:
            raise DomainError(f"distance must be > 0, got {distance}")
        return params.pl_intercept + params.pl_slope * math.log10(distance / 1000.0)
    distance = np.asarray(distance, dtype=float)
    if not np.all(distance > 0):
        raise DomainError("distance must be > 0")
    return params.pl_intercept + params.pl_slope * np.log10(distance / 1000.0)


def noise_power_mw(params: ChannelParams) -> float:
    """AWGN power over one RB; the same sigma for every (user, RB, PBS)"""
    return dbm_to_mw(params.noise_density_dbm_hz + 10.0 * math.log10(params.rb_bandwidth_hz))


def rayleigh_power_gain(rng: np.random.Generator) -> float:
    """One unit-mean exponential power gain (Rayleigh amplitude)"""
    gain = rng.exponential(1.0)
    while gain <= 0.0:
        gain = rng.exponential(1.0)
    return float(gain)


def rayleigh_power_gains(rng: np.random.Generator, shape) -> np.ndarray:
    """Vectorized rayleigh_power_gain, one draw per array cell in C order"""
    gains = rng.exponential(1.0, size=shape)
    return np.maximum(gains, MIN_FADING_GAIN)


def received_power_mw(params: ChannelParams, tx_dbm: ArrayLike, distance: ArrayLike,
                      gain: ArrayLike) -> ArrayLike:
    """Power received at the PBS: tx minus path loss, scaled by the fading gain"""
    if np.ndim(gain) == 0:
        if not gain > 0:
            raise DomainError(f"fading gain must be > 0, got {gain}")
    elif not np.all(np.asarray(gain) > 0):
        raise DomainError("fading gain must be > 0")
    return dbm_to_mw(tx_dbm - path_loss_db(params, distance)) * gain
