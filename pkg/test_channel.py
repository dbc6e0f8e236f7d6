"""
Tests for the radio-physics primitives
"""

import math

import numpy as np
import pytest

from channel import (
    ChannelParams, dbm_to_mw, mw_to_dbm, noise_power_mw, path_loss_db, rayleigh_power_gain,
    rayleigh_power_gains, received_power_mw,
)
from errors import DomainError


@pytest.mark.parametrize("dbm, mw", [(0.0, 1.0), (23.0, 199.526), (17.0, 50.119)])
def test_dbm_to_mw(dbm, mw):
    assert dbm_to_mw(dbm) == pytest.approx(mw, abs=1e-3)


@pytest.mark.parametrize("mw, dbm", [(1.0, 0.0), (100.0, 20.0), (50.119, 17.0)])
def test_mw_to_dbm(mw, dbm):
    assert mw_to_dbm(mw) == pytest.approx(dbm, abs=1e-3)


@pytest.mark.parametrize("bad", [0.0, -1.0])
def test_mw_to_dbm_rejects_non_positive(bad):
    with pytest.raises(DomainError):
        mw_to_dbm(bad)
    with pytest.raises(DomainError):
        mw_to_dbm(np.array([1.0, bad]))


def test_dbm_to_mw_rejects_non_finite():
    with pytest.raises(DomainError):
        dbm_to_mw(math.inf)


def test_dbm_to_mw_arrays():
    out = dbm_to_mw(np.array([0.0, 10.0, 20.0]))
    np.testing.assert_allclose(out, [1.0, 10.0, 100.0])


@pytest.mark.parametrize("distance, expected", [(1000.0, 140.7), (100.0, 104.0), (40.0, 89.38)])
def test_path_loss_defaults(distance, expected):
    assert path_loss_db(ChannelParams(), distance) == pytest.approx(expected, abs=0.01)


@pytest.mark.parametrize("distance", [0.0, -5.0])
def test_path_loss_rejects_non_positive_distance(distance):
    with pytest.raises(DomainError):
        path_loss_db(ChannelParams(), distance)


def test_noise_power_default_rb():
    sigma = noise_power_mw(ChannelParams())
    assert mw_to_dbm(sigma) == pytest.approx(-109.447, abs=1e-3)
    assert sigma == pytest.approx(1.136e-11, rel=1e-3)


def test_noise_power_other_densities():
    assert noise_power_mw(ChannelParams(rb_bandwidth_hz=1.0)) == pytest.approx(10 ** -16.2)
    assert noise_power_mw(ChannelParams(noise_density_dbm_hz=0.0, rb_bandwidth_hz=10.0)) == pytest.approx(10.0)


def test_channel_params_validation():
    with pytest.raises(DomainError):
        ChannelParams(pl_slope=0.0)
    with pytest.raises(DomainError):
        ChannelParams(rb_bandwidth_hz=-1.0)
    assert ChannelParams.from_dict(ChannelParams().to_dict()) == ChannelParams()


def test_rayleigh_gain_is_positive_and_seeded():
    a = [rayleigh_power_gain(np.random.default_rng(5)) for _ in range(3)]
    b = [rayleigh_power_gain(np.random.default_rng(5)) for _ in range(3)]
    assert a == b
    assert all(g > 0 for g in a)

    first = rayleigh_power_gains(np.random.default_rng(42), (4, 5))
    second = rayleigh_power_gains(np.random.default_rng(42), (4, 5))
    np.testing.assert_array_equal(first, second)


@pytest.mark.slow
def test_rayleigh_gain_distribution():
    gains = rayleigh_power_gains(np.random.default_rng(2019), 10 ** 6)
    assert gains.mean() == pytest.approx(1.0, abs=0.01)
    assert np.mean(gains <= math.log(2)) == pytest.approx(0.5, abs=0.01)


def test_received_power_at_100m():
    power = received_power_mw(ChannelParams(), 17.0, 100.0, 1.0)
    assert power == pytest.approx(10 ** -8.70, rel=1e-9)
    assert power == pytest.approx(1.995e-9, rel=1e-3)


def test_received_power_is_linear_in_gain():
    params = ChannelParams()
    full = received_power_mw(params, 17.0, 73.0, 1.0)
    assert received_power_mw(params, 17.0, 73.0, 0.5) == pytest.approx(full / 2)


def test_received_power_tiny_tx_does_not_raise():
    assert received_power_mw(ChannelParams(), -300.0, 50.0, 1.0) == pytest.approx(0.0, abs=1e-30)


def test_received_power_broadcasts():
    distances = np.array([[40.0, 100.0]])[:, np.newaxis, :]
    gains = np.ones((1, 3, 2))
    out = received_power_mw(ChannelParams(), 17.0, distances, gains)
    assert out.shape == (1, 3, 2)
    assert out[0, 0, 0] > out[0, 0, 1]


def test_received_power_rejects_zero_gain():
    with pytest.raises(DomainError):
        received_power_mw(ChannelParams(), 17.0, 50.0, 0.0)
