import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wavesrc.core import (CauchyData, Config, Orbit, PlanarSource, ReceiverArray, SeparableSource,
                          TimeSeries, validate_receivers)
from wavesrc.errors import ConfigError, Coplanar, OffSphere, OrbitError, ValidationError
from wavesrc.transforms import sphere_rule


def test_symmetric_array_validates():
    validate_receivers(ReceiverArray(2.0 * np.array([[1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, 0, 1]]), 2.0))


def test_coplanar_array_rejected():
    arr = ReceiverArray(2.0 * np.array([[1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0]]), 2.0)
    with pytest.raises(Coplanar):
        validate_receivers(arr)


def test_off_sphere_rejected():
    arr = ReceiverArray(np.array([[1.0, 0, 0], [-2, 0, 0], [0, 2, 0], [0, 0, 2]]), 2.0)
    with pytest.raises(OffSphere):
        validate_receivers(arr)


def test_nearly_coplanar_below_tolerance():
    # lift one receiver of a planar set by far less than the 1e-9 R^3 threshold
    eps = 1e-12
    z = math.sqrt(1 - eps * eps)
    arr = ReceiverArray(2.0 * np.array([[1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, z, eps]]), 2.0)
    with pytest.raises(Coplanar):
        validate_receivers(arr)


def test_closed_form_orbits_validate():
    Orbit.static(horizon=5.0, radius_bound=0.5).validate(R=2.0)
    Orbit.linear([0.5, 0, 0], horizon=1.0, radius_bound=0.6).validate(R=2.0)
    Orbit.circular(0.3, 1.0, horizon=6.0, radius_bound=0.7).validate(R=2.0)


def test_orbit_radius_bound_must_be_inside_sphere():
    with pytest.raises(OrbitError):
        Orbit.circular(0.3, 1.0, horizon=6.0, radius_bound=2.5).validate(R=2.0)


def test_orbit_leaving_radius_bound_rejected():
    with pytest.raises(OrbitError):
        Orbit.circular(0.3, 1.0, horizon=6.0, radius_bound=0.5).validate()


@settings(max_examples=30, deadline=None)
@given(speed=st.floats(1.0, 3.0), n=st.integers(3, 40))
def test_sampled_orbit_too_fast_rejected(speed, n):
    t = np.linspace(0.0, 1.0, n)
    pos = np.stack([speed * t, 0 * t, 0 * t], 1)
    vel = np.tile([speed, 0.0, 0.0], (n, 1))
    with pytest.raises(OrbitError):
        Orbit.from_samples(t, pos, vel, radius_bound=10.0)


def test_sampled_orbit_reproduces_linear_path():
    t = np.linspace(0.0, 1.0, 11)
    v = np.array([0.3, -0.1, 0.2])
    orb = Orbit.from_samples(t, t[:, None] * v, np.tile(v, (11, 1)), radius_bound=0.5)
    orb.validate(R=2.0)
    tt = np.linspace(0, 1, 57)
    assert np.abs(orb.position(tt) - tt[:, None] * v).max() < 1e-14


def test_sampled_orbit_must_start_at_origin():
    t = np.linspace(0.0, 1.0, 5)
    with pytest.raises(OrbitError):
        Orbit.from_samples(t, np.ones((5, 3)) * 0.1, np.zeros((5, 3)), radius_bound=0.5)


def test_config_enforces_observation_time():
    cfg = Config(R=2.0, R1=0.7, T0=6.0, T=8.7)
    with pytest.raises(ConfigError):
        cfg.validate(orbit_recovery=True)
    Config(R=2.0, R1=0.7, T0=6.0, T=8.8).validate(orbit_recovery=True)


def test_config_radii_default_equal():
    assert Config(R=2.0, R0=0.5).R1 == 0.5
    assert Config(R=2.0, R1=0.6).R0 == 0.6


def test_config_rejects_nonpositive_resolution():
    with pytest.raises(ConfigError):
        Config(R=2.0, h=0.0).validate()


def test_time_series_invariants():
    s = TimeSeries([2, 0, 0], 0.5, 0.25, [1.0, 2.0, 3.0])
    assert np.allclose(s.times, [0.5, 0.75, 1.0])
    assert s.t_end == 1.0
    with pytest.raises(ValidationError):
        TimeSeries([2, 0, 0], 0.0, 0.0, [1.0, 2.0])
    with pytest.raises(ValidationError):
        TimeSeries([2, 0, 0], 0.0, 0.1, [1.0])
    with pytest.raises(ValidationError):
        TimeSeries([2, 0, 0], 0.0, 0.1, [1.0, np.nan])


def test_separable_source_respects_support():
    src = SeparableSource(lambda y: np.ones(len(y)), lambda t: np.ones_like(t), 0.5, 1.0)
    y = np.array([[0.0, 0, 0], [0.6, 0, 0]])
    assert np.allclose(src.density(y, 0.5), [1.0, 0.0])
    assert np.allclose(src.density(y, 1.5), [0.0, 0.0])


def test_planar_source_radius_check():
    src = PlanarSource(lambda y, t: np.ones(len(y)), lambda z: np.ones_like(z), 1.5, 1.0)
    with pytest.raises(ValidationError):
        src.check_radius(2.0)
    PlanarSource(lambda y, t: np.ones(len(y)), lambda z: np.ones_like(z), 1.4, 1.0).check_radius(2.0)


def test_cauchy_data_lengths_checked():
    sph = sphere_rule(4)
    n = len(sph.weights)
    CauchyData(1.0, sph, 2.0, np.zeros(n, complex), np.zeros(n, complex))
    with pytest.raises(ValidationError):
        CauchyData(1.0, sph, 2.0, np.zeros(n - 1, complex), np.zeros(n, complex))
    with pytest.raises(ValidationError):
        CauchyData(0.0, sph, 2.0, np.zeros(n, complex), np.zeros(n, complex))
