"""Geometry, signal containers, source descriptions and run configuration.

Wave speed is normalised to one throughout, so time and length share
units. Points are plain ``numpy`` arrays of shape ``(3,)``; batches of
points are ``(n, 3)`` arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.interpolate import CubicHermiteSpline

from .errors import ConfigError, Coplanar, OffSphere, OrbitError, ValidationError

SPHERE_RTOL = 1e-12
COPLANAR_RTOL = 1e-9


def as_vec3(p) -> np.ndarray:
    v = np.asarray(p, dtype=float).reshape(3)
    if not np.all(np.isfinite(v)):
        raise ValidationError(f"non-finite point {p!r}")
    return v


# ---------------------------------------------------------------------------
# Orbits
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class Orbit:
    """Path ``a(t)`` of a moving point source on ``[0, horizon]``.

    ``position`` and ``velocity`` accept a scalar or a 1-D array of times
    and return ``(3,)`` or ``(n, 3)`` arrays respectively.
    """

    position: Callable
    velocity: Callable
    speed_bound: float
    radius_bound: float
    horizon: float
    kind: str = "closed-form"

    def __post_init__(self):
        if not 0.0 < self.speed_bound < 1.0:
            raise OrbitError(f"speed bound {self.speed_bound} not in (0, 1)")
        if self.radius_bound <= 0.0:
            raise OrbitError("radius bound must be positive")

    @classmethod
    def static(cls, horizon=10.0, radius_bound=0.5):
        def pos(t):
            t = np.asarray(t, dtype=float)
            return np.zeros(t.shape + (3,))

        return cls(pos, pos, speed_bound=1e-3, radius_bound=radius_bound, horizon=horizon)

    @classmethod
    def linear(cls, velocity, horizon=1.0, radius_bound=None):
        v = as_vec3(velocity)
        speed = float(np.linalg.norm(v))
        if radius_bound is None:
            radius_bound = max(speed * horizon, 1e-3)

        def pos(t):
            t = np.asarray(t, dtype=float)
            return t[..., None] * v

        def vel(t):
            t = np.asarray(t, dtype=float)
            return np.broadcast_to(v, t.shape + (3,)).copy()

        return cls(pos, vel, speed_bound=max(speed, 1e-3), radius_bound=radius_bound,
                   horizon=horizon)

    @classmethod
    def circular(cls, rho, Omega, horizon=10.0, radius_bound=None):
        """Planar circle ``rho * (sin(Omega t), 1 - cos(Omega t), 0)`` through the origin."""
        if radius_bound is None:
            radius_bound = 2.0 * rho

        def pos(t):
            t = np.asarray(t, dtype=float)
            return rho * np.stack([np.sin(Omega * t), 1.0 - np.cos(Omega * t), np.zeros_like(t)], -1)

        def vel(t):
            t = np.asarray(t, dtype=float)
            return rho * Omega * np.stack([np.cos(Omega * t), np.sin(Omega * t), np.zeros_like(t)], -1)

        return cls(pos, vel, speed_bound=abs(rho * Omega), radius_bound=radius_bound,
                   horizon=horizon)

    @classmethod
    def from_samples(cls, times, positions, velocities, radius_bound, start_tol=1e-9):
        """Cubic Hermite orbit through sampled positions and velocities."""
        times = np.asarray(times, dtype=float)
        positions = np.asarray(positions, dtype=float)
        velocities = np.asarray(velocities, dtype=float)
        if times.ndim != 1 or len(times) < 2 or np.any(np.diff(times) <= 0):
            raise OrbitError("sample times must be strictly increasing, length >= 2")
        if abs(times[0]) > 0:
            raise OrbitError("sampled orbit must start at t = 0")
        if np.linalg.norm(positions[0]) > start_tol:
            raise OrbitError("sampled orbit does not start at the origin")
        fd_speed = np.linalg.norm(np.diff(positions, axis=0), axis=1) / np.diff(times)
        speed = max(float(np.max(fd_speed)), float(np.max(np.linalg.norm(velocities, axis=1))))
        if speed >= 1.0:
            raise OrbitError(f"sampled orbit reaches speed {speed:.6g} >= 1")
        spline = CubicHermiteSpline(times, positions, velocities, axis=0)
        dspline = spline.derivative()
        return cls(lambda t: spline(np.asarray(t, dtype=float)),
                   lambda t: dspline(np.asarray(t, dtype=float)),
                   speed_bound=speed, radius_bound=radius_bound,
                   horizon=float(times[-1]), kind="sampled")

    def validate(self, R=None, n=2001):
        """Check the start point, speed and radius on a sampling grid."""
        t = np.linspace(0.0, self.horizon, n)
        a = self.position(t)
        if np.linalg.norm(a[0]) > (0.0 if self.kind == "closed-form" else 1e-9):
            raise OrbitError("orbit does not start at the origin")
        speed = np.linalg.norm(self.velocity(t), axis=1)
        fd_speed = np.linalg.norm(np.diff(a, axis=0), axis=1) / np.diff(t)
        if max(speed.max(), fd_speed.max()) >= 1.0:
            raise OrbitError("orbit speed reaches the wave speed")
        if speed.max() > self.speed_bound * (1 + 1e-12):
            raise OrbitError("orbit exceeds its declared speed bound")
        if np.linalg.norm(a, axis=1).max() > self.radius_bound * (1 + 1e-12):
            raise OrbitError("orbit leaves its declared radius bound")
        if R is not None and self.radius_bound >= R:
            raise OrbitError(f"radius bound {self.radius_bound} must be below R={R}")


# ---------------------------------------------------------------------------
# Receivers and signals
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class ReceiverArray:
    positions: np.ndarray
    R: float

    def __post_init__(self):
        pos = np.atleast_2d(np.asarray(self.positions, dtype=float))
        object.__setattr__(self, "positions", pos)

    @classmethod
    def symmetric(cls, R):
        """The four-receiver array ``R * {e1, -e1, e2, e3}``."""
        return cls(R * np.array([[1.0, 0, 0], [-1.0, 0, 0], [0, 1.0, 0], [0, 0, 1.0]]), R)

    def __len__(self):
        return len(self.positions)


def difference_determinant(positions) -> float:
    p = np.asarray(positions, dtype=float)
    return float(np.linalg.det(p[0] - p[1:4]))


def validate_receivers(array: ReceiverArray) -> None:
    """Raise ``OffSphere`` or ``Coplanar`` when the receiver array is unusable."""
    if array.R <= 0:
        raise ValidationError("R must be positive")
    pos = array.positions
    if pos.shape[0] < 1 or pos.shape[1] != 3:
        raise ValidationError("receiver array needs at least one 3-D position")
    if not np.all(np.isfinite(pos)):
        raise ValidationError("non-finite receiver position")
    radii = np.linalg.norm(pos, axis=1)
    bad = np.flatnonzero(np.abs(radii - array.R) > SPHERE_RTOL * array.R)
    if bad.size:
        j = int(bad[0])
        raise OffSphere(f"receiver {j} at radius {radii[j]:.17g}, expected {array.R}")
    if len(pos) == 4:
        det = difference_determinant(pos)
        if abs(det) <= COPLANAR_RTOL * array.R ** 3:
            raise Coplanar(f"receivers are coplanar (det={det:.3g})")


@dataclass
class TimeSeries:
    """Uniformly sampled signal ``u(receiver, t0 + n dt)``.

    ``arrival`` is the first-arrival time at the receiver, when known.
    """

    receiver: np.ndarray
    t0: float
    dt: float
    samples: np.ndarray
    arrival: Optional[float] = None

    def __post_init__(self):
        self.receiver = as_vec3(self.receiver)
        self.samples = np.asarray(self.samples, dtype=float)
        if not self.dt > 0:
            raise ValidationError("dt must be positive")
        if self.samples.ndim != 1 or len(self.samples) < 2:
            raise ValidationError("a time series needs at least two samples")
        if not np.all(np.isfinite(self.samples)):
            raise ValidationError("non-finite samples")

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(len(self.samples))

    @property
    def t_end(self) -> float:
        return self.t0 + self.dt * (len(self.samples) - 1)


# ---------------------------------------------------------------------------
# Sources
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class MovingPointSource:
    orbit: Orbit
    omega: float


@dataclass(frozen=True)
class SeparableSource:
    """``F(x, t) = f(x) g(t)`` with ``supp f`` in ``B_R0`` and ``supp g`` in ``[0, T0]``."""

    f: Callable
    g: Callable
    R0: float
    T0: float

    def spatial(self, y):
        y = np.atleast_2d(y)
        out = np.asarray(self.f(y), dtype=float)
        return np.where(np.linalg.norm(y, axis=1) < self.R0, out, 0.0)

    def density(self, y, t):
        t = np.asarray(t, dtype=float)
        inside = (t > 0.0) & (t < self.T0)
        gt = np.where(inside, self.g(np.where(inside, t, 0.0)), 0.0)
        return self.spatial(y) * gt


@dataclass(frozen=True)
class PlanarSource:
    """``F(x, t) = ftilde(x1, x2, t) h(x3)``.

    ``ftilde`` takes an ``(n, 2)`` array of in-plane points and times;
    ``h_support`` is the closed interval outside of which ``h`` vanishes.
    """

    ftilde: Callable
    h: Callable
    R0: float
    T0: float
    h_support: Optional[tuple] = None

    def __post_init__(self):
        if self.h_support is None:
            object.__setattr__(self, "h_support", (-self.R0, self.R0))
        lo, hi = self.h_support
        if lo < -self.R0 or hi > self.R0 or lo >= hi:
            raise ValidationError("h support must lie inside (-R0, R0)")

    def check_radius(self, R):
        if self.R0 >= R / math.sqrt(2.0):
            raise ValidationError(f"planar support R0={self.R0} must be below R/sqrt(2)")

    def density(self, y, t):
        y = np.atleast_2d(y)
        t = np.asarray(t, dtype=float)
        lo, hi = self.h_support
        inside = (t > 0.0) & (t < self.T0)
        disk = np.linalg.norm(y[:, :2], axis=1) < self.R0
        slab = (y[:, 2] >= lo) & (y[:, 2] <= hi)
        tt = np.where(inside, t, 0.0)
        val = np.asarray(self.ftilde(y[:, :2], tt), dtype=float) * self.h(y[:, 2])
        return np.where(inside & disk & slab, val, 0.0)


@dataclass(frozen=True)
class NonRadiatingSource:
    """``F = d2chi/dt2 - lap chi`` for a compactly supported ``chi``."""

    chi: Callable
    F: Callable
    R: float
    T0: float

    def density(self, y, t):
        return np.asarray(self.F(np.atleast_2d(y), np.asarray(t, dtype=float)), dtype=float)


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------
@dataclass
class Config:
    R: float
    R0: Optional[float] = None
    R1: Optional[float] = None
    T0: float = 1.0
    T: Optional[float] = None
    omega: float = 1.0
    dt: float = 1e-3
    h: float = 1e-3
    spacing: float = 0.05
    sphere_order: int = 16
    frequencies: Sequence[float] = field(default_factory=tuple)
    root_tol: float = 1e-12
    eps_c: float = 1e-2
    small_divisor_tol: float = 1e-12
    out_dir: str = "."

    def __post_init__(self):
        # Both radii name the same confinement ball unless set apart.
        if self.R1 is None and self.R0 is not None:
            self.R1 = self.R0
        if self.R0 is None and self.R1 is not None:
            self.R0 = self.R1

    def validate(self, orbit_recovery=False):
        for name in ("R", "dt", "h", "spacing", "T0"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if self.sphere_order <= 0:
            raise ConfigError("sphere_order must be positive")
        if orbit_recovery:
            if self.R1 is None:
                raise ConfigError("R1 is required for orbit recovery")
            if not self.R1 < self.R:
                raise ConfigError("R1 must be below R")
            T = self.T if self.T is not None else self.T0 + self.R + self.R1 + self.h
            if not T > self.T0 + self.R + self.R1:
                raise ConfigError(
                    f"observation time T={T} must exceed T0 + R + R1 = {self.T0 + self.R + self.R1}")


@dataclass(frozen=True)
class CauchyData:
    """Traces ``(u, du/dnu)`` of a time-harmonic field on the sphere of radius ``R``.

    ``sphere`` is the unit-sphere rule whose scaled nodes carry the values.
    """

    kappa: float
    sphere: object
    R: float
    u: np.ndarray
    du: np.ndarray

    def __post_init__(self):
        if not self.kappa > 0:
            raise ValidationError("kappa must be positive")
        n = len(self.sphere.weights)
        if np.shape(self.u) != (n,) or np.shape(self.du) != (n,):
            raise ValidationError("trace lengths do not match the sphere rule")
