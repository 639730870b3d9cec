"""Time transforms of sampled signals and quadrature rules.

Everything here is deterministic: node orderings are fixed and 1-D
reductions go through ``math.fsum``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import TimeSeries
from .errors import BadSpacing, EmptySeries, NonPositiveS, OrderTooSmall


def _trapezoid_weights(n, dt):
    w = np.full(n, dt)
    w[0] = w[-1] = 0.5 * dt
    return w


def csum(values) -> complex:
    """Correctly rounded sum of a complex array."""
    values = np.asarray(values)
    return complex(math.fsum(values.real.tolist()), math.fsum(values.imag.tolist()))


def dft_time(series: TimeSeries, kappa: float) -> complex:
    """Trapezoid approximation of ``int u(t) exp(-i kappa t) dt``."""
    if series is None or len(series.samples) == 0:
        raise EmptySeries("empty time series")
    t = series.times
    w = _trapezoid_weights(len(t), series.dt) * series.samples
    phase = kappa * t
    return complex(math.fsum((w * np.cos(phase)).tolist()),
                   -math.fsum((w * np.sin(phase)).tolist()))


def laplace_time(series: TimeSeries, s: float) -> float:
    """Trapezoid approximation of ``int u(t) exp(-s t) dt`` for real ``s > 0``.

    Diagnostic only; the reconstruction pipelines work with ``dft_time``.
    """
    if not s > 0:
        raise NonPositiveS(f"s must be positive, got {s}")
    if series is None or len(series.samples) == 0:
        raise EmptySeries("empty time series")
    w = _trapezoid_weights(len(series.samples), series.dt) * series.samples
    return math.fsum((w * np.exp(-s * series.times)).tolist())


@dataclass(frozen=True)
class SphereQuadrature:
    """Product rule on the unit sphere.

    Gauss-Legendre in ``cos(theta)`` times the periodic trapezoid rule in
    azimuth; exact for spherical harmonics of degree below ``2 * order``.
    """

    nodes: np.ndarray
    weights: np.ndarray
    theta: np.ndarray
    phi: np.ndarray
    order: int

    def __len__(self):
        return len(self.weights)


def sphere_rule(order: int) -> SphereQuadrature:
    if order < 2:
        raise OrderTooSmall(f"sphere rule order must be >= 2, got {order}")
    x, wx = np.polynomial.legendre.leggauss(order)
    n_phi = 2 * order
    phi = 2.0 * np.pi * np.arange(n_phi) / n_phi
    theta = np.arccos(x)
    T, P = np.meshgrid(theta, phi, indexing="ij")
    W = np.outer(wx, np.full(n_phi, 2.0 * np.pi / n_phi))
    st = np.sin(T)
    nodes = np.stack([st * np.cos(P), st * np.sin(P), np.cos(T)], -1).reshape(-1, 3)
    return SphereQuadrature(nodes, W.ravel(), T.ravel(), P.ravel(), order)


@dataclass(frozen=True)
class VolumeRule:
    nodes: np.ndarray
    weights: np.ndarray
    spacing: float

    def __iter__(self):
        return zip(self.nodes, self.weights)

    def __len__(self):
        return len(self.weights)


def _cell_centres(half_width, spacing):
    m = int(math.ceil(half_width / spacing))
    return (np.arange(-m, m) + 0.5) * spacing


def volume_rule(radius: float, spacing: float) -> VolumeRule:
    """Midpoint rule on cubic cells of side ``spacing`` whose centres lie in the ball.

    The grid is symmetric about the origin, which sits on a cell corner.
    """
    if not 0 < spacing < radius:
        raise BadSpacing(f"need 0 < spacing < radius, got spacing={spacing}, radius={radius}")
    c = _cell_centres(radius, spacing)
    X, Y, Z = np.meshgrid(c, c, c, indexing="ij")
    pts = np.stack([X.ravel(), Y.ravel(), Z.ravel()], -1)
    keep = np.einsum("ij,ij->i", pts, pts) < radius * radius
    pts = pts[keep]
    return VolumeRule(pts, np.full(len(pts), spacing ** 3), spacing)


def cylinder_rule(radius: float, spacing: float, z_lo: float, z_hi: float, nz: int = 16) -> VolumeRule:
    """Midpoint rule on a disk of ``radius`` times Gauss-Legendre on ``[z_lo, z_hi]``.

    Suited to sources that factor as (in-plane part) x (profile in x3),
    where the profile may jump at the ends of its support.
    """
    if not 0 < spacing < radius:
        raise BadSpacing(f"need 0 < spacing < radius, got spacing={spacing}, radius={radius}")
    if not z_hi > z_lo or nz < 1:
        raise BadSpacing("empty axial interval")
    c = _cell_centres(radius, spacing)
    X, Y = np.meshgrid(c, c, indexing="ij")
    disk = np.stack([X.ravel(), Y.ravel()], -1)
    disk = disk[np.einsum("ij,ij->i", disk, disk) < radius * radius]
    zx, zw = np.polynomial.legendre.leggauss(nz)
    half = 0.5 * (z_hi - z_lo)
    z = z_lo + half * (zx + 1.0)
    zw = half * zw
    pts = np.concatenate([np.repeat(disk, nz, axis=0), np.tile(z, len(disk))[:, None]], axis=1)
    w = np.tile(zw, len(disk)) * spacing ** 2
    return VolumeRule(pts, w, spacing)


@dataclass(frozen=True)
class FrequencyGrid:
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1 or len(v) == 0:
            raise ValueError("frequency grid must be a non-empty 1-D sequence")
        if np.any(v <= 0) or np.any(np.diff(v) <= 0):
            raise ValueError("frequencies must be positive and strictly increasing")
        object.__setattr__(self, "values", v)

    @classmethod
    def uniform(cls, kmax, n):
        """``n`` equispaced frequencies ``kmax/n, ..., kmax`` (zero excluded)."""
        return cls(kmax * np.arange(1, n + 1) / n)

    @property
    def kmax(self):
        return float(self.values[-1])

    def __len__(self):
        return len(self.values)

    def __iter__(self):
        return iter(self.values)
