"""Spatial source recovery from multi-frequency Cauchy data on a sphere.

A plane-wave test function ``phi`` with ``lap phi + k^2 phi = 0`` turns
the Green identity over the ball into a Fourier sample of the source:

    int_sphere (du/dnu phi - u dphi/dnu) dS = ghat(k) int f phi dx.

With ``phi = exp(i k x.d)`` this is ``ghat(k) fhat(-k d)``, where
``fhat(xi) = int f exp(-i xi.x) dx``. For planar sources the test
functions grow in ``x3`` and the moment factors into the in-plane
space-time transform times an ``h`` weight.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .core import CauchyData
from .errors import BadFrequencyPair, DirectionNotUnit, EmptySpectrum, SmallHWeight
from .transforms import SphereQuadrature

logger = logging.getLogger(__name__)

UNIT_TOL = 1e-12
MAX_GROWTH = 12.0
CHUNK = 4096


def _unit_rows(d, dim):
    d = np.atleast_2d(np.asarray(d, dtype=float))
    if d.shape[1] != dim:
        raise ValueError(f"directions must have {dim} components")
    if np.any(np.abs(np.linalg.norm(d, axis=1) - 1.0) > UNIT_TOL):
        raise DirectionNotUnit("direction is not a unit vector")
    return d


def _sphere_moments(data: CauchyData, phi, dphi):
    """Green pairing for test functions sampled at the sphere nodes, one per row."""
    w = data.sphere.weights * data.R ** 2
    return (phi * data.du - dphi * data.u) @ w


def moment_3d_many(data: CauchyData, directions) -> np.ndarray:
    d = _unit_rows(directions, 3)
    nodes = data.sphere.nodes
    cosang = d @ nodes.T  # (n_dir, n_sphere)
    phi = np.exp(1j * data.kappa * data.R * cosang)
    dphi = 1j * data.kappa * cosang * phi
    return _sphere_moments(data, phi, dphi)


def moment_3d(data: CauchyData, d) -> complex:
    """Green-identity moment with ``phi = exp(i k x.d)``; equals ``ghat(k) fhat(-k d)``."""
    return complex(moment_3d_many(data, d)[0])


@dataclass
class PolarSpectrum:
    """Fourier samples ``values[i, j] = fhat(kappas[i] * directions[j])``.

    ``mask`` is true where the sample is valid; other entries hold NaN.
    ``weights`` are the direction quadrature weights, when the directions
    come from a rule on the sphere.
    """

    kappas: np.ndarray
    directions: np.ndarray
    values: np.ndarray
    mask: np.ndarray
    weights: Optional[np.ndarray] = None
    order: Optional[int] = None

    def __post_init__(self):
        shape = (len(self.kappas), len(self.directions))
        if self.values.shape != shape or self.mask.shape != shape:
            raise ValueError("spectrum arrays do not match the grid")

    def filled(self) -> np.ndarray:
        return np.where(self.mask, self.values, 0.0)


def recover_spectrum_3d(data: Sequence[CauchyData], directions: SphereQuadrature,
                        ghat, g_tol: float = 1e-8) -> PolarSpectrum:
    """Divide the moments by ``ghat`` on every frequency where ``|ghat| >= g_tol``.

    The moment is taken along ``-d`` so the stored sample is ``fhat(k d)``.
    ``ghat`` is a callable or a sequence aligned with ``data``.
    """
    kappas = np.array([c.kappa for c in data])
    if callable(ghat):
        gvals = np.array([complex(ghat(k)) for k in kappas])
    else:
        gvals = np.asarray(ghat, dtype=complex)
        if gvals.shape != kappas.shape:
            raise ValueError("ghat must give one value per frequency")
    nd = len(directions.nodes)
    values = np.full((len(kappas), nd), np.nan + 1j * np.nan)
    mask = np.zeros((len(kappas), nd), dtype=bool)
    for i, c in enumerate(data):
        if abs(gvals[i]) < g_tol:
            logger.info("masking kappa=%g: |ghat|=%g below %g", c.kappa, abs(gvals[i]), g_tol)
            continue
        values[i] = moment_3d_many(c, -directions.nodes) / gvals[i]
        mask[i] = True
    return PolarSpectrum(kappas, directions.nodes.copy(), values, mask,
                         directions.weights.copy(), directions.order)


def _kappa_weights(kappas):
    """Trapezoid weights on ``[0, kmax]`` with an implicit node at 0 (where the integrand vanishes)."""
    k = np.concatenate([[0.0], np.asarray(kappas, dtype=float)])
    w = np.zeros_like(k)
    w[1:-1] = 0.5 * (k[2:] - k[:-2])
    w[-1] = 0.5 * (k[-1] - k[-2])
    return w[1:]


def _inversion_coefficients(spectrum: PolarSpectrum):
    if spectrum.weights is None:
        raise ValueError("inversion needs direction quadrature weights")
    if len(spectrum.kappas) < 2 or not np.any(spectrum.mask):
        raise EmptySpectrum("need at least two frequencies with unmasked samples")
    if spectrum.order is not None and spectrum.order < 8:
        raise ValueError("inversion needs a direction rule of order >= 8")
    kw = _kappa_weights(spectrum.kappas) * spectrum.kappas ** 2
    coef = spectrum.filled() * kw[:, None] * spectrum.weights[None, :] / (2.0 * np.pi) ** 3
    xi = spectrum.kappas[:, None, None] * spectrum.directions[None, :, :]
    return coef.ravel(), xi.reshape(-1, 3)


def invert_bandlimited(spectrum: PolarSpectrum, points) -> np.ndarray:
    """Band-limited inverse transform ``(2 pi)^-3 int_{|xi|<=kmax} fhat(xi) exp(i xi.x) dxi``.

    Polar quadrature: trapezoid in ``k`` times the direction rule; masked
    samples count as zero. Returns the real part at each point.
    """
    coef, xi = _inversion_coefficients(spectrum)
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    out = np.empty(len(pts))
    for start in range(0, len(pts), CHUNK // 8):
        block = pts[start:start + CHUNK // 8]
        out[start:start + len(block)] = (np.exp(1j * block @ xi.T) @ coef).real
    return out


def invert_on_grid(spectrum: PolarSpectrum, xs, ys, zs) -> np.ndarray:
    """``invert_bandlimited`` on the tensor grid ``xs x ys x zs``; shape ``(nx, ny, nz)``.

    Factorises the exponential per axis, which makes large grids cheap.
    """
    coef, xi = _inversion_coefficients(spectrum)
    xs, ys, zs = (np.asarray(a, dtype=float) for a in (xs, ys, zs))
    out = np.empty((len(xs), len(ys), len(zs)))
    ez = np.exp(1j * np.outer(zs, xi[:, 2])) * coef[None, :]  # (nz, m)
    ey = np.exp(1j * np.outer(ys, xi[:, 1]))
    for a, x in enumerate(xs):
        exy = np.exp(1j * x * xi[:, 0])[None, :] * ey  # (ny, m)
        out[a] = (exy @ ez.T).real
    return out


def _mu(kappa, kappa1):
    if not kappa > 0 or not kappa1 > kappa:
        raise BadFrequencyPair(f"need kappa1 > kappa > 0, got kappa={kappa}, kappa1={kappa1}")
    return math.sqrt(kappa1 * kappa1 - kappa * kappa)


def _h_integral(h: Callable, mu, support, shift, n):
    lo, hi = support
    z = np.linspace(lo, hi, n)
    vals = np.asarray(h(z), dtype=float) * np.exp(mu * (z - shift))
    dz = (hi - lo) / (n - 1)
    return dz * (math.fsum(vals.tolist()) - 0.5 * (vals[0] + vals[-1]))


def h_weight(h: Callable, kappa: float, kappa1: float, support=(-1.0, 1.0), n: int = 20001) -> float:
    """Trapezoid value of ``int h(z) exp(mu z) dz`` over ``support``, ``mu = sqrt(kappa1^2 - kappa^2)``.

    ``support`` should be the interval outside of which ``h`` vanishes so
    that jumps sit on the end nodes.
    """
    return _h_integral(h, _mu(kappa, kappa1), support, 0.0, n)


def moment_planar(data: CauchyData, kappa1: float, d2, h: Callable, support=(-1.0, 1.0),
                  h_tol: float = 1e-8, n: int = 20001) -> complex:
    """Space-time Fourier sample ``F(ftilde)(kappa1 d2, kappa)`` from Cauchy data at ``kappa``.

    Pairs the data with ``exp(-i kappa1 xt.d2) exp(mu x3)`` and divides by
    the ``h`` weight. The growing factor is evaluated as
    ``exp(mu (x3 - R))`` on both sides. Pairs with ``mu R`` above 12 are
    refused as too ill-conditioned.
    """
    kappa = data.kappa
    mu = _mu(kappa, kappa1)
    if mu * data.R > MAX_GROWTH:
        raise SmallHWeight(f"mu*R={mu * data.R:.3g} exceeds {MAX_GROWTH}")
    d = _unit_rows(d2, 2)[0]
    full = h_weight(h, kappa, kappa1, support, n)
    if abs(full) < h_tol:
        raise SmallHWeight(f"|h weight|={abs(full):.3g} below {h_tol}")
    scaled = _h_integral(h, mu, support, data.R, n)
    nu = data.sphere.nodes
    x = data.R * nu
    phi = np.exp(-1j * kappa1 * (x[:, :2] @ d) + mu * (x[:, 2] - data.R))
    dphi = (-1j * kappa1 * (nu[:, :2] @ d) + mu * nu[:, 2]) * phi
    return complex(_sphere_moments(data, phi[None, :], dphi[None, :])[0]) / scaled


def circle_directions(n: int) -> np.ndarray:
    """``n`` equally spaced unit vectors in the plane, starting at ``(1, 0)``."""
    a = 2.0 * np.pi * np.arange(n) / n
    return np.stack([np.cos(a), np.sin(a)], axis=1)


def recover_planar_samples(data: Sequence[CauchyData], pairs, directions, h: Callable,
                           support=(-1.0, 1.0), h_tol: float = 1e-8) -> PolarSpectrum:
    """Planar samples on ``(kappa, kappa1)`` pairs times in-plane directions.

    ``pairs`` lists ``(index into data, kappa1)``; row ``i`` of the result
    holds ``F(ftilde)(kappa1_i d, kappa_i)``. Refused pairs are masked.
    ``kappas`` of the result stores the ``kappa1`` values.
    """
    dirs = _unit_rows(directions, 2)
    values = np.full((len(pairs), len(dirs)), np.nan + 1j * np.nan)
    mask = np.zeros(values.shape, dtype=bool)
    k1s = np.array([p[1] for p in pairs], dtype=float)
    for i, (j, k1) in enumerate(pairs):
        for m, d in enumerate(dirs):
            try:
                values[i, m] = moment_planar(data[j], k1, d, h, support, h_tol)
            except SmallHWeight as exc:
                logger.info("skipping pair kappa=%g kappa1=%g: %s", data[j].kappa, k1, exc)
                break
            mask[i, m] = True
    return PolarSpectrum(k1s, dirs, values, mask)
