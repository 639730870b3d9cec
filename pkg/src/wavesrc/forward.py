"""Free-space forward fields for the 3-D wave equation (unit wave speed).

Moving point sources are evaluated exactly through the retarded time,
distributed sources by midpoint quadrature of the retarded potential,
and time-harmonic problems through the outgoing Helmholtz kernel
``exp(i k r) / (4 pi r)``.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .core import (CauchyData, NonRadiatingSource, Orbit, PlanarSource, ReceiverArray,
                   SeparableSource, TimeSeries, as_vec3, validate_receivers)
from .errors import NoArrival, SingularNode, StepTooCoarse, SupportTooLarge, ValidationError
from .transforms import SphereQuadrature, VolumeRule

logger = logging.getLogger(__name__)

BISECTION_ITERS = 60
CHUNK = 8


@dataclass(frozen=True)
class RetardedTimeResult:
    s_star: float
    g: float
    g_rate: float


def _emission_times(orbit: Orbit, x, t):
    """Vectorised bisection for ``s + |x - a(s)| = t``.

    Returns ``(s, g, g_rate, arrived)``; entries with ``arrived == False``
    hold NaN.
    """
    x = as_vec3(x)
    t = np.atleast_1d(np.asarray(t, dtype=float))
    first = float(np.linalg.norm(x - orbit.position(0.0)))
    arrived = t >= first
    tt = np.where(arrived, t, first)
    lo = np.maximum(0.0, tt - np.linalg.norm(x) - orbit.radius_bound)
    hi = tt.copy()
    for _ in range(BISECTION_ITERS):
        mid = 0.5 * (lo + hi)
        fm = mid + np.linalg.norm(x - orbit.position(mid), axis=-1)
        below = fm < tt
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    s = 0.5 * (lo + hi)
    diff = x - orbit.position(s)
    g = np.linalg.norm(diff, axis=-1)
    g_rate = -np.einsum("ij,ij->i", diff, orbit.velocity(s)) / g
    nan = np.full_like(s, np.nan)
    return (np.where(arrived, s, nan), np.where(arrived, g, nan),
            np.where(arrived, g_rate, nan), arrived)


def retarded_time(orbit: Orbit, x, t: float, tol: float = 1e-12) -> RetardedTimeResult:
    """Emission time ``s*`` with ``s* + |x - a(s*)| = t``.

    Raises ``NoArrival`` when ``t`` precedes the first arrival ``|x - a(0)|``.
    """
    if np.linalg.norm(x) <= orbit.radius_bound:
        raise ValidationError("receiver must lie outside the orbit region")
    s, g, gr, ok = _emission_times(orbit, x, [t])
    if not ok[0]:
        raise NoArrival(f"t={t} precedes the first arrival at {np.linalg.norm(as_vec3(x) - orbit.position(0.0))}")
    resid = abs(s[0] + g[0] - t)
    if resid > tol:
        raise ValidationError(f"retarded time residual {resid:.3g} exceeds tolerance {tol:.3g}")
    return RetardedTimeResult(float(s[0]), float(g[0]), float(gr[0]))


def moving_point_field_many(orbit: Orbit, omega: float, x, t) -> np.ndarray:
    s, g, gr, ok = _emission_times(orbit, x, t)
    val = np.cos(omega * s) / (4.0 * np.pi * g * (1.0 + gr))
    return np.where(ok, val, 0.0)


def moving_point_field(orbit: Orbit, omega: float, x, t: float) -> float:
    """Field of the oscillating point source ``delta(x - a(t)) cos(omega t)``.

    Zero before the first arrival.
    """
    if np.linalg.norm(x) <= orbit.radius_bound:
        raise ValidationError("receiver must lie outside the orbit region")
    return float(moving_point_field_many(orbit, omega, x, [t])[0])


def max_step(omega, speed_bound):
    return math.pi / (16.0 * omega) * (1.0 - speed_bound)


def simulate_receivers(orbit: Orbit, omega: float, array: ReceiverArray, t0: float, dt: float,
                       n: int, threads: int = 1) -> list:
    validate_receivers(array)
    limit = max_step(omega, orbit.speed_bound)
    if dt > limit:
        raise StepTooCoarse(f"dt={dt} exceeds {limit:.6g} for omega={omega}")
    t = t0 + dt * np.arange(n)

    def one(x):
        u = moving_point_field_many(orbit, omega, x, t)
        arrival = float(np.linalg.norm(x - orbit.position(0.0)))
        return TimeSeries(x, t0, dt, u, arrival=arrival)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(one, array.positions))
    return [one(x) for x in array.positions]


# ---------------------------------------------------------------------------
# Retarded potentials of distributed sources
# ---------------------------------------------------------------------------
def retarded_potential(source, x, t, rule: VolumeRule, min_gap: float = 0.5) -> np.ndarray | float:
    """``sum_nodes w F(y, t - |x - y|) / (4 pi |x - y|)``.

    ``t`` may be a scalar or an array. Raises ``SingularNode`` when ``x``
    is closer than ``min_gap * spacing`` to a node.
    """
    x = as_vec3(x)
    r = np.linalg.norm(rule.nodes - x, axis=1)
    if r.min() < min_gap * rule.spacing:
        raise SingularNode(f"evaluation point {x} is {r.min():.3g} from a quadrature node")
    kernel = rule.weights / (4.0 * np.pi * r)
    ts = np.atleast_1d(np.asarray(t, dtype=float))
    out = np.empty(len(ts))
    for i, ti in enumerate(ts):
        out[i] = np.dot(kernel, source.density(rule.nodes, ti - r))
    return float(out[0]) if np.ndim(t) == 0 else out


# ---------------------------------------------------------------------------
# Frequency domain
# ---------------------------------------------------------------------------
def _harmonic_steps(kappas, max_multiple=64):
    """Integer multiples ``n_j`` with ``kappas[j] = n_j * kappas.min()``, or ``None``."""
    base = kappas.min()
    n = np.rint(kappas / base)
    if np.all(np.abs(n * base - kappas) <= 1e-12 * kappas) and n.max() <= max_multiple:
        return base, n.astype(int)
    return None


def _cos_sin(kappas, r, steps):
    """Yield ``(j, k_j, cos(k_j r), sin(k_j r))``.

    For harmonic grids only the base frequency goes through the trig
    functions; the others follow by doubling or by one angle-addition step.
    """
    if steps is None:
        for j, k in enumerate(kappas):
            kr = k * r
            yield j, k, np.cos(kr), np.sin(kr)
        return
    base, mult = steps
    cache = {1: (np.cos(base * r), np.sin(base * r))}
    for n in sorted(set(mult.tolist()) - {1}):
        if n % 2 == 0 and n // 2 in cache:
            c, s = cache[n // 2]
            cache[n] = ((c - s) * (c + s), 2.0 * s * c)
        elif n - 1 in cache:
            c, s = cache[n - 1]
            c1, s1 = cache[1]
            cache[n] = (c * c1 - s * s1, s * c1 + c * s1)
        else:
            cache[n] = (np.cos(n * base * r), np.sin(n * base * r))
    for j, (k, n) in enumerate(zip(kappas, mult)):
        c, s = cache[int(n)]
        yield j, k, c, s


def helmholtz_traces(q, nodes, kappas, sphere: SphereQuadrature, R: float, threads: int = 1):
    """Cauchy traces on ``|x| = R`` of ``u = -sum q_i G_k(x - y_i)``.

    ``q`` holds quadrature-weighted source values, shape ``(n_nodes,)`` for
    a source shared by all frequencies or ``(n_kappa, n_nodes)``. This ``u``
    solves ``lap u + k^2 u = sum q_i delta_{y_i}`` with outgoing behaviour.
    Returns arrays ``(n_kappa, n_sphere)`` for ``u`` and ``du/dnu``.
    Blocks of sphere nodes are independent, so ``threads`` does not change
    the result.
    """
    kappas = np.atleast_1d(np.asarray(kappas, dtype=float))
    q = np.asarray(q)
    shared = q.ndim == 1
    if shared:
        q = np.broadcast_to(q, (len(kappas), len(q)))
    X = R * sphere.nodes
    m = len(X)
    steps = _harmonic_steps(kappas)
    u = np.zeros((len(kappas), m), dtype=complex)
    du = np.zeros((len(kappas), m), dtype=complex)

    def block(start):
        xs = X[start:start + CHUNK]
        ns = sphere.nodes[start:start + CHUNK]
        diff = xs[:, None, :] - nodes[None, :, :]
        r = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
        c = np.einsum("ijk,ik->ij", diff, ns) / r
        a = 1.0 / (4.0 * np.pi * r)
        b = a * c
        b2 = b / r
        del diff
        if shared:
            a, b, b2 = a * q[0], b * q[0], b2 * q[0]
        sl = slice(start, start + CHUNK)
        for j, k, cos, sin in _cos_sin(kappas, r, steps):
            # G = e^{ikr}/(4 pi r); grad_x G . nu = (ik - 1/r) G c
            if shared:
                wa, wb, wb2 = a, b, b2
            else:
                wa, wb, wb2 = a * q[j], b * q[j], b2 * q[j]
            ca, sa = np.einsum("ij,ij->i", cos, wa), np.einsum("ij,ij->i", sin, wa)
            cb, sb = np.einsum("ij,ij->i", cos, wb), np.einsum("ij,ij->i", sin, wb)
            cb2, sb2 = np.einsum("ij,ij->i", cos, wb2), np.einsum("ij,ij->i", sin, wb2)
            u[j, sl] = -(ca + 1j * sa)
            du[j, sl] = -((-k * sb - cb2) + 1j * (k * cb - sb2))

    starts = range(0, m, CHUNK)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(block, starts))
    else:
        for start in starts:
            block(start)
    return u, du


def _check_support(R0, R):
    if R0 >= R:
        raise SupportTooLarge(f"source radius {R0} must be below R={R}")


def helmholtz_cauchy(source: SeparableSource, kappa, ghat, sphere: SphereQuadrature,
                     rule: VolumeRule, R: float, threads: int = 1):
    """Cauchy data of ``lap u + k^2 u = ghat(k) f`` on the sphere of radius ``R``.

    ``kappa`` and ``ghat`` may be scalars (returns one ``CauchyData``) or
    equal-length sequences (returns a list).
    """
    _check_support(source.R0, R)
    scalar = np.ndim(kappa) == 0
    kappas = np.atleast_1d(np.asarray(kappa, dtype=float))
    ghats = np.atleast_1d(np.asarray(ghat, dtype=complex))
    if np.any(kappas <= 0):
        raise ValidationError("kappa must be positive")
    q = rule.weights * source.spatial(rule.nodes)
    u, du = helmholtz_traces(q, rule.nodes, kappas, sphere, R, threads)
    out = [CauchyData(float(k), sphere, R, gh * u[j], gh * du[j])
           for j, (k, gh) in enumerate(zip(kappas, ghats))]
    return out[0] if scalar else out


def time_spectrum(func: Callable, y, kappas, T0, nt=2001):
    """``int_0^T0 func(y, t) exp(-i k t) dt`` by the trapezoid rule, per node and frequency."""
    t = np.linspace(0.0, T0, nt)
    w = np.full(nt, T0 / (nt - 1))
    w[0] = w[-1] = 0.5 * w[0]
    kappas = np.atleast_1d(np.asarray(kappas, dtype=float))
    out = np.zeros((len(kappas), len(np.atleast_2d(y))), dtype=complex)
    for ti, wi in zip(t, w):
        out += np.outer(wi * np.exp(-1j * kappas * ti), func(y, ti))
    return out


def planar_cauchy(source: PlanarSource, kappas, sphere: SphereQuadrature, rule: VolumeRule,
                  R: float, nt: int = 2001, threads: int = 1):
    """Cauchy data for the time-Fourier transform of a planar source.

    The frequency-domain right-hand side is ``fhat(x1, x2, k) h(x3)`` with
    ``fhat`` computed by the trapezoid rule in time on ``nt`` samples.
    """
    source.check_radius(R)
    kappas = np.atleast_1d(np.asarray(kappas, dtype=float))
    if np.any(kappas <= 0):
        raise ValidationError("kappa must be positive")
    q = time_spectrum(source.density, rule.nodes, kappas, source.T0, nt) * rule.weights
    u, du = helmholtz_traces(q, rule.nodes, kappas, sphere, R, threads)
    return [CauchyData(float(k), sphere, R, u[j], du[j]) for j, k in enumerate(kappas)]


# ---------------------------------------------------------------------------
# Non-radiating sources
# ---------------------------------------------------------------------------
def _bump(s, k):
    """``(1 - s^2)^k`` on ``|s| < 1`` and its first two derivatives."""
    s = np.asarray(s, dtype=float)
    one = np.maximum(1.0 - s * s, 0.0)
    p2 = np.where(one > 0.0, one ** (k - 2), 0.0)
    p1 = p2 * one
    b = p1 * one
    db = -2.0 * k * s * p1
    ddb = -2.0 * k * p1 + 4.0 * k * (k - 1) * s * s * p2
    return b, db, ddb


@dataclass(frozen=True)
class RadialBumpChi:
    """``chi(x, t) = b(|x| / radius) b((t - t_center) / t_halfwidth)``, ``b(s) = (1 - s^2)^power``.

    With ``power = 4`` the product is three times continuously differentiable.
    Supplies exact second time derivative and Laplacian.
    """

    radius: float = 0.8
    t_center: float = 1.0
    t_halfwidth: float = 1.0
    power: int = 4

    def __post_init__(self):
        if self.power < 3:
            raise ValidationError("bump power must be at least 3 for a C2 field")

    def _parts(self, y, t):
        y = np.atleast_2d(y)
        s = np.linalg.norm(y, axis=1) / self.radius
        tau = (np.asarray(t, dtype=float) - self.t_center) / self.t_halfwidth
        return s, tau

    def __call__(self, y, t):
        s, tau = self._parts(y, t)
        return _bump(s, self.power)[0] * _bump(tau, self.power)[0]

    def dtt(self, y, t):
        s, tau = self._parts(y, t)
        return _bump(s, self.power)[0] * _bump(tau, self.power)[2] / self.t_halfwidth ** 2

    def laplacian(self, y, t):
        s, tau = self._parts(y, t)
        k = self.power
        _, _, ddb = _bump(s, k)
        one = np.where(np.abs(s) < 1.0, 1.0 - s * s, 0.0)
        # b'(s)/s written without the division so r = 0 is regular
        db_over_s = -2.0 * k * one ** (k - 1)
        radial = (ddb + 2.0 * db_over_s) / self.radius ** 2
        return radial * _bump(tau, k)[0]

    def source_term(self, y, t):
        """``dtt - laplacian`` in one pass."""
        s, tau = self._parts(y, t)
        k = self.power
        bs, _, dds = _bump(s, k)
        one = np.where(np.abs(s) < 1.0, 1.0 - s * s, 0.0)
        radial = (dds - 4.0 * k * one ** (k - 1)) / self.radius ** 2
        bt, _, ddt = _bump(tau, k)
        return bs * ddt / self.t_halfwidth ** 2 - radial * bt

    @property
    def T0(self):
        return self.t_center + self.t_halfwidth

    @property
    def sup(self):
        return 1.0


def nonradiating_from_chi(chi, fd_step: float = 1e-3, R: float = None, T0: float = None,
                          exact: bool = True) -> NonRadiatingSource:
    """Source ``F = d2chi/dt2 - lap chi`` whose field is ``chi`` itself.

    Uses ``chi.dtt`` and ``chi.laplacian`` when available and ``exact`` is
    set; otherwise second-order central differences with step ``fd_step``.
    """
    if R is None:
        R = getattr(chi, "radius", None)
    if T0 is None:
        T0 = getattr(chi, "T0", None)
    if exact and hasattr(chi, "source_term"):
        F = chi.source_term
    elif exact and hasattr(chi, "dtt") and hasattr(chi, "laplacian"):
        def F(y, t):
            return chi.dtt(y, t) - chi.laplacian(y, t)
    else:
        h = fd_step
        eye = np.eye(3) * h

        def F(y, t):
            y = np.atleast_2d(y)
            t = np.asarray(t, dtype=float)
            c = chi(y, t)
            dtt = (chi(y, t + h) - 2.0 * c + chi(y, t - h)) / (h * h)
            lap = sum(chi(y + e, t) + chi(y - e, t) - 2.0 * c for e in eye) / (h * h)
            return dtt - lap
    return NonRadiatingSource(chi, F, R, T0)


def wave_field_on_points(source, points: Sequence, times, rule: VolumeRule, min_gap=0.5):
    """Retarded potential on each point for each time; shape ``(n_points, n_times)``."""
    return np.array([retarded_potential(source, p, np.asarray(times, dtype=float), rule, min_gap)
                     for p in points])
