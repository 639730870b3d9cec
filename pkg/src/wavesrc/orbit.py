"""Recovering the path of a moving oscillating point source.

Each receiver on the sphere ``|x| = R`` turns its signal into the
distance ``g(t) = |x - a(t)|`` by integrating

    g'(t) = cos(omega t) / (4 pi g u(x, t + g)) - 1,    g(0) = R,

with fixed-step RK4; four non-coplanar receivers then give ``a(t)`` by
differencing the sphere equations.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .core import COPLANAR_RTOL, ReceiverArray, TimeSeries, as_vec3, validate_receivers
from .errors import BandEscape, DataGap, OutOfBand, SingularGeometry, TooShort

logger = logging.getLogger(__name__)

MAX_CONSECUTIVE_CLAMPS = 5
BRIDGE_POINTS = 6
ENTRY_FACTOR = 4.0


class SignalInterpolant:
    """Piecewise-cubic interpolant of a receiver signal.

    Catmull-Rom in the interior. Near the first arrival and near the end
    of the record the stencil is replaced by the one-sided cubic through
    the four nearest usable samples, so samples taken before the arrival
    never enter. Returns 0 before ``series.arrival`` and the right-hand
    limit at the arrival itself.
    """

    def __init__(self, series: TimeSeries):
        if len(series.samples) < 4:
            raise TooShort("signal interpolation needs at least four samples")
        self.t0 = float(series.t0)
        self.dt = float(series.dt)
        self.u = series.samples
        self._ul = series.samples.tolist()
        self.n = len(series.samples)
        self.t_end = series.t_end
        self.arrival = series.arrival
        if self.arrival is None:
            self.first = 0
        else:
            k = int(math.ceil((self.arrival - self.t0) / self.dt - 1e-9))
            self.first = max(k, 0)
        if self.n - self.first < 4:
            raise TooShort("fewer than four samples after the first arrival")

    def _lagrange(self, k, t):
        # cubic through samples k..k+3
        p = self._ul
        x = (t - (self.t0 + k * self.dt)) / self.dt
        return (-p[k] * (x - 1) * (x - 2) * (x - 3) / 6.0
                + p[k + 1] * x * (x - 2) * (x - 3) / 2.0
                - p[k + 2] * x * (x - 1) * (x - 3) / 2.0
                + p[k + 3] * x * (x - 1) * (x - 2) / 6.0)

    def __call__(self, t: float) -> float:
        if self.arrival is not None and t < self.arrival:
            return 0.0
        if t > self.t_end + 1e-9 * self.dt or t < self.t0 - 1e-9 * self.dt:
            raise DataGap(f"signal queried at t={t}, record covers [{self.t0}, {self.t_end}]")
        pos = (t - self.t0) / self.dt
        j = int(round(pos))
        if abs(pos - j) < 1e-9 and self.first <= j < self.n:
            return self._ul[j]
        i = int(math.floor(pos))
        if i - 1 < self.first:
            return self._lagrange(self.first, t)
        if i + 2 > self.n - 1:
            return self._lagrange(self.n - 4, t)
        s = pos - i
        p = self._ul
        p0, p1, p2, p3 = p[i - 1], p[i], p[i + 1], p[i + 2]
        return p1 + 0.5 * s * (p2 - p0 + s * (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3
                                              + s * (3.0 * (p1 - p2) + p3 - p0)))

    def many(self, t) -> np.ndarray:
        return np.array([self(float(ti)) for ti in np.ravel(t)])


def signal_interpolant(series: TimeSeries) -> SignalInterpolant:
    return SignalInterpolant(series)


def default_eps_u(eps_c, R, R1):
    return eps_c / (16.0 * math.pi ** 2 * R * (R + R1))


def ode_rhs(t, g, interp, omega, R, R1, eps_c=1e-2, eps_u=None, slack=0.0) -> Optional[float]:
    """Right-hand side of the distance equation at ``(t, g)``.

    Returns ``None`` (guarded) where ``|cos(omega t)| < eps_c`` or the
    delayed signal is below ``eps_u``: there the quotient is a removable
    0/0 on the true path and unbounded off it.
    """
    if not (R - R1 - slack) <= g <= (R + R1 + slack):
        raise OutOfBand(f"distance {g} outside [{R - R1}, {R + R1}]")
    if eps_u is None:
        eps_u = default_eps_u(eps_c, R, R1)
    c = math.cos(omega * t)
    if abs(c) < eps_c:
        return None
    u = interp(t + g)
    if abs(u) < eps_u:
        return None
    S = c / u
    cap = 8.0 * math.pi * (R + R1)
    if abs(S) > cap:
        logger.debug("clamping S=%g at t=%g", S, t)
        S = math.copysign(cap, S)
    return S / (4.0 * math.pi * g) - 1.0


@dataclass
class DistanceTrack:
    receiver: np.ndarray
    times: np.ndarray
    g: np.ndarray
    guard_mask: np.ndarray
    clamp_events: int = 0

    @property
    def guard_fraction(self) -> float:
        return float(np.mean(self.guard_mask[1:])) if len(self.guard_mask) > 1 else 0.0


def _check_coverage(series, R, R1, T0):
    need_end = T0 + R + R1
    if series.t_end < need_end - 1e-9:
        raise DataGap(f"record ends at {series.t_end}, need data up to {need_end}")
    if series.t0 > R - R1 + 1e-9:
        raise DataGap(f"record starts at {series.t0}, need data from {R - R1}")


def guard_windows(omega, T0, eps_c, entry_factor=ENTRY_FACTOR):
    """Intervals around the zeros of ``cos(omega t)`` on ``[0, T0]``.

    Each window opens where ``|cos|`` falls to ``entry_factor * eps_c``
    and closes once it is back above ``eps_c``.
    """
    before = math.asin(min(1.0, entry_factor * eps_c)) / omega
    after = math.asin(min(1.0, eps_c)) / omega
    k = np.arange(0, int(omega * T0 / math.pi) + 2)
    zeros = (0.5 + k) * math.pi / omega
    return np.stack([zeros - before, zeros + after], axis=1)


def integrate_distance(series: TimeSeries, omega, R, R1, T0, h, eps_c=1e-2, eps_u=None,
                       entry_factor=ENTRY_FACTOR) -> DistanceTrack:
    """Classical RK4 for the receiver-to-source distance on ``[0, T0]``.

    Steps with a stage inside a guard window (see ``guard_windows``) are
    not integrated: the track is carried across by the quintic through six
    accepted values before the window, spaced half a window apart. The
    window opens earlier than it closes because errors ahead of a zero are
    amplified like ``1/|cos|`` and are only damped again after it. A stage
    guarded for another reason (tiny signal) reuses the most recent
    accepted derivative, or zero before any.

    After each step the iterate is projected onto ``[R - R1, R + R1]``;
    more than five projections in a row, or an excursion further than
    ``10 h`` outside, raise ``BandEscape``.
    """
    nsteps = int(round(T0 / h))
    if nsteps < 1 or abs(nsteps * h - T0) > 1e-9 * T0:
        raise ValueError(f"step {h} does not divide T0={T0}")
    _check_coverage(series, R, R1, T0)
    if series.arrival is None:
        series = TimeSeries(series.receiver, series.t0, series.dt, series.samples,
                            arrival=float(np.linalg.norm(series.receiver)))
    interp = signal_interpolant(series)
    if eps_u is None:
        eps_u = default_eps_u(eps_c, R, R1)
    slack = 10.0 * h
    lo, hi = R - R1, R + R1

    windows = guard_windows(omega, T0, eps_c, entry_factor)
    start = np.arange(nsteps) * h
    hit = np.zeros(nsteps, dtype=bool)
    for w0, w1 in windows:
        for frac in (0.0, 0.5, 1.0):
            hit |= (start + frac * h > w0) & (start + frac * h < w1)
    stride = max(1, int(round(0.5 * (windows[0, 1] - windows[0, 0]) / h)))

    g = np.empty(nsteps + 1)
    mask = np.zeros(nsteps + 1, dtype=bool)
    g[0] = R
    last = 0.0
    clamps = consecutive = 0
    anchor = None
    coeffs = None

    def stage(t, y):
        nonlocal last
        val = ode_rhs(t, y, interp, omega, R, R1, eps_c, eps_u, slack)
        if val is None:
            return last, True
        last = val
        return val, False

    for n in range(nsteps):
        t = n * h
        y = g[n]
        if hit[n]:
            if anchor is None:
                idx = [n - j * stride for j in range(BRIDGE_POINTS)]
                if idx[-1] >= 0 and not mask[idx].any():
                    anchor = n
                    coeffs = np.polyfit(h * (np.asarray(idx) - n), g[idx], BRIDGE_POINTS - 1)
        else:
            anchor = None
        if anchor is not None:
            y = float(np.polyval(coeffs, h * (n + 1 - anchor)))
            mask[n + 1] = True
        else:
            k1, m1 = stage(t, y)
            k2, m2 = stage(t + 0.5 * h, y + 0.5 * h * k1)
            k3, m3 = stage(t + 0.5 * h, y + 0.5 * h * k2)
            k4, m4 = stage(t + h, y + h * k3)
            y = y + h * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0
            mask[n + 1] = hit[n] or m1 or m2 or m3 or m4
        if not (lo - slack) <= y <= (hi + slack):
            raise BandEscape(f"distance left the admissible band at t={t + h}: g={y}")
        if y < lo or y > hi:
            y = min(max(y, lo), hi)
            clamps += 1
            consecutive += 1
            logger.info("projected distance onto band at t=%g", t + h)
            if consecutive > MAX_CONSECUTIVE_CLAMPS:
                raise BandEscape(f"distance pinned to the band edge at t={t + h}")
        else:
            consecutive = 0
        g[n + 1] = y
    return DistanceTrack(series.receiver, h * np.arange(nsteps + 1), g, mask, clamps)


def _system(array: ReceiverArray):
    pos = array.positions
    M = 2.0 * (pos[0] - pos[1:4])
    if abs(np.linalg.det(M)) <= 8.0 * COPLANAR_RTOL * array.R ** 3:
        raise SingularGeometry("receiver geometry is (nearly) coplanar")
    return M


def trilaterate(array: ReceiverArray, distances) -> np.ndarray:
    """Point whose distances to the four receivers are ``distances``.

    Subtracting the first sphere equation from the others leaves the
    linear system ``2 (x1 - xj) . a = gj^2 - g1^2`` (all receivers share
    ``|xj| = R``).
    """
    M = _system(array)
    d = np.asarray(distances, dtype=float)
    if d.shape != (4,) or np.any(d <= 0):
        raise ValueError("need four positive distances")
    return np.linalg.solve(M, d[1:] ** 2 - d[0] ** 2)


def trilaterate_many(array: ReceiverArray, distances) -> np.ndarray:
    """Row-wise ``trilaterate`` for an ``(n, 4)`` array of distances."""
    M = _system(array)
    d = np.asarray(distances, dtype=float)
    rhs = d[:, 1:] ** 2 - d[:, :1] ** 2
    return np.linalg.solve(M, rhs.T).T


@dataclass
class OrbitEstimate:
    times: np.ndarray
    positions: np.ndarray
    residuals: np.ndarray
    guard: np.ndarray
    tracks: list = field(default_factory=list)

    @property
    def guard_fraction(self) -> float:
        return float(np.mean([tr.guard_fraction for tr in self.tracks])) if self.tracks else 0.0


def recover_orbit(series_set: Sequence[TimeSeries], array: ReceiverArray, omega, R, R1, T0, h,
                  eps_c=1e-2, threads=1, entry_factor=ENTRY_FACTOR) -> OrbitEstimate:
    validate_receivers(array)
    if len(series_set) != 4 or len(array) != 4:
        raise ValueError("orbit recovery needs exactly four receivers")
    _system(array)
    for s, x in zip(series_set, array.positions):
        if np.linalg.norm(as_vec3(s.receiver) - x) > 1e-12 * R:
            raise ValueError("series receivers do not match the array")

    def one(s):
        return integrate_distance(s, omega, R, R1, T0, h, eps_c, entry_factor=entry_factor)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            tracks = list(pool.map(one, series_set))
    else:
        tracks = [one(s) for s in series_set]
    G = np.stack([tr.g for tr in tracks], axis=1)
    pos = trilaterate_many(array, G)
    dist = np.linalg.norm(pos[:, None, :] - array.positions[None], axis=2)
    resid = np.max(np.abs(dist - G), axis=1)
    guard = np.any(np.stack([tr.guard_mask for tr in tracks], axis=1), axis=1)
    return OrbitEstimate(tracks[0].times, pos, resid, guard, tracks)
