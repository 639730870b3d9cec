"""Command-line driver: ``wavesrc <pipeline> --config <path> --out <dir>``.

Configs are plain text, one ``section.key = value`` per line, ``#`` starts
a comment. Keys under ``assert.`` name report metrics with an upper bound
(``assert.max_error = 1e-3``) or, with a leading ``>=``, a lower bound.
Exit status: 0 when every assertion holds, 2 when one fails, 1 on error.
"""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import Config, Orbit, ReceiverArray, SeparableSource, TimeSeries, validate_receivers
from .errors import ConfigError, DataGap, WavesrcError
from .forward import (RadialBumpChi, helmholtz_cauchy, nonradiating_from_chi, simulate_receivers,
                      wave_field_on_points)
from .orbit import ENTRY_FACTOR, recover_orbit
from .srcrec import invert_on_grid, recover_spectrum_3d
from .transforms import FrequencyGrid, sphere_rule, volume_rule

logger = logging.getLogger("wavesrc")

PIPELINES = ("simulate", "recover-orbit", "recover-source", "nonradiating")
_REQUIRED = object()


# ---------------------------------------------------------------------------
# Config
# ---------------------------------------------------------------------------
class RunConfig:
    """Parsed ``section.key = value`` file; raw strings are kept for the echo."""

    def __init__(self, entries: dict, path: Path | None = None):
        self.entries = dict(entries)
        self.path = path

    @classmethod
    def parse(cls, text: str, path: Path | None = None) -> "RunConfig":
        entries = {}
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {lineno}: expected 'section.key = value'")
            key, value = (s.strip() for s in line.split("=", 1))
            if "." not in key or not all(key.split(".")):
                raise ConfigError(f"line {lineno}: key '{key}' must look like section.key")
            if key in entries:
                raise ConfigError(f"line {lineno}: duplicate key '{key}'")
            entries[key] = value
        return cls(entries, path)

    @classmethod
    def load(cls, path) -> "RunConfig":
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.parse(text, path)

    def has(self, key):
        return key in self.entries

    def has_section(self, section):
        return any(k.startswith(section + ".") for k in self.entries)

    def _raw(self, key, default):
        if key in self.entries:
            return self.entries[key]
        if default is _REQUIRED:
            raise ConfigError(f"missing required key '{key}'")
        return None

    def str(self, key, default=_REQUIRED):
        raw = self._raw(key, default)
        return default if raw is None else raw

    def float(self, key, default=_REQUIRED):
        raw = self._raw(key, default)
        if raw is None:
            return default
        try:
            return float(raw)
        except ValueError:
            raise ConfigError(f"key '{key}': expected a number, got '{raw}'") from None

    def int(self, key, default=_REQUIRED):
        value = self.float(key, default)
        if value is None:
            return None
        if value != int(value):
            raise ConfigError(f"key '{key}': expected an integer, got '{self.entries[key]}'")
        return int(value)

    def floats(self, key, default=_REQUIRED):
        raw = self._raw(key, default)
        if raw is None:
            return default
        try:
            return [float(v) for v in raw.replace(";", ",").split(",") if v.strip()]
        except ValueError:
            raise ConfigError(f"key '{key}': expected numbers, got '{raw}'") from None

    def bool(self, key, default=_REQUIRED):
        raw = self._raw(key, default)
        if raw is None:
            return default
        low = raw.lower()
        if low in ("true", "yes", "1"):
            return True
        if low in ("false", "no", "0"):
            return False
        raise ConfigError(f"key '{key}': expected true or false, got '{raw}'")

    def resolve(self, value: str) -> Path:
        p = Path(value)
        if not p.is_absolute() and self.path is not None:
            p = self.path.parent / p
        return p

    def asserts(self):
        out = []
        for key, raw in self.entries.items():
            if not key.startswith("assert."):
                continue
            op = "<="
            text = raw
            if raw.startswith(">=") or raw.startswith("<="):
                op, text = raw[:2], raw[2:].strip()
            try:
                bound = float(text)
            except ValueError:
                raise ConfigError(f"key '{key}': expected a bound, got '{raw}'") from None
            out.append((key[len("assert."):], op, bound))
        return out


# ---------------------------------------------------------------------------
# Report
# ---------------------------------------------------------------------------
def _fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return "%.17g" % float(x)


@dataclass
class RunReport:
    pipeline: str
    config: dict
    metrics: dict = field(default_factory=dict)
    checks: list = field(default_factory=list)
    seed: int | None = None
    threads: int = 1

    @property
    def passed(self) -> bool:
        return all(ok for *_, ok in self.checks)

    def evaluate(self, asserts):
        self.checks = []
        for name, op, bound in asserts:
            if name not in self.metrics:
                raise ConfigError(f"assertion on unknown metric '{name}'")
            value = float(self.metrics[name])
            ok = value <= bound if op == "<=" else value >= bound
            self.checks.append((name, op, bound, value, bool(ok and math.isfinite(value))))

    def to_text(self) -> str:
        lines = [f"run.pipeline = {self.pipeline}", f"run.threads = {self.threads}"]
        if self.seed is not None:
            lines.append(f"run.seed = {self.seed}")
        lines += [f"config.{k} = {v}" for k, v in self.config.items()]
        lines += [f"metric.{k} = {_fmt(v)}" for k, v in self.metrics.items()]
        for name, op, bound, value, ok in self.checks:
            lines.append(f"check.{name} = {'pass' if ok else 'fail'} ({_fmt(value)} {op} {_fmt(bound)})")
        lines.append(f"run.status = {'pass' if self.passed else 'fail'}")
        return "\n".join(lines) + "\n"


def write_csv(path: Path, header, columns, formats=None):
    """Comma-separated, LF line endings, 17 significant digits for reals."""
    # adding 0.0 turns -0.0 into 0.0 so signed zeros never reach the file
    cols = [np.asarray(c) + 0.0 if np.asarray(c).dtype.kind == "f" else np.asarray(c)
            for c in columns]
    n = len(cols[0])
    if any(len(c) != n for c in cols):
        raise ValueError("CSV columns differ in length")
    formats = formats or ["%.17g"] * len(cols)
    rows = [",".join(header)]
    lists = [c.tolist() for c in cols]
    for i in range(n):
        rows.append(",".join(f % lst[i] for f, lst in zip(formats, lists)))
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("\n".join(rows) + "\n")


def read_csv(path: Path):
    try:
        with open(path, encoding="ascii") as fh:
            header = fh.readline().strip().split(",")
            data = np.loadtxt(fh, delimiter=",", ndmin=2)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    return header, data


# ---------------------------------------------------------------------------
# Shared builders
# ---------------------------------------------------------------------------
def _vec(cfg, key, default=_REQUIRED):
    v = cfg.floats(key, default)
    if v is None:
        return None
    if len(v) != 3:
        raise ConfigError(f"key '{key}': expected three components")
    return np.array(v)


def build_orbit(cfg: RunConfig, section: str, horizon: float, radius_bound: float) -> Orbit:
    kind = cfg.str(f"{section}.kind", "static")
    rb = cfg.float(f"{section}.radius_bound", radius_bound)
    if kind == "static":
        return Orbit.static(horizon=horizon, radius_bound=rb)
    if kind == "linear":
        return Orbit.linear(_vec(cfg, f"{section}.velocity"), horizon=horizon, radius_bound=rb)
    if kind == "circular":
        return Orbit.circular(cfg.float(f"{section}.rho"), cfg.float(f"{section}.Omega"),
                              horizon=horizon, radius_bound=rb)
    raise ConfigError(f"key '{section}.kind': unknown orbit kind '{kind}'")


def build_array(cfg: RunConfig, R: float) -> ReceiverArray:
    kind = cfg.str("receivers.kind", "symmetric")
    if kind == "symmetric":
        array = ReceiverArray.symmetric(R)
    elif kind == "list":
        vals = cfg.floats("receivers.positions")
        if len(vals) % 3:
            raise ConfigError("key 'receivers.positions': expected x,y,z triples")
        array = ReceiverArray(np.array(vals).reshape(-1, 3), R)
    else:
        raise ConfigError(f"key 'receivers.kind': unknown kind '{kind}'")
    validate_receivers(array)
    return array


def _time_grid(cfg, default_end):
    t0 = cfg.float("time.t0", 0.0)
    dt = cfg.float("time.dt")
    t_end = cfg.float("time.t_end", default_end)
    if t_end is None:
        raise ConfigError("missing required key 'time.t_end'")
    if not dt > 0 or not t_end > t0:
        raise ConfigError("need time.dt > 0 and time.t_end > time.t0")
    n = int(math.floor((t_end - t0) / dt + 1e-9)) + 1
    return t0, dt, n


# ---------------------------------------------------------------------------
# Pipelines
# ---------------------------------------------------------------------------
def run_simulate(cfg: RunConfig, out: Path, threads=1, seed=None) -> RunReport:
    omega = cfg.float("source.omega")
    R = cfg.float("domain.R")
    R1 = cfg.float("domain.R1", 0.5 * R)
    t0, dt, n = _time_grid(cfg, None)
    orbit = build_orbit(cfg, "orbit", horizon=t0 + dt * (n - 1), radius_bound=R1)
    orbit.validate(R)
    array = build_array(cfg, R)
    tic = time.perf_counter()
    series = simulate_receivers(orbit, omega, array, t0, dt, n, threads=threads)
    elapsed = time.perf_counter() - tic
    for j, s in enumerate(series):
        write_csv(out / f"receiver_{j}.csv", ["t", "u"], [s.times, s.samples])
    report = RunReport("simulate", cfg.entries, seed=seed, threads=threads)
    report.metrics["samples"] = n
    report.metrics["max_abs_u"] = max(float(np.abs(s.samples).max()) for s in series)
    if cfg.str("orbit.kind", "static") == "static":
        err = 0.0
        for s in series:
            t = s.times
            exact = np.where(t >= R, np.cos(omega * (t - R)) / (4.0 * np.pi * R), 0.0)
            err = max(err, float(np.abs(s.samples - exact).max()))
        report.metrics["static_error"] = err
    report.metrics["runtime_s"] = elapsed
    return report


def _load_series(cfg: RunConfig, array: ReceiverArray):
    folder = cfg.resolve(cfg.str("data.dir"))
    series = []
    for j, x in enumerate(array.positions):
        header, data = read_csv(folder / f"receiver_{j}.csv")
        if header[:2] != ["t", "u"] or data.shape[1] < 2 or len(data) < 4:
            raise ConfigError(f"receiver_{j}.csv must have columns t,u and at least four rows")
        t = data[:, 0]
        dt = (t[-1] - t[0]) / (len(t) - 1)
        if np.abs(np.diff(t) - dt).max() > 1e-6 * dt:
            raise DataGap(f"receiver_{j}.csv is not uniformly sampled")
        series.append(TimeSeries(x, float(t[0]), float(dt), data[:, 1].copy()))
    grids = {(s.t0, len(s.samples)) for s in series}
    if len(grids) != 1:
        raise DataGap("receiver series are not aligned")
    return series


def run_recover_orbit(cfg: RunConfig, out: Path, threads=1, seed=None) -> RunReport:
    omega = cfg.float("source.omega")
    R = cfg.float("domain.R")
    R1 = cfg.float("domain.R1")
    T0 = cfg.float("domain.T0")
    h = cfg.float("solver.h")
    eps_c = cfg.float("solver.eps_c", 1e-2)
    entry = cfg.float("solver.entry_factor", ENTRY_FACTOR)
    Config(R=R, R1=R1, T0=T0, omega=omega, h=h, eps_c=eps_c).validate(orbit_recovery=True)
    array = build_array(cfg, R)
    tic = time.perf_counter()
    if cfg.has("data.dir"):
        series = _load_series(cfg, array)
    else:
        t0, dt, n = _time_grid(cfg, T0 + R + R1 + 0.05)
        orbit = build_orbit(cfg, "orbit", horizon=t0 + dt * (n - 1), radius_bound=R1)
        orbit.validate(R)
        series = simulate_receivers(orbit, omega, array, t0, dt, n, threads=threads)
    est = recover_orbit(series, array, omega, R, R1, T0, h, eps_c=eps_c, threads=threads,
                        entry_factor=entry)
    elapsed = time.perf_counter() - tic
    write_csv(out / "orbit.csv", ["t", "ax", "ay", "az", "residual", "guard_flag"],
              [est.times, est.positions[:, 0], est.positions[:, 1], est.positions[:, 2],
               est.residuals, est.guard.astype(int)],
              ["%.17g"] * 5 + ["%d"])
    report = RunReport("recover-orbit", cfg.entries, seed=seed, threads=threads)
    report.metrics["guard_fraction"] = est.guard_fraction
    report.metrics["max_residual"] = float(est.residuals.max())
    report.metrics["clamp_events"] = sum(tr.clamp_events for tr in est.tracks)
    if cfg.has_section("truth"):
        truth = build_orbit(cfg, "truth", horizon=T0, radius_bound=R1)
        a = truth.position(est.times)
        report.metrics["max_error"] = float(np.linalg.norm(est.positions - a, axis=1).max())
        derr = 0.0
        for tr in est.tracks:
            g = np.linalg.norm(a - tr.receiver, axis=1)
            derr = max(derr, float(np.abs(tr.g - g).max()))
        report.metrics["max_distance_error"] = derr
    report.metrics["runtime_s"] = elapsed
    return report


def _ghat(cfg: RunConfig):
    kind = cfg.str("ghat.kind", "unit")
    if kind == "unit":
        return lambda k: 1.0 + 0.0j
    if kind == "box":
        T = cfg.float("ghat.T0")

        def box(k):
            # int_0^T exp(-i k t) dt; vanishes at k = 2 pi m / T
            return complex(T * np.exp(-0.5j * k * T) * np.sinc(k * T / (2.0 * np.pi)))
        return box
    raise ConfigError(f"key 'ghat.kind': unknown kind '{kind}'")


def _reconstruct(cfg, src, ghat, kmax, nk, R, rule, data_sphere, directions, axis, threads):
    grid = FrequencyGrid.uniform(kmax, nk)
    gvals = [ghat(k) for k in grid.values]
    data = helmholtz_cauchy(src, grid.values, gvals, data_sphere, rule, R, threads=threads)
    spec = recover_spectrum_3d(data, directions, gvals, cfg.float("spectrum.g_tol", 1e-8))
    return spec, invert_on_grid(spec, axis, axis, axis)


def run_recover_source(cfg: RunConfig, out: Path, threads=1, seed=None) -> RunReport:
    kind = cfg.str("source.kind", "gaussian")
    if kind != "gaussian":
        raise ConfigError(f"key 'source.kind': unknown kind '{kind}'")
    sigma = cfg.float("source.sigma")
    R0 = cfg.float("source.R0")
    centre = _vec(cfg, "source.center", [0.0, 0.0, 0.0])
    R = cfg.float("domain.R")
    if not 0 < R0 < R:
        raise ConfigError("need 0 < source.R0 < domain.R")
    ghat = _ghat(cfg)
    kmax = cfg.float("freq.kmax")
    nk = cfg.int("freq.n")
    sweep = cfg.floats("freq.sweep", [])
    rule = volume_rule(R0, cfg.float("quad.spacing"))
    data_sphere = sphere_rule(cfg.int("quad.data_order", 32))
    directions = sphere_rule(cfg.int("quad.direction_order", 16))
    npts = cfg.int("grid.n", 41)
    half = cfg.float("grid.half_width", R0)
    axis = np.linspace(-half, half, npts)

    def f(y):
        d = np.atleast_2d(y) - centre
        return np.exp(-np.einsum("ij,ij->i", d, d) / (2.0 * sigma ** 2))

    def fhat(xi):
        return ((2.0 * np.pi * sigma ** 2) ** 1.5 * np.exp(-0.5 * sigma ** 2 * np.sum(xi ** 2, -1))
                * np.exp(-1j * xi @ centre))

    src = SeparableSource(f, lambda t: np.ones_like(t), R0, 1.0)
    X, Y, Z = np.meshgrid(axis, axis, axis, indexing="ij")
    pts = np.stack([X.ravel(), Y.ravel(), Z.ravel()], 1)
    f_true = f(pts)

    tic = time.perf_counter()
    spec, f_rec = _reconstruct(cfg, src, ghat, kmax, nk, R, rule, data_sphere, directions, axis,
                               threads)
    f_rec = f_rec.ravel()
    elapsed = time.perf_counter() - tic

    th = np.arccos(np.clip(spec.directions[:, 2], -1.0, 1.0))
    ph = np.mod(np.arctan2(spec.directions[:, 1], spec.directions[:, 0]), 2.0 * np.pi)
    K, TH = np.meshgrid(spec.kappas, th, indexing="ij")
    _, PH = np.meshgrid(spec.kappas, ph, indexing="ij")
    vals = spec.filled()
    write_csv(out / "spectrum.csv", ["kappa", "dtheta", "dphi", "re", "im", "mask"],
              [K.ravel(), TH.ravel(), PH.ravel(), vals.real.ravel(), vals.imag.ravel(),
               spec.mask.ravel().astype(int)], ["%.17g"] * 5 + ["%d"])
    write_csv(out / "reconstruction.csv", ["x", "y", "z", "f_rec", "f_true"],
              [pts[:, 0], pts[:, 1], pts[:, 2], f_rec, f_true])

    report = RunReport("recover-source", cfg.entries, seed=seed, threads=threads)
    xi = spec.kappas[:, None, None] * spec.directions[None, :, :]
    exact = fhat(xi)
    report.metrics["masked_rows"] = int(np.sum(~spec.mask.any(axis=1)))
    if spec.mask.any():
        report.metrics["spectrum_max_error"] = float(np.abs(spec.values - exact)[spec.mask].max())
    report.metrics["rel_l2_error"] = float(np.linalg.norm(f_rec - f_true) / np.linalg.norm(f_true))
    if sweep:
        errs = []
        for km in sweep:
            _, fr = _reconstruct(cfg, src, ghat, km, nk, R, rule, data_sphere, directions, axis,
                                 threads)
            e = float(np.linalg.norm(fr.ravel() - f_true) / np.linalg.norm(f_true))
            report.metrics["rel_l2_error_kmax_%g" % km] = e
            errs.append(e)
        report.metrics["monotone_violations"] = int(np.sum(np.diff(errs) >= 0))
    report.metrics["runtime_s"] = elapsed
    return report


def _lattice_points(radius, step):
    m = int(math.floor(radius / step))
    c = step * np.arange(-m, m + 1)
    X, Y, Z = np.meshgrid(c, c, c, indexing="ij")
    p = np.stack([X.ravel(), Y.ravel(), Z.ravel()], 1)
    return p[np.linalg.norm(p, axis=1) < radius]


def run_nonradiating(cfg: RunConfig, out: Path, threads=1, seed=None) -> RunReport:
    chi = RadialBumpChi(radius=cfg.float("chi.radius", 0.8), t_center=cfg.float("chi.t_center", 1.0),
                        t_halfwidth=cfg.float("chi.t_halfwidth", 1.0), power=cfg.int("chi.power", 4))
    R = cfg.float("domain.R")
    if not chi.radius < R:
        raise ConfigError("chi.radius must be below domain.R")
    times = np.linspace(0.0, cfg.float("time.t_end", 5.0), cfg.int("time.n", 101))
    spacing = cfg.float("quad.spacing")
    fine = cfg.float("quad.spacing_fine", None)
    boundary = R * sphere_rule(cfg.int("boundary.order", 3)).nodes
    # interior probes sit on cell corners of the midpoint grid, away from every node
    probe_step = cfg.float("interior.step", 0.4)
    interior = _lattice_points(chi.radius, probe_step)
    src = nonradiating_from_chi(chi, R=R)

    def field(points, rule):
        chunks = [points[i:i + 1] for i in range(len(points))]

        def one(p):
            return wave_field_on_points(src, p, times, rule)[0]
        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                return np.array(list(pool.map(one, chunks)))
        return np.array([one(p) for p in chunks])

    tic = time.perf_counter()
    rule = volume_rule(chi.radius, spacing)
    ub = field(boundary, rule)
    ui = field(interior, rule)
    chi_i = np.stack([chi(interior, t) for t in times], axis=1)
    report = RunReport("nonradiating", cfg.entries, seed=seed, threads=threads)
    report.metrics["boundary_sup"] = float(np.abs(ub).max())
    report.metrics["boundary_ratio"] = float(np.abs(ub).max()) / chi.sup
    report.metrics["interior_sup_error"] = float(np.abs(ui - chi_i).max())
    report.metrics["interior_ratio"] = float(np.abs(ui - chi_i).max()) / chi.sup
    if fine is not None:
        ubf = field(boundary, volume_rule(chi.radius, fine))
        report.metrics["boundary_ratio_fine"] = float(np.abs(ubf).max()) / chi.sup
        report.metrics["refinement_factor"] = (report.metrics["boundary_ratio"]
                                               / max(report.metrics["boundary_ratio_fine"], 1e-300))
    rng = np.random.default_rng(seed)
    n_out = cfg.int("outside.samples", 2000)
    d = rng.normal(size=(n_out, 3))
    d /= np.linalg.norm(d, axis=1)[:, None]
    y = d * rng.uniform(chi.radius, R, size=(n_out, 1))
    t_in = rng.uniform(0.0, chi.T0, size=n_out)
    t_out = np.where(rng.random(n_out) < 0.5, rng.uniform(-2.0, 0.0, n_out),
                     rng.uniform(chi.T0, chi.T0 + 2.0, n_out))
    y_in = d * rng.uniform(0.0, chi.radius, size=(n_out, 1))
    outside = np.concatenate([src.density(y, t_in), src.density(y_in, t_out)])
    report.metrics["outside_F_max"] = float(np.abs(outside).max())
    report.metrics["runtime_s"] = time.perf_counter() - tic
    return report


RUNNERS = {
    "simulate": run_simulate,
    "recover-orbit": run_recover_orbit,
    "recover-source": run_recover_source,
    "nonradiating": run_nonradiating,
}


def run(pipeline: str, config_path, out_dir, threads: int = 1, seed: int | None = None) -> RunReport:
    """Run one pipeline, write its files and ``report.txt`` into ``out_dir``."""
    if pipeline not in RUNNERS:
        raise ConfigError(f"unknown pipeline '{pipeline}'")
    if threads < 1:
        raise ConfigError("threads must be at least 1")
    cfg = RunConfig.load(config_path)
    asserts = cfg.asserts()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    report = RUNNERS[pipeline](cfg, out, threads=threads, seed=seed)
    report.evaluate(asserts)
    with open(out / "report.txt", "w", encoding="utf-8", newline="\n") as fh:
        fh.write(report.to_text())
    return report


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="wavesrc", description="Wave source simulation and recovery.")
    p.add_argument("pipeline", choices=PIPELINES)
    p.add_argument("--config", required=True, help="flat section.key = value config file")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        report = run(args.pipeline, args.config, args.out, threads=args.threads, seed=args.seed)
    except (WavesrcError, OSError, ValueError) as exc:
        print(f"wavesrc: error: {exc}", file=sys.stderr)
        return 1
    for name, op, bound, value, ok in report.checks:
        print(f"{'PASS' if ok else 'FAIL'} {name} = {_fmt(value)} ({op} {_fmt(bound)})")
    print(f"report written to {os.path.join(args.out, 'report.txt')}")
    return 0 if report.passed else 2


if __name__ == "__main__":
    sys.exit(main())
