"""Experiment configuration and orchestration.

A run is described by an INI file with the sections ``[grid]``, ``[model]``,
``[shape]``, ``[stepper]``, ``[run]`` and ``[diagnostics]`` (see
``README.md`` for the schema). :func:`run_experiment` validates it, builds the
initial field, integrates, and writes into one output directory:

    config.ini          the normalised configuration
    timeseries.csv      one DiagnosticsRecord row per cadence step
    snapshots/*.vpmf    binary field snapshots every ``snapshot_every`` steps
    density.csv         sup density ratio per snapshot
    monotonicity.csv    sampled monotonicity inequality checks
    oracle.csv          fitted radii against the sharp-interface oracle
    summary.json        scalar outcomes (drifts, residuals, errors)
"""

from __future__ import annotations

import configparser
import csv
import io
import json
import logging
import math
import os
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .diagnostics import (
    HistoryEntry,
    MonotonicityKernel,
    curvature_l2,
    density_scan,
    discrepancy_max,
    energy,
    monotonicity_check,
    read_records_csv,
    volume,
    write_records_csv,
)
from .dynamics import (
    EquationVariant,
    MultiplierMode,
    Scheme,
    StepperSpec,
    check_stability,
    initial_state,
    run,
)
from .initial_data import (
    DEFAULT_K,
    Ball,
    Ellipse,
    Implicit,
    UnionOfBalls,
    check_well_prepared,
    dyadic_radii,
    make_initial,
)
from .interface import fit_spheres, interface_measure
from .oracle import oracle_integrate
from .potential import SIGMA
from .torus_field import Discretization, GridSpec, ScalarField, read_snapshot, write_snapshot

log = logging.getLogger(__name__)

OUTPUT_ROOT_ENV = "VPMCF_OUTPUT_ROOT"
SECTIONS = ("grid", "model", "shape", "stepper", "run", "diagnostics")


class ConfigError(ValueError):
    """Configuration is malformed or violates a module precondition."""


def _floats(text: str) -> tuple:
    text = text.strip()
    if not text:
        return ()
    return tuple(float(v) for v in text.replace(";", ",").split(","))


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return str(int(v))
    if isinstance(v, (tuple, list, np.ndarray)):
        return ", ".join(_fmt(x) for x in v)
    return str(v)


@dataclass(frozen=True)
class ShapeConfig:
    """``kind`` is ball, union, ellipse or implicit.

    ball/ellipse use one ``center``; union uses a flat list of ``centers``
    (d numbers per ball) and ``radii``; implicit reads a snapshot file holding
    a signed distance (positive inside).
    """

    kind: str = "ball"
    center: tuple = (0.5, 0.5)
    radius: float = 0.25
    centers: tuple = ()
    radii: tuple = ()
    semi_axes: tuple = ()
    file: str = ""

    def build(self, d: int):
        if self.kind == "ball":
            return Ball(self.center, self.radius)
        if self.kind == "union":
            if len(self.centers) != d * len(self.radii) or not self.radii:
                raise ConfigError(f"union needs {d} centre coordinates per radius")
            cs = np.reshape(self.centers, (len(self.radii), d))
            return UnionOfBalls(tuple(Ball(tuple(c), r) for c, r in zip(cs, self.radii)))
        if self.kind == "ellipse":
            return Ellipse(self.center, self.semi_axes)
        if self.kind == "implicit":
            if not self.file:
                raise ConfigError("implicit shape needs a snapshot file")
            return Implicit(read_snapshot(self.file).values)
        raise ConfigError(f"unknown shape kind {self.kind!r}")

    def sphere_radii(self) -> Optional[tuple]:
        """Initial radii for the oracle, or None for non-spherical shapes."""
        if self.kind == "ball":
            return (self.radius,)
        if self.kind == "union":
            return tuple(sorted(self.radii))
        return None


@dataclass(frozen=True)
class RunConfig:
    # [grid]
    d: int = 2
    n: int = 128
    discretization: str = "spectral"
    # [model]
    eps: float = 4 / 128
    variant: str = "golovaty"
    K: float = DEFAULT_K
    # [shape]
    shape: ShapeConfig = field(default_factory=ShapeConfig)
    # [stepper]
    scheme: str = "semi-implicit-spectral"
    dt: float = 0.1 * (4 / 128) ** 2
    multiplier_mode: str = "analytic"
    conservative_tol: float = 1e-12
    # [run]
    T: float = 0.01
    cadence: int = 10
    snapshot_every: int = 0
    output_dir: str = "run"
    # [diagnostics]
    density_radii: tuple = ()
    density_stride: int = 4
    monotonicity_samples: int = 0
    c5: float = 1e3
    seed: int = 0
    oracle: bool = True

    # -- construction ---------------------------------------------------------

    @property
    def grid(self) -> GridSpec:
        return GridSpec(self.d, self.n, self.discretization)

    @property
    def stepper(self) -> StepperSpec:
        return StepperSpec(
            scheme=self.scheme,
            dt=self.dt,
            multiplier_mode=self.multiplier_mode,
            conservative_tol=self.conservative_tol,
        )

    def validate(self) -> None:
        """Check every precondition that does not require time stepping."""
        try:
            grid = self.grid
            Discretization.parse(self.discretization)
            EquationVariant(self.variant)
            Scheme(self.scheme)
            MultiplierMode(self.multiplier_mode)
            if not 0.0 < self.eps < 1.0:
                raise ConfigError(f"eps must lie in (0, 1), got {self.eps}")
            if self.eps < 3.0 * grid.h * (1.0 - 1e-12):
                raise ConfigError(
                    f"resolution guard: eps = {self.eps:g} is below 3h = {3 * grid.h:g}"
                )
            if not self.T >= 0.0:
                raise ConfigError("T must be non-negative")
            if self.cadence < 1 or self.snapshot_every < 0:
                raise ConfigError("cadence must be >= 1 and snapshot_every >= 0")
            if self.snapshot_every % self.cadence:
                raise ConfigError("snapshot_every must be a multiple of cadence")
            if any(not 0.0 < r < 0.25 for r in self.density_radii):
                raise ConfigError("density radii must lie in (0, 1/4)")
            if self.d > 3:
                raise ConfigError("d <= 3 supported")
            check_stability(self.stepper, grid, self.eps)
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    # -- INI round trip ------------------------------------------------------

    def to_ini(self) -> str:
        cp = configparser.ConfigParser()
        cp["grid"] = {"d": _fmt(self.d), "n": _fmt(self.n), "discretization": self.discretization}
        cp["model"] = {"eps": _fmt(self.eps), "variant": self.variant, "K": _fmt(self.K)}
        cp["shape"] = {f.name: _fmt(getattr(self.shape, f.name)) for f in fields(ShapeConfig)}
        cp["stepper"] = {
            "scheme": self.scheme,
            "dt": _fmt(self.dt),
            "multiplier_mode": self.multiplier_mode,
            "conservative_tol": _fmt(self.conservative_tol),
        }
        cp["run"] = {
            "T": _fmt(self.T),
            "cadence": _fmt(self.cadence),
            "snapshot_every": _fmt(self.snapshot_every),
            "output_dir": self.output_dir,
        }
        cp["diagnostics"] = {
            "density_radii": _fmt(self.density_radii),
            "density_stride": _fmt(self.density_stride),
            "monotonicity_samples": _fmt(self.monotonicity_samples),
            "c5": _fmt(self.c5),
            "seed": _fmt(self.seed),
            "oracle": _fmt(self.oracle),
        }
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    @classmethod
    def from_ini(cls, text: str) -> "RunConfig":
        cp = configparser.ConfigParser()
        try:
            cp.read_string(text)
        except configparser.Error as exc:
            raise ConfigError(f"unreadable config: {exc}") from exc
        unknown = set(cp.sections()) - set(SECTIONS)
        if unknown:
            raise ConfigError(f"unknown sections {sorted(unknown)}")
        base = cls()
        sec = {s: cp[s] if cp.has_section(s) else {} for s in SECTIONS}
        try:
            g, m, sh, st, rn, dg = (sec[s] for s in SECTIONS)
            d = int(g.get("d", base.d))
            n = int(g.get("n", base.n))
            eps = float(m.get("eps", 4.0 / n))
            if "dt" in st and "dt_over_eps2" in st:
                raise ConfigError("give either dt or dt_over_eps2, not both")
            if "dt_over_eps2" in st:
                dt = float(st["dt_over_eps2"]) * eps * eps
            else:
                dt = float(st.get("dt", 0.1 * eps * eps))
            kind = sh.get("kind", "ball")
            center = _floats(sh.get("center", ", ".join(["0.5"] * d)))
            shape = ShapeConfig(
                kind=kind,
                center=center,
                radius=float(sh.get("radius", 0.25)),
                centers=_floats(sh.get("centers", "")),
                radii=_floats(sh.get("radii", "")),
                semi_axes=_floats(sh.get("semi_axes", "")),
                file=sh.get("file", ""),
            )
            return cls(
                d=d,
                n=n,
                discretization=g.get("discretization", base.discretization),
                eps=eps,
                variant=m.get("variant", base.variant),
                K=float(m.get("K", base.K)),
                shape=shape,
                scheme=st.get("scheme", base.scheme),
                dt=dt,
                multiplier_mode=st.get("multiplier_mode", base.multiplier_mode),
                conservative_tol=float(st.get("conservative_tol", base.conservative_tol)),
                T=float(rn.get("T", base.T)),
                cadence=int(rn.get("cadence", base.cadence)),
                snapshot_every=int(rn.get("snapshot_every", base.snapshot_every)),
                output_dir=rn.get("output_dir", base.output_dir),
                density_radii=_floats(dg.get("density_radii", "")),
                density_stride=int(dg.get("density_stride", base.density_stride)),
                monotonicity_samples=int(dg.get("monotonicity_samples", base.monotonicity_samples)),
                c5=float(dg.get("c5", base.c5)),
                seed=int(dg.get("seed", base.seed)),
                oracle=_bool(dg.get("oracle", "true")),
            )
        except ConfigError:
            raise
        except (ValueError, KeyError) as exc:
            raise ConfigError(f"bad config value: {exc}") from exc

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_ini(text)

    def save(self, path) -> Path:
        path = Path(path)
        path.write_text(self.to_ini())
        return path


def _bool(text: str) -> bool:
    v = str(text).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


def resolve_output(path) -> Path:
    """Relative output paths are placed under ``$VPMCF_OUTPUT_ROOT`` when set."""
    p = Path(path)
    root = os.environ.get(OUTPUT_ROOT_ENV)
    if root and not p.is_absolute():
        p = Path(root) / p
    return p


# -- single run ---------------------------------------------------------------


@dataclass
class RunResult:
    config: RunConfig
    out_dir: Path
    records: list
    final_state: object
    summary: dict


def _write_rows(path: Path, header: Sequence[str], rows) -> Path:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])
    return path


def _monotonicity_rows(history, cfg: RunConfig, grid: GridSpec, disc):
    if cfg.monotonicity_samples <= 0 or len(history) < 2:
        return []
    rng = np.random.default_rng(cfg.seed)
    rows = []
    for _ in range(cfg.monotonicity_samples):
        i1, i2 = sorted(rng.choice(len(history), size=2, replace=False))
        t1, t2 = history[i1].t, history[i2].t
        s = t2 + rng.uniform(1e-3, 0.05)
        y = tuple(rng.uniform(0.0, 1.0, grid.d))
        res = monotonicity_check(history, MonotonicityKernel(y, s), t1, t2, cfg.eps, grid, cfg.c5, disc)
        rows.append((*y, s, t1, t2, res.lhs, res.rhs, res.slack))
    return rows


def run_experiment(cfg: RunConfig, out_dir=None) -> RunResult:
    """Validate, build, integrate and write all outputs for one configuration."""
    cfg.validate()
    grid = cfg.grid
    disc = Discretization.parse(cfg.discretization)
    try:
        shape = cfg.shape.build(cfg.d)
        phi0 = make_initial(shape, cfg.eps, grid, cfg.K)
    except ConfigError:
        raise
    except (ValueError, OSError) as exc:
        raise ConfigError(str(exc)) from exc

    out = resolve_output(out_dir if out_dir is not None else cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg.save(out / "config.ini")
    snapdir = out / "snapshots"
    if cfg.snapshot_every:
        snapdir.mkdir(exist_ok=True)

    report = check_well_prepared(phi0, cfg.eps, grid, centers=cfg.density_stride)
    for msg in report.warnings:
        log.warning("initial data: %s", msg)

    radii = list(cfg.density_radii) or dyadic_radii(grid)
    density_rows = []
    history: list = []
    keep_history = cfg.monotonicity_samples > 0

    def on_snapshot(state):
        if cfg.snapshot_every:
            write_snapshot(snapdir / f"step_{state.step:08d}.vpmf", ScalarField(grid, state.phi, cfg.eps, state.t))
        scan = density_scan(state.phi, cfg.eps, grid, radii, centers=cfg.density_stride, disc=disc)
        density_rows.append((state.t, scan.sup_ratio, *scan.argsup_center, scan.argsup_radius))
        if keep_history:
            history.append(HistoryEntry(state.t, state.phi.copy(), state.lambda_sq_accum))

    snap_every = cfg.snapshot_every or max(cfg.cadence, 1)
    nsteps_total = int(math.ceil((cfg.T) / cfg.dt - 1e-9)) if cfg.T > 0 else 0

    def on_record(state, rec):
        if state.step % snap_every == 0 or state.step == nsteps_total:
            on_snapshot(state)

    s0 = initial_state(phi0, cfg.eps, cfg.variant, grid)
    state, records = run(s0, cfg.stepper, grid, cfg.T, cfg.cadence, disc, on_record=on_record)
    write_records_csv(out / "timeseries.csv", records)
    _write_rows(
        out / "density.csv",
        ["t", "sup_ratio"] + [f"x{j}" for j in range(cfg.d)] + ["radius"],
        density_rows,
    )
    mono = _monotonicity_rows(history, cfg, grid, disc)
    _write_rows(
        out / "monotonicity.csv",
        [f"y{j}" for j in range(cfg.d)] + ["s", "t1", "t2", "lhs", "rhs", "slack"],
        mono,
    )

    summary = {
        "steps": state.step,
        "t_final": state.t,
        "volume_drift": abs(records[-1].volume - records[0].volume),
        "dissipation_residual": abs(records[-1].energy - records[0].energy + state.dissipation_accum / SIGMA),
        "max_energy_increase": max(
            (b.energy - a.energy for a, b in zip(records, records[1:])), default=0.0
        ),
        "max_discrepancy": max(r.max_discrepancy for r in records),
        "max_abs_phi": max(r.max_abs_phi for r in records),
        "lambda_sq_accum": state.lambda_sq_accum,
        "overshoot_count": state.overshoot_count,
        "clamp_count": state.clamp_count,
        "initial_density_ratio": report.density_ratio,
        "max_density_ratio": max((r[1] for r in density_rows), default=float("nan")),
        "initial_max_relative_discrepancy": report.max_relative_discrepancy,
        "omega": report.omega,
        "min_monotonicity_slack_ratio": min(
            (r[-1] / r[-2] for r in mono if r[-2] > 0), default=float("nan")
        ),
    }
    oracle_radii = cfg.shape.sphere_radii()
    if cfg.oracle and oracle_radii is not None and cfg.snapshot_every:
        summary.update(_oracle_compare(out, cfg, grid, oracle_radii))
    (out / "summary.json").write_text(json.dumps(summary, indent=2, default=float))
    return RunResult(cfg, out, records, state, summary)


def _oracle_compare(out: Path, cfg: RunConfig, grid: GridSpec, radii0) -> dict:
    """Fit spheres to each stored snapshot and compare with the oracle."""
    law = "mcf" if cfg.variant == EquationVariant.PLAIN_ALLEN_CAHN.value else "vpmcf"
    traj = oracle_integrate(list(radii0), max(cfg.T, 0.0), cfg.d, law=law)
    t_end = traj.t[-1]
    rows, worst, diverged = [], 0.0, False
    k = len(radii0)
    for path in sorted((out / "snapshots").glob("*.vpmf")):
        fld = read_snapshot(path)
        spheres = fit_spheres(fld.values, grid)
        fitted = sorted(s.radius for s in spheres)
        if fld.t > t_end or len(fitted) != k:
            diverged = True
            rows.append((fld.t, *([math.nan] * (2 * k)), math.nan, 1))
            continue
        ref = np.sort(traj.at(fld.t))
        err = float(np.max(np.abs(np.array(fitted) - ref) / ref))
        gap = _min_gap(spheres, grid) if k > 1 else math.inf
        if gap < 4 * cfg.eps:
            log.warning("spheres within 4 eps at t=%g: oracle no longer applies", fld.t)
        worst = max(worst, err)
        rows.append((fld.t, *fitted, *ref, err, 0))
    header = ["t"] + [f"R{i}" for i in range(k)] + [f"R{i}_oracle" for i in range(k)] + ["rel_err", "diverged"]
    _write_rows(out / "oracle.csv", header, rows)
    return {"oracle_max_rel_error": worst, "oracle_diverged": diverged, "oracle_extinct": traj.extinct}


def _min_gap(spheres, grid: GridSpec) -> float:
    gap = math.inf
    for i, a in enumerate(spheres):
        for b in spheres[i + 1 :]:
            dc = (np.asarray(a.center) - np.asarray(b.center) + 0.5) % 1.0 - 0.5
            gap = min(gap, float(np.linalg.norm(dc)) - a.radius - b.radius)
    return gap


# -- sweeps -------------------------------------------------------------------

SWEEP_METRICS = ("volume_drift", "dissipation_residual", "oracle_max_rel_error", "max_discrepancy")


def scaled_config(cfg: RunConfig, param: str, factor: float, dt_power: float = 2.0) -> RunConfig:
    """Configuration for one sweep entry.

    ``dt``: dt * factor. ``eps``: eps * factor with n / factor (keeping eps/h)
    and dt * factor**dt_power. ``n``: n * factor at fixed eps and dt.
    """
    if param == "dt":
        return replace(cfg, dt=cfg.dt * factor)
    if param == "eps":
        n = cfg.n / factor
        if abs(n - round(n)) > 1e-9:
            raise ConfigError(f"n / factor = {n} is not an integer")
        return replace(cfg, eps=cfg.eps * factor, n=int(round(n)), dt=cfg.dt * factor**dt_power)
    if param == "n":
        n = cfg.n * factor
        if abs(n - round(n)) > 1e-9:
            raise ConfigError(f"n * factor = {n} is not an integer")
        return replace(cfg, n=int(round(n)))
    raise ConfigError(f"unknown sweep parameter {param!r}; use dt, eps or n")


def observed_orders(values: Sequence[float], factors: Sequence[float]) -> list:
    """``log(e_{i-1}/e_i) / log(f_{i-1}/f_i)``; ``"NA"`` where undefined."""
    out = ["NA"]
    for i in range(1, len(values)):
        a, b = values[i - 1], values[i]
        fa, fb = factors[i - 1], factors[i]
        if not (a > 0 and b > 0 and math.isfinite(a) and math.isfinite(b)) or fa == fb:
            out.append("NA")
        else:
            out.append(math.log(a / b) / math.log(fa / fb))
    return out


def sweep(cfg: RunConfig, param: str, factors: Sequence[float], out_dir=None, dt_power: float = 2.0) -> Path:
    """Run the pipeline per factor and write ``summary.csv`` with observed orders.

    A failing sub-run stops the sweep; the rows finished so far are kept.
    """
    if len(factors) < 1:
        raise ConfigError("need at least one factor")
    root = resolve_output(out_dir if out_dir is not None else cfg.output_dir)
    root.mkdir(parents=True, exist_ok=True)
    configs = [scaled_config(cfg, param, f, dt_power) for f in factors]
    for c in configs:
        c.validate()
    results = []

    def write_summary():
        cols = ["factor", "n", "eps", "dt"] + list(SWEEP_METRICS)
        rows = []
        for (f, c, summ) in results:
            rows.append([f, c.n, c.eps, c.dt] + [summ.get(m, math.nan) for m in SWEEP_METRICS])
        fs = [r[0] for r in rows]
        for m in SWEEP_METRICS:
            cols.append(f"order_{m}")
            orders = observed_orders([r[4 + SWEEP_METRICS.index(m)] for r in rows], fs) if len(rows) > 1 else ["NA"] * len(rows)
            for r, o in zip(rows, orders):
                r.append(o)
        return _write_rows(root / "summary.csv", cols, rows)

    for i, (f, c) in enumerate(zip(factors, configs)):
        try:
            res = run_experiment(c, root / f"run_{i:02d}")
        except Exception:
            write_summary()
            raise
        results.append((f, c, res.summary))
    return write_summary()


# -- check --------------------------------------------------------------------

CHECK_COLUMNS = ("t", "energy", "volume", "max_discrepancy", "curvature_l2", "max_abs_phi", "interface_measure")


def check_history(history_dir, disc=None) -> tuple[Path, dict]:
    """Recompute diagnostics from stored snapshots and compare to the run's CSV.

    Writes ``check.csv`` next to the snapshots and returns the largest
    absolute differences (per column) against ``timeseries.csv`` rows at the
    same times.
    """
    hdir = Path(history_dir)
    snaps = sorted((hdir / "snapshots").glob("*.vpmf")) or sorted(hdir.glob("*.vpmf"))
    if not snaps:
        raise ConfigError(f"no snapshots under {hdir}")
    if disc is None and (hdir / "config.ini").exists():
        disc = RunConfig.load(hdir / "config.ini").discretization
    rows = []
    for p in snaps:
        fld = read_snapshot(p)
        g, phi, eps = fld.grid, fld.values, fld.eps
        rows.append(
            (
                fld.t,
                energy(phi, eps, g, disc),
                volume(phi, g),
                discrepancy_max(phi, eps, g, disc),
                curvature_l2(phi, eps, g, disc),
                float(np.max(np.abs(phi))),
                interface_measure(phi, g),
            )
        )
    out = _write_rows(hdir / "check.csv", CHECK_COLUMNS, rows)
    diffs: dict = {}
    ts_path = hdir / "timeseries.csv"
    if ts_path.exists():
        table = read_records_csv(ts_path)
        for row in rows:
            j = np.nonzero(np.abs(table["t"] - row[0]) <= 1e-12 * max(1.0, abs(row[0])))[0]
            if j.size == 0:
                continue
            for name, val in zip(CHECK_COLUMNS[1:], row[1:]):
                diffs[name] = max(diffs.get(name, 0.0), abs(float(table[name][j[0]]) - val))
    return out, diffs
