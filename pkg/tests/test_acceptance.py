"""Acceptance criteria 1-12.

Each test records one PASS/FAIL line (shown in the terminal summary and, with
``-s``, inline). Regression runs are computed once per module and shared:
criteria 3, 10 and 12 sweep over every run produced here.
"""

import csv
import json
import math
import time
from dataclasses import dataclass, field

import numpy as np
import pytest

from vpmcf import dynamics as dyn
from vpmcf.diagnostics import (
    MonotonicityKernel,
    density_scan,
    monotonicity_check,
    read_records_csv,
)
from vpmcf.harness import RunConfig, ShapeConfig, sweep
from vpmcf.initial_data import (
    Ball,
    Ellipse,
    UnionOfBalls,
    check_well_prepared,
    dyadic_radii,
    make_initial,
    signed_distance,
)
from vpmcf.interface import fit_spheres
from vpmcf.potential import SIGMA
from vpmcf.torus_field import GridSpec

SI = "semi-implicit-spectral"
BDF2 = "semi-implicit-bdf2"
ELLIPSE = Ellipse((0.5, 0.5), (0.3, 0.18))
DISC = Ball((0.5, 0.5), 0.25)


@dataclass
class Regression:
    name: str
    grid: GridSpec
    eps: float
    records: list
    density: list  # (t, sup ratio)
    state: object
    seconds: float
    history: list = field(default_factory=list)

    @property
    def max_abs_phi(self) -> float:
        return max(r.max_abs_phi for r in self.records)


REGRESSIONS: dict = {}


def regress(name, shape, n, eps, *, T, variant="golovaty", scheme=SI, dt=None, mode="analytic",
            cadence=1, density_every=None, history_every=None, d=2):
    """Run once, cache under ``name`` and keep what the criteria need."""
    if name in REGRESSIONS:
        return REGRESSIONS[name]
    g = GridSpec(d, n)
    dt = 0.1 * eps * eps if dt is None else dt
    radii = dyadic_radii(g)
    density_every = density_every or cadence * max(1, 20 // cadence)
    dens = []

    def on_record(s, rec):
        if s.step % density_every == 0:
            dens.append((s.t, density_scan(s.phi, eps, g, radii, centers=4).sup_ratio))

    history = [] if history_every else None
    t0 = time.perf_counter()
    s0 = dyn.initial_state(make_initial(shape, eps, g), eps, variant, g)
    spec = dyn.StepperSpec(scheme, dt, multiplier_mode=mode)
    state, recs = dyn.run(s0, spec, g, T, cadence, history=history, history_every=history_every, on_record=on_record)
    reg = Regression(name, g, eps, recs, dens, state, time.perf_counter() - t0, history or [])
    REGRESSIONS[name] = reg
    return reg


# -- shared runs ------------------------------------------------------------

N1, EPS1, T1 = 128, 4 / 128, 0.02
DT1 = 0.1 * EPS1**2


@pytest.fixture(scope="module")
def ellipse_conservative():
    return regress("ellipse-conservative", ELLIPSE, N1, EPS1, T=T1, mode="conservative")


@pytest.fixture(scope="module")
def ellipse_analytic():
    return [regress(f"ellipse-analytic-dt/{2**k}", ELLIPSE, N1, EPS1, T=T1, dt=DT1 / 2**k) for k in range(3)]


@pytest.fixture(scope="module")
def stationary_disc():
    # history every 4 steps feeds the monotonicity samples
    return regress("stationary-disc", DISC, N1, EPS1, T=0.02, history_every=4)


@pytest.fixture(scope="module")
def discrepancy_runs():
    eps = 1 / 32
    out = {}
    for shape_name, shape in (("disc", DISC), ("ellipse", ELLIPSE)):
        out[shape_name] = [
            regress(f"{shape_name}-eps1/32-n{n}", shape, n, eps, T=0.005, dt=0.1 * eps**2 * 128 / n,
                    cadence=n // 128, density_every=8 * n // 128)
            for n in (128, 256, 512)
        ]
    return out


@pytest.fixture(scope="module")
def single_disc_runs():
    n, eps, T_star = 256, 4 / 256, 0.0162
    return {
        v: regress(f"single-disc-{v}", Ball((0.5, 0.5), 0.3), n, eps, T=T_star, variant=v, scheme=BDF2,
                   cadence=20, density_every=100)
        for v in ("golovaty", "plain-allen-cahn")
    }


@pytest.fixture(scope="module")
def two_disc_sweep(tmp_path_factory):
    root = tmp_path_factory.mktemp("two-disc")
    cfg = RunConfig(
        n=256,
        eps=4 / 256,
        dt=0.1 * (4 / 256) ** 2,
        scheme=BDF2,
        shape=ShapeConfig("union", centers=(0.22, 0.22, 0.6, 0.6), radii=(0.15, 0.25)),
        T=0.0226816,  # smaller radius halves (oracle, frozen)
        cadence=20,
        snapshot_every=40,
    )
    t0 = time.perf_counter()
    path = sweep(cfg, "eps", [1.0, 0.5], root)
    elapsed = time.perf_counter() - t0
    rows = list(csv.DictReader(open(path)))
    runs = []
    for i in range(len(rows)):
        d = root / f"run_{i:02d}"
        runs.append(
            {
                "summary": json.loads((d / "summary.json").read_text()),
                "timeseries": read_records_csv(d / "timeseries.csv"),
                "density": np.loadtxt(d / "density.csv", delimiter=",", skiprows=1, usecols=1),
            }
        )
    return rows, runs, elapsed


# -- criteria -----------------------------------------------------------------


def test_c01_volume_conservation(criterion, ellipse_conservative, ellipse_analytic):
    r = ellipse_conservative
    v = np.array([x.volume for x in r.records])
    cons = float(np.max(np.abs(v - v[0])))
    drift = [abs(a.records[-1].volume - a.records[0].volume) for a in ellipse_analytic]
    ratios = [drift[0] / drift[1], drift[1] / drift[2]]
    ok = cons <= 1e-10 and all(1.7 <= q <= 2.3 for q in ratios) and r.seconds <= 60
    criterion(
        "C1 volume conservation",
        ok,
        f"conservative max|dV| = {cons:.2e} (<= 1e-10) in {r.seconds:.1f}s (<= 60s); "
        f"analytic drift ratios {ratios[0]:.2f}, {ratios[1]:.2f} (in [1.7, 2.3])",
    )
    assert ok


def test_c02_dissipation_identity(criterion, ellipse_conservative, ellipse_analytic):
    runs = ellipse_analytic + [ellipse_conservative]
    worst_rise = max(float(np.max(np.diff([x.energy for x in r.records]))) for r in runs)
    resid = []
    for r in ellipse_analytic:
        e0, e1 = r.records[0].energy, r.records[-1].energy
        resid.append(abs(e1 - e0 + r.state.dissipation_accum / SIGMA))
    ratios = [resid[0] / resid[1], resid[1] / resid[2]]
    orders = [math.log2(q) for q in ratios]
    ok = worst_rise <= 1e-12 and all(0.7 <= p <= 1.3 for p in orders)
    criterion(
        "C2 dissipation identity",
        ok,
        f"largest per-step energy change {worst_rise:.2e} (<= 1e-12); "
        f"cumulative residual orders {orders[0]:.2f}, {orders[1]:.2f} (about 1)",
    )
    assert ok


def _random_smooth(rng, g, modes=5):
    spec = np.zeros(g.shape, complex)
    idx = (slice(0, modes),) * g.d
    spec[idx] = rng.normal(size=(modes,) * g.d) + 1j * rng.normal(size=(modes,) * g.d)
    phi = np.real(np.fft.ifftn(spec))
    return 0.95 * phi / np.max(np.abs(phi))


def test_c03_multiplier_forms(criterion, ellipse_conservative, ellipse_analytic, stationary_disc,
                              discrepancy_runs, single_disc_runs):
    rng = np.random.default_rng(20261019)
    worst = 0.0
    for i in range(100):
        g = GridSpec(2, 64) if i % 4 else GridSpec(3, 16)
        phi = _random_smooth(rng, g)
        a, b = dyn.lambda_golovaty(phi, 0.1, g, "spectral")
        worst = max(worst, abs(a - b) / abs(a))
    reg_worst = 0.0
    for r in REGRESSIONS.values():
        for phi in [r.state.phi] + [h.phi for h in r.history[:: max(1, len(r.history) // 5)]]:
            a, b = dyn.lambda_golovaty(phi, r.eps, r.grid, "spectral")
            reg_worst = max(reg_worst, abs(a - b) / abs(a))
    ok = worst <= 1e-10 and reg_worst <= 1e-10
    criterion(
        "C3 multiplier form equivalence",
        ok,
        f"100 random fields max rel diff {worst:.1e}; {len(REGRESSIONS)} regression runs {reg_worst:.1e} (<= 1e-10)",
    )
    assert ok


CONSTANTS = [-0.9, -0.5, 0.0, 0.5, 0.9]
SCHEMES = ["explicit-euler", SI, BDF2]


def _constant_drift(variant):
    g = GridSpec(2, 16)
    eps = 4 * g.h
    worst = 0.0
    for scheme in SCHEMES:
        dt = dyn.stability_bound(dyn.StepperSpec(scheme, dt=1.0), g, eps)
        for mode in ("analytic", "conservative"):
            spec = dyn.StepperSpec(scheme, dt, multiplier_mode=mode)
            for c in CONSTANTS:
                s = dyn.initial_state(np.full(g.shape, c), eps, variant, g)
                for _ in range(3):
                    s = dyn.step(s, spec, g)
                    worst = max(worst, float(np.max(np.abs(s.phi - c))))
    return worst


def test_c04_constant_fixed_points(criterion):
    drift = {v: _constant_drift(v) for v in ("golovaty", "rubinstein-sternberg", "brassel-bretin")}
    ok = max(drift.values()) <= 1e-14
    criterion(
        "C4 constant fixed points (multiplier variants)",
        ok,
        "max per-step change " + ", ".join(f"{k} {v:.1e}" for k, v in drift.items()) + " (<= 1e-14)",
    )
    assert ok


@pytest.mark.xfail(strict=True, reason="plain Allen-Cahn moves constants by -dt W'(c)/eps^2; only 0 and +-1 are fixed")
def test_c04_plain_allen_cahn_constants(criterion):
    drift = _constant_drift("plain-allen-cahn")
    criterion(
        "C4 constant fixed points (plain Allen-Cahn)",
        drift <= 1e-14,
        f"max per-step change {drift:.2e}; no multiplier balances W'(c) != 0 (recorded deviation)",
    )
    assert drift <= 1e-14


def test_c05_initial_data(criterion):
    details, ok = [], True
    n = 256
    g = GridSpec(2, n)
    for name, shape in (("ball", DISC), ("ellipse", ELLIPSE), ("two balls", UnionOfBalls((Ball((0.3, 0.3), 0.12), Ball((0.68, 0.62), 0.18))))):
        eps = 4 * g.h
        phi = make_initial(shape, eps, g)
        rep = check_well_prepared(phi, eps, g, centers=2)
        sd = signed_distance(shape, g).values
        # the zero set lies within h of the boundary: signs agree off an h-band
        off = np.abs(sd) > g.h
        zero_ok = bool(np.all(np.sign(phi[off]) == np.sign(sd[off])))
        this = rep.max_relative_discrepancy <= 1e-10 and math.isfinite(rep.density_ratio) and zero_ok
        ok &= this
        details.append(f"{name}: rel xi {rep.max_relative_discrepancy:.1e}, density {rep.density_ratio:.2f}, zero set {'ok' if zero_ok else 'off'}")
    criterion("C5 initial-data well-preparedness", ok, "; ".join(details))
    assert ok


def test_c06_discrepancy_sign(criterion, discrepancy_runs):
    details, ok = [], True
    for shape_name, runs in discrepancy_runs.items():
        # t = 0 is covered by C5; here only evolved states count
        tau = [max(0.0, max(r.max_discrepancy for r in run.records[1:])) for run in runs]
        signed = [max(r.max_discrepancy for r in run.records[1:]) for run in runs]
        decreasing = all(b <= a for a, b in zip(tau, tau[1:]))
        ok &= decreasing
        details.append(
            f"{shape_name} n=128/256/512: tau = " + "/".join(f"{t:.1e}" for t in tau)
            + " (max xi " + "/".join(f"{s:.1e}" for s in signed) + ")"
        )
    criterion("C6 discrepancy sign under evolution", ok, "non-increasing tau(h): " + "; ".join(details))
    assert ok


def test_c07_single_disc_vs_allen_cahn(criterion, single_disc_runs):
    T_star = 0.0162
    assert math.sqrt(0.09 - 2 * T_star) == pytest.approx(0.24)
    (gv,) = fit_spheres(single_disc_runs["golovaty"].state.phi, single_disc_runs["golovaty"].grid)
    (ac,) = fit_spheres(single_disc_runs["plain-allen-cahn"].state.phi, single_disc_runs["plain-allen-cahn"].grid)
    dev_g = abs(gv.radius - 0.3) / 0.3
    dev_ac = abs(ac.radius - 0.24) / 0.24
    secs = sum(r.seconds for r in single_disc_runs.values())
    ok = dev_g <= 0.02 and dev_ac <= 0.03 and secs <= 300
    criterion(
        "C7 single-disc stationarity vs Allen-Cahn",
        ok,
        f"golovaty |R-R0|/R0 = {dev_g:.1e} (<= 2%), AC vs sqrt(R0^2-2t) {dev_ac:.1e} (<= 3%), {secs:.0f}s",
    )
    assert ok


def test_c08_two_disc_oracle(criterion, two_disc_sweep):
    rows, runs, elapsed = two_disc_sweep
    errs = [float(r["oracle_max_rel_error"]) for r in rows]
    diverged = any(run["summary"]["oracle_diverged"] for run in runs)
    ok = errs[0] <= 0.05 and errs[1] < errs[0] and not diverged and elapsed <= 900
    criterion(
        "C8 two-disc oracle tracking",
        ok,
        f"max rel radius error n=256: {errs[0]:.2%} (<= 5%), n=512: {errs[1]:.2%} (decreasing); "
        f"observed order {rows[1]['order_oracle_max_rel_error'][:4]}; {elapsed:.0f}s for both",
    )
    assert ok


def test_c09_monotonicity(criterion, stationary_disc):
    r = stationary_disc
    hist = r.history
    rng = np.random.default_rng(9)
    worst, count = math.inf, 0
    for _ in range(24):
        i1, i2 = sorted(rng.choice(len(hist), size=2, replace=False))
        s = hist[i2].t + rng.uniform(1e-3, 0.05)
        # half the centres on the interface, half anywhere
        if count % 2:
            y = tuple(rng.uniform(0, 1, 2))
        else:
            th = rng.uniform(0, 2 * np.pi)
            y = (0.5 + 0.25 * math.cos(th), 0.5 + 0.25 * math.sin(th))
        res = monotonicity_check(hist, MonotonicityKernel(y, s), hist[i1].t, hist[i2].t, r.eps, r.grid, c5=1e3)
        worst = min(worst, res.slack / res.rhs)
        count += 1
    ok = count >= 20 and worst >= -1e-6
    criterion("C9 monotonicity inequality", ok, f"{count} samples, min slack/rhs = {worst:.3f} (>= -1e-6)")
    assert ok


def test_c10_density_bounded(criterion, ellipse_conservative, ellipse_analytic, stationary_disc,
                             discrepancy_runs, single_disc_runs, two_disc_sweep):
    ratios = {name: max(d for _, d in r.density) / r.density[0][1] for name, r in REGRESSIONS.items()}
    for i, run in enumerate(two_disc_sweep[1]):
        dens = np.atleast_1d(run["density"])
        ratios[f"two-disc-sweep-{i}"] = float(dens.max() / dens[0])
    worst = max(ratios, key=ratios.get)
    ok = ratios[worst] <= 3.0
    criterion("C10 density boundedness", ok, f"{len(ratios)} runs, largest sup/initial = {ratios[worst]:.3f} ({worst}) (<= 3)")
    assert ok


def test_c11_lambda_accumulation(criterion, stationary_disc):
    t = np.array([x.t for x in stationary_disc.records])
    acc = np.array([x.lambda_sq_accum for x in stationary_disc.records])
    T = t[-1]

    def slope(a, b):
        m = (t >= a - 1e-15) & (t <= b + 1e-15)
        return np.polyfit(t[m], acc[m], 1)[0]

    s1, s2 = slope(T / 4, T / 2), slope(T / 2, T)
    rel = abs(s2 - s1) / abs(s1)
    ok = rel <= 0.2
    criterion("C11 lambda^2 accumulation", ok, f"slopes {s1:.4g} on [T/4,T/2], {s2:.4g} on [T/2,T], rel diff {rel:.1e} (<= 20%)")
    assert ok


def test_c12_maximum_principle(criterion, ellipse_conservative, ellipse_analytic, stationary_disc,
                               discrepancy_runs, single_disc_runs, two_disc_sweep):
    worst = {name: r.max_abs_phi for name, r in REGRESSIONS.items()}
    for i, run in enumerate(two_disc_sweep[1]):
        worst[f"two-disc-sweep-{i}"] = float(np.max(run["timeseries"]["max_abs_phi"]))
    top = max(worst, key=worst.get)
    ok = worst[top] <= 1 + 1e-6
    criterion("C12 maximum principle", ok, f"{len(worst)} runs, max|phi| = {worst[top]:.12f} ({top}) (<= 1 + 1e-6)")
    assert ok
