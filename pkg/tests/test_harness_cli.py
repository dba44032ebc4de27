import csv
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vpmcf import harness
from vpmcf.cli import main
from vpmcf.diagnostics import read_records_csv
from vpmcf.dynamics import ConservationRootError, StepFailure
from vpmcf.harness import (
    ConfigError,
    RunConfig,
    ShapeConfig,
    check_history,
    observed_orders,
    run_experiment,
    scaled_config,
    sweep,
)


def disc_config(tmp_path, **kw):
    base = dict(
        n=64,
        eps=4 / 64,
        dt=0.1 * (4 / 64) ** 2,
        shape=ShapeConfig("ball", (0.5, 0.5), 0.2),
        T=0.004,
        cadence=4,
        snapshot_every=8,
        output_dir=str(tmp_path / "out"),
    )
    base.update(kw)
    return RunConfig(**base)


def write_cfg(tmp_path, cfg, name="c.ini"):
    p = tmp_path / name
    cfg.save(p)
    return p


class TestConfig:
    def test_round_trip_default(self):
        c = RunConfig()
        assert RunConfig.from_ini(c.to_ini()) == c

    @settings(max_examples=40, deadline=None)
    @given(
        n=st.sampled_from([32, 64, 128]),
        mult=st.floats(3.0, 8.0),
        q=st.floats(0.01, 0.2),
        variant=st.sampled_from(["golovaty", "rubinstein-sternberg", "brassel-bretin", "plain-allen-cahn"]),
        scheme=st.sampled_from(["explicit-euler", "semi-implicit-spectral", "semi-implicit-bdf2"]),
        radii=st.lists(st.floats(0.01, 0.2), max_size=3),
        T=st.floats(0.0, 1.0),
        seed=st.integers(0, 2**31),
    )
    def test_round_trip_identity(self, n, mult, q, variant, scheme, radii, T, seed):
        eps = mult / n
        c = RunConfig(
            n=n,
            eps=eps,
            variant=variant,
            scheme=scheme,
            dt=q * eps * eps,
            shape=ShapeConfig("union", tuple(np.linspace(0.1, 0.9, 2 * len(radii))), 0.1, tuple(np.linspace(0.1, 0.9, 2 * len(radii))), tuple(radii)),
            T=T,
            density_radii=tuple(r / 2 for r in radii),
            seed=seed,
            oracle=bool(seed % 2),
        )
        once = RunConfig.from_ini(c.to_ini())
        assert once == c
        assert RunConfig.from_ini(once.to_ini()) == once

    def test_dt_over_eps2(self):
        text = "[grid]\nn = 64\n[model]\neps = 0.0625\n[stepper]\ndt_over_eps2 = 0.05\n"
        assert RunConfig.from_ini(text).dt == pytest.approx(0.05 * 0.0625**2, rel=1e-15)

    def test_dt_given_twice(self):
        with pytest.raises(ConfigError):
            RunConfig.from_ini("[stepper]\ndt = 1e-5\ndt_over_eps2 = 0.1\n")

    def test_unknown_section(self):
        with pytest.raises(ConfigError):
            RunConfig.from_ini("[gird]\nn = 64\n")

    def test_resolution_guard(self):
        with pytest.raises(ConfigError, match="resolution guard"):
            RunConfig(n=64, eps=2 / 64, dt=1e-6).validate()

    def test_stability(self):
        with pytest.raises(ConfigError, match="stability"):
            RunConfig(n=64, eps=4 / 64, dt=0.2 * (4 / 64) ** 2).validate()

    def test_snapshot_cadence_multiple(self):
        with pytest.raises(ConfigError):
            RunConfig(cadence=3, snapshot_every=4).validate()

    def test_output_root_env(self, monkeypatch, tmp_path):
        monkeypatch.setenv("VPMCF_OUTPUT_ROOT", str(tmp_path))
        assert harness.resolve_output("a/b") == tmp_path / "a" / "b"
        assert harness.resolve_output("/abs") == harness.Path("/abs")
        monkeypatch.delenv("VPMCF_OUTPUT_ROOT")
        assert str(harness.resolve_output("a")) == "a"


class TestRun:
    def test_stationary_disc(self, tmp_path):
        res = run_experiment(disc_config(tmp_path, monotonicity_samples=4))
        out = res.out_dir
        for name in ("config.ini", "timeseries.csv", "density.csv", "monotonicity.csv", "oracle.csv", "summary.json"):
            assert (out / name).exists()
        snaps = sorted((out / "snapshots").glob("*.vpmf"))
        assert len(snaps) == 3  # steps 0, 8 and the final one
        e = read_records_csv(out / "timeseries.csv")["energy"]
        assert np.all(np.diff(e) <= 1e-12)
        summ = json.loads((out / "summary.json").read_text())
        assert summ["oracle_max_rel_error"] < 1e-3
        assert summ["max_abs_phi"] <= 1.0
        assert RunConfig.load(out / "config.ini") == res.config

    def test_bit_identical_csv(self, tmp_path):
        a = run_experiment(disc_config(tmp_path), tmp_path / "a")
        b = run_experiment(disc_config(tmp_path), tmp_path / "b")
        assert (a.out_dir / "timeseries.csv").read_bytes() == (b.out_dir / "timeseries.csv").read_bytes()

    def test_two_disc_gap_monitor(self, tmp_path, caplog):
        cfg = disc_config(
            tmp_path,
            n=128,
            eps=4 / 128,
            dt=0.1 * (4 / 128) ** 2,
            shape=ShapeConfig("union", centers=(0.3, 0.5, 0.56, 0.5), radii=(0.1, 0.14)),
            T=0.0005,
        )
        with caplog.at_level("WARNING"):
            res = run_experiment(cfg)
        assert any("4 eps" in r.message for r in caplog.records)
        rows = list(csv.reader(open(res.out_dir / "oracle.csv")))
        assert rows[0] == ["t", "R0", "R1", "R0_oracle", "R1_oracle", "rel_err", "diverged"]

    def test_check_reproduces(self, tmp_path):
        res = run_experiment(disc_config(tmp_path))
        out, diffs = check_history(res.out_dir)
        assert out.exists()
        assert set(diffs) >= {"energy", "volume", "max_discrepancy"}
        assert max(diffs.values()) == 0.0


class TestCli:
    def test_run_exit_zero(self, tmp_path, capsys):
        p = write_cfg(tmp_path, disc_config(tmp_path))
        assert main(["run", str(p)]) == 0

    def test_resolution_exit_two(self, tmp_path, capsys):
        p = write_cfg(tmp_path, disc_config(tmp_path, eps=2 / 64, dt=1e-6))
        assert main(["run", str(p)]) == 2
        assert "resolution guard" in capsys.readouterr().err

    def test_stability_exit_two(self, tmp_path, capsys):
        p = write_cfg(tmp_path, disc_config(tmp_path, scheme="explicit-euler"))
        assert main(["run", str(p)]) == 2
        assert "stability" in capsys.readouterr().err

    def test_missing_config_exit_two(self, tmp_path, capsys):
        assert main(["run", str(tmp_path / "nope.ini")]) == 2

    def test_numerical_failure_exit_three(self, tmp_path, capsys, monkeypatch):
        def boom(*a, **k):
            raise StepFailure(7, ConservationRootError("no bracket"))

        monkeypatch.setattr(harness, "run", boom)
        p = write_cfg(tmp_path, disc_config(tmp_path))
        assert main(["run", str(p)]) == 3
        assert "step 7" in capsys.readouterr().err

    def test_oracle_command(self, capsys):
        assert main(["oracle", "0.15,0.25", "--T", "0.01", "--samples", "3"]) == 0
        rows = list(csv.reader(capsys.readouterr().out.splitlines()))
        assert rows[0] == ["t", "R0", "R1"]
        r = np.array(rows[-1][1:], dtype=float)
        assert np.sum(r**2) == pytest.approx(0.15**2 + 0.25**2, rel=1e-10)

    def test_oracle_reports_extinction(self, capsys):
        assert main(["oracle", "0.15,0.25", "--T", "0.05"]) == 0
        assert "extinction" in capsys.readouterr().err

    def test_oracle_rejects_nonpositive(self, capsys):
        assert main(["oracle", "0.1,-0.2", "--T", "0.01"]) == 2

    def test_check_command(self, tmp_path, capsys):
        res = run_experiment(disc_config(tmp_path))
        assert main(["check", str(res.out_dir)]) == 0
        assert main(["check", str(tmp_path / "empty")]) == 2


class TestSweep:
    def test_orders(self):
        assert observed_orders([4.0], [1.0]) == ["NA"]
        o = observed_orders([4.0, 2.0, 0.0], [1.0, 0.5, 0.25])
        assert o[0] == "NA" and o[1] == pytest.approx(1.0) and o[2] == "NA"

    def test_scaling(self):
        c = RunConfig(n=128, eps=4 / 128, dt=1e-5)
        e = scaled_config(c, "eps", 0.5)
        assert (e.n, e.eps, e.dt) == (256, 2 / 128, 0.25e-5)
        assert scaled_config(c, "n", 2).n == 256
        with pytest.raises(ConfigError):
            scaled_config(c, "eps", 3)
        with pytest.raises(ConfigError):
            scaled_config(c, "K", 1)

    def test_single_factor_na(self, tmp_path):
        path = sweep(disc_config(tmp_path), "dt", [1.0], tmp_path / "sw")
        rows = list(csv.DictReader(open(path)))
        assert len(rows) == 1 and rows[0]["order_volume_drift"] == "NA"

    def test_dt_sweep_volume_drift_order_one(self, tmp_path):
        # analytic multiplier: the drift is a first-order time discretisation error
        cfg = disc_config(
            tmp_path,
            n=128,
            eps=4 / 128,
            dt=0.1 * (4 / 128) ** 2,
            shape=ShapeConfig("ellipse", (0.5, 0.5), semi_axes=(0.3, 0.18)),
            T=0.004,
            snapshot_every=0,
        )
        path = sweep(cfg, "dt", [1.0, 0.5, 0.25], tmp_path / "sw")
        rows = list(csv.DictReader(open(path)))
        drift = [float(r["volume_drift"]) for r in rows]
        ratios = [drift[0] / drift[1], drift[1] / drift[2]]
        assert all(1.7 <= q <= 2.3 for q in ratios), ratios
        assert all(0.75 < float(r["order_volume_drift"]) < 1.25 for r in rows[1:])

    def test_partial_results_kept(self, tmp_path, monkeypatch):
        real = harness.run_experiment
        calls = []

        def flaky(cfg, out=None):
            calls.append(cfg)
            if len(calls) == 2:
                raise StepFailure(3, ConservationRootError("x"))
            return real(cfg, out)

        monkeypatch.setattr(harness, "run_experiment", flaky)
        with pytest.raises(StepFailure):
            sweep(disc_config(tmp_path), "dt", [1.0, 0.5, 0.25], tmp_path / "sw")
        rows = list(csv.DictReader(open(tmp_path / "sw" / "summary.csv")))
        assert len(rows) == 1
        assert math.isfinite(float(rows[0]["volume_drift"]))

    def test_sweep_cli(self, tmp_path, capsys):
        p = write_cfg(tmp_path, disc_config(tmp_path, T=0.002))
        assert main(["sweep", str(p), "--param", "n", "--factors", "1,2", "-o", str(tmp_path / "s")]) == 0
        rows = list(csv.DictReader(open(tmp_path / "s" / "summary.csv")))
        assert [int(r["n"]) for r in rows] == [64, 128]
