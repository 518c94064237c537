"""Config parsing and command-line behavior.

CLI runs go through ``main(argv)`` in process; artifact files are parsed
back with the io readers to check row counts and reproducibility.
"""

import json
import os
from pathlib import Path

import numpy as np
import pytest
from numpy.testing import assert_allclose

from neurosmc.cli import OUT_ENV_VAR, main
from neurosmc.config import ConfigError, parse_config
from neurosmc.io import read_chain_csv, read_filter_csv, read_pcrb_csv, read_trace_csv

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"


def write_config(tmp_path, body, name="run.ini"):
    path = tmp_path / name
    path.write_text(body)
    return str(path)


def small_config(tmp_path, extra="", sigma_i_app=1.1, name="run.ini"):
    out_dir = tmp_path / "out"
    body = f"""
[noise]
sigma_i_app = {sigma_i_app}
sigma_g_l = 0.02
sigma_n = 0.001
sigma_y = 1.0

[filter]
n_particles = 30

[bench]
n_steps = 40
n_trials = 2
particle_counts = 30
pcrb_trajectories = 5

[output]
dir = {out_dir}
seed = 0
{extra}
"""
    return write_config(tmp_path, body, name=name), out_dir


class TestShippedConfigs:
    def test_weak_noise_values(self):
        cfg = parse_config(CONFIG_DIR / "weak_noise.ini")
        p, nc = cfg.params, cfg.noise
        assert (p.c_m, p.g_l, p.e_l) == (20.0, 2.0, -60.0)
        assert (p.g_ca, p.e_ca, p.g_k, p.e_k) == (4.4, 120.0, 8.0, -84.0)
        assert (p.phi, p.v1, p.v2, p.v3, p.v4) == (0.04, -1.2, 18.0, 2.0, 30.0)
        assert (nc.t_s, nc.i_o) == (0.25, 110.0)
        assert (nc.sigma_i_app, nc.sigma_g_l) == (1.1, 0.02)
        assert (nc.sigma_n, nc.sigma_y) == (0.001, 1.0)
        assert cfg.particle_counts == (50, 100, 500, 1000)
        assert cfg.n_steps == 2000 and cfg.n_trials == 200
        assert cfg.pcrb_sensitivity == "reduced"
        assert cfg.scenario == "weak-noise"

    def test_strong_noise_values(self):
        cfg = parse_config(CONFIG_DIR / "strong_noise.ini")
        assert (cfg.noise.sigma_i_app, cfg.noise.sigma_g_l) == (11.0, 0.2)

    def test_synaptic_units_converted(self):
        cfg = parse_config(CONFIG_DIR / "synaptic.ini")
        s = cfg.syn
        assert s is not None
        assert (s.tau_e, s.tau_i) == (2.73, 10.49)
        # 12.1 nS over the reference membrane area, in mS/cm^2
        assert_allclose(s.g_e0, 0.034934749971128304, rtol=1e-15)
        assert_allclose(s.sigma_e, 0.034646033029218155, rtol=1e-15)
        assert_allclose(s.g_i0, 0.16543480771451669, rtol=1e-15)
        assert_allclose(s.sigma_i, 0.07622127266427994, rtol=1e-15)
        assert cfg.compute_pcrb is None

    def test_leak_recovery_chain_settings(self):
        cfg = parse_config(CONFIG_DIR / "leak_recovery.ini")
        assert cfg.algorithm == "pmcmc"
        assert cfg.space.names == ("g_l", "e_l")
        assert_allclose(cfg.space.lower, [0.5, -90.0])
        assert_allclose(cfg.space.upper, [6.0, -30.0])
        assert cfg.mcmc.n_iters == 200
        assert_allclose(cfg.mcmc.theta0, [3.0, -55.0])
        assert_allclose(cfg.mcmc.sigma0, np.diag([0.25, 4.0]))
        assert cfg.mcmc.gamma == 0.9
        assert cfg.n_steps == 1000


class TestParseConfigValidation:
    def test_empty_config_gives_defaults(self, tmp_path):
        cfg = parse_config(write_config(tmp_path, ""))
        assert cfg.params.g_ca == 4.4
        assert cfg.noise.sigma_i_app == 0.0
        assert cfg.n_particles == 500
        assert cfg.out_dir == "."
        assert cfg.seed == 0

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="cannot read"):
            parse_config(tmp_path / "nope.ini")

    def test_unknown_section(self, tmp_path):
        with pytest.raises(ConfigError, match=r"unknown section \[turbo\]"):
            parse_config(write_config(tmp_path, "[turbo]\nx = 1\n"))

    def test_unknown_key(self, tmp_path):
        with pytest.raises(ConfigError, match=r"unknown key 'g_na'"):
            parse_config(write_config(tmp_path, "[model]\ng_na = 120\n"))

    def test_non_numeric_value_names_section_and_key(self, tmp_path):
        with pytest.raises(ConfigError, match=r"\[noise\] sigma_y: not a number"):
            parse_config(write_config(tmp_path, "[noise]\nsigma_y = loud\n"))

    def test_invariant_violation_names_section_and_field(self, tmp_path):
        with pytest.raises(ConfigError, match=r"\[model\].*g_l"):
            parse_config(write_config(tmp_path, "[model]\ng_l = -1.0\n"))

    def test_bad_resample_policy(self, tmp_path):
        with pytest.raises(ConfigError, match="resample_policy"):
            parse_config(write_config(tmp_path, "[filter]\nresample_policy = never\n"))

    def test_bad_sensitivity(self, tmp_path):
        with pytest.raises(ConfigError, match="pcrb_sensitivity"):
            parse_config(write_config(tmp_path, "[bench]\npcrb_sensitivity = exact\n"))

    def test_bad_algorithm(self, tmp_path):
        with pytest.raises(ConfigError, match="algorithm"):
            parse_config(write_config(tmp_path, "[bench]\nalgorithm = abc\n"))

    def test_too_few_particles(self, tmp_path):
        with pytest.raises(ConfigError, match="n_particles"):
            parse_config(write_config(tmp_path, "[filter]\nn_particles = 1\n"))

    def test_nonpositive_sigma_v(self, tmp_path):
        with pytest.raises(ConfigError, match="sigma_v"):
            parse_config(write_config(tmp_path, "[filter]\nsigma_v = 0\n"))

    def test_mcmc_requires_names(self, tmp_path):
        with pytest.raises(ConfigError, match="names"):
            parse_config(write_config(tmp_path, "[mcmc]\nn_iters = 5\n"))

    def test_mcmc_requires_box(self, tmp_path):
        body = "[mcmc]\nnames = g_l\ntheta0 = 2.0\nsigma0 = 0.5\nlower = 0.5\n"
        with pytest.raises(ConfigError, match="upper"):
            parse_config(write_config(tmp_path, body))

    def test_mcmc_length_mismatch(self, tmp_path):
        body = ("[mcmc]\nnames = g_l,e_l\ntheta0 = 2.0\nsigma0 = 0.5\n"
                "lower = 0.5,-90\nupper = 6,-30\n")
        with pytest.raises(ConfigError, match="one value per name"):
            parse_config(write_config(tmp_path, body))

    def test_mcmc_scalar_sigma0_broadcasts(self, tmp_path):
        body = ("[mcmc]\nnames = g_l,e_l\ntheta0 = 2.0,-60\nsigma0 = 0.5\n"
                "lower = 0.5,-90\nupper = 6,-30\n")
        cfg = parse_config(write_config(tmp_path, body))
        assert_allclose(cfg.mcmc.sigma0, 0.5 * np.eye(2))

    def test_synaptic_missing_key(self, tmp_path):
        body = "[synaptic]\ntau_e = 2.73\n"
        with pytest.raises(ConfigError, match="missing required key"):
            parse_config(write_config(tmp_path, body))

    def test_synaptic_bad_units(self, tmp_path):
        body = ("[synaptic]\nunits = siemens\ntau_e = 2.73\ng_e0 = 12.1\n"
                "sigma_e = 12\ntau_i = 10.49\ng_i0 = 57.3\nsigma_i = 26.4\n")
        with pytest.raises(ConfigError, match="units"):
            parse_config(write_config(tmp_path, body))

    def test_synaptic_area_needs_ns_units(self, tmp_path):
        body = ("[synaptic]\narea_um2 = 30000\ntau_e = 2.73\ng_e0 = 0.03\n"
                "sigma_e = 0.03\ntau_i = 10.49\ng_i0 = 0.16\nsigma_i = 0.07\n")
        with pytest.raises(ConfigError, match="area_um2"):
            parse_config(write_config(tmp_path, body))

    def test_bad_boolean(self, tmp_path):
        with pytest.raises(ConfigError, match="boolean"):
            parse_config(write_config(tmp_path, "[bench]\ncompute_pcrb = maybe\n"))

    def test_compute_pcrb_with_synaptic_model(self, tmp_path):
        body = ("[synaptic]\ntau_e = 2.73\ng_e0 = 0.03\nsigma_e = 0.03\n"
                "tau_i = 10.49\ng_i0 = 0.16\nsigma_i = 0.07\n"
                "[bench]\ncompute_pcrb = true\n")
        with pytest.raises(ConfigError, match="two-state"):
            parse_config(write_config(tmp_path, body))


class TestCliRuns:
    def test_simulate_writes_trace_and_manifest(self, tmp_path, capsys):
        cfg_path, out_dir = small_config(tmp_path)
        assert main(["simulate", "--config", cfg_path]) == 0
        trace = read_trace_csv(out_dir / "trace.csv")
        assert trace.n_steps == 40
        assert trace.observations is not None
        manifest = json.loads((out_dir / "manifest.json").read_text())
        assert manifest["subcommand"] == "simulate"
        assert manifest["seed"] == 0
        assert manifest["artifacts"] == ["trace.csv"]
        assert "[noise]" in manifest["config_text"]
        assert "numpy" in manifest["versions"]
        printed = capsys.readouterr().out.strip().splitlines()
        assert printed[-1].endswith("manifest.json")

    def test_simulate_is_deterministic(self, tmp_path):
        cfg_path, out_dir = small_config(tmp_path)
        assert main(["simulate", "--config", cfg_path]) == 0
        first = (out_dir / "trace.csv").read_bytes()
        assert main(["simulate", "--config", cfg_path]) == 0
        assert (out_dir / "trace.csv").read_bytes() == first

    def test_seed_flag_changes_data_and_manifest(self, tmp_path):
        cfg_path, out_dir = small_config(tmp_path)
        assert main(["simulate", "--config", cfg_path]) == 0
        base = (out_dir / "trace.csv").read_bytes()
        assert main(["simulate", "--config", cfg_path, "--seed", "5"]) == 0
        assert (out_dir / "trace.csv").read_bytes() != base
        manifest = json.loads((out_dir / "manifest.json").read_text())
        assert manifest["seed"] == 5

    def test_filter_artifacts(self, tmp_path):
        cfg_path, out_dir = small_config(tmp_path)
        assert main(["filter", "--config", cfg_path]) == 0
        out = read_filter_csv(out_dir / "filter.csv")
        assert out.estimates.shape == (40, 2)
        assert out.n_particles == 30
        trace = read_trace_csv(out_dir / "trace.csv")
        assert trace.n_steps == 40

    def test_pcrb_artifacts(self, tmp_path):
        cfg_path, out_dir = small_config(tmp_path)
        assert main(["pcrb", "--config", cfg_path]) == 0
        series = read_pcrb_csv(out_dir / "pcrb.csv")
        assert series.n_steps == 40
        assert (series.bounds > 0).all()

    def test_pmcmc_artifacts(self, tmp_path):
        extra = ("[mcmc]\nnames = g_ca\ntheta0 = 5.0\nsigma0 = 0.4\n"
                 "lower = 1.0\nupper = 15.0\nn_iters = 4\n")
        cfg_path, out_dir = small_config(tmp_path, extra=extra)
        assert main(["pmcmc", "--config", cfg_path]) == 0
        chain = read_chain_csv(out_dir / "chain.csv")
        assert chain.samples.shape == (4, 1)
        assert chain.names == ("g_ca",)
        assert (out_dir / "filter.csv").exists()

    def test_pmcmc_without_mcmc_section_fails_cleanly(self, tmp_path, capsys):
        cfg_path, _ = small_config(tmp_path)
        assert main(["pmcmc", "--config", cfg_path]) == 1
        assert "mcmc" in capsys.readouterr().err

    def test_bench_artifacts(self, tmp_path):
        cfg_path, out_dir = small_config(tmp_path)
        assert main(["bench", "--config", cfg_path]) == 0
        assert (out_dir / "rmse_n30.csv").exists()
        assert (out_dir / "pcrb.csv").exists()
        summary = (out_dir / "summary.txt").read_text()
        assert "rmse_v" in summary and "eta_v" in summary
        manifest = json.loads((out_dir / "manifest.json").read_text())
        assert "summary.txt" in manifest["artifacts"]

    def test_bench_worker_count_is_invisible_in_artifacts(self, tmp_path):
        cfg_path, out_dir = small_config(tmp_path)
        assert main(["bench", "--config", cfg_path, "--workers", "1"]) == 0
        serial = (out_dir / "rmse_n30.csv").read_bytes()
        assert main(["bench", "--config", cfg_path, "--workers", "2"]) == 0
        assert (out_dir / "rmse_n30.csv").read_bytes() == serial

    def test_out_flag_overrides_config_and_env(self, tmp_path, monkeypatch):
        cfg_path, out_dir = small_config(tmp_path)
        env_dir = tmp_path / "env_out"
        flag_dir = tmp_path / "flag_out"
        monkeypatch.setenv(OUT_ENV_VAR, str(env_dir))
        assert main(["simulate", "--config", cfg_path, "--out", str(flag_dir)]) == 0
        assert (flag_dir / "trace.csv").exists()
        assert not env_dir.exists()
        assert not (out_dir / "trace.csv").exists()

    def test_env_var_used_without_flag(self, tmp_path, monkeypatch):
        cfg_path, out_dir = small_config(tmp_path)
        env_dir = tmp_path / "env_out"
        monkeypatch.setenv(OUT_ENV_VAR, str(env_dir))
        assert main(["simulate", "--config", cfg_path]) == 0
        assert (env_dir / "trace.csv").exists()
        assert not (out_dir / "trace.csv").exists()

    def test_missing_config_exits_one(self, tmp_path, capsys):
        assert main(["simulate", "--config", str(tmp_path / "nope.ini")]) == 1
        assert "error:" in capsys.readouterr().err

    def test_invalid_config_exits_one(self, tmp_path, capsys):
        cfg_path = write_config(tmp_path, "[model]\ng_l = -1\n")
        assert main(["simulate", "--config", cfg_path]) == 1
        assert "g_l" in capsys.readouterr().err

    def test_numerical_failure_exits_two(self, tmp_path, capsys):
        cfg_path, _ = small_config(tmp_path, sigma_i_app=1e9)
        assert main(["simulate", "--config", cfg_path]) == 2
        assert "numerical failure" in capsys.readouterr().err

    def test_unknown_subcommand_exits_one(self, capsys):
        assert main(["transmogrify", "--config", "x.ini"]) == 1

    def test_missing_config_flag_exits_one(self, capsys):
        assert main(["simulate"]) == 1

    def test_bad_worker_count_exits_one(self, tmp_path, capsys):
        cfg_path, _ = small_config(tmp_path)
        assert main(["simulate", "--config", cfg_path, "--workers", "0"]) == 1
        assert "workers" in capsys.readouterr().err

    def test_version_flag(self, capsys):
        assert main(["--version"]) == 0
        assert "neurosmc" in capsys.readouterr().out
