"""Command-line interface: config parsing, subcommands, exit codes."""

import json

import numpy as np
import pandas as pd
import pytest

from orbweb.cli import ConfigError, config_hash, load_config, main

SMALL_WEB = """\
[web]
c_rho = 10.0
c_theta = 20.0
m_rho = 0.1
m_theta = 0.05
t_hat = 0.1
t_script = 0.05
radius = 1.0
hub_mass = 1.0
"""

SMALL_REST = """\
[grid]
resolution = 512
n_theta = 2
n_rad = 3

[forward]
profile = decaying_exponential
rate = 1.0
tau0 = 3.0
dt = 0.002
impact_rho = 0.35
impact_theta = 0.785398
impact_width = 0.12
ring_radii = 0.12, 0.18
n_angles = 16
noise_sigma = 0.0
seed = 0
"""


def write_config(tmp_path, body, name="run.ini"):
    path = tmp_path / name
    path.write_text(body)
    return path


@pytest.fixture
def small_config(tmp_path):
    return write_config(tmp_path, SMALL_WEB + SMALL_REST)


class TestConfigLoading:
    def test_valid_config(self, small_config):
        cfg = load_config(small_config)
        assert cfg.resolution == 512
        assert cfg.forward.ring_radii == [0.12, 0.18]
        assert cfg.forward.tau0 == 3.0

    def test_unknown_key_rejected(self, tmp_path):
        path = write_config(tmp_path, SMALL_WEB + "[grid]\nbogus = 1\n")
        with pytest.raises(ConfigError):
            load_config(path)

    def test_unknown_section_rejected(self, tmp_path):
        path = write_config(tmp_path, SMALL_WEB + "[plotting]\nstyle = x\n")
        with pytest.raises(ConfigError):
            load_config(path)

    def test_invalid_web_parameter(self, tmp_path):
        path = write_config(tmp_path, SMALL_WEB.replace("t_hat = 0.1",
                                                        "t_hat = 0"))
        with pytest.raises(ConfigError):
            load_config(path)

    def test_hash_stable_and_sensitive(self, small_config, tmp_path):
        h1 = config_hash(load_config(small_config))
        h2 = config_hash(load_config(small_config))
        assert h1 == h2
        other = write_config(tmp_path, SMALL_WEB + SMALL_REST.replace(
            "seed = 0", "seed = 1"), name="other.ini")
        assert config_hash(load_config(other)) != h1


class TestEigsCommand:
    def test_minimal_truncation(self, tmp_path):
        cfg = write_config(tmp_path, SMALL_WEB
                           + "[grid]\nresolution = 256\nn_theta = 0\nn_rad = 3\n")
        out = tmp_path / "out"
        assert main(["eigs", "--config", str(cfg), "--out", str(out)]) == 0
        df = pd.read_csv(out / "eigenvalues.csv")
        assert len(df) == 3
        assert (df["lambda"] > 0).all()
        report = json.loads((out / "spectrum.json").read_text())
        assert report["j_const"] > 0
        assert "config_hash" in report

    def test_constant_coefficient_oracle(self, tmp_path):
        body = """\
[web]
c_rho = 1.0
c_theta = 1.0
m_rho = 1.0
m_theta = 0.0
t_hat = 1.0
t_script = 1e-300
radius = 1.0
hub_mass = 0.0

[grid]
resolution = 2048
n_theta = 0
n_rad = 8
"""
        cfg = write_config(tmp_path, body)
        out = tmp_path / "out"
        assert main(["eigs", "--config", str(cfg), "--out", str(out)]) == 0
        lam = pd.read_csv(out / "eigenvalues.csv")["lambda"].to_numpy()
        k = np.arange(1, 9)
        oracle = ((2 * k - 1) * np.pi / 2) ** 2
        np.testing.assert_allclose(lam, oracle, rtol=1e-6)

    def test_malformed_config_exit_2_no_output(self, tmp_path, capsys):
        cfg = write_config(tmp_path, "[web]\nnot even = close\n")
        out = tmp_path / "out"
        assert main(["eigs", "--config", str(cfg), "--out", str(out)]) == 2
        assert not out.exists()
        assert "error" in capsys.readouterr().err


class TestForwardCommand:
    def test_outputs_and_boundary(self, small_config, tmp_path):
        out = tmp_path / "fwd"
        assert main(["forward", "--config", str(small_config),
                     "--out", str(out)]) == 0
        meas = pd.read_csv(out / "measurement.csv")
        assert list(meas.columns) == ["radius", "theta", "time", "u"]
        snap = pd.read_csv(out / "snapshot_t1.00tau.csv")
        boundary = snap[snap["rho"] == snap["rho"].max()]["u"]
        assert np.max(np.abs(boundary)) < 1e-12

    def test_zero_amplitude_impact(self, tmp_path):
        body = (SMALL_WEB + SMALL_REST).replace("impact_width = 0.12",
                                                "impact_width = 0.12\n"
                                                "impact_amplitude = 0.0")
        cfg = write_config(tmp_path, body)
        out = tmp_path / "fwd"
        assert main(["forward", "--config", str(cfg), "--out", str(out)]) == 0
        u = pd.read_csv(out / "measurement.csv")["u"]
        assert np.max(np.abs(u)) == 0.0

    def test_determinism_byte_identical(self, tmp_path):
        body = (SMALL_WEB + SMALL_REST).replace("noise_sigma = 0.0",
                                                "noise_sigma = 1e-4")
        cfg = write_config(tmp_path, body)
        out1, out2 = tmp_path / "a", tmp_path / "b"
        main(["forward", "--config", str(cfg), "--out", str(out1), "--seed", "3"])
        main(["forward", "--config", str(cfg), "--out", str(out2), "--seed", "3"])
        assert ((out1 / "measurement.csv").read_bytes()
                == (out2 / "measurement.csv").read_bytes())


class TestInvertCommand:
    def test_round_trip_files(self, small_config, tmp_path):
        fwd_out = tmp_path / "fwd"
        main(["forward", "--config", str(small_config), "--out", str(fwd_out)])
        inv_out = tmp_path / "inv"
        code = main(["invert", "--config", str(small_config),
                     "--measurement", str(fwd_out / "measurement.csv"),
                     "--out", str(inv_out)])
        assert code == 0
        report = json.loads((inv_out / "reconstruction.json").read_text())
        assert report["localization"] is not None
        assert report["skipped_modes"] == []
        rec = pd.read_csv(inv_out / "reconstruction.csv")
        assert list(rec.columns) == ["rho", "theta", "f_hat"]

    def test_zero_start_profile_refused(self, small_config, tmp_path, capsys):
        fwd_out = tmp_path / "fwd"
        main(["forward", "--config", str(small_config), "--out", str(fwd_out)])
        body = (SMALL_WEB + SMALL_REST).replace(
            "profile = decaying_exponential\nrate = 1.0",
            "profile = constant\namplitude = 0.0")
        cfg = write_config(tmp_path, body, name="zero_g.ini")
        code = main(["invert", "--config", str(cfg),
                     "--measurement", str(fwd_out / "measurement.csv"),
                     "--out", str(tmp_path / "x")])
        assert code == 2
        assert "g(0)" in capsys.readouterr().err

    def test_missing_measurement_exit_2(self, small_config, tmp_path):
        code = main(["invert", "--config", str(small_config),
                     "--measurement", str(tmp_path / "nope.csv"),
                     "--out", str(tmp_path / "x")])
        assert code == 2


class TestRoundtripCommand:
    def test_report_contents(self, small_config, tmp_path):
        out = tmp_path / "rt"
        assert main(["roundtrip", "--config", str(small_config),
                     "--out", str(out)]) == 0
        report = json.loads((out / "roundtrip.json").read_text())
        assert report["coefficient_rel_error"] <= 1e-3
        assert "spectrum_gaps" in report and report["spectrum_gaps"]
        assert report["timing_seconds"] > 0

    def test_noise_sweep_monotone(self, small_config, tmp_path):
        out = tmp_path / "rt"
        assert main(["roundtrip", "--config", str(small_config),
                     "--out", str(out),
                     "--noise-sweep", "1e-8,1e-6,1e-4"]) == 0
        report = json.loads((out / "roundtrip.json").read_text())
        errs = [row["coefficient_rel_error"] for row in report["noise_sweep"]]
        assert errs == sorted(errs)
