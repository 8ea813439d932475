"""Config parsing, sweeps, CSV emission and the command line."""

import subprocess
import sys

import numpy as np
import pytest

from afrelay import cli
from afrelay.harness import (
    ConfigError,
    ExperimentConfig,
    ber,
    excessive_failures,
    format_csv,
    load_config,
    parse_config_text,
    run_experiment,
)

SMALL = dict(L=4, M=6, N=8, trials=3, iters=3, snr1=[10.0], seed=1)


class TestBer:
    def test_examples(self):
        bits = np.array([0, 1, 1, 0, 1, 0, 0, 1])
        assert ber(bits, bits) == 0
        assert ber(1 - bits, bits) == 1
        flipped = bits.copy()
        flipped[3] ^= 1
        assert ber(flipped, bits) == 0.125

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            ber([0, 1], [0, 1, 1])

    def test_empty(self):
        with pytest.raises(ValueError):
            ber([], [])


class TestConfig:
    def test_parse_repeated_and_comma_keys(self):
        values = parse_config_text("# sweep\nsnr1 = 6\nsnr1 = 8, 10\nL = 16  # source\nalgos = proposed\n")
        assert values == {"snr1": [6.0, 8.0, 10.0], "L": 16, "algos": ["proposed"]}

    def test_unknown_key(self):
        with pytest.raises(ConfigError, match="unknown key"):
            parse_config_text("bogus = 1")

    def test_bad_value(self):
        with pytest.raises(ConfigError, match="line 2"):
            parse_config_text("L = 4\nM = many")

    @pytest.mark.parametrize("bad", [
        dict(L=8, M=4), dict(trials=0), dict(snr1=[]), dict(algos=["mystery"]),
        dict(snr2=[3.0], snr2_offset_db=-3.0), dict(prior="16qam"), dict(workers=0),
    ])
    def test_invalid(self, bad):
        with pytest.raises(ConfigError):
            ExperimentConfig(**bad)

    def test_grid_offset_and_fixed(self):
        assert ExperimentConfig(snr1=[6.0, 8.0]).grid() == [(6.0, 3.0), (8.0, 5.0)]
        cfg = ExperimentConfig(snr1=[6.0], snr2=[9.0, 12.0], snr2_offset_db=None)
        assert cfg.grid() == [(6.0, 9.0), (6.0, 12.0)]

    def test_override_replaces_snr2_rule(self, tmp_path):
        path = tmp_path / "c.cfg"
        path.write_text("snr2_offset_db = -3\nL = 8\nM = 8\nN = 8\n")
        cfg = load_config(str(path), {"snr2": [12.0], "L": None})
        assert cfg.snr2 == [12.0] and cfg.snr2_offset_db is None and cfg.L == 8

    def test_missing_file(self):
        with pytest.raises(ConfigError):
            load_config("/nonexistent/file.cfg")


class TestRunExperiment:
    def test_rows_sorted_and_complete(self):
        cfg = ExperimentConfig(**SMALL, algos=["se_predictor", "ep_ls", "proposed", "single_lmmse", "lmmse_ls"])
        rows = run_experiment(cfg)
        assert [r.algorithm for r in rows] == ["proposed", "lmmse_ls", "single_lmmse", "ep_ls", "se_predictor"]
        for r in rows:
            assert 0 <= r.ber <= 1 and r.mse >= 0
        assert len(rows[0].mse_per_iteration) == 3

    def test_noiseless_grid_point(self):
        cfg = ExperimentConfig(L=8, M=12, N=16, trials=5, iters=8, snr1=[40.0], snr2=[40.0],
                               snr2_offset_db=None, algos=["proposed", "ep_ls", "single_lmmse", "lmmse_ls"])
        assert all(r.ber == 0 for r in run_experiment(cfg))

    def test_stderr_formula(self):
        r = run_experiment(ExperimentConfig(**SMALL, algos=["single_lmmse"]))[0]
        bits = SMALL["trials"] * 2 * SMALL["L"]
        assert r.ber_stderr == pytest.approx(np.sqrt(r.ber * (1 - r.ber) / bits))

    def test_serial_and_parallel_identical(self):
        a = ExperimentConfig(**SMALL, algos=["proposed", "ep_ls"], workers=1)
        b = ExperimentConfig(**SMALL, algos=["proposed", "ep_ls"], workers=2)
        assert format_csv(run_experiment(a), a) == format_csv(run_experiment(b), b)

    def test_adding_algorithms_keeps_instances(self):
        a = run_experiment(ExperimentConfig(**SMALL, algos=["proposed"]))[0]
        b = run_experiment(ExperimentConfig(**SMALL, algos=["proposed", "single_lmmse"]))[0]
        assert a == b

    def test_failures_counted(self, monkeypatch):
        from afrelay import detector
        from afrelay.detector import DetectorFailure

        def broken(*args, **kwargs):
            raise DetectorFailure("forced")

        monkeypatch.setattr(detector, "run", broken)
        rows = run_experiment(ExperimentConfig(**SMALL, algos=["proposed", "single_lmmse"]))
        assert rows[0].failures == SMALL["trials"] and np.isnan(rows[0].ber)
        assert excessive_failures(rows) == [rows[0]]


class TestCsv:
    def test_header(self):
        cfg = ExperimentConfig(**SMALL, algos=["proposed"])
        text = format_csv(run_experiment(cfg), cfg)
        header = [line for line in text.splitlines() if not line.startswith("#")][0]
        assert header == ("algorithm,snr1_db,snr2_db,trials,failures,ber,ber_stderr,mse,iters,"
                          "mse_iter_1,mse_iter_2,mse_iter_3,safeguards,wall_time_ms,seed")
        assert "# convention:" in text and "# L = 4" in text


class TestCli:
    def test_run_twice_byte_identical(self, tmp_path):
        cfg = tmp_path / "s.cfg"
        cfg.write_text("L = 4\nM = 6\nN = 8\ntrials = 1\niters = 3\nsnr1 = 8\nseed = 5\n")
        outs = []
        for i, workers in enumerate(("1", "1", "2")):
            out = tmp_path / f"o{i}.csv"
            assert cli.main(["run", "--config", str(cfg), "--out", str(out), "--workers", workers]) == 0
            outs.append(out.read_bytes())
        assert outs[0] == outs[1] == outs[2]

    def test_bad_config_exit_code(self, capsys):
        assert cli.main(["run", "--L", "9", "--M", "4"]) == 1
        assert "bad config" in capsys.readouterr().err

    def test_excessive_failures_exit_code(self, monkeypatch, capsys):
        from afrelay import detector
        from afrelay.detector import DetectorFailure

        def broken(*args, **kwargs):
            raise DetectorFailure("forced")

        monkeypatch.setattr(detector, "run", broken)
        code = cli.main(["run", "--L", "4", "--M", "6", "--N", "8", "--trials", "2",
                         "--iters", "2", "--snr1", "10", "--algos", "proposed"])
        assert code == 2

    def test_se_subcommand(self, capsys):
        assert cli.main(["se", "--L", "8", "--M", "16", "--N", "32", "--snr1", "5,10", "--iters", "4"]) == 0
        rows = [l for l in capsys.readouterr().out.splitlines() if l.startswith("se_predictor")]
        assert len(rows) == 2

    def test_selftest(self, capsys):
        assert cli.main(["selftest"]) == 0
        assert "FAIL" not in capsys.readouterr().out

    def test_console_script_and_log_env(self, tmp_path):
        env = {"DETECT_LOG": "INFO", "PATH": "/usr/bin:/bin"}
        proc = subprocess.run(
            [sys.executable, "-m", "afrelay.cli", "run", "--L", "4", "--M", "6", "--N", "8",
             "--trials", "1", "--iters", "2", "--snr1", "10", "--algos", "single_lmmse"],
            capture_output=True, text=True, env=env,
        )
        assert proc.returncode == 0
        assert "INFO" in proc.stderr and proc.stdout.startswith("# L = 4")
