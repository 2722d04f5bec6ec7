import os

import numpy as np
import pytest

from ssdsgd.errors import InternalError
from ssdsgd.pipesim import delay_regime_profile
from ssdsgd.xcli import cli, main

CONFIGS = os.path.join(os.path.dirname(__file__), os.pardir, os.pardir, "configs")
SMALL = ["--iterations", "40", "--eval-interval", "20", "--workers", "2", "--servers", "2"]


@pytest.fixture
def profile_path(tmp_path):
    path = str(tmp_path / "profile.json")
    delay_regime_profile(np.random.default_rng(3), layers=3, send_bound=False).save(path)
    return path


def test_main_single_run(tmp_path, capsys):
    assert main(["--config", os.path.join(CONFIGS, "delay5.ini"), *SMALL, "--warmup", "4", "--out", str(tmp_path), "--name", "cli"]) == 0
    assert os.path.isfile(tmp_path / "cli.csv")
    assert "ssd-sgd" in capsys.readouterr().out


def test_main_deterministic_output(tmp_path):
    args = [*SMALL, "--k", "2", "--warmup", "5", "--name", "twice"]
    assert main([*args, "--out", str(tmp_path / "a")]) == 0
    assert main([*args, "--out", str(tmp_path / "b")]) == 0
    assert (tmp_path / "a" / "twice.csv").read_bytes() == (tmp_path / "b" / "twice.csv").read_bytes()


def test_main_sweep_k(tmp_path, capsys):
    assert main([*SMALL, "--warmup", "11", "--sweep-k", "1..3", "--out", str(tmp_path), "--name", "sweep"]) == 0
    assert os.path.isfile(tmp_path / "sweep-sweep-k.csv")
    assert "k" in capsys.readouterr().out


def test_main_timing_study(tmp_path, profile_path, capsys):
    assert main(["--profile", profile_path, "--timing-study", "1..4", "--out", str(tmp_path), "--name", "study"]) == 0
    assert (tmp_path / "study-timing.csv").read_text().splitlines()[0] == "k,case,analytic,simulated,ssgd,speedup"
    assert "case1" in capsys.readouterr().out


def test_main_cpu_profile(tmp_path):
    report = tmp_path / "cpu.txt"
    assert main([*SMALL, "--out", str(tmp_path), "--cpu-profile", str(report)]) == 0
    assert report.read_text()


class TestExitCodes:
    def test_incompatible_warmup(self, tmp_path):
        assert main([*SMALL, "--k", "5", "--warmup", "500", "--out", str(tmp_path)]) == 2

    def test_missing_config_file(self, tmp_path):
        assert main(["--config", str(tmp_path / "absent.ini")]) == 2

    def test_unknown_key(self, tmp_path):
        path = tmp_path / "bad.ini"
        path.write_text("[optim]\nlearning_rate = 0.1\n")
        assert main(["--config", str(path)]) == 2

    def test_bad_range(self, tmp_path):
        assert main([*SMALL, "--sweep-k", "5..1", "--out", str(tmp_path)]) == 2

    def test_timing_study_without_profile(self):
        assert main(["--timing-study", "1..3"]) == 2

    def test_malformed_profile(self, tmp_path):
        path = tmp_path / "profile.json"
        path.write_text("{\"forward\": 1.0}")
        assert main(["--profile", str(path), "--timing-study", "1..3"]) == 2

    def test_out_is_file(self, tmp_path):
        blocker = tmp_path / "taken"
        blocker.write_text("")
        assert main([*SMALL, "--out", str(blocker)]) == 2

    def test_timing_study_out_is_file(self, tmp_path, profile_path):
        blocker = tmp_path / "taken"
        blocker.write_text("")
        assert main(["--profile", profile_path, "--timing-study", "1..2", "--out", str(blocker)]) == 2

    def test_runtime_failure(self, tmp_path, monkeypatch):
        def fail(config):
            raise InternalError("worker replica diverged")

        monkeypatch.setattr(cli, "run_experiment", fail)
        assert main([*SMALL, "--out", str(tmp_path)]) == 3

    def test_invalid_flag_value(self):
        with pytest.raises(SystemExit) as info:
            main(["--strategy", "sync"])
        assert info.value.code == 2
