import csv
from pathlib import Path

import pytest

from logconvex.cli import main
from logconvex.config import ConfigError, parse_config
from logconvex.experiments import worker_count

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

SMALL_HEAT = "[grid]\nn = 32\n[time]\ndt = 1e-3\nT = 0.2\n[diagnostics]\ninitial = 1:1.0\n"


def write(tmp_path, text, name="c.ini"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


class TestConfig:
    def test_unknown_key_reports_line(self):
        with pytest.raises(ConfigError) as exc:
            parse_config("[grid]\nn = 32\n\n[time]\ndt = 1e-3\nT = 1\nbogus = 3\n", "heat-logconvexity")
        assert exc.value.line == 7 and "time.bogus" in str(exc.value)

    def test_unknown_section(self):
        with pytest.raises(ConfigError, match="unknown section"):
            parse_config(SMALL_HEAT + "[extra]\nx = 1\n", "heat-logconvexity")

    def test_bad_value(self):
        with pytest.raises(ConfigError) as exc:
            parse_config("[grid]\nn = -4\n[time]\ndt = 1e-3\nT = 1\n", "heat-logconvexity")
        assert exc.value.line == 2

    def test_duplicate_key(self):
        with pytest.raises(ConfigError, match="duplicate"):
            parse_config("[grid]\nn = 32\nn = 64\n", "heat-logconvexity")

    def test_missing_required(self):
        with pytest.raises(ConfigError, match="grid.n"):
            parse_config("", "heat-logconvexity")

    def test_sweep_needs_both(self):
        with pytest.raises(ConfigError, match="both"):
            parse_config(SMALL_HEAT + "[sweep]\nparameter = time.dt\n", "heat-logconvexity")

    def test_round_trip(self):
        for path in sorted(CONFIGS.glob("*.ini")):
            experiment = {"heat": "heat-logconvexity", "heat_dt_sweep": "heat-logconvexity", "backward": "parabolic-backward", "control": "controllability", "nse": "tamed-nse"}[path.stem]
            cfg = parse_config(path.read_text(), experiment)
            text = cfg.serialize()
            again = parse_config(text, experiment)
            assert again == cfg and again.serialize() == text

    def test_with_value_validates(self):
        cfg = parse_config(SMALL_HEAT, "heat-logconvexity")
        assert cfg.with_value("noise.seed", 5).seed == 5
        with pytest.raises(ConfigError):
            cfg.with_value("grid.n", -1)
        with pytest.raises(ConfigError):
            cfg.with_value("grid.nope", 1)


class TestThreads:
    def test_default(self, monkeypatch):
        monkeypatch.delenv("LOGCONVEX_THREADS", raising=False)
        assert worker_count() == 1

    @pytest.mark.parametrize("raw", ["0", "-2", "many"])
    def test_invalid(self, monkeypatch, raw):
        monkeypatch.setenv("LOGCONVEX_THREADS", raw)
        with pytest.raises(ConfigError):
            worker_count()


class TestCLI:
    def test_heat_passes(self, tmp_path, capsys):
        out = tmp_path / "out"
        assert main(["--experiment", "heat-logconvexity", "--config", write(tmp_path, SMALL_HEAT), "--out", str(out)]) == 0
        text = capsys.readouterr().out
        assert "PASS eigenmode-quotient-constancy" in text and "overall: PASS" in text
        for name in ("config.resolved", "report.csv", "summary.txt", "traces/trajectory.csv"):
            assert (out / name).is_file()

    def test_deterministic_artifacts(self, tmp_path):
        cfg = write(tmp_path, "[problem]\nname = cubic\n[grid]\nn = 32\n[time]\ndt = 1e-3\nT = 0.2\n[noise]\nsigma = 0.1\n[diagnostics]\npaths = 3\n")
        a, b = tmp_path / "a", tmp_path / "b"
        assert main(["--experiment", "parabolic-backward", "--config", cfg, "--out", str(a), "--seed", "3"]) == 0
        assert main(["--experiment", "parabolic-backward", "--config", cfg, "--out", str(b), "--seed", "3"]) == 0
        files = sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file())
        assert files
        for rel in files:
            assert (a / rel).read_bytes() == (b / rel).read_bytes()

    def test_empty_config_exit_2(self, tmp_path, capsys):
        assert main(["--experiment", "heat-logconvexity", "--config", write(tmp_path, ""), "--out", str(tmp_path / "o")]) == 2
        assert "grid.n" in capsys.readouterr().err

    def test_missing_file_exit_2(self, tmp_path):
        assert main(["--experiment", "heat-logconvexity", "--config", str(tmp_path / "none.ini"), "--out", str(tmp_path / "o")]) == 2

    def test_negative_seed_exit_2(self, tmp_path):
        assert main(["--experiment", "heat-logconvexity", "--config", write(tmp_path, SMALL_HEAT), "--seed", "-1", "--out", str(tmp_path / "o")]) == 2

    def test_unknown_sweep_parameter_exit_2(self, tmp_path, capsys):
        cfg = write(tmp_path, SMALL_HEAT + "[sweep]\nparameter = grid.bogus\nvalues = 1, 2\n")
        assert main(["--experiment", "heat-logconvexity", "--config", cfg, "--out", str(tmp_path / "o")]) == 2
        assert "c.ini:9:" in capsys.readouterr().err

    def test_unbounded_psi_r_rejected_for_control(self, tmp_path):
        cfg = write(tmp_path, "[problem]\nname = cubic\n[grid]\nn = 32\n[time]\ndt = 1e-3\nT = 1\n")
        assert main(["--experiment", "controllability", "--config", cfg, "--out", str(tmp_path / "o")]) == 2

    def test_unknown_experiment_rejected(self, tmp_path):
        with pytest.raises(SystemExit) as exc:
            main(["--experiment", "nope", "--config", write(tmp_path, SMALL_HEAT)])
        assert exc.value.code == 2

    def test_zero_sigma_sweep(self, tmp_path):
        cfg = write(tmp_path, "[problem]\nname = heat\n[grid]\nn = 32\n[time]\ndt = 1e-3\nT = 1\n[noise]\nsigma = 0\n[diagnostics]\npaths = 2\n[sweep]\nparameter = noise.sigma\nvalues = 0\n")
        out = tmp_path / "o"
        main(["--experiment", "parabolic-backward", "--config", cfg, "--out", str(out)])
        rows = list(csv.DictReader((out / "report.csv").open()))
        assert len(rows) == 1 and float(rows[0]["mean_nu1"]) == 0.0

    def test_dt_sweep_fits_order(self, tmp_path, capsys):
        out = tmp_path / "o"
        main(["--experiment", "heat-logconvexity", "--config", str(CONFIGS / "heat_dt_sweep.ini"), "--out", str(out)])
        rows = list(csv.DictReader((out / "report.csv").open()))
        assert len(rows) == 3
        order = [ln for ln in capsys.readouterr().out.splitlines() if ln.startswith("fit: convergence_order")]
        assert order and 0.8 < float(order[0].split("=")[1]) < 1.2
