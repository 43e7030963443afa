"""Command-line behavior: exit codes, overrides, output listing."""

import shutil
import subprocess

import pytest

from anosovlab.cli import main

LINEAR_YAML = """\
fixture:
  name: linear_A0
sampling:
  points: 8
  codes_per_point: 4
  pairs: 10
depths:
  max_period: 2
output: {out}
"""

SWEEP_YAML = """\
fixture:
  name: shear_A0
  epsilon: 0.05
sampling:
  points: 8
  codes_per_point: 4
  pairs: 10
depths:
  max_period: 2
dichotomy:
  family: shear_A0
  epsilons: [0.0, 0.02]
output: {out}
"""


def _config(tmp_path, template, name="scenario.yaml", out="run"):
    path = tmp_path / name
    path.write_text(template.format(out=tmp_path / out))
    return str(path)


class TestArgs:
    def test_unknown_verb_rejected_by_parser(self, tmp_path):
        cfg = _config(tmp_path, LINEAR_YAML)
        with pytest.raises(SystemExit) as exc_info:
            main(["frobnicate", "--config", cfg])
        assert exc_info.value.code == 2

    def test_config_flag_required(self):
        with pytest.raises(SystemExit) as exc_info:
            main(["analyze"])
        assert exc_info.value.code == 2

    def test_bad_thread_count(self, tmp_path, capsys):
        cfg = _config(tmp_path, LINEAR_YAML)
        assert main(["analyze", "--config", cfg, "--threads", "0"]) == 1
        assert "--threads" in capsys.readouterr().err


class TestConfigErrors:
    def test_each_problem_gets_a_stderr_line(self, tmp_path, capsys):
        cfg = tmp_path / "bad.yaml"
        cfg.write_text("fixture:\n  name: nope\nseed: -1\nwat: 1\n")
        assert main(["analyze", "--config", str(cfg)]) == 1
        err_lines = [l for l in capsys.readouterr().err.splitlines() if l]
        assert len(err_lines) == 3
        assert all(l.startswith("config error: ") for l in err_lines)

    def test_missing_file(self, tmp_path, capsys):
        assert main(["analyze", "--config", str(tmp_path / "absent.yaml")]) == 1
        assert "config error" in capsys.readouterr().err


class TestRunVerbs:
    def test_single_stage_clean(self, tmp_path, capsys):
        cfg = _config(tmp_path, LINEAR_YAML)
        assert main(["analyze", "--config", cfg]) == 0
        out = capsys.readouterr().out
        assert f"wrote {tmp_path / 'run'}/summary.txt" in out
        assert f"wrote {tmp_path / 'run'}/analyze.csv" in out
        assert f"wrote {tmp_path / 'run'}/covering.csv" in out
        assert "finding:" not in out

    def test_all_runs_every_stage(self, tmp_path):
        cfg = _config(tmp_path, LINEAR_YAML)
        assert main(["all", "--config", cfg]) == 0
        produced = {p.name for p in (tmp_path / "run").iterdir()}
        assert {
            "analyze.csv", "certify.csv", "conjugacy.csv", "orbits.csv",
            "branches.csv", "isometry.csv", "summary.txt",
        } <= produced

    def test_out_and_seed_overrides(self, tmp_path, capsys):
        cfg = _config(tmp_path, LINEAR_YAML)
        alt = tmp_path / "elsewhere"
        assert main(["analyze", "--config", cfg, "--out", str(alt), "--seed", "5"]) == 0
        assert (alt / "analyze.csv").exists()
        assert not (tmp_path / "run").exists()
        assert "seed: 5" in (alt / "summary.txt").read_text()
        assert f"wrote {alt}/analyze.csv" in capsys.readouterr().out

    def test_findings_printed_and_exit_two(self, tmp_path, capsys):
        cfg = _config(tmp_path, SWEEP_YAML)
        assert main(["conjugacy", "--config", cfg]) == 2
        out = capsys.readouterr().out
        assert "finding: " in out and "not special" in out

    def test_failed_certificate_is_a_finding(self, tmp_path, capsys):
        # epsilon large enough that the cone-field check fails
        cfg = tmp_path / "wild.yaml"
        cfg.write_text(
            "fixture: {name: shear_A0, epsilon: 0.3}\n"
            f"output: {tmp_path / 'wild'}\n"
        )
        code = main(["certify", "--config", str(cfg)])
        captured = capsys.readouterr()
        assert code == 2
        assert "finding: " in captured.out and "certification" in captured.out


class TestDichotomyVerb:
    def test_requires_section(self, tmp_path, capsys):
        cfg = _config(tmp_path, LINEAR_YAML)
        assert main(["dichotomy", "--config", cfg]) == 1
        assert "dichotomy" in capsys.readouterr().err

    def test_sweep_thread_invariance(self, tmp_path):
        cfg1 = _config(tmp_path, SWEEP_YAML, name="s1.yaml", out="d1")
        cfg2 = _config(tmp_path, SWEEP_YAML, name="s2.yaml", out="d2")
        assert main(["dichotomy", "--config", cfg1]) == 0
        assert main(["dichotomy", "--config", cfg2, "--threads", "2"]) == 0
        b1 = (tmp_path / "d1" / "dichotomy.csv").read_bytes()
        b2 = (tmp_path / "d2" / "dichotomy.csv").read_bytes()
        assert b1 == b2


def test_console_script_installed(tmp_path):
    exe = shutil.which("anosovlab")
    assert exe, "console script missing from PATH"
    cfg = _config(tmp_path, LINEAR_YAML)
    proc = subprocess.run(
        [exe, "analyze", "--config", cfg], capture_output=True, text=True
    )
    assert proc.returncode == 0
    assert "wrote" in proc.stdout
