import csv
import json
import subprocess
import sys
import textwrap
from pathlib import Path

import numpy as np
import pytest

from kmflow.cli import load_config, main, parse_matrix, parse_real, parse_vector

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

ROTATION = """
[problem]
name = rotation
theta = pi/2

[schedule]
kind = constant
c = 0.5

[x0]
values = 1, 0

[flow]
t_end = 50
n_samples = 501

[analyses]
include = rate_bound, lyapunov
"""


def write(tmp_path, text, name="run.ini"):
    path = tmp_path / name
    path.write_text(textwrap.dedent(text))
    return path


def replace(text, old, new):
    assert old in text
    return text.replace(old, new)


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_parsers():
    assert parse_real("pi/2") == pytest.approx(np.pi / 2)
    assert parse_real("-1e-3") == -1e-3
    assert parse_real("2**3") == 8.0
    with pytest.raises(ValueError):
        parse_real("__import__('os')")
    assert parse_vector("1, -2.5, 3").tolist() == [1.0, -2.5, 3.0]
    assert parse_matrix("1, 0; 0, 2").tolist() == [[1.0, 0.0], [0.0, 2.0]]
    with pytest.raises(ValueError):
        parse_matrix("1, 0; 2")


def test_run_rotation(tmp_path):
    cfg = write(tmp_path, ROTATION)
    out = tmp_path / "out"
    assert main(["run", str(cfg), "--output-dir", str(out), "--quiet"]) == 0
    rows = read_csv(out / "trajectory.csv")
    assert rows[0] == ["t", "x_0", "x_1", "residual", "speed", "dist_to_fix"]
    assert len(rows) == 501 + 1
    assert float(rows[-1][0]) == 50.0
    # numbers are printed with 17 significant digits
    assert all(cell == format(float(cell), ".17g") for row in rows[1:] for cell in row)
    assert rows[1][3] == format(np.sqrt(2.0), ".17g")
    report = json.loads((out / "analysis.json").read_text())
    rate = report["analyses"][0]
    assert rate["analysis"] == "rate_bound" and rate["passed"] and rate["bound_margin"] <= 0
    assert "result: all analyses passed" in (out / "summary.txt").read_text()
    assert not (out / "iterates.csv").exists()


def test_output_dir_relative_to_config(tmp_path):
    cfg = write(tmp_path, ROTATION + "\n[output]\ndir = here\nseed = 5\n")
    assert main(["run", str(cfg), "--quiet"]) == 0
    assert json.loads((tmp_path / "here" / "analysis.json").read_text())["seed"] == 5


def test_contrast_config(tmp_path, capsys):
    out = tmp_path / "c"
    assert main(["run", str(CONFIGS / "km_contrast.ini"), "--output-dir", str(out)]) == 0
    printed = capsys.readouterr().out
    assert "CONTRAST: the continuous trajectory converges while the discrete iteration does not" in printed
    rows = read_csv(out / "iterates.csv")
    assert rows[0] == ["n", "x_0", "x_1", "residual", "lambda_n"]
    assert len(rows) == 10 + 2
    assert [float(r[1]) for r in rows[1:]] == [(-1.0) ** n for n in range(11)]
    assert rows[-1][-1] == ""


@pytest.mark.parametrize("name", sorted(p.name for p in CONFIGS.glob("*.ini")))
def test_shipped_configs_pass(tmp_path, name):
    assert main(["run", str(CONFIGS / name), "--output-dir", str(tmp_path), "--quiet"]) == 0


def test_analysis_failure_exit_code(tmp_path):
    # the residual decays exponentially, but nowhere near a log-log slope of -100
    text = ROTATION.replace("include = rate_bound, lyapunov", "include = slope\nslope_max = -100")
    assert main(["run", str(write(tmp_path, text)), "--output-dir", str(tmp_path / "o"), "--quiet"]) == 2
    assert "failed: slope" in (tmp_path / "o" / "summary.txt").read_text()


def test_validate_ok(tmp_path, capsys):
    assert main(["validate", str(write(tmp_path, ROTATION))]) == 0
    assert capsys.readouterr().out.strip() == "ok"


def issues_for(tmp_path, text):
    cfg, issues = load_config(write(tmp_path, text))
    assert cfg is None
    return [str(i) for i in issues]


def test_validate_lambda_max_zero(tmp_path):
    text = replace(ROTATION, "c = 0.5", "c = 0.5\nlambda_max = 0")
    msgs = issues_for(tmp_path, text)
    assert any("schedule upper bound must be positive" in m and "[schedule.lambda_max]" in m for m in msgs)
    assert any(m.startswith("line 9:") for m in msgs)


def test_validate_lasso_gamma(tmp_path, capsys):
    text = """
    [problem]
    name = lasso
    a = 1, 0; 0, 1
    b = 3, 0.2
    reg = 1
    gamma = 2
    [schedule]
    kind = constant
    c = 1
    [x0]
    values = 0, 0
    [flow]
    t_end = 5
    """
    assert main(["validate", str(write(tmp_path, text))]) == 1
    err = capsys.readouterr().err
    assert "open interval (0, 2*beta)" in err and "[problem.gamma]" in err


def test_malformed_schedule_kind(tmp_path, capsys):
    text = replace(ROTATION, "kind = constant", "kind = sawtooth")
    assert main(["run", str(write(tmp_path, text)), "--output-dir", str(tmp_path / "o")]) == 1
    err = capsys.readouterr().err
    assert "[schedule.kind]" in err and "sawtooth" in err
    assert not (tmp_path / "o").exists()


@pytest.mark.parametrize("old, new, fragment", [
    ("values = 1, 0", "values = 1, 0, 0", "[x0.values]"),
    ("t_end = 50", "t_end = -1", "[flow.t_end]"),
    ("include = rate_bound, lyapunov", "include = rate_bound, magic", "magic"),
    ("c = 0.5", "c = 1", "rate analyses need"),
    ("theta = pi/2", "theta = 2*pi", "[problem.theta]"),
    ("n_samples = 501", "n_samples = many", "[flow.n_samples]"),
    ("[x0]", "[extra]\nfoo = 1\n[x0]", "unknown section"),
])
def test_config_errors(tmp_path, old, new, fragment):
    msgs = issues_for(tmp_path, replace(ROTATION, old, new))
    assert any(fragment in m for m in msgs), msgs


def test_missing_section_and_file(tmp_path):
    msgs = issues_for(tmp_path, ROTATION.replace("[flow]\nt_end = 50\nn_samples = 501\n", ""))
    assert any("missing required section [flow]" in m for m in msgs)
    cfg, issues = load_config(tmp_path / "nope.ini")
    assert cfg is None and "cannot read config" in str(issues[0])


def test_determinism(tmp_path):
    cfg = write(tmp_path, ROTATION)
    for d in ("a", "b"):
        assert main(["run", str(cfg), "--output-dir", str(tmp_path / d), "--quiet"]) == 0
    assert (tmp_path / "a" / "trajectory.csv").read_bytes() == (tmp_path / "b" / "trajectory.csv").read_bytes()


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "kmflow.cli", "validate", str(write(tmp_path, ROTATION))],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.strip() == "ok"
