import json
import subprocess
import sys
from pathlib import Path

import pytest

from wigneravg.cli import (EXIT_CHECK, EXIT_CONFIG, EXIT_OK, THREADS_ENV, list_experiments, main,
                           resolve_threads, validate)
from wigneravg.config import bundled_configs, bundled_dir, load_config
from wigneravg.errors import ConfigError

TRANSFORM = """\
name: tiny_transform
kind: transform
grid:
  n: 64
  length: 8.0
state:
  family: coherent
  q: 0.3
  p: 0.5
hbars: [0.1]
"""


def write(tmp_path, text, name="cfg.yaml"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


@pytest.mark.parametrize("path", bundled_configs(), ids=lambda p: p.stem)
def test_bundled_configs_validate(path):
    assert validate(str(path)) == []


def test_list_covers_all_kinds(capsys):
    items = list_experiments()
    assert len(items) >= 7
    assert {k for _, k, _ in items} >= {"transform", "evolve", "sweep", "purity", "averaging",
                                       "madelung", "density1d"}
    assert main(["list"]) == EXIT_OK
    assert "coherent_sweep_d1" in capsys.readouterr().out


def test_validate_all_bundled(capsys):
    assert main(["validate"]) == EXIT_OK


def test_empty_hbars_reports_line(tmp_path, capsys):
    text = TRANSFORM.replace("hbars: [0.1]", "hbars: []")
    diags = validate(write(tmp_path, text))
    assert len(diags) == 1 and diags[0].path == "hbars"
    assert diags[0].line == text.splitlines().index("hbars: []") + 1
    assert main(["validate", "--config", write(tmp_path, text)]) == EXIT_CONFIG
    assert f"line {diags[0].line}" in capsys.readouterr().err
    assert main(["run", "--config", write(tmp_path, text), "--out", str(tmp_path / "o")]) == EXIT_CONFIG
    assert not (tmp_path / "o").exists()


def test_bad_expression_reports_column(tmp_path):
    text = TRANSFORM.replace("hbars: [0.1]", "hbars: [0.1]\npotential: \"sin(\"")
    diags = validate(write(tmp_path, text))
    assert len(diags) == 1 and diags[0].path == "potential"
    assert "column 5" in diags[0].message
    assert diags[0].line == len(text.splitlines())


@pytest.mark.parametrize("edit,path", [
    (("n: 64", "n: 60"), "grid.n"),
    (("kind: transform", "kind: nonsense"), "kind"),
    (("family: coherent", "family: squeezed"), "state.family"),
    (("q: 0.3", "q: 0.3\n  alpha: 0.2"), "state.alpha"),
    (("hbars: [0.1]", "hbars: [0.1, 0.2]"), "hbars"),
])
def test_schema_errors(tmp_path, edit, path):
    diags = validate(write(tmp_path, TRANSFORM.replace(*edit)))
    assert [d.path for d in diags] == [path]
    assert diags[0].line is not None


def test_sweep_needs_geometric_hbars(tmp_path):
    text = (bundled_dir() / "coherent_sweep_d1.yaml").read_text()
    text = text.replace("[0.2, 0.1, 0.05, 0.025]", "[0.2, 0.1, 0.03]")
    assert [d.path for d in validate(write(tmp_path, text))] == ["hbars"]


def test_unreadable_yaml(tmp_path):
    with pytest.raises(ConfigError) as info:
        load_config(write(tmp_path, "name: [unclosed\n"))
    assert info.value.diagnostics[0].line is not None


def test_thread_precedence():
    env = {THREADS_ENV: "3"}
    assert resolve_threads(None, None, {}) == 1
    assert resolve_threads(None, None, env) == 3
    assert resolve_threads(None, 2, env) == 2
    assert resolve_threads(4, 2, env) == 4
    assert resolve_threads(None, None, {THREADS_ENV: "many"}) == 1


def test_run_writes_manifest(tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["run", "--config", write(tmp_path, TRANSFORM), "--out", str(out), "--seed", "5"]) == EXIT_OK
    man = json.loads((out / "manifest.json").read_text())
    for key in ("name", "kind", "config", "config_sha256", "version", "backend", "seed", "threads",
                "checks", "result", "files"):
        assert key in man
    assert man["seed"] == 5 and man["threads"] == 1 and man["result"] == "PASS"
    assert all((out / f).exists() for f in man["files"])
    assert "all checks passed" in capsys.readouterr().out


def test_failing_check_exits_one(tmp_path, capsys):
    text = (bundled_dir() / "coherent_sweep_d1.yaml").read_text()
    text = text.replace("expected_exponent: 0.5", "expected_exponent: 1.5")
    text = text.replace("[0.2, 0.1, 0.05, 0.025]", "[0.2, 0.1]")
    out = tmp_path / "o"
    assert main(["run", "--config", write(tmp_path, text), "--out", str(out)]) == EXIT_CHECK
    assert json.loads((out / "manifest.json").read_text())["result"] == "FAIL"
    assert "failed checks" in capsys.readouterr().err


def test_numerical_failure_exits_one(tmp_path, capsys):
    # a state far too wide for the box trips the margin check inside the run
    text = TRANSFORM.replace("length: 8.0", "length: 1.0")
    assert main(["run", "--config", write(tmp_path, text), "--out", str(tmp_path / "o")]) == EXIT_CHECK
    assert "run failed" in capsys.readouterr().err


def test_same_seed_gives_identical_tables(tmp_path):
    outs = []
    for i, threads in enumerate(("1", "2")):
        out = tmp_path / f"o{i}"
        assert main(["run", "--config", "density_bound_1d", "--out", str(out), "--seed", "11",
                     "--threads", threads]) == EXIT_OK
        outs.append(out)
    for name in ("mollifier.csv", "density_bound.csv", "gamma.csv"):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()
    other = tmp_path / "o2"
    main(["run", "--config", "density_bound_1d", "--out", str(other), "--seed", "12"])
    assert (other / "mollifier.csv").read_bytes() != (outs[0] / "mollifier.csv").read_bytes()


def test_console_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "wigneravg.cli", "validate", "--config",
                          "wigner_transform_coherent"], capture_output=True, text=True)
    assert res.returncode == 0 and "ok" in res.stdout
