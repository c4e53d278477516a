import json

import pytest

from morseflow.cli import EXIT_CHECK, EXIT_NUMERICAL, EXIT_OK, EXIT_USAGE, main


def write_cfg(tmp_path, text, name="scenario.ini"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


CIRCLE = """
[run]
seed = 42

[system]
family = circle
a = 0.2
"""

CIRCLE_DEG = """
[run]
seed = 7

[system]
family = circle
a = 0.1

[map]
kind = circle_degree
degree = 3
offset = 0.37
"""


def test_missing_seed_is_a_usage_error(tmp_path, capsys):
    cfg = write_cfg(tmp_path, "[system]\nfamily = circle\n")
    code = main(["crit", "--config", cfg, "--out", str(tmp_path)])
    assert code == EXIT_USAGE


def test_unknown_family_is_a_usage_error(tmp_path):
    cfg = write_cfg(tmp_path, "[run]\nseed = 1\n\n[system]\nfamily = moebius\n")
    code = main(["crit", "--config", cfg, "--out", str(tmp_path)])
    assert code == EXIT_USAGE


def test_missing_config_file_is_a_usage_error(tmp_path):
    code = main(["crit", "--config", str(tmp_path / "absent.ini"), "--out", str(tmp_path)])
    assert code == EXIT_USAGE


def test_unknown_command_rejected_by_argparse(tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate", "--config", "x", "--out", str(tmp_path)])
    assert exc.value.code == 2


def test_crit_report_on_the_circle(tmp_path):
    cfg = write_cfg(tmp_path, CIRCLE)
    out = tmp_path / "out"
    code = main(["crit", "--config", cfg, "--out", str(out), "--format", "json+csv"])
    assert code == EXIT_OK
    report = json.loads((out / "crit-report.json").read_text())
    assert report["verdict"] == "pass"
    assert report["seed"] == 42
    assert report["tolerances"]["tau"] == 1e-6
    assert report["effective_config"]["system"]["family"] == "circle"
    indices = sorted(row["index"] for row in report["results"]["catalogue"])
    assert indices == [0, 1]
    csv_lines = (out / "crit-table.csv").read_text().strip().splitlines()
    assert len(csv_lines) == 3


def test_seed_flag_overrides_config(tmp_path):
    cfg = write_cfg(tmp_path, CIRCLE)
    out = tmp_path / "out"
    assert main(["crit", "--config", cfg, "--seed", "99", "--out", str(out)]) == EXIT_OK
    report = json.loads((out / "crit-report.json").read_text())
    assert report["seed"] == 99


def test_verify_is_byte_identical_across_runs(tmp_path):
    cfg = write_cfg(tmp_path, CIRCLE)
    out1, out2 = tmp_path / "r1", tmp_path / "r2"
    assert main(["verify", "--config", cfg, "--out", str(out1)]) == EXIT_OK
    assert main(["verify", "--config", cfg, "--out", str(out2)]) == EXIT_OK
    b1 = (out1 / "verify-report.json").read_bytes()
    b2 = (out2 / "verify-report.json").read_bytes()
    assert b1 == b2


def test_chainmap_degree_report(tmp_path):
    cfg = write_cfg(tmp_path, CIRCLE_DEG)
    out = tmp_path / "out"
    code = main(["chainmap", "--config", cfg, "--out", str(out)])
    assert code == EXIT_OK
    report = json.loads((out / "chainmap-report.json").read_text())
    assert report["checks"]["chain_map_identity"] is True
    assert report["results"]["chain_map"]["blocks"][1] == [[3]]


def test_chainmap_requires_a_map_section(tmp_path):
    cfg = write_cfg(tmp_path, CIRCLE)
    code = main(["chainmap", "--config", cfg, "--out", str(tmp_path)])
    assert code == EXIT_USAGE
