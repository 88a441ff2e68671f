import csv
import json
from pathlib import Path

import pytest

from twistorbits.cli import EXIT_OK, EXIT_VALIDATION, csv_header, emit, main, run
from twistorbits.config import load_config, parse_config
from twistorbits.errors import ConfigError

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

SMALL = """
[metric]
type = "flat"
n = 1

[hamiltonian]
C = {C}
epsilon = 0.0

[search]
N = 2
grid = 4
"""


def write(tmp_path, text, name="run.toml"):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_rejects_C_at_injectivity_radius(tmp_path, capsys):
    cfg = write(tmp_path, SMALL.format(C=0.6))
    assert main(["--config", str(cfg), "--command", "census", "--out", str(tmp_path / "o")]) == EXIT_VALIDATION
    assert "hamiltonian.C" in capsys.readouterr().err
    assert not (tmp_path / "o").exists()


@pytest.mark.parametrize(
    "patch,field",
    [
        ({"metric": {"n": 1}}, "metric.type"),
        ({"metric": {"type": "flat", "n": 1}, "hamiltonian": {"C": 0.4}}, "hamiltonian.epsilon"),
        ({"metric": {"type": "flat", "n": 1}, "hamiltonian": {"C": 0.4, "epsilon": 0.1}, "run": {"seed": -1}}, "run.seed"),
        (
            {"metric": {"type": "flat", "n": 1}, "hamiltonian": {"C": 0.4, "epsilon": 0.1},
             "search": {"targets": [{"m": [1], "d": 2}]}},
            "search.targets",
        ),
    ],
)
def test_config_errors_name_the_field(patch, field):
    with pytest.raises(ConfigError) as err:
        parse_config(patch, "search")
    assert field in str(err.value)


def test_linking_needs_section():
    with pytest.raises(ConfigError) as err:
        parse_config({"metric": {"type": "flat", "n": 1}, "hamiltonian": {"C": 0.4, "epsilon": 0.0}}, "linking")
    assert "linking" in str(err.value)


def test_missing_file_is_validation_error(tmp_path):
    assert main(["--config", str(tmp_path / "nope.toml"), "--command", "census"]) == EXIT_VALIDATION


def test_free_census_is_deterministic(tmp_path):
    cfg = write(tmp_path, SMALL.format(C=0.45))
    out = tmp_path / "run"
    outs = []
    for _ in range(2):
        assert main(["--config", str(cfg), "--command", "census", "--out", str(out), "--seed", "7"]) == EXIT_OK
        outs.append((out / "report.json").read_bytes())
        assert json.loads((out / "timing.json").read_text())["total"] > 0
    assert outs[0] == outs[1]
    report = json.loads(outs[0])
    assert report["seed"] == 7 and report["targets"][0]["count"] >= 1
    assert report["config"]["hamiltonian"]["C"] == 0.45


def test_csv_rows_and_header(tmp_path):
    cfg = load_config(write(tmp_path, SMALL.format(C=0.45)), "census")
    report, _ = run(cfg, "census")
    path = emit(report, tmp_path / "csv", "csv")
    with open(path) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == csv_header(1)
    assert len(rows) - 1 == report["targets"][0]["count"]
    for row in rows[1:]:
        assert row[0] == "0" and row[1] == "1" and row[-1] in ("true", "false")


def test_csv_with_no_orbits_is_header_only(tmp_path):
    report = {"config": {"metric": {"n": 2}}, "targets": [{"orbits": []}]}
    with open(emit(report, tmp_path, "csv")) as fh:
        rows = list(csv.reader(fh))
    assert rows == [csv_header(2)] and len(rows[0]) == 4 + 8 + 1


def test_json_round_trip(tmp_path):
    cfg = load_config(CONFIGS / "linking_standard.toml", "linking")
    report, timing = run(cfg, "linking")
    path = emit(report, tmp_path, "json", timing)
    back = json.loads(path.read_text())
    assert back["linking"]["linking_satisfied"] is True
    assert back["linking"]["uniform_sign"] == 1
    assert sorted(fp["q"][0] for fp in back["fixed_points"]) == pytest.approx([0.0, 0.5], abs=1e-12)
    assert json.loads(json.dumps(back)) == back


def test_decompose_command(tmp_path):
    cfg = load_config(CONFIGS / "conformal.toml", "decompose")
    report, timing = run(cfg, "decompose")
    assert report["decomposition"]["N"] == 2
    assert "decompose" in timing


def test_bad_command_rejected(tmp_path):
    cfg = load_config(write(tmp_path, SMALL.format(C=0.45)), "census")
    with pytest.raises(ConfigError):
        run(cfg, "frobnicate")
