import json
import math

import pytest

from kostlan_lab.cli import main
from kostlan_lab.config import ExperimentConfig
from kostlan_lab.kostlan import norm_ratio
from kostlan_lab.poly_core import AffinePolynomialMap


def run_cli(capsys, *argv):
    code = main(list(argv))
    return code, json.loads(capsys.readouterr().out)


def test_zero_trials_gives_header_only_csv(tmp_path, capsys):
    out = tmp_path / "s.csv"
    code, summary = run_cli(capsys, "systole", "--trials", "0", "--out", str(out))
    assert code == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "# kostlan-lab v1 systole"
    assert len(lines) == 2 and lines[1].startswith("trial_index,")
    assert summary["trials"] == 0 and summary["frequency"] is None


def test_reruns_are_byte_identical(tmp_path, capsys, monkeypatch):
    flags = ["certify", "--d", "30", "--trials", "20", "--seed", "11"]
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert run_cli(capsys, *flags, "--out", str(a))[0] == 0
    monkeypatch.setenv("KOSTLAN_LAB_THREADS", "3")
    assert run_cli(capsys, *flags, "--out", str(b))[0] == 0
    assert a.read_bytes() == b.read_bytes()
    assert len(a.read_text().splitlines()) == 22


def test_verify_norms_series(tmp_path, capsys):
    code, summary = run_cli(capsys, "verify-norms", "--n", "1", "--d", "200", "--trials", "1000", "--seed", "7")
    assert code == 0
    assert summary["degrees"][-1] == 200
    one = AffinePolynomialMap.constant(1, 1.0)
    for d, v in zip(summary["degrees"], summary["ratios"]):
        assert v == pytest.approx(norm_ratio(one, 1.0, d), rel=1e-12)
    # closed form of the ratio for p = 1, n = 1: sqrt(d / (d + 1))
    assert summary["limit_estimate"] == pytest.approx(math.sqrt(200 / 201), rel=1e-12)
    assert summary["monte_carlo"]["points"] == 1000


def test_moser_demo_rows(tmp_path, capsys):
    out = tmp_path / "m.csv"
    code, summary = run_cli(capsys, "moser-demo", "--trials", "2", "--time-steps", "20", "--out", str(out))
    assert code == 0 and summary["forms"] == 2
    assert len(out.read_text().splitlines()) == 4


@pytest.mark.parametrize("argv", [
    ["systole", "--epsilon", "1.5"],
    ["systole", "--n", "3"],
    ["certify", "--trials", "-1"],
    ["nonsense"],
    ["systole", "--d", "ten"],
])
def test_usage_errors_are_json(capsys, argv):
    code, err = run_cli(capsys, *argv)
    assert code == 2
    assert err["error"] == "usage" and err["message"]


def test_config_defaults_are_valid():
    cfg = ExperimentConfig()
    assert cfg.mode == "systole" and cfg.n == 2
    with pytest.raises(ValueError):
        ExperimentConfig(mode="flow", rho=1.0)
