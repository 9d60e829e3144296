import json

import numpy as np
import pytest
import yaml

from bclab.cli import main


def write_config(tmp_path, data, name="config.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(data))
    return str(path)


def test_validate_default(tmp_path, capsys):
    assert main(["validate", "--out", str(tmp_path)]) == 0
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["passed"] and len(report["checks"]) == 6
    assert "validate: ok" in capsys.readouterr().out


def test_unknown_key_names_the_key(tmp_path, capsys):
    cfg = write_config(tmp_path, {"model": {"q": 1, "feild": "real"}})
    assert main(["walk", "--config", cfg]) == 2
    assert "model.feild" in capsys.readouterr().err


def test_unknown_top_level_key(tmp_path, capsys):
    cfg = write_config(tmp_path, {"sede": 3})
    assert main(["validate", "--config", cfg]) == 2
    assert "'sede'" in capsys.readouterr().err


def test_p_below_two_q_is_a_config_error(tmp_path, capsys):
    cfg = write_config(tmp_path, {"model": {"q": 2, "p": 3}})
    assert main(["validate", "--config", cfg]) == 2
    assert "UnsupportedExponent" in capsys.readouterr().err


def test_malformed_yaml(tmp_path):
    path = tmp_path / "bad.yaml"
    path.write_text("model: [1, 2\n")
    assert main(["walk", "--config", str(path)]) == 2


def test_walk_zero_steps(tmp_path):
    cfg = write_config(tmp_path, {"walk": {"n": 0, "replicas": 5}})
    assert main(["walk", "--config", cfg, "--out", str(tmp_path / "out")]) == 0
    lines = (tmp_path / "out" / "points.csv").read_text().splitlines()
    assert lines == ["x1"] + ["0.0"] * 5


def test_walk_rerun_is_byte_identical(tmp_path):
    cfg = write_config(tmp_path, {"model": {"q": 2, "p": 6}, "measure": {"type": "dirac", "points": [[1.0, 0.5]]}})
    main(["walk", "--config", cfg, "--out", str(tmp_path / "a"), "--seed", "9"])
    main(["walk", "--config", cfg, "--out", str(tmp_path / "b"), "--seed", "9", "--workers", "2"])
    for name in ("points.csv", "report.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    ma = json.loads((tmp_path / "a" / "manifest.json").read_text())
    mb = json.loads((tmp_path / "b" / "manifest.json").read_text())
    assert ma["files"] == mb["files"] and ma["seed"] == 9
    assert "created_utc" in ma and "versions" in ma


def table(path):
    rows = [line.split(",") for line in path.read_text().splitlines()[1:]]
    return rows


def test_eval_phi_bc_trivial_character(tmp_path):
    cfg = write_config(tmp_path, {"eval": {"function": "phi-bc", "lam": ["-i*rho"], "x": [[0.0], [1.0], [4.0]]}})
    assert main(["eval", "--config", cfg, "--out", str(tmp_path)]) == 0
    rows = table(tmp_path / "table.csv")
    assert len(rows) == 3 and all(r[2] == "1.0" and r[3] == "0.0" for r in rows)


def test_eval_type_a_moment_rank_one(tmp_path):
    cfg = write_config(tmp_path, {"eval": {"function": "moment", "kind": "a", "l": [1], "x": [[0.5], [1.5], [3.0]]}})
    assert main(["eval", "--config", cfg, "--out", str(tmp_path)]) == 0
    vals = [float(r[2]) for r in table(tmp_path / "table.csv")]
    assert vals == [0.5, 1.5, 3.0]


def test_eval_fourier_matches_phi_mixture(tmp_path):
    measure = {"type": "dirac", "points": [[0.5], [2.0]], "weights": [0.5, 0.5]}
    lam = [[0.5], [1.0]]
    cfg = write_config(tmp_path, {"measure": measure, "n_mc": 100000, "eval": {"function": "fourier", "lam": lam}}, "f.yaml")
    assert main(["eval", "--config", cfg, "--out", str(tmp_path / "f")]) == 0
    cfg = write_config(tmp_path, {"n_mc": 100000, "seed": 1, "eval": {"function": "phi-bc", "lam": lam, "x": [[0.5], [2.0]]}}, "p.yaml")
    assert main(["eval", "--config", cfg, "--out", str(tmp_path / "p")]) == 0
    four = table(tmp_path / "f" / "table.csv")
    phi = table(tmp_path / "p" / "table.csv")
    for i in range(2):
        a, b = phi[i], phi[2 + i]
        hand = 0.5 * (complex(float(a[2]), float(a[3])) + complex(float(b[2]), float(b[3])))
        se_hand = 0.5 * np.hypot(float(a[4]), float(b[4]))
        got = complex(float(four[i][2]), float(four[i][3]))
        assert abs(got - hand) <= 3 * np.hypot(se_hand, float(four[i][4]))


def test_eval_unknown_function(tmp_path):
    cfg = write_config(tmp_path, {"eval": {"function": "bessel"}})
    assert main(["eval", "--config", cfg]) == 2


def test_clt_outer_a_report_and_reproducibility(tmp_path):
    cfg = write_config(tmp_path, {"n_mc": 20000, "schedule": {"n_grid": [0, 16, 64], "replicas": 300}})
    code_a = main(["clt-outer-a", "--config", cfg, "--out", str(tmp_path / "a")])
    code_b = main(["clt-outer-a", "--config", cfg, "--out", str(tmp_path / "b"), "--workers", "2"])
    assert code_a == code_b and code_a in (0, 1)
    report = json.loads((tmp_path / "a" / "report.json").read_text())
    assert [len(r["ks"]) for r in report["rows"]] == [1, 1, 1]
    for name in ("points.csv", "report.json", "stats.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_lln_rejects_origin(tmp_path, capsys):
    cfg = write_config(tmp_path, {"measure": {"type": "dirac", "points": [[0.0]]}})
    assert main(["lln", "--config", cfg]) == 2
    assert "InvalidSpec" in capsys.readouterr().err


def test_outer_a_rejects_linear_rule(tmp_path, capsys):
    cfg = write_config(tmp_path, {"schedule": {"p_rule": {"kind": "linear", "a": 2, "b": 1}}})
    assert main(["clt-outer-a", "--config", cfg]) == 2
    assert "ScheduleViolation" in capsys.readouterr().err


def test_inner_small_run(tmp_path):
    cfg = write_config(tmp_path, {"n_mc": 256, "schedule": {"n_grid": [4, 16], "replicas": 200}})
    assert main(["clt-inner", "--config", cfg, "--out", str(tmp_path)]) in (0, 1)
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["verdicts"]["normalization"]["passed"]


def test_missing_subcommand():
    with pytest.raises(SystemExit):
        main([])
