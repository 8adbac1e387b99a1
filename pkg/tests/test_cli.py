import csv
import json

import pytest

from rplab import cli
from rplab.cli import ExperimentConfig, config_from_args, git_blob_sha1, main, validate


def _cfg(tmp_path, **kw):
    return ExperimentConfig(out=str(tmp_path / "out"), **kw)


def test_well_formed_config_has_no_violations(tmp_path):
    cfg = _cfg(tmp_path, kind="survival", family="lacoin", gamma=3.0, delta=1.5, t=(1.0, 2.0))
    assert validate(cfg) == []


def test_step_above_horizon_names_both_fields(tmp_path):
    errs = validate(_cfg(tmp_path, kind="survival", dt=0.5, t_max=0.1, t=(0.05,)))
    assert len(errs) == 1
    assert "--dt" in errs[0] and "--t-max" in errs[0]


def test_ruess_with_inverted_levels(tmp_path):
    cfg = _cfg(tmp_path, kind="lyapunov", family="ruess", nu=0.5, m=1.0, M=0.5, tube=0.5)
    errs = validate(cfg)
    assert len(errs) == 1
    assert errs[0].startswith("--M") or errs[0].startswith("--m")


def test_missing_ruess_parameter_points_at_its_flag(tmp_path):
    errs = validate(_cfg(tmp_path, kind="lyapunov", family="ruess", nu=0.5, m=0.2, M=1.0))
    assert any(e.startswith("--tube") for e in errs)


def test_unknown_kind_and_bad_counts(tmp_path):
    errs = validate(_cfg(tmp_path, kind="nope", n_paths=0, d=4))
    assert any("--kind" in e for e in errs)
    assert any("--n-paths" in e for e in errs)
    assert any("--d" in e for e in errs)


def test_invalid_lacoin_exits_with_one(tmp_path, capsys):
    rc = main(["potential-stats", "--family", "lacoin", "--gamma", "0.5", "--delta", "1.5",
               "--d", "2", "--out", str(tmp_path / "o")])
    assert rc == cli.EXIT_INVALID
    err = capsys.readouterr().err
    assert "--gamma" in err
    assert "finite" in err


def test_config_file_line_numbers_and_override(tmp_path, capsys):
    conf = tmp_path / "run.conf"
    conf.write_text("# survival run\nfamily = lacoin\nd = 2\ngamma = 0.25\ndelta = 1.5\n"
                    "t = 1, 2\n")
    rc = main(["survival", "--config", str(conf), "--out", str(tmp_path / "o")])
    assert rc == cli.EXIT_INVALID
    assert f"{conf}:4" in capsys.readouterr().err
    cfg, errs = config_from_args(["survival", "--config", str(conf), "--gamma", "3",
                                  "--out", str(tmp_path / "o")])
    assert errs == [] and cfg.gamma == 3.0 and cfg.t == (1.0, 2.0)
    assert "gamma" not in cfg.sources and cfg.sources["delta"] == f"{conf}:5"
    assert validate(cfg) == []


def test_config_file_parse_errors(tmp_path, capsys):
    conf = tmp_path / "bad.conf"
    conf.write_text("family = zero\nbogus = 1\nn_paths = many\n")
    assert main(["survival", "--config", str(conf)]) == cli.EXIT_INVALID
    err = capsys.readouterr().err
    assert f"{conf}:2" in err and f"{conf}:3" in err


def test_eigen_interval_example(tmp_path):
    out = tmp_path / "eig"
    assert main(["eigen", "--family", "zero", "--d", "1", "--R", "1", "--h", str(1 / 256),
                 "--out", str(out)]) == 0
    rows = list(csv.DictReader(open(out / "eigen.csv")))
    assert float(rows[0]["lambda_hat"]) == pytest.approx(1.2337005501361697, rel=5e-3)
    man = json.loads((out / "manifest.json").read_text())
    assert man["config"]["kind"] == "eigen"
    assert man["outputs"]["eigen.csv"] == git_blob_sha1((out / "eigen.csv").read_bytes())


def test_outputs_are_reproducible_bytes(tmp_path):
    argv = ["survival", "--family", "lacoin", "--gamma", "3", "--delta", "1.5", "--d", "2",
            "--t", "0.5,1,1.5,2", "--n-paths", "300", "--seed", "4"]
    assert main(argv + ["--out", str(tmp_path / "a")]) == 0
    assert main(argv + ["--out", str(tmp_path / "b"), "--workers", "2"]) == 0
    for name in ("survival.csv", "decay.csv"):
        a = (tmp_path / "a" / name).read_bytes()
        assert a == (tmp_path / "b" / name).read_bytes()
        assert b"\r\n" not in a


def test_git_blob_hash_matches_git():
    # git hash-object of an empty file and of "hello\n"
    assert git_blob_sha1(b"") == "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391"
    assert git_blob_sha1("hello\n") == "ce013625030ba8dba906f756967f9e9ca394464a"
