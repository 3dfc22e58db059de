import json
import subprocess
import sys

import pytest
import yaml

from percwalk import manifest as mf
from percwalk.cli import EXIT_BUDGET, EXIT_CONFIG, EXIT_OK, EXIT_TOLERANCE, build_parser, main


def write(tmp_path, body, name="m.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(body))
    return str(path)


def test_validate_examples(tmp_path, capsys):
    assert main(["validate", "--config", write(tmp_path, {"kind": "walk"})]) == EXIT_OK
    assert capsys.readouterr().out.strip() == "ok"
    bad_d = write(tmp_path, {"kind": "walk", "env": {"d": 1}, "bias": {"v": [1]}})
    assert main(["validate", "--config", bad_d]) == EXIT_CONFIG
    assert "env.d" in capsys.readouterr().err
    assert main(["validate", "--config", write(tmp_path, {"kind": "walk", "bias": {"lambda": 0}})]) == EXIT_CONFIG
    assert "lambda" in capsys.readouterr().err
    assert main(["validate", "--config", write(tmp_path, {"kind": "walk", "bias": {"v": [0, 0]}})]) == EXIT_CONFIG
    assert main(["validate", "--config", write(tmp_path, {"colour": "red"})]) == EXIT_CONFIG


def test_validate_lists_all_violations():
    m = mf.resolve({"kind": "walk", "env": {"p": 1.5, "d": 1}, "bias": {"v": [1, 0], "lambda": -1}})
    errs = mf.validate(m)
    assert len(errs) >= 3
    assert mf.validate(mf.resolve({"kind": "nearstable"})) == []


def test_walk_with_p_zero_rejected(tmp_path):
    cfg = write(tmp_path, {"kind": "walk", "env": {"p": 0.0}})
    assert main(["walk", "--config", cfg, "--out", str(tmp_path / "o")]) == EXIT_CONFIG


def test_conditioning_failure_exit_code(tmp_path):
    cfg = write(tmp_path, {"env": {"p": 0.01, "R_check": 64}, "walk": {"n_steps": 10}})
    code = main(["walk", "--config", cfg, "--replicas", "1", "--out", str(tmp_path / "o"), "--threads", "1"])
    assert code == EXIT_BUDGET
    assert json.loads((tmp_path / "o" / "summary.json").read_text())["status"] == "budget"


def test_hash_ignores_output_dir():
    a = mf.resolve({"kind": "walk"}, {"out": "x"})
    b = mf.resolve({"kind": "walk"}, {"out": "y"})
    assert mf.manifest_hash(a) == mf.manifest_hash(b)
    assert mf.manifest_hash(a) != mf.manifest_hash(mf.resolve({"kind": "walk", "seed": 1}))


NEARSTABLE = {"kind": "nearstable", "seed": 3, "replicas": 300,
              "nearstable": {"alpha": 1.5, "n_list": [2 ** k for k in range(8, 19, 2)], "rho_upper": 1.2,
                             "rho_lower": 0.3}}


def test_nearstable_run_and_replay(tmp_path):
    cfg = write(tmp_path, NEARSTABLE)
    out = tmp_path / "run"
    code = main(["nearstable", "--config", cfg, "--out", str(out), "--threads", "1"])
    summary = json.loads((out / "summary.json").read_text())
    assert summary["results"]["slope"]["estimate"] == pytest.approx(2 / 3, abs=0.05)
    assert code == (EXIT_OK if summary["status"] == "pass" else EXIT_TOLERANCE)
    assert summary["checks"]["slope"]["pass"]
    first = (out / "summary.json").read_bytes()
    assert main(["nearstable", "--config", cfg, "--out", str(out), "--threads", "1"]) == code
    assert (out / "summary.json").read_bytes() == first
    mhash = mf.manifest_hash(mf.resolve(NEARSTABLE, {"out": str(out)}))
    for f in out.iterdir():
        text = f.read_text()
        assert mhash in text.splitlines()[0] or f'"manifest_sha256": "{mhash}"' in text


def test_parallel_matches_serial(tmp_path):
    body = {"kind": "regen", "seed": 11, "replicas": 4, "bias": {"lambda": 0.55},
            "walk": {"n_steps": 60_000, "confirm_horizon": 5000}}
    cfg = write(tmp_path, body)
    main(["regen", "--config", cfg, "--out", str(tmp_path / "a"), "--threads", "1"])
    main(["regen", "--config", cfg, "--out", str(tmp_path / "b"), "--threads", "2"])
    sa = json.loads((tmp_path / "a" / "summary.json").read_text())
    sb = json.loads((tmp_path / "b" / "summary.json").read_text())
    assert sa["results"] == sb["results"] and sa["checks"] == sb["checks"]
    assert (tmp_path / "a" / "increments.csv").read_text() == (tmp_path / "b" / "increments.csv").read_text()


def test_seed_and_replica_overrides(tmp_path):
    cfg = write(tmp_path, {"kind": "env-census", "seed": 1, "replicas": 5})
    out = tmp_path / "o"
    assert main(["env-census", "--config", cfg, "--seed", "9", "--replicas", "7", "--out", str(out)]) == EXIT_OK
    summary = json.loads((out / "summary.json").read_text())
    assert summary["manifest"]["seed"] == 9 and summary["manifest"]["replicas"] == 7
    lines = (out / "env_census.csv").read_text().splitlines()
    assert lines[0].startswith("# manifest_sha256=") and lines[1] == "replica,rejections" and len(lines) == 9


def test_help_documents_columns(capsys):
    with pytest.raises(SystemExit):
        build_parser().parse_args(["regen", "--help"])
    assert "increments.csv" in capsys.readouterr().out


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "percwalk", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "pipeline" in res.stdout
