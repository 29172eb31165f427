"""CLI, config validation (fail-closed), bundles, plots, reproducibility."""

import json
import os

import numpy as np
import pytest

from fblab.cli import main
from fblab.errors import RejectedInput
from fblab.plots import emit_plots
from fblab.scenarios import run_scenario, validate_config


def write_cfg(tmp_path, obj, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(obj))
    return str(p)


PIPE = {"name": "pipe", "kind": "full_pipeline", "seed": 7,
        "params": {"n": 65, "lambda": 1.0}}


def test_validate_ok(tmp_path, capsys):
    cfg = write_cfg(tmp_path, PIPE)
    assert main(["validate", cfg]) == 0
    assert "pipe (full_pipeline)" in capsys.readouterr().out


def test_validate_missing_key_names_it(tmp_path, capsys):
    bad = {"name": "x", "kind": "solve_op",
           "params": {"n": 65, "lambda": 1.0, "datum": {"type": "curved"}}}
    cfg = write_cfg(tmp_path, bad)
    assert main(["validate", cfg]) == 2
    err = capsys.readouterr().err
    assert "ladder" in err


def test_validate_unknown_key_fail_closed(tmp_path, capsys):
    bad = dict(PIPE)
    bad["params"] = {"n": 65, "lambda": 1.0, "tolerence": 1e-3}  # typo key
    cfg = write_cfg(tmp_path, bad)
    assert main(["validate", cfg]) == 2
    assert "tolerence" in capsys.readouterr().err


def test_validate_unknown_kind_and_missing_file(tmp_path, capsys):
    assert main(["validate", str(tmp_path / "nope.json")]) == 2
    bad = {"name": "x", "kind": "solve_everything", "params": {}}
    assert main(["validate", write_cfg(tmp_path, bad)]) == 2


def test_run_pipeline_bundle(tmp_path, capsys):
    cfg = write_cfg(tmp_path, PIPE)
    out = str(tmp_path / "out")
    assert main(["run", cfg, "--out", out]) == 0
    bundle = os.path.join(out, "pipe")
    summary = json.load(open(os.path.join(bundle, "summary.json")))
    assert summary["ok"]
    assert summary["seed"] == 7
    assert summary["config"]["params"]["n"] == 65
    assert all(summary["checks"].values())
    assert os.path.exists(os.path.join(bundle, "profile.csv"))
    assert os.path.exists(os.path.join(bundle, "field.bin"))
    assert os.path.exists(os.path.join(bundle, "timing.log"))
    text = capsys.readouterr().out
    assert "[pass] pipe" in text


def test_run_exit_code_on_failing_check(tmp_path):
    # an analyze scenario whose fit cannot be half-plane-like fails its check
    sc = {"name": "bad-fit", "kind": "analyze_blowup", "seed": 0,
          "params": {"synthetic": {"type": "perturbed", "eps": 3.0,
                                   "kind": "quadratic"},
                     "ladder": {"r0": 0.5, "q": 0.8, "rungs": 6}}}
    cfg = write_cfg(tmp_path, sc)
    out = str(tmp_path / "out2")
    code = main(["run", cfg, "--out", out])
    summary = json.load(open(os.path.join(out, "bad-fit", "summary.json")))
    assert code == 1
    assert not summary["ok"]


def test_reproducibility_byte_identical(tmp_path):
    cfg = write_cfg(tmp_path, PIPE)
    outs = []
    for tag in ("a", "b"):
        out = str(tmp_path / tag)
        assert main(["run", cfg, "--out", out]) == 0
        outs.append(out)
    for name in ("summary.json", "profile.csv", "deviation_rate.csv",
                 "field.bin"):
        pa = open(os.path.join(outs[0], "pipe", name), "rb").read()
        pb = open(os.path.join(outs[1], "pipe", name), "rb").read()
        assert pa == pb, f"{name} differs between same-seed runs"


def test_seed_override_changes_summary_seed(tmp_path):
    cfg = write_cfg(tmp_path, PIPE)
    out = str(tmp_path / "ovr")
    assert main(["run", cfg, "--out", out, "--seed", "13"]) == 0
    summary = json.load(open(os.path.join(out, "pipe", "summary.json")))
    assert summary["seed"] == 13


def test_batch_and_workers(tmp_path):
    cfg = write_cfg(tmp_path, {"scenarios": [
        {**PIPE, "name": "p1"}, {**PIPE, "name": "p2", "seed": 3}]})
    out = str(tmp_path / "batch")
    assert main(["run", cfg, "--out", out, "--workers", "2"]) == 0
    assert os.path.exists(os.path.join(out, "p1", "summary.json"))
    assert os.path.exists(os.path.join(out, "p2", "summary.json"))


def test_plots_emitted(tmp_path, capsys):
    cfg = write_cfg(tmp_path, PIPE)
    out = str(tmp_path / "plots")
    main(["run", cfg, "--out", out])
    assert main(["plot", os.path.join(out, "pipe")]) == 0
    bundle = os.path.join(out, "pipe")
    svgs = [f for f in os.listdir(bundle) if f.endswith(".svg")]
    assert "profile.svg" in svgs
    assert "deviation_rate.svg" in svgs
    head = open(os.path.join(bundle, "profile.svg")).read(100)
    assert head.startswith("<svg")


def test_plot_empty_dir_notice(tmp_path, capsys):
    os.makedirs(tmp_path / "empty")
    assert main(["plot", str(tmp_path / "empty")]) == 0
    assert "nothing plotted" in capsys.readouterr().out


def test_emit_plots_skips_unknown_and_empty(tmp_path):
    d = tmp_path / "bundle"
    os.makedirs(d)
    (d / "weird.csv").write_text("alpha,beta\n1,2\n")
    (d / "empty.csv").write_text("r,W,E,z_W\n")
    written = emit_plots(str(d))
    assert written == []
    notices = (d / "plot_notices.txt").read_text()
    assert "weird.csv" in notices and "empty.csv" in notices


def test_validate_config_function():
    with pytest.raises(RejectedInput):
        validate_config({"scenarios": []})
    scs = validate_config(PIPE)          # single scenario auto-wrapped
    assert scs[0]["name"] == "pipe"


def test_run_scenario_records_errors(tmp_path):
    sc = {"name": "broken", "kind": "analyze_blowup", "seed": 0,
          "params": {"ladder": {"r0": 0.5, "q": 0.8, "rungs": 6}}}
    summary = run_scenario(sc, str(tmp_path))
    assert not summary["ok"]
    assert summary["error"]["type"] == "rejected_input"
    assert os.path.exists(tmp_path / "broken" / "summary.json")


def test_eigen_scenario_cli(tmp_path):
    sc = {"name": "sq", "kind": "solve_eigen", "seed": 0,
          "params": {"domain": "square", "n": 64, "size": 1.0}}
    out = str(tmp_path / "eig")
    assert main(["run", write_cfg(tmp_path, sc), "--out", out]) == 0
    summary = json.load(open(os.path.join(out, "sq", "summary.json")))
    assert summary["checks"]["matches_reference"]
    assert summary["numbers"]["lambda1"] == pytest.approx(2 * np.pi ** 2,
                                                          rel=0.01)
