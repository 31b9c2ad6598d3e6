import json
import math
import statistics
import struct
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hessae import cli, persist, pipeline
from hessae.config import (CONFIG_VERSION, ConfigError, HessaeSettings,
                           dump_config, from_dict, load_config, preset)
from hessae.report import Report, StageResult
from hessae.svm import SvmGrid

from conftest import write_csv

QUICK = replace(preset("ad"), repeats=2,
                hessae=HessaeSettings((12, 6), 1e-5, 5.0, 0.02, 3),
                svm=SvmGrid(C_values=(10.0,), gamma_exponents=(0,), folds=3))


def test_preset_values():
    pd = preset("pendigits")
    assert (pd.hessae.arch, pd.hessae.lam, pd.hessae.beta, pd.hessae.rho, pd.hessae.epochs) == \
        ((80, 30, 10), 1e-4, 4.0, 0.05, 1000)
    st_ = preset("statlog").hessae
    assert (st_.arch, st_.lam, st_.beta) == ((120, 60, 20), 1e-3, 5.0)
    assert preset("urban").hessae.arch == (600, 300, 80)
    assert preset("ad").dataset == "surrogate:ad"
    with pytest.raises(ConfigError):
        preset("mnist")


def test_config_yaml_round_trip(tmp_path):
    cfg = replace(preset("statlog"), seed=7, stages=("OF", "full"))
    p = tmp_path / "c.yaml"
    p.write_text(dump_config(cfg))
    back = load_config(p)
    assert back == cfg
    assert back.to_dict()["version"] == CONFIG_VERSION


def test_config_rejects_bad_input(tmp_path):
    d = preset("ad").to_dict()
    with pytest.raises(ConfigError, match="version"):
        from_dict({**d, "version": 99})
    with pytest.raises(ConfigError):
        from_dict({**d, "colour": "blue"})
    with pytest.raises(ConfigError):
        from_dict({**d, "stages": ["OF", "magic"]})
    with pytest.raises(ConfigError):
        replace(preset("ad"), repeats=0).validate()
    from_preset = from_dict({"preset": "pendigits", "seed": 3})
    assert from_preset.seed == 3 and from_preset.hessae.arch == (80, 30, 10)


def test_seed_derivation():
    cfg = replace(preset("ad"), seed=10)
    assert cfg.seed_for(0, "split") == 10 and cfg.seed_for(2, "split") == 12
    assert cfg.seed_for(1, "hessae") != cfg.seed_for(1, "ssae")


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=1, max_size=10))
def test_stage_mean_and_population_std(accs):
    s = StageResult("OF")
    for a in accs:
        s.add(a, None, 0.0, "d", {})
    assert s.mean == pytest.approx(statistics.fmean(accs), abs=1e-12)
    assert s.std == pytest.approx(statistics.pstdev(accs), abs=1e-12)


def test_single_repeat_std_zero_and_failures():
    s = StageResult("full")
    s.add(0.9, None, 1.0, "d", {})
    assert s.std == 0.0
    s.add(None, "ValueError: boom", 1.0, "d", {})
    assert s.failed == 1 and s.mean == 0.9
    empty = StageResult("DF")
    assert math.isnan(empty.mean) and math.isnan(empty.std)


def test_report_outputs(tmp_path):
    s = StageResult("OF")
    s.add(0.5, None, 1.0, "abc", {"C": 1.0})
    s.add(1.0, None, 2.0, "def", {"C": np.float64(10.0)})
    rep = Report({"name": "x", "repeats": 2, "seed": 0}, [s])
    paths = rep.write(tmp_path / "out")
    assert sorted(p.suffix for p in paths) == [".csv", ".json", ".txt"]
    data = json.loads((tmp_path / "out.json").read_text())
    assert data["stages"][0]["mean"] == 0.75
    assert "75.00 ± 25.00" in (tmp_path / "out.txt").read_text()
    assert "seconds" not in rep.comparable()


@pytest.fixture(scope="module")
def quick_report():
    return pipeline.run_experiment(replace(QUICK, stages=("OF", "DF", "HF&L1", "full", "lasso")),
                                   keep_models=True)


def test_stages_share_splits_and_succeed(quick_report):
    digests = {tuple(s.split_digests) for s in quick_report.stages}
    assert len(digests) == 1
    assert len(set(next(iter(digests)))) == 2  # two different repeats
    for s in quick_report.stages:
        assert s.failed == 0, s.errors
        assert all(0 <= a <= 1 for a in s.ok)
    assert quick_report.splits[0]["n_test"] == 30


def test_experiment_is_deterministic(quick_report):
    again = pipeline.run_experiment(replace(QUICK, stages=("OF", "DF", "HF&L1", "full", "lasso")))
    assert again.comparable() == quick_report.comparable()


def test_failed_stage_is_recorded_not_fatal():
    # r_w this small keeps no samples of any class
    from hessae.wlppd import WlppdConfig
    cfg = replace(QUICK, repeats=1, stages=("OF", "full"), wlppd=WlppdConfig(r_w=0.01))
    rep = pipeline.run_experiment(cfg)
    assert rep.stage("OF").failed == 0
    assert rep.stage("full").failed == 1 and "keeps no samples" in rep.stage("full").errors[0]


def test_model_round_trip_predicts_bitwise(tmp_path, quick_report):
    data = pipeline.load_dataset(QUICK)
    _, test, _, _ = pipeline.prepare_split(data, QUICK, 0)
    for stage in ("full", "HF&L1", "lasso"):
        pipe = quick_report.models[(0, stage)]
        path = persist.save_model(tmp_path / f"{stage}.hsm", pipe, QUICK.to_dict(), QUICK.seed)
        back, header = persist.load_model(path)
        assert header["seed"] == QUICK.seed and header["config"]["name"] == "ad"
        a = pipeline.predict(pipe, test.features)
        b = pipeline.predict(back, test.features)
        assert a.tobytes() == b.tobytes()


def test_model_file_corruption(tmp_path, quick_report):
    path = persist.save_model(tmp_path / "m.hsm", quick_report.models[(0, "OF")], {}, 0)
    raw = bytearray(path.read_bytes())
    future = bytearray(raw)
    struct.pack_into("<I", future, 8, 99)
    (tmp_path / "v.hsm").write_bytes(future)
    with pytest.raises(persist.VersionMismatchError, match="99"):
        persist.load_model(tmp_path / "v.hsm")
    (tmp_path / "t.hsm").write_bytes(raw[:-100])
    with pytest.raises(persist.ChecksumError):
        persist.load_model(tmp_path / "t.hsm")
    flipped = bytearray(raw)
    flipped[len(raw) // 2] ^= 0xFF
    (tmp_path / "f.hsm").write_bytes(flipped)
    with pytest.raises(persist.ModelFileError):
        persist.load_model(tmp_path / "f.hsm")
    (tmp_path / "x.hsm").write_bytes(b"not a model")
    with pytest.raises(persist.ModelFileError):
        persist.load_model(tmp_path / "x.hsm")


def test_checksum_ignores_the_timestamp(tmp_path, quick_report):
    pipe = quick_report.models[(0, "lasso")]
    a = persist.save_model(tmp_path / "a.hsm", pipe, {"k": 1}, 0)
    b = persist.save_model(tmp_path / "b.hsm", pipe, {"k": 1}, 0)
    assert persist.model_checksum(a) == persist.model_checksum(b)


def test_cli_train_evaluate_and_report(tmp_path, capsys):
    cfg_path = tmp_path / "quick.yaml"
    cfg_path.write_text(dump_config(replace(QUICK, repeats=1)))
    model = tmp_path / "m.hsm"
    assert cli.main(["train", "--config", str(cfg_path), "--stage", "OF", "--out", str(model)]) == 0
    assert "hold-out accuracy" in capsys.readouterr().out

    data = pipeline.load_dataset(QUICK)
    rows = [[repr(float(v)) for v in x] + [int(c)] for x, c in zip(data.features, data.labels)]
    csv = write_csv(tmp_path / "ad.csv", rows)
    preds = tmp_path / "pred.txt"
    assert cli.main(["evaluate", "--model", str(model), "--dataset", str(csv),
                     "--out", str(preds)]) == 0
    assert "accuracy" in capsys.readouterr().out
    assert len(np.loadtxt(preds)) == data.n_samples

    out = tmp_path / "rep"
    assert cli.main(["ablate", "--config", str(cfg_path), "--stage", "OF", "--stage", "lasso",
                     "--out", str(out)]) == 0
    text = capsys.readouterr().out
    assert "OF" in text and "lasso" in text
    assert (tmp_path / "rep.json").exists()


def test_cli_errors_exit_2(tmp_path, capsys):
    assert cli.main(["train", "--dataset", str(tmp_path / "nope.csv"), "--stage", "OF"]) == 2
    bad = tmp_path / "bad.hsm"
    bad.write_bytes(b"junk")
    assert cli.main(["evaluate", "--model", str(bad), "--dataset", "x.csv"]) == 2
    assert "error:" in capsys.readouterr().err


def test_cli_selftest_single_check(capsys):
    assert cli.main(["selftest", "--check", "vote"]) == 0
    assert capsys.readouterr().out.startswith("[PASS]")


def test_cli_show_config(capsys):
    assert cli.main(["show-config", "--preset", "pendigits", "--seed", "4"]) == 0
    text = capsys.readouterr().out
    assert "seed: 4" in text and "version: 1" in text
