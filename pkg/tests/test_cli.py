import json

import numpy as np
import pytest

from gatpad import providers
from gatpad.cli import main

LEVEL_DIMS = [[2, 4, 4], [3, 4, 4]]
TRAIN_SECTION = {
    "epochs": 1,
    "batch_size": 8,
    "model": {
        "detector": {"input_dims": [3, 8, 8], "channels": [2, 3], "feature_dim": 7},
        "adapter": {"level_dims": LEVEL_DIMS, "vertex_dim": 6, "out_dim": 5,
                    "proj_channels": 2, "pool_hw": 2},
    },
}


def synth_spec_json(tmp_path, ids=("A", "B", "C", "D")):
    spec = {"datasets": {
        i: {"count_per_class": 6, "level_dims": LEVEL_DIMS, "raw_dims": [3, 8, 8], "seed": k}
        for k, i in enumerate(ids)
    }}
    path = tmp_path / "synth.json"
    path.write_text(json.dumps(spec))
    return path


def test_unknown_flag_exits_nonzero_with_usage(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["gen-synth", "--nonsense"])
    assert exc.value.code != 0
    assert "usage" in capsys.readouterr().err


def test_unknown_command_exits_nonzero(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code != 0


def test_gen_synth_then_protocol_pipeline(tmp_path, capsys):
    spec = synth_spec_json(tmp_path)
    assert main(["gen-synth", "--spec", str(spec), "--out", str(tmp_path / "data")]) == 0
    registry = json.loads((tmp_path / "data" / "registry.json").read_text())
    assert set(registry) == {"A", "B", "C", "D"}
    for entry in registry.values():
        assert (tmp_path / "data" / entry["container"]).exists()

    proto = {
        "registry": "data/registry.json",
        "mode": {"type": "pair", "train": ["A", "B"], "test": ["C", "D"],
                 "both_directions": True},
        "train": TRAIN_SECTION,
    }
    proto_path = tmp_path / "proto.json"
    proto_path.write_text(json.dumps(proto))
    assert main(["protocol", "--spec", str(proto_path), "--out", str(tmp_path / "res")]) == 0
    results = json.loads((tmp_path / "res" / "results.json").read_text())
    assert len(results["rows"]) == 2
    assert (tmp_path / "res" / "results.csv").exists()


def test_train_eval_roc_round_trip(tmp_path):
    spec = synth_spec_json(tmp_path, ids=("T", "V"))
    assert main(["gen-synth", "--spec", str(spec), "--out", str(tmp_path / "data")]) == 0
    config = {"train": TRAIN_SECTION,
              "data": {"train": [str(tmp_path / "data" / "T.fstk")],
                       "val": [str(tmp_path / "data" / "V.fstk")]}}
    cfg_path = tmp_path / "train.json"
    cfg_path.write_text(json.dumps(config))
    assert main(["train", "--config", str(cfg_path), "--out", str(tmp_path / "run")]) == 0
    assert (tmp_path / "run" / "model.bin").exists()
    assert (tmp_path / "run" / "trainlog.jsonl").read_text().count("\n") == 1

    report = tmp_path / "report.json"
    scores = tmp_path / "scores.csv"
    assert main(["eval", "--model", str(tmp_path / "run" / "model.bin"),
                 "--data", str(tmp_path / "data" / "V.fstk"),
                 "--report", str(report), "--scores", str(scores)]) == 0
    rep = json.loads(report.read_text())
    assert {"auc", "hter"} <= set(rep)

    roc_out = tmp_path / "roc.csv"
    assert main(["roc", "--scores", str(scores), "--out", str(roc_out)]) == 0
    header = roc_out.read_text().splitlines()[0]
    assert header == "apcer,one_minus_bpcer"


def test_gradcheck_quick(capsys):
    assert main(["gradcheck", "--seeds", "1"]) == 0
    out = capsys.readouterr().out
    assert "softmax_masked" in out and "loss_end_to_end" in out


def test_malformed_config_reports_key_path(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"registry": {"A": {"synth": {"count_per_class": 0}}},
                               "mode": {"type": "pair", "train": ["A"], "test": ["A"]}}))
    assert main(["protocol", "--spec", str(bad), "--out", str(tmp_path / "o")]) != 0
    err = capsys.readouterr().err
    assert err.startswith("error: config:")
    assert "registry.A.synth" in err


def test_missing_file_reports_one_line(tmp_path, capsys):
    assert main(["protocol", "--spec", str(tmp_path / "nope.json"),
                 "--out", str(tmp_path / "o")]) != 0
    err = capsys.readouterr().err.strip()
    assert err.startswith("error:")
    assert len(err.splitlines()) == 1


def test_eval_rejects_corrupt_model(tmp_path, capsys):
    model = tmp_path / "model.bin"
    model.write_bytes(b"garbage bytes that are not a checkpoint")
    samples = providers.generate_synthetic(providers.SynthSpec(
        count_per_class=2, level_dims=tuple(tuple(d) for d in LEVEL_DIMS),
        raw_dims=(3, 8, 8)))
    data = tmp_path / "d.fstk"
    providers.save_container(data, samples)
    assert main(["eval", "--model", str(model), "--data", str(data),
                 "--report", str(tmp_path / "r.json")]) != 0
    assert capsys.readouterr().err.startswith("error: format:")
