import json

import numpy as np
import pytest

from gatpad import providers
from gatpad.adapter import AdapterConfig
from gatpad.detector import DetectorConfig, ModelConfig
from gatpad.harness import (
    ConfigError,
    LeaveOneOut,
    PairSplit,
    ProtocolSpec,
    protocol_from_json,
    registry_from_json,
    results_to_csv,
    results_to_json,
    run_protocol,
)
from gatpad.trainer import TrainConfig

LEVEL_DIMS = ((2, 4, 4), (3, 4, 4))
TINY_MODEL = ModelConfig(
    detector=DetectorConfig(input_dims=(3, 8, 8), channels=(2, 3), feature_dim=7),
    adapter=AdapterConfig(level_dims=LEVEL_DIMS, vertex_dim=6, out_dim=5,
                          heads=2, proj_channels=2, pool_hw=2),
)
TRAIN = TrainConfig(model=TINY_MODEL, epochs=1, batch_size=8, seed=0)


def synth(ds_id, seed):
    return providers.SynthSpec(count_per_class=6, level_dims=LEVEL_DIMS,
                               raw_dims=(3, 8, 8), dataset_id=ds_id, seed=seed)


def registry4():
    return {i: synth(i, seed) for seed, i in enumerate("OCIM")}


class TestModes:
    def test_pair_split_complement(self):
        spec = ProtocolSpec(registry=registry4(),
                            mode=PairSplit(("O", "C"), ("I", "M")), train_config=TRAIN)
        rows, score_sets = run_protocol(spec)
        assert len(rows) == 1
        assert rows[0].train_ids == ("O", "C")
        assert rows[0].test_ids == ("I", "M")
        # test pool is exactly I union M
        assert set(score_sets[0].dataset_ids) == {"I", "M"}
        assert len(score_sets[0]) == 24

    def test_pair_both_directions(self):
        spec = ProtocolSpec(registry=registry4(),
                            mode=PairSplit(("O", "C"), ("I", "M"), both_directions=True),
                            train_config=TRAIN)
        rows, _ = run_protocol(spec)
        assert [(r.train_ids, r.test_ids) for r in rows] == [
            (("O", "C"), ("I", "M")), (("I", "M"), ("O", "C"))]

    def test_leave_one_out_all_rows(self):
        spec = ProtocolSpec(registry=registry4(), mode=LeaveOneOut(), train_config=TRAIN)
        rows, _ = run_protocol(spec)
        assert len(rows) == 4
        for row in rows:
            assert len(row.train_ids) == 3 and len(row.test_ids) == 1
            assert set(row.train_ids) | set(row.test_ids) == set("OCIM")
            assert not set(row.train_ids) & set(row.test_ids)

    def test_leave_one_out_single(self):
        spec = ProtocolSpec(registry=registry4(), mode=LeaveOneOut("M"), train_config=TRAIN)
        rows, _ = run_protocol(spec)
        assert len(rows) == 1
        assert rows[0].test_ids == ("M",)

    def test_overlap_rejected(self):
        with pytest.raises(ConfigError, match="overlap"):
            spec = ProtocolSpec(registry=registry4(),
                                mode=PairSplit(("O", "C"), ("C", "M")), train_config=TRAIN)
            run_protocol(spec)

    def test_unknown_dataset_rejected(self):
        with pytest.raises(ConfigError, match="unknown dataset"):
            run_protocol(ProtocolSpec(registry=registry4(), mode=LeaveOneOut("X"),
                                      train_config=TRAIN))


class TestDeterminismAndExports:
    def test_same_seed_identical_rows(self):
        spec = ProtocolSpec(registry=registry4(), mode=PairSplit(("O", "C"), ("I", "M")),
                            train_config=TRAIN)
        rows_a, _ = run_protocol(spec)
        rows_b, _ = run_protocol(spec)
        assert rows_a == rows_b

    def test_rows_carry_config_hash_and_replay(self):
        spec = ProtocolSpec(registry=registry4(), mode=LeaveOneOut("O"), train_config=TRAIN)
        rows, _ = run_protocol(spec)
        from gatpad.trainer import config_hash

        assert rows[0].config_hash == config_hash(TRAIN)
        replay, _ = run_protocol(spec)
        assert replay[0] == rows[0]

    def test_exports(self, tmp_path):
        spec = ProtocolSpec(registry=registry4(),
                            mode=PairSplit(("O", "C"), ("I", "M"), both_directions=True),
                            train_config=TRAIN)
        rows, _ = run_protocol(spec, out_dir=tmp_path)
        results = json.loads((tmp_path / "results.json").read_text())
        assert len(results["rows"]) == 2
        assert "HTER(%)↓" in results["columns"]
        csv_text = (tmp_path / "results.csv").read_text()
        assert "AUC(%)↑" in csv_text.splitlines()[0]
        assert (tmp_path / "scores_O-C_to_I-M.csv").exists()
        assert (tmp_path / "roc_I-M_to_O-C.csv").exists()

    def test_percentages_in_range(self):
        spec = ProtocolSpec(registry=registry4(), mode=LeaveOneOut("I"), train_config=TRAIN)
        rows, _ = run_protocol(spec)
        r = rows[0]
        for v in (r.hter_pct, r.auc_pct, r.bpcer_pct):
            assert 0.0 <= v <= 100.0


class TestJsonConfig:
    def make_json(self):
        return {
            "registry": {
                i: {"synth": {"count_per_class": 6, "level_dims": [[2, 4, 4], [3, 4, 4]],
                              "raw_dims": [3, 8, 8], "seed": k}}
                for k, i in enumerate("ABCD")
            },
            "mode": {"type": "pair", "train": ["A", "B"], "test": ["C", "D"]},
            "train": {
                "epochs": 1, "batch_size": 8,
                "model": {
                    "detector": {"input_dims": [3, 8, 8], "channels": [2, 3], "feature_dim": 7},
                    "adapter": {"level_dims": [[2, 4, 4], [3, 4, 4]], "vertex_dim": 6,
                                "out_dim": 5, "proj_channels": 2, "pool_hw": 2},
                },
            },
        }

    def test_full_parse_and_run(self):
        spec = protocol_from_json(self.make_json())
        rows, _ = run_protocol(spec)
        assert rows[0].train_ids == ("A", "B")

    def test_registry_entry_kinds(self, tmp_path):
        samples = providers.generate_synthetic(synth("disk", 9))
        path = providers.save_container(tmp_path / "disk.fstk", samples)
        reg = registry_from_json(
            {"disk": {"container": path.name}, "gen": {"synth": {"count_per_class": 3}}},
            base_dir=tmp_path)
        assert reg["disk"] == path
        assert reg["gen"].dataset_id == "gen"

    def test_missing_mode_reports_path(self):
        data = self.make_json()
        del data["mode"]
        with pytest.raises(ConfigError, match="mode"):
            protocol_from_json(data)

    def test_bad_mode_type(self):
        data = self.make_json()
        data["mode"] = {"type": "loop"}
        with pytest.raises(ConfigError, match="mode.type"):
            protocol_from_json(data)

    def test_bad_registry_entry_reports_dataset(self):
        data = self.make_json()
        data["registry"]["A"] = {"what": 1}
        with pytest.raises(ConfigError, match="registry.A"):
            protocol_from_json(data)

    def test_bad_train_key_reports_path(self):
        data = self.make_json()
        data["train"]["optimizer"] = "sgd"
        with pytest.raises(ConfigError, match="train"):
            protocol_from_json(data)

    def test_unknown_top_level_key(self):
        data = self.make_json()
        data["extra"] = 1
        with pytest.raises(ConfigError, match="unknown keys"):
            protocol_from_json(data)


def test_results_serializers(tmp_path):
    from gatpad.harness import ResultsRow

    rows = [ResultsRow(("A",), ("B",), 12.5, 88.0, 40.0, 0, "abc123def456")]
    results_to_csv(rows, tmp_path / "r.csv")
    results_to_json(rows, tmp_path / "r.json")
    assert "12.50" in (tmp_path / "r.csv").read_text()
    data = json.loads((tmp_path / "r.json").read_text())
    assert data["rows"][0]["hter_pct"] == 12.5
    with pytest.raises(ValueError):
        ResultsRow(("A",), ("B",), 120.0, 88.0, 40.0, 0, "x")
