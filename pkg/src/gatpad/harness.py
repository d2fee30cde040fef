"""Cross-dataset protocol runner.

Datasets are registered by id and resolved from container files or
synthetic recipes. Leave-one-out mode trains on all but one registered
dataset and tests on the held-out one; pair mode trains on a named group
and tests on the complementary group, optionally in both directions.
Each run emits one results row (HTER, AUC, BPCER at the APCER target, as
percentages) plus score and ROC exports, tagged with a hash of the full
training configuration so any row can be replayed.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence


from . import metrics as metrics_mod
from . import providers, trainer
from .detector import Sample
from .providers import SynthSpec

__all__ = [
    "ConfigError",
    "LeaveOneOut",
    "PairSplit",
    "ProtocolSpec",
    "ResultsRow",
    "run_protocol",
    "protocol_from_json",
    "registry_from_json",
    "synth_from_json",
    "results_to_csv",
    "results_to_json",
    "RESULT_COLUMNS",
]

# Column header mirrors the usual results-table convention: lower HTER and
# BPCER are better, higher AUC is better.
RESULT_COLUMNS = ["train", "test", "HTER(%)↓", "AUC(%)↑", "BPCER@APCER=1%(%)↓", "seed", "config"]


class ConfigError(ValueError):
    """Malformed protocol configuration; message carries the key path."""


@dataclass(frozen=True)
class LeaveOneOut:
    """Train on all registered datasets but one; test on the held-out id.

    ``heldout=None`` expands to one row per registered dataset.
    """

    heldout: str | None = None


@dataclass(frozen=True)
class PairSplit:
    """Train on ``train_ids``, test jointly on ``test_ids`` (disjoint)."""

    train_ids: tuple[str, ...]
    test_ids: tuple[str, ...]
    both_directions: bool = False


@dataclass
class ProtocolSpec:
    registry: dict[str, str | Path | SynthSpec]
    mode: LeaveOneOut | PairSplit
    train_config: trainer.TrainConfig = field(default_factory=trainer.TrainConfig)
    apcer_target: float = 0.01


@dataclass
class ResultsRow:
    train_ids: tuple[str, ...]
    test_ids: tuple[str, ...]
    hter_pct: float
    auc_pct: float
    bpcer_pct: float
    seed: int
    config_hash: str

    def __post_init__(self):
        for name in ("hter_pct", "auc_pct", "bpcer_pct"):
            v = getattr(self, name)
            if not 0.0 <= v <= 100.0:
                raise ValueError(f"{name} must be a percentage in [0, 100], got {v}")

    def jsonable(self) -> dict:
        return {
            "train": list(self.train_ids),
            "test": list(self.test_ids),
            "hter_pct": self.hter_pct,
            "auc_pct": self.auc_pct,
            "bpcer_pct": self.bpcer_pct,
            "seed": self.seed,
            "config_hash": self.config_hash,
        }


def _resolve_registry(registry: dict) -> dict[str, list[Sample]]:
    datasets = {}
    for ds_id, source in registry.items():
        if isinstance(source, SynthSpec):
            datasets[ds_id] = providers.generate_synthetic(source)
        elif isinstance(source, (str, Path)):
            datasets[ds_id] = providers.load_container(source)
        else:
            raise ConfigError(f"registry.{ds_id}: expected a container path or a synthetic spec")
        if not datasets[ds_id]:
            raise ConfigError(f"registry.{ds_id}: dataset is empty")
    return datasets


def _expand_rows(spec: ProtocolSpec) -> list[tuple[tuple[str, ...], tuple[str, ...]]]:
    ids = list(spec.registry)
    mode = spec.mode
    if isinstance(mode, LeaveOneOut):
        if len(ids) < 2:
            raise ConfigError("mode: leave-one-out needs at least 2 registered datasets")
        held = ids if mode.heldout is None else [mode.heldout]
        rows = []
        for h in held:
            if h not in spec.registry:
                raise ConfigError(f"mode.heldout: unknown dataset {h!r}")
            rows.append((tuple(i for i in ids if i != h), (h,)))
        return rows
    if isinstance(mode, PairSplit):
        for key, group in (("train", mode.train_ids), ("test", mode.test_ids)):
            for i in group:
                if i not in spec.registry:
                    raise ConfigError(f"mode.{key}: unknown dataset {i!r}")
        overlap = set(mode.train_ids) & set(mode.test_ids)
        if overlap:
            raise ConfigError(f"mode: train and test overlap on {sorted(overlap)}")
        rows = [(tuple(mode.train_ids), tuple(mode.test_ids))]
        if mode.both_directions:
            rows.append((tuple(mode.test_ids), tuple(mode.train_ids)))
        return rows
    raise ConfigError(f"mode: unsupported mode object {type(mode).__name__}")


def run_protocol(spec: ProtocolSpec, out_dir: str | Path | None = None
                 ) -> tuple[list[ResultsRow], list[metrics_mod.ScoreSet]]:
    """Train and evaluate every row of the protocol; fully seeded.

    When ``out_dir`` is given, writes results.json, results.csv, and
    per-row scores_*.csv / roc_*.csv files there.
    """
    datasets = _resolve_registry(spec.registry)
    cfg_hash = trainer.config_hash(spec.train_config)
    rows, score_sets = [], []
    for train_ids, test_ids in _expand_rows(spec):
        if set(train_ids) & set(test_ids):
            raise ConfigError(f"train {train_ids} and test {test_ids} overlap")
        train_pool = [s for i in train_ids for s in datasets[i]]
        test_pool = [s for i in test_ids for s in datasets[i]]
        params, _ = trainer.train(spec.train_config, train_pool)
        scores = trainer.predict_scores(params, test_pool, spec.train_config.model)
        report = metrics_mod.evaluate(scores, apcer_target=spec.apcer_target)
        rows.append(ResultsRow(
            train_ids=train_ids,
            test_ids=test_ids,
            hter_pct=100.0 * report["hter"],
            auc_pct=100.0 * report["auc"],
            bpcer_pct=100.0 * report["bpcer_at_apcer"]["value"],
            seed=spec.train_config.seed,
            config_hash=cfg_hash,
        ))
        score_sets.append(scores)
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        results_to_json(rows, out_dir / "results.json")
        results_to_csv(rows, out_dir / "results.csv")
        for row, scores in zip(rows, score_sets):
            tag = f"{'-'.join(row.train_ids)}_to_{'-'.join(row.test_ids)}"
            scores.to_csv(out_dir / f"scores_{tag}.csv")
            metrics_mod.roc(scores).to_csv(out_dir / f"roc_{tag}.csv")
    return rows, score_sets


def results_to_csv(rows: Sequence[ResultsRow], path: str | Path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(RESULT_COLUMNS)
        for r in rows:
            w.writerow([
                "+".join(r.train_ids), "+".join(r.test_ids),
                f"{r.hter_pct:.2f}", f"{r.auc_pct:.2f}", f"{r.bpcer_pct:.2f}",
                r.seed, r.config_hash,
            ])
    return path


def results_to_json(rows: Sequence[ResultsRow], path: str | Path) -> Path:
    path = Path(path)
    payload = {"columns": RESULT_COLUMNS, "rows": [r.jsonable() for r in rows]}
    path.write_text(json.dumps(payload, indent=2) + "\n")
    return path


# ---------------------------------------------------------------------------
# JSON configuration

def synth_from_json(data: dict, path: str) -> SynthSpec:
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected an object")
    data = dict(data)
    try:
        if "level_dims" in data:
            data["level_dims"] = tuple(tuple(d) for d in data["level_dims"])
        if "raw_dims" in data:
            data["raw_dims"] = tuple(data["raw_dims"])
        if "domain_shift" in data:
            data["domain_shift"] = tuple(data["domain_shift"])
        return SynthSpec(**data)
    except (TypeError, ValueError) as err:
        raise ConfigError(f"{path}: {err}") from None


def registry_from_json(data, base_dir: str | Path = ".",
                       path: str = "registry") -> dict[str, str | Path | SynthSpec]:
    """Registry entries are {"container": path} or {"synth": {...}} objects."""
    if not isinstance(data, dict) or not data:
        raise ConfigError(f"{path}: expected a non-empty object of dataset entries")
    registry: dict[str, str | Path | SynthSpec] = {}
    for ds_id, entry in data.items():
        here = f"{path}.{ds_id}"
        if not isinstance(entry, dict) or len(entry) != 1:
            raise ConfigError(f'{here}: expected exactly one of "container" or "synth"')
        kind, value = next(iter(entry.items()))
        if kind == "container":
            registry[ds_id] = Path(base_dir) / value
        elif kind == "synth":
            spec = synth_from_json(value, f"{here}.synth")
            if spec.dataset_id != ds_id:
                spec = replace(spec, dataset_id=ds_id)
            registry[ds_id] = spec
        else:
            raise ConfigError(f"{here}: unknown source kind {kind!r}")
    return registry


def _mode_from_json(data, path: str = "mode") -> LeaveOneOut | PairSplit:
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected an object")
    kind = data.get("type")
    if kind == "leave_one_out":
        return LeaveOneOut(heldout=data.get("heldout"))
    if kind == "pair":
        try:
            return PairSplit(
                train_ids=tuple(data["train"]),
                test_ids=tuple(data["test"]),
                both_directions=bool(data.get("both_directions", False)),
            )
        except KeyError as err:
            raise ConfigError(f"{path}.{err.args[0]}: required for pair mode") from None
    raise ConfigError(f'{path}.type: expected "leave_one_out" or "pair", got {kind!r}')


def protocol_from_json(data: dict, base_dir: str | Path = ".") -> ProtocolSpec:
    if not isinstance(data, dict):
        raise ConfigError("protocol: expected a top-level object")
    unknown = set(data) - {"registry", "mode", "train", "apcer_target"}
    if unknown:
        raise ConfigError(f"protocol: unknown keys {sorted(unknown)}")
    if "registry" not in data:
        raise ConfigError("registry: required")
    if "mode" not in data:
        raise ConfigError("mode: required")
    registry_data = data["registry"]
    if isinstance(registry_data, str):
        reg_path = Path(base_dir) / registry_data
        try:
            registry_data = json.loads(reg_path.read_text())
        except OSError as err:
            raise ConfigError(f"registry: cannot read {reg_path}: {err}") from None
        except json.JSONDecodeError as err:
            raise ConfigError(f"registry: {reg_path} is not valid JSON: {err}") from None
        base_dir = reg_path.parent
    registry = registry_from_json(registry_data, base_dir=base_dir)
    mode = _mode_from_json(data["mode"])
    try:
        train_config = trainer.config_from_dict(data.get("train", {}))
    except ValueError as err:
        raise ConfigError(str(err)) from None
    spec = ProtocolSpec(registry=registry, mode=mode, train_config=train_config,
                        apcer_target=float(data.get("apcer_target", 0.01)))
    return spec
