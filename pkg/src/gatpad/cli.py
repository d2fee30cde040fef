"""Command-line front end.

Subcommands: gen-synth, train, eval, protocol, roc, gradcheck. Every
failure exits nonzero with a single machine-parsable line on stderr of
the form ``error: <kind>: <message>``.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import harness, metrics, providers, trainer, verification


def _fail(kind: str, message: str) -> int:
    print(f"error: {kind}: {message}", file=sys.stderr)
    return 1


def _load_json(path: str, what: str) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except OSError as err:
        raise harness.ConfigError(f"{what}: cannot read {path}: {err}") from None
    except json.JSONDecodeError as err:
        raise harness.ConfigError(f"{what}: {path} is not valid JSON: {err}") from None


def cmd_gen_synth(args) -> int:
    """Generate synthetic containers plus a registry file for `protocol`."""
    data = _load_json(args.spec, "spec")
    if "datasets" in data:
        entries = data["datasets"]
        if not isinstance(entries, dict) or not entries:
            raise harness.ConfigError("spec.datasets: expected a non-empty object")
    else:
        entries = {data.get("dataset_id", "synth"): data}
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    registry = {}
    for ds_id, spec_data in entries.items():
        spec_data = dict(spec_data)
        spec_data["dataset_id"] = ds_id
        if args.seed is not None:
            spec_data["seed"] = args.seed + len(registry)
        spec = harness.synth_from_json(spec_data, f"spec.datasets.{ds_id}")
        samples = providers.generate_synthetic(spec)
        path = out_dir / f"{ds_id}.fstk"
        providers.save_container(path, samples)
        registry[ds_id] = {"container": path.name}
        print(f"wrote {path} ({len(samples)} samples)")
    reg_path = out_dir / "registry.json"
    reg_path.write_text(json.dumps(registry, indent=2) + "\n")
    print(f"wrote {reg_path}")
    return 0


def _load_datasets(paths: list[str], what: str) -> list:
    samples = []
    for p in paths:
        path = Path(p)
        if path.is_dir():
            files = sorted(path.glob("*.fstk"))
            if not files:
                raise harness.ConfigError(f"{what}: no .fstk containers in {path}")
            for f in files:
                samples.extend(providers.load_container(f))
        else:
            samples.extend(providers.load_container(path))
    return samples


def cmd_train(args) -> int:
    data = _load_json(args.config, "config")
    unknown = set(data) - {"train", "data"}
    if unknown:
        raise harness.ConfigError(f"config: unknown keys {sorted(unknown)}")
    config = trainer.config_from_dict(data.get("train", {}))
    data_cfg = data.get("data", {})
    if not isinstance(data_cfg, dict) or "train" not in data_cfg:
        raise harness.ConfigError("config.data.train: required list of container paths")
    train_samples = _load_datasets(data_cfg["train"], "config.data.train")
    val_samples = _load_datasets(data_cfg.get("val", []), "config.data.val") or None
    params, log = trainer.train(config, train_samples, val_samples)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    model_path = out_dir / "model.bin"
    providers.save_checkpoint(model_path, params, trainer.config_to_dict(config))
    (out_dir / "trainlog.jsonl").write_text(log.to_jsonl())
    (out_dir / "config.json").write_text(json.dumps(
        {"train": trainer.config_to_dict(config),
         "config_hash": trainer.config_hash(config)}, indent=2) + "\n")
    print(f"wrote {model_path} (final loss {log.final_loss():.4f}, "
          f"{log.total_wall_time_s:.1f}s)")
    return 0


def cmd_eval(args) -> int:
    params, cfg_dict = providers.load_checkpoint(args.model)
    config = trainer.config_from_dict(cfg_dict)
    samples = _load_datasets([args.data], "data")
    if not samples:
        raise harness.ConfigError("data: no samples to evaluate")
    scores = trainer.predict_scores(params, samples, config.model)
    report = metrics.evaluate(scores)
    report_path = Path(args.report)
    report_path.parent.mkdir(parents=True, exist_ok=True)
    report_path.write_text(json.dumps(report, indent=2) + "\n")
    if args.scores:
        scores.to_csv(args.scores)
    print(f"wrote {report_path} (hter {report['hter']:.4f}, auc {report['auc']:.4f})")
    return 0


def cmd_protocol(args) -> int:
    data = _load_json(args.spec, "spec")
    spec = harness.protocol_from_json(data, base_dir=Path(args.spec).parent)
    rows, _ = harness.run_protocol(spec, out_dir=args.out)
    for row in rows:
        print(f"{'+'.join(row.train_ids)} -> {'+'.join(row.test_ids)}: "
              f"HTER {row.hter_pct:.2f}%  AUC {row.auc_pct:.2f}%  "
              f"BPCER@APCER=1% {row.bpcer_pct:.2f}%")
    print(f"wrote {Path(args.out) / 'results.json'} and results.csv")
    return 0


def cmd_roc(args) -> int:
    scores = metrics.ScoreSet.from_csv(args.scores)
    curve = metrics.roc(scores)
    curve.to_csv(args.out)
    print(f"wrote {args.out} ({len(curve.points)} points)")
    return 0


def cmd_gradcheck(args) -> int:
    print(f"running finite-difference suite ({args.seeds} seeds per op)")
    results = verification.run_gradient_suite(seeds=args.seeds, verbose=True)
    bad = {k: v for k, v in results.items() if v > verification.GRADCHECK_TOLERANCE}
    if bad:
        return _fail("gradcheck", f"ops over tolerance: {sorted(bad)}")
    print(f"all {len(results)} checks within {verification.GRADCHECK_TOLERANCE:g}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gatpad",
        description="Graph-attention boosted presentation-attack detection toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-synth", help="generate synthetic datasets as containers")
    p.add_argument("--spec", required=True, help="JSON synthetic spec (or {datasets: {...}})")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=None, help="override the base seed")
    p.set_defaults(fn=cmd_gen_synth)

    p = sub.add_parser("train", help="train a model from container datasets")
    p.add_argument("--config", required=True, help="JSON config with train + data sections")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="score a dataset with a trained checkpoint")
    p.add_argument("--model", required=True, help="checkpoint file from train")
    p.add_argument("--data", required=True, help="container file or directory")
    p.add_argument("--report", required=True, help="output metrics JSON")
    p.add_argument("--scores", default=None, help="optional output scores CSV")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("protocol", help="run a cross-dataset protocol")
    p.add_argument("--spec", required=True, help="protocol JSON (registry, mode, train)")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(fn=cmd_protocol)

    p = sub.add_parser("roc", help="turn a scores CSV into ROC points CSV")
    p.add_argument("--scores", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_roc)

    p = sub.add_parser("gradcheck", help="run the finite-difference gradient suite")
    p.add_argument("--seeds", type=int, default=20)
    p.set_defaults(fn=cmd_gradcheck)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except harness.ConfigError as err:
        return _fail("config", str(err))
    except providers.ContainerFormatError as err:
        return _fail("format", str(err))
    except trainer.TrainingDivergedError as err:
        return _fail("diverged", str(err))
    except FileNotFoundError as err:
        return _fail("missing-file", str(err))
    except (ValueError, KeyError, OSError) as err:
        return _fail("invalid", str(err))


if __name__ == "__main__":
    sys.exit(main())
