"""CLI: ``stackexport export --backbone NAME --layers L1,L2,... --images DIR
--manifest F --out F``. Nonzero exit with one ``error: <kind>: <message>``
line on stderr for every failure."""

from __future__ import annotations

import argparse
import sys

from .backbones import BACKBONES
from .export import ExportSpec, ManifestError, export


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stackexport",
                                     description="dump frozen-backbone activations "
                                                 "into FSTK feature containers")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("export", help="run images through a frozen backbone")
    p.add_argument("--backbone", default="resnet18", choices=sorted(BACKBONES))
    p.add_argument("--layers", default=None,
                   help="comma-separated layer names, shallow to deep (default: "
                        "the backbone's four stages)")
    p.add_argument("--images", required=True, help="directory of pre-cropped face images")
    p.add_argument("--manifest", required=True, help="CSV: file,label[,dataset_id]")
    p.add_argument("--out", required=True, help="output container path")
    p.add_argument("--resize", type=int, default=256)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--checkpoint", default=None, help="optional state-dict file")
    p.add_argument("--dataset-id", default="export")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    layers = [s for s in (args.layers or "").split(",") if s] or []
    try:
        spec = ExportSpec(backbone=args.backbone, layers=layers, image_dir=args.images,
                          manifest=args.manifest, out_path=args.out, resize=args.resize,
                          seed=args.seed, checkpoint=args.checkpoint,
                          dataset_id=args.dataset_id)
        out = export(spec)
    except ManifestError as err:
        print(f"error: manifest: {err}", file=sys.stderr)
        return 1
    except FileNotFoundError as err:
        print(f"error: missing-file: {err}", file=sys.stderr)
        return 1
    except (ValueError, OSError) as err:
        print(f"error: invalid: {err}", file=sys.stderr)
        return 1
    print(f"wrote {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
