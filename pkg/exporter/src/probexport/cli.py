"""probexport command line: folder indexing and probability export."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from .config import BACKBONES, ExportConfig, ExportConfigError, ExportError, OnlineAugmentConfig
from .images import scan_image_folder


def cmd_index(args) -> int:
    """Write the manifest + id/label CSV that the engine's split command reads."""
    entries, class_names = scan_image_folder(args.images)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    manifest = {
        "name": Path(args.images).name,
        "class_count": len(class_names),
        "class_names": class_names,
        "feature_dim": 0,
        "sample_count": len(entries),
        "image_source": True,
        "notes": f"image index of {args.images}",
    }
    (out / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    with (out / "index.csv").open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sample_id", "label"])
        for entry in entries:
            writer.writerow([entry.sample_id, entry.label])
    print(f"indexed {len(entries)} images across {len(class_names)} classes")
    print(f"wrote {out / 'manifest.json'} and {out / 'index.csv'}")
    return 0


def cmd_export(args) -> int:
    from .export import export_probabilities

    config = ExportConfig(
        image_root=args.images,
        plan_path=args.plan,
        out_path=args.out,
        backbone=args.backbone,
        pretrained=not args.random_weights,
        offline_augment=args.offline_aug,
        minority_classes=(
            tuple(int(c) for c in args.minority_classes.split(","))
            if args.minority_classes
            else None
        ),
        online_augment=args.online_aug,
        online=OnlineAugmentConfig(rounds=args.online_rounds),
        fine_tune_epochs=args.fine_tune_epochs,
        head_epochs=args.head_epochs,
        seed=args.seed,
    )
    summary = export_probabilities(config)
    print(f"wrote {summary['rows']} rows to {summary['out_path']}")
    if summary["skipped"]:
        print(f"skipped {len(summary['skipped'])} unreadable images")
    if args.summary:
        Path(args.summary).write_text(
            json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
        print(f"wrote {args.summary}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="probexport",
        description="Per-image class-probability export from Inception-family backbones",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_index = sub.add_parser("index", help="scan a class-per-folder image tree")
    p_index.add_argument("--images", required=True, help="image root directory")
    p_index.add_argument("--out", required=True, help="output directory")
    p_index.set_defaults(func=cmd_index)

    p_export = sub.add_parser("export", help="emit a probability table for one backbone")
    p_export.add_argument("--images", required=True, help="image root directory")
    p_export.add_argument("--plan", required=True, help="fold-plan JSON from the engine")
    p_export.add_argument("--out", required=True, help="output table CSV path")
    p_export.add_argument(
        "--backbone", choices=BACKBONES, default="inception_v3", help="feature extractor"
    )
    p_export.add_argument(
        "--random-weights",
        action="store_true",
        help="skip the ImageNet weight download (offline smoke runs)",
    )
    p_export.add_argument(
        "--offline-aug",
        action="store_true",
        help="triple minority classes with horizontal+vertical flips",
    )
    p_export.add_argument(
        "--minority-classes",
        help="comma-separated class indices to flip (default: auto-detect)",
    )
    p_export.add_argument(
        "--online-aug",
        action="store_true",
        help="random zoom/shift/rotation on the training side",
    )
    p_export.add_argument(
        "--online-rounds", type=int, default=2, help="augmented copies per image (frozen mode)"
    )
    p_export.add_argument(
        "--fine-tune-epochs",
        type=int,
        default=0,
        help="fine-tune the backbone per fold (0 = frozen + linear head)",
    )
    p_export.add_argument("--head-epochs", type=int, default=30, help="linear-head epochs")
    p_export.add_argument("--seed", type=int, default=0, help="random seed")
    p_export.add_argument("--summary", help="also write a JSON export summary here")
    p_export.set_defaults(func=cmd_export)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ExportConfigError as exc:
        print(f"{args.command}: {exc}", file=sys.stderr)
        return 2
    except ExportError as exc:
        print(f"{args.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
