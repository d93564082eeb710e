"""Command-line entry points for backbone export and fixture generation."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .export import export_backbone
from .fixtures import generate_fixtures, synthesize_images, write_manifest
from .reference import build_reference_model


def cmd_export_backbone(args) -> int:
    entry = export_backbone(args.out, weights_mode=args.weights)
    print(f"wrote {args.out} (sha256 {entry['sha256'][:12]}..., "
          f"parity max dev {entry['parity_max_abs_deviation']:.2e})")
    return 0


def cmd_synthesize_images(args) -> int:
    paths = synthesize_images(args.out)
    print(f"wrote {len(paths)} fixture images to {args.out}")
    return 0


def cmd_generate_fixtures(args) -> int:
    model = build_reference_model(args.weights)
    entries = generate_fixtures(args.images, args.out, model)
    print(f"wrote {3 * len(entries)} fixture blobs to {args.out}")
    return 0


def cmd_make_all(args) -> int:
    """Export the backbone, synthesize images, generate fixtures, write the manifest."""
    images_dir = Path(args.fixtures_out) / "images"
    synthesize_images(images_dir)
    backbone_entry = export_backbone(args.model_out, weights_mode=args.weights)
    model = build_reference_model(args.weights)
    entries = generate_fixtures(images_dir, args.fixtures_out, model)
    manifest_path = Path(args.fixtures_out) / "manifest.json"
    write_manifest(manifest_path, backbone_entry, entries, args.weights)
    print(f"backbone: {args.model_out}")
    print(f"fixtures: {args.fixtures_out} ({len(entries)} images)")
    print(f"manifest: {manifest_path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="quickqual-export",
                                     description="Backbone export and golden fixture generation")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("export-backbone", help="serialize the feature extractor")
    p.add_argument("--out", required=True)
    p.add_argument("--weights", choices=["pretrained", "seeded"], default="seeded")
    p.set_defaults(func=cmd_export_backbone)

    p = sub.add_parser("synthesize-images", help="write the 8 curated fixture images")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synthesize_images)

    p = sub.add_parser("generate-fixtures", help="write .qqt/.feat/.pred blobs for fixture images")
    p.add_argument("--images", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--weights", choices=["pretrained", "seeded"], default="seeded")
    p.set_defaults(func=cmd_generate_fixtures)

    p = sub.add_parser("make-all", help="export + synthesize + fixtures + manifest in one run")
    p.add_argument("--model-out", required=True)
    p.add_argument("--fixtures-out", required=True)
    p.add_argument("--weights", choices=["pretrained", "seeded"], default="seeded")
    p.set_defaults(func=cmd_make_all)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
