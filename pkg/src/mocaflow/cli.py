"""Command-line entry point.

Exit codes: 0 on success, 1 when any scene fails (or verification finds
violations), 2 for bad arguments or configuration.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .errors import ConfigError, MocaError

log = logging.getLogger("mocaflow")


def _key_values(text: str) -> dict:
    out = {}
    for item in filter(None, text.split(",")):
        key, sep, value = item.partition("=")
        if not sep:
            raise argparse.ArgumentTypeError(f"expected key=value, got {item!r}")
        try:
            out[key.strip()] = int(value)
        except ValueError:
            raise argparse.ArgumentTypeError(f"count for {key!r} must be an integer") from None
    return out


def _floats(text: str) -> list:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _size(text: str) -> tuple:
    try:
        w, h = text.lower().split("x")
        return int(w), int(h)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected WIDTHxHEIGHT, got {text!r}") from None


def cmd_synth(args) -> int:
    from .synth import DEFAULT_COUNTS, write_synthetic_corpus

    counts = args.objects if args.objects is not None else DEFAULT_COUNTS
    ids = write_synthetic_corpus(args.out, args.scenes, args.seed, counts, args.image_size)
    print(json.dumps({"out": str(args.out), "scenes": len(ids)}))
    return 0


def cmd_build_db(args) -> int:
    from .gt_database import build_database
    from .io.kitti import load_scene, scene_ids

    ids = scene_ids(args.scenes)
    bundles = [load_scene(args.scenes, sid, args.masks, camera=args.camera) for sid in ids]
    db = build_database(bundles, min_points=args.min_points, max_truncation=args.max_truncation,
                        max_occlusion=args.max_occlusion, workers=args.workers)
    db.save(args.out)
    print(json.dumps({"scenes": len(ids), "objects": len(db),
                      "counts": {k: len(v) for k, v in db.by_class.items()}}, sort_keys=True))
    return 0


def cmd_augment(args) -> int:
    from .pipeline import RunConfig, load_config_file, run_augment

    base = load_config_file(args.config) if args.config else {}
    overrides = {"seed": args.seed, "thresholds": args.thresholds, "quota": args.quota,
                 "workers": args.workers, "blend": args.blend}
    base.update({k: v for k, v in overrides.items() if v is not None})
    if args.batch_iof:
        base["batch_iof"] = True
    config = RunConfig.from_dict(base)
    stats = run_augment(config, args.scenes, args.db, args.out, masks_dir=args.masks)
    summary = {k: stats[k] for k in ("scenes", "failed", "sampled", "kept", "rejected")}
    print(json.dumps(summary, sort_keys=True))
    return 1 if stats["failed"] else 0


def cmd_verify(args) -> int:
    from .pipeline import verify_consistency

    report = verify_consistency(args.scene, args.tolerance)
    print(json.dumps(report, indent=1, sort_keys=True))
    return 0 if report["ok"] else 1


def cmd_render(args) -> int:
    from .render import render

    render(args.scene, args.out, args.view)
    return 0


def cmd_bench(args) -> int:
    from .bench import run_bench
    from .pipeline import load_config_file

    options = load_config_file(args.config) if args.config else {}
    report = run_bench(options)
    text = json.dumps(report, indent=1, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    print(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mocaflow", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic KITTI-layout corpus")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--scenes", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--objects", type=_key_values, default=None, help="e.g. car=3,pedestrian=2")
    p.add_argument("--image-size", type=_size, default=(624, 192))
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("build-db", help="crop the ground-truth object database")
    p.add_argument("--scenes", type=Path, required=True)
    p.add_argument("--masks", type=Path, default=None,
                   help="instance-id PNG directory (default: SCENES/masks)")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--min-points", type=int, default=5)
    p.add_argument("--max-truncation", type=float, default=None)
    p.add_argument("--max-occlusion", type=int, default=None)
    p.add_argument("--camera", type=int, default=2, choices=range(4))
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_build_db)

    p = sub.add_parser("augment", help="paste objects and apply global flows")
    p.add_argument("--scenes", type=Path, required=True)
    p.add_argument("--db", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--masks", type=Path, default=None)
    p.add_argument("--config", type=Path, default=None, help="JSON RunConfig; flags override it")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--thresholds", type=_floats, default=None)
    p.add_argument("--quota", type=_key_values, default=None)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--blend", default=None, help="none | feather:R | random")
    p.add_argument("--batch-iof", action="store_true",
                   help="check occlusion against all BEV survivors at once")
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("verify", help="check point/pixel correspondence against the fixture")
    p.add_argument("--scene", type=Path, required=True)
    p.add_argument("--tolerance", type=float, default=1e-6)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("render", help="draw an augmented scene")
    p.add_argument("--scene", type=Path, required=True)
    p.add_argument("--view", choices=("image_overlay", "bev"), default="image_overlay")
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("bench", help="measure throughput")
    p.add_argument("--config", type=Path, default=None)
    p.add_argument("--out", type=Path, default=None)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, json.JSONDecodeError) as err:
        print(f"mocaflow: bad configuration: {err}", file=sys.stderr)
        return 2
    except (MocaError, FileNotFoundError) as err:
        print(f"mocaflow: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
