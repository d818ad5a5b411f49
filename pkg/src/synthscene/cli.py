"""Command-line driver.

Subcommands: generate, analyze, search, query-poses, pretrain-sim, presets.
Exit codes: 0 success, 1 usage error, 2 data error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .jsonutil import dumps_canonical
from .mesh import (EmptyMesh, ParseError, catalog_from_obj_dir,
                   default_catalog, load_obj)
from .presets import METRIC_TARGETS, PRESETS, preset
from .pretrain import SimConfig, simulate_pretrain
from .raster import rasterize, write_pgm16
from .scene import LayoutParams, PlacementExhausted, Scene, query_poses
from .sceneio import (analyze_dataset, generate_dataset, write_loss_csv,
                      write_metrics_json, write_search_report,
                      write_viewpoint_csv)
from .search import MetricTarget, search_layouts

_DATA_ERRORS = (FileNotFoundError, NotADirectoryError, IsADirectoryError,
                PermissionError, ParseError, EmptyMesh, PlacementExhausted,
                json.JSONDecodeError, KeyError, ValueError)


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors exit 1, not argparse's default 2
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _resolution(text: str) -> tuple[int, int]:
    try:
        w, h = text.lower().split("x")
        return int(w), int(h)
    except Exception:
        raise argparse.ArgumentTypeError(f"expected WxH, got {text!r}") from None


def _catalog_source(args):
    return ("obj_dir", args.models) if getattr(args, "models", None) else ("default", None)


def _build_catalog(args):
    if getattr(args, "models", None):
        return catalog_from_obj_dir(args.models)
    return default_catalog()


def _load_params(args) -> LayoutParams:
    if getattr(args, "config", None):
        with open(args.config, "r", encoding="utf-8") as fh:
            params = LayoutParams.from_dict(json.load(fh))
    else:
        params = preset(args.preset)
    if getattr(args, "seed", None) is not None:
        params = params.replace(seed=args.seed)
    if getattr(args, "resolution", None) is not None:
        params = params.replace(image_width=args.resolution[0],
                                image_height=args.resolution[1])
    return params


def cmd_generate(args) -> int:
    params = _load_params(args)
    generate_dataset(params, args.count, args.out,
                     catalog_source=_catalog_source(args),
                     jobs=args.jobs, write_depth=not args.no_depth)
    print(f"wrote {args.count} scenes to {args.out}")
    return 0


def cmd_analyze(args) -> int:
    metrics = analyze_dataset(args.scene_dir, catalog_source=_catalog_source(args),
                              resolution=args.resolution, jobs=args.jobs)
    out_dir = args.out or args.scene_dir
    os.makedirs(out_dir, exist_ok=True)
    write_metrics_json(metrics, os.path.join(out_dir, "metrics.json"))
    write_viewpoint_csv(metrics, os.path.join(out_dir, "viewpoint.csv"))
    print(dumps_canonical({k: v for k, v in metrics.to_dict().items()
                           if k != "viewpoint_hist"}))
    return 0


def cmd_search(args) -> int:
    if args.target:
        with open(args.target, "r", encoding="utf-8") as fh:
            target = MetricTarget.from_dict(json.load(fh))
    else:
        target = METRIC_TARGETS[args.target_preset]
    base = _load_params(args)
    report = search_layouts(
        target, base, _build_catalog(args),
        budget=args.budget, scenes_per_eval=args.scenes_per_eval,
        seed=args.seed if args.seed is not None else 0,
        resolution=args.resolution or (160, 120))
    write_search_report(report, args.out)
    best = report.best
    print(f"best candidate #{best.index} score={best.score:.4f} "
          f"placement={best.params.placement} -> {args.out}")
    return 0


def cmd_query_poses(args) -> int:
    if args.obj:
        mesh = load_obj(args.obj)
        model_id = os.path.splitext(os.path.basename(args.obj))[0]
        poses = query_poses(mesh, model_id)
    else:
        catalog = _build_catalog(args)
        model_id = args.model
        poses = query_poses(catalog[model_id], model_id)
    from .sceneio import camera_to_dict

    record = {
        "model_id": model_id,
        "poses": [{
            "yaw_deg": 45.0 * k,
            "rotation_wxyz": [float(inst.rotation.w), float(inst.rotation.x),
                              float(inst.rotation.y), float(inst.rotation.z)],
            "camera": camera_to_dict(cam),
        } for k, (cam, inst) in enumerate(poses)],
    }
    with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps_canonical(record) + "\n")
    if args.render:
        os.makedirs(args.render, exist_ok=True)
        for k, (cam, inst) in enumerate(poses):
            buf = rasterize(Scene(None, (inst,), cam), resolution=args.resolution)
            write_pgm16(buf.labels, os.path.join(args.render, f"pose_{k}.pgm"))
    print(f"wrote 8 poses for {model_id} -> {args.out}")
    return 0


def cmd_pretrain_sim(args) -> int:
    if args.config:
        with open(args.config, "r", encoding="utf-8") as fh:
            cfg = SimConfig.from_dict(json.load(fh))
    else:
        cfg = SimConfig(num_objects=args.objects, steps=args.steps,
                        workers=args.workers, queries_per_worker=args.queries,
                        noise=args.noise, seed=args.seed or 0)
    result = simulate_pretrain(cfg)
    write_loss_csv(result.losses, args.out)
    print(f"simulated {cfg.steps} steps x {cfg.workers} workers; "
          f"first/last mean loss {result.losses[:50].mean():.4f} / "
          f"{result.losses[-50:].mean():.4f} -> {args.out}")
    return 0


def cmd_presets(args) -> int:
    if args.json:
        print(dumps_canonical({name: p.to_dict() for name, p in PRESETS.items()}))
    else:
        for name in PRESETS:
            print(name)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="synthscene",
                     description="Procedural scene layout, label rendering, "
                                 "proxy metrics, layout search, pretraining sim.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, models=True):
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--jobs", type=int, default=1)
        p.add_argument("--resolution", type=_resolution, default=None,
                       metavar="WxH")
        if models:
            p.add_argument("--models", default=None,
                           help="directory of .obj files (default: primitive catalog)")

    p = sub.add_parser("generate", help="render scenes, labels, and a manifest")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--preset", choices=list(PRESETS))
    group.add_argument("--config", help="LayoutParams JSON file")
    p.add_argument("--count", type=int, default=10)
    p.add_argument("--out", required=True)
    p.add_argument("--no-depth", action="store_true")
    common(p)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("analyze", help="aggregate proxy metrics over exported scenes")
    p.add_argument("scene_dir")
    p.add_argument("--out", default=None)
    common(p)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("search", help="search layout parameters against a metric target")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--target", help="MetricTarget JSON file")
    group.add_argument("--target-preset", choices=list(METRIC_TARGETS))
    bgroup = p.add_mutually_exclusive_group()
    bgroup.add_argument("--preset", choices=list(PRESETS), default="random_placement")
    bgroup.add_argument("--config", help="base LayoutParams JSON file")
    p.add_argument("--budget", type=int, default=20)
    p.add_argument("--scenes-per-eval", type=int, default=50)
    p.add_argument("--out", default="search_report.json")
    common(p)
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("query-poses", help="turntable pose records for one model")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--model", help="catalog model id")
    group.add_argument("--obj", help="OBJ file")
    p.add_argument("--out", default="query_poses.json")
    p.add_argument("--render", default=None, metavar="DIR",
                   help="also rasterize the 8 poses as PGM files")
    common(p)
    p.set_defaults(func=cmd_query_poses)

    p = sub.add_parser("pretrain-sim", help="simulate the contrastive pretraining loop")
    p.add_argument("--config", default=None, help="SimConfig JSON file")
    p.add_argument("--steps", type=int, default=500)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--queries", type=int, default=8)
    p.add_argument("--objects", type=int, default=64)
    p.add_argument("--noise", type=float, default=0.25)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default="loss.csv")
    p.set_defaults(func=cmd_pretrain_sim)

    p = sub.add_parser("presets", help="list the shipped layout configurations")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_presets)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        return args.func(args)
    except _DATA_ERRORS as e:
        print(f"synthscene: error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
