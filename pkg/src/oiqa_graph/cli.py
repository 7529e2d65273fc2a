"""Command-line entry point: ``oiqa <subcommand> ...``.

Results go to stdout (or the named output file); diagnostics go to stderr.
Exit status: 0 success, 1 domain/format error, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

from . import __version__
from .errors import ConfigError, InputError, OIQAError
from .geometry import build_graph, nearest_neighbor_stats
from .gradcheck import TOLERANCE, group_report, model_gradcheck
from .model import ModelConfig, load_params, pipeline, save_params
from .projection import extract_all, load_erp, write_viewports
from .sampler import SpherePoint, fibonacci_sample, lat_long_grid
from .training import (
    TrainConfig,
    evaluate,
    make_synthetic_dataset,
    read_manifest,
    select_split,
    split_config,
    train,
)

log = logging.getLogger("oiqa_graph")

PATH_KEYS = {"manifest", "weights", "out"}


def _fmt(x: float) -> str:
    return format(x, ".17g")


def points_to_json(points) -> str:
    items = []
    for p in points:
        xyz = ", ".join(_fmt(v) for v in p.xyz)
        items.append(
            f'  {{"k": {p.index}, "theta": {_fmt(p.theta)}, "psi": {_fmt(p.psi)}, '
            f'"lat": {_fmt(p.lat)}, "lon": {_fmt(p.lon)}, "xyz": [{xyz}]}}'
        )
    return "[\n" + ",\n".join(items) + "\n]\n"


def read_points(path) -> list[SpherePoint]:
    try:
        doc = json.loads(Path(path).read_text())
        return [SpherePoint.from_dict(d) for d in doc]
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise InputError(f"cannot read points from {path}: {exc}") from exc


def load_config(path, preset=None):
    """(ModelConfig, TrainConfig, paths) from an optional flat JSON document."""
    doc = {}
    if path:
        try:
            doc = json.loads(Path(path).read_text())
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(doc, dict):
            raise ConfigError("config must be a JSON object")
    preset = doc.pop("preset", None) or preset or "default"
    if preset == "desk":
        model, trainc = ModelConfig.desk(), TrainConfig.desk()
    elif preset == "default":
        model, trainc = ModelConfig(), TrainConfig()
    else:
        raise ConfigError(f"unknown preset {preset!r} (expected 'default' or 'desk')")
    paths = {k: doc.pop(k) for k in list(doc) if k in PATH_KEYS}
    model, trainc = split_config(doc, model, trainc)
    return model, trainc, paths


def _write_text(text, output):
    if output in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(output).write_text(text)


def cmd_sample(args):
    _write_text(points_to_json(fibonacci_sample(args.count)), args.output)


def cmd_graph(args):
    points = read_points(args.points)
    if args.k >= len(points):
        raise ConfigError(f"k must be less than the number of viewports V (k < V); got k={args.k}, V={len(points)}")
    _write_text(build_graph(points, args.k).to_json() + "\n", args.output)


def cmd_extract(args):
    erp = load_erp(args.input)
    points = read_points(args.points)
    viewports = extract_all(erp, points, args.fov, args.size, nearest=args.nearest)
    write_viewports(viewports, points, args.outdir)
    log.info("wrote %d viewports to %s", len(viewports), args.outdir)


def _grid_for(count):
    target = math.sqrt(count / 2.0)
    divisors = [d for d in range(1, count + 1) if count % d == 0]
    n_lat = min(divisors, key=lambda d: (abs(d - target), -d))
    return lat_long_grid(n_lat, count // n_lat)


def cmd_uniformity(args):
    samplers = ["fibonacci", "grid"] if args.sampler == "both" else [args.sampler]
    rows = []
    for name in samplers:
        pts = fibonacci_sample(args.count) if name == "fibonacci" else _grid_for(args.count)
        rows.append({"sampler": name, **nearest_neighbor_stats(pts)})
    if args.format == "json":
        _write_text(json.dumps(rows, indent=2) + "\n", args.output)
        return
    cols = ["sampler", "count", "min", "max", "mean", "std", "cv", "ratio"]
    lines = [",".join(cols)]
    for r in rows:
        lines.append(",".join(str(r[c]) if c in ("sampler", "count") else _fmt(r[c]) for c in cols))
    _write_text("\n".join(lines) + "\n", args.output)


def cmd_train(args):
    model, trainc, paths = load_config(args.config, args.preset)
    manifest = args.manifest or paths.get("manifest")
    out = args.out or paths.get("out")
    if not manifest or not out:
        raise ConfigError("train needs --manifest and --out")
    if args.steps is not None:
        trainc = TrainConfig(**{**trainc.__dict__, "max_steps": args.steps})
    rows = select_split(read_manifest(manifest), "train")
    if not rows:
        raise InputError(f"{manifest}: no rows with split 'train'")
    result = train(rows, model, trainc, seed=args.seed)
    for epoch, loss in enumerate(result.epoch_losses, start=1):
        log.info("epoch %d loss %.6f", epoch, loss)
    if args.log:
        lines = ["epoch,loss"] + [f"{i},{_fmt(v)}" for i, v in enumerate(result.epoch_losses, start=1)]
        Path(args.log).write_text("\n".join(lines) + "\n")
    save_params(result.params, out)


def cmd_eval(args):
    model, trainc, paths = load_config(args.config, args.preset)
    manifest = args.manifest or paths.get("manifest")
    weights = args.weights or paths.get("weights")
    if not manifest or not weights:
        raise ConfigError("eval needs --manifest and --weights")
    params = load_params(weights, model)
    rows = read_manifest(manifest)
    chosen = select_split(rows, args.split)
    if not chosen and args.split == "test":
        log.info("no 'test' rows in manifest; evaluating all %d rows", len(rows))
        chosen = rows
    metrics = evaluate(chosen, params, model, logistic=trainc.logistic_plcc)
    for key in ("PLCC", "SRCC", "RMSE"):
        print(f"{key}={metrics[key]:.6f}")


def cmd_score(args):
    model, _, paths = load_config(args.config, args.preset)
    weights = args.weights or paths.get("weights")
    if not weights:
        raise ConfigError("score needs --weights")
    params = load_params(weights, model)
    value = pipeline(model).score(load_erp(args.input), params)
    print(f"score={value:.6f}")


def cmd_gradcheck(args):
    model, _, _ = load_config(args.config, "desk")
    report = model_gradcheck(args.seed, model, entries=args.entries)
    groups = group_report(report)
    ok = all(v < TOLERANCE for v in groups.values())
    print(f"{'group':<20} {'max_rel_error':>14}  status")
    for name, err in groups.items():
        print(f"{name:<20} {err:>14.3e}  {'ok' if err < TOLERANCE else 'FAIL'}")
    if not ok:
        raise OIQAError(f"gradient check failed: relative error above {TOLERANCE}")


def cmd_synth(args):
    path = make_synthetic_dataset(args.outdir, args.count, args.seed, args.height, test_fraction=args.test_fraction)
    print(path)


def build_parser():
    parser = argparse.ArgumentParser(prog="oiqa", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("sample", help="Fibonacci viewport centres as JSON")
    p.add_argument("--count", type=int, default=20)
    p.add_argument("--output")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("graph", help="k-NN viewport graph from a points file")
    p.add_argument("--points", required=True)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--output")
    p.set_defaults(func=cmd_graph)

    p = sub.add_parser("extract", help="render gnomonic viewports from an ERP image")
    p.add_argument("--input", required=True)
    p.add_argument("--points", required=True)
    p.add_argument("--fov", type=float, default=90.0)
    p.add_argument("--size", type=int, default=224)
    p.add_argument("--outdir", required=True)
    p.add_argument("--nearest", action="store_true", help="nearest-neighbour sampling (debugging)")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("train", help="train on a manifest and write a weights file")
    p.add_argument("--manifest")
    p.add_argument("--config")
    p.add_argument("--preset", choices=["default", "desk"])
    p.add_argument("--out")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--steps", type=int, help="stop after this many optimizer steps")
    p.add_argument("--log", help="write per-epoch losses as CSV")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="PLCC/SRCC/RMSE of a weights file on a manifest")
    p.add_argument("--manifest")
    p.add_argument("--weights")
    p.add_argument("--config")
    p.add_argument("--preset", choices=["default", "desk"])
    p.add_argument("--split", default="test", help="manifest split to score, or 'all' (default: test)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("score", help="quality score of one ERP image")
    p.add_argument("--input", required=True)
    p.add_argument("--weights")
    p.add_argument("--config")
    p.add_argument("--preset", choices=["default", "desk"])
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("gradcheck", help="finite-difference check of all parameter groups")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--entries", type=int, default=12, help="coordinates probed per tensor")
    p.add_argument("--config")
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("uniformity-report", help="nearest-neighbour distance statistics of a sampler")
    p.add_argument("--count", type=int, default=20)
    p.add_argument("--sampler", choices=["fibonacci", "grid", "both"], default="both")
    p.add_argument("--format", choices=["csv", "json"], default="csv")
    p.add_argument("--output")
    p.set_defaults(func=cmd_uniformity)

    p = sub.add_parser("synth", help="write a synthetic noise-graded ERP dataset and manifest")
    p.add_argument("--outdir", required=True)
    p.add_argument("--count", type=int, default=16)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--height", type=int, default=64)
    p.add_argument("--test-fraction", type=float, default=0.0)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        stream=sys.stderr,
        format="%(levelname)s %(message)s",
    )
    try:
        args.func(args)
    except OIQAError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
