"""Command-line entry point: ``isrm <subcommand> ...``.

Numeric results go to stdout as CSV; progress and human-readable notes go to
stderr. On failure the last stderr line is ``error,<kind>,<message>`` and the
exit status is 1 (2 for usage errors).
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

import numpy as np

from . import classifier as clf
from .experiments import ABLATION, BENCH_FLOORPLAN, run_grid, summarize
from .grid import GlobalMap, load_map, save_map
from .metrics import compute_metrics, write_metrics_csv
from .render import floorplan_image, ppm_bytes, render_map
from .simulator.dataset import export_features, extract_dataset
from .simulator.episode import EpisodeConfig, run_episode, write_trajectory_csv
from .simulator.floorplan import generate_floorplan, load_floorplan, save_floorplan

log = logging.getLogger("isrm")


class CliError(Exception):
    def __init__(self, kind: str, message: str):
        super().__init__(message)
        self.kind = kind


def _on_off(value: str) -> bool:
    v = value.lower()
    if v not in ("on", "off"):
        raise argparse.ArgumentTypeError("expected on or off")
    return v == "on"


def _write_rows(rows: list[dict], fh=None) -> None:
    write_metrics_csv(rows, fh or sys.stdout)


def _floorplan_config(args):
    return dataclasses.replace(BENCH_FLOORPLAN, seed=args.seed, extent=(args.extent, args.extent),
                               min_room=args.min_room, max_room=args.max_room, door_width=args.door_width,
                               min_rooms=args.min_rooms, min_labels=args.min_labels)


def _add_floorplan_args(p):
    p.add_argument("--extent", type=float, default=BENCH_FLOORPLAN.extent[0], help="side length in meters")
    p.add_argument("--min-room", type=float, default=BENCH_FLOORPLAN.min_room)
    p.add_argument("--max-room", type=float, default=BENCH_FLOORPLAN.max_room)
    p.add_argument("--door-width", type=float, default=BENCH_FLOORPLAN.door_width)
    p.add_argument("--min-rooms", type=int, default=BENCH_FLOORPLAN.min_rooms)
    p.add_argument("--min-labels", type=int, default=BENCH_FLOORPLAN.min_labels)


# -- subcommands ------------------------------------------------------------------------


def cmd_gen_env(args) -> None:
    fp = generate_floorplan(_floorplan_config(args))
    save_floorplan(fp, args.out)
    log.info("wrote %s (%d rooms, %d doors)", args.out, len(fp.rooms), len(fp.doors))
    _write_rows([{"seed": args.seed, "width": fp.width, "height": fp.height, "rooms": len(fp.rooms),
                  "doors": len(fp.doors), "labels": len(fp.distinct_labels())}])


def _load_envs(args):
    if args.env:
        return [load_floorplan(p) for p in args.env]
    return [generate_floorplan(dataclasses.replace(_floorplan_config(args), seed=args.seed + k))
            for k in range(args.num_envs)]


def cmd_extract_dataset(args) -> None:
    envs = _load_envs(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    config = EpisodeConfig(max_steps=args.steps, seed=args.seed)
    ds = extract_dataset(envs, val_fraction=args.val_fraction, seed=args.seed, config=config)
    ds.save(out / "dataset.npz")
    prototypes = clf.random_prototypes(envs[0].labels.C, args.dim, seed=args.seed)
    np.save(out / "prototypes.npy", prototypes)
    counts = export_features(ds, clf.FeatureGenerator(prototypes, seed=args.seed), out, seed=args.seed)
    log.info("stored %d samples from %d environments in %s", len(ds), len(envs), out)
    _write_rows([{"split": k, "samples": v} for k, v in counts.items()])


def cmd_train_classifier(args) -> None:
    raw, labels, c = clf.load_feature_dataset(args.train)
    val = None
    if args.val:
        vraw, vlabels, _ = clf.load_feature_dataset(args.val)
        val = (vraw, vlabels)
    if args.prototypes:
        prototypes = np.load(args.prototypes)
    else:
        prototypes = clf.random_prototypes(c, raw.shape[1], seed=args.seed)
    if prototypes.shape[0] != c:
        raise CliError("LabelMismatch", f"{prototypes.shape[0]} prototypes for {c} labels")
    config = clf.FinetuneConfig(lr=args.lr, epochs=args.epochs, batch_size=args.batch_size, tau=args.tau,
                                seed=args.seed)
    result = clf.finetune_projection(raw, labels, prototypes, args.loss, config, val=val)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        np.save(out / "projection.npy", result.projection)
        result.write_history(out / "history.csv")
    if val is not None:
        log.info("frozen val acc %.4f, finetuned %.4f", clf.accuracy(val[0], val[1], prototypes),
                 result.history[-1][2])
    clf.write_history_csv(result.history, sys.stdout)


def _episode_config(args) -> EpisodeConfig:
    overrides = {"max_steps": args.steps, "mode": args.mode, "fusion": args.fusion, "noise": args.noise,
                 "seed": args.seed, "confusion_diag": args.confusion_diag}
    if args.config:
        return EpisodeConfig.load(args.config, **overrides)
    return EpisodeConfig(**{k: v for k, v in overrides.items() if v is not None})


def cmd_run_episode(args) -> None:
    fp = load_floorplan(args.env) if args.env else generate_floorplan(_floorplan_config(args))
    config = _episode_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    result = run_episode(fp, config)
    save_map(result.global_map, out / "map.isrm")
    (out / "episode.cfg").write_text(config.to_text())
    with open(out / "trajectory.csv", "w", newline="") as fh:
        write_trajectory_csv(result.log, fh)
    # score the map as stored (f32) so that `evaluate` on the file reproduces these numbers
    stored = load_map(out / "map.isrm", GlobalMap)
    row = {**compute_metrics(stored, fp).row(), "coverage": result.coverage, "steps": len(result.log),
           "collisions": result.collisions, "violations": result.violations, "complete": int(result.complete)}
    with open(out / "metrics.csv", "w", newline="") as fh:
        _write_rows([row], fh)
    if args.render:
        render_map(result.global_map, out / "map.ppm")
    log.info("episode finished after %d steps; outputs in %s", len(result.log), out)
    _write_rows([row])
    if result.error:
        raise CliError("EpisodeAborted", result.error)


def cmd_evaluate(args) -> None:
    fp = load_floorplan(args.env)
    rows = []
    for path in args.map:
        m = compute_metrics(load_map(path, GlobalMap), fp)
        row = {"map": path, **m.row()}
        row.update({f"iou_{k}": m.per_class_iou.get(k, "") for k in range(fp.labels.C)})
        rows.append(row)
    _write_rows(rows)


def cmd_render(args) -> None:
    if args.map:
        render_map(load_map(args.map, GlobalMap), args.out)
    elif args.env:
        Path(args.out).write_bytes(ppm_bytes(floorplan_image(load_floorplan(args.env))))
    else:
        raise CliError("Usage", "render needs --map or --env")
    log.info("wrote %s", args.out)


def cmd_bench(args) -> None:
    seeds = range(args.seed, args.seed + args.num_envs)
    base = EpisodeConfig(max_steps=args.steps, confusion_diag=args.confusion_diag, seed=args.seed)
    variants = [v for v in ABLATION if not args.variant or v.name in args.variant]
    runs = run_grid(seeds, variants, base, workers=args.workers)
    if args.runs:
        with open(args.runs, "w", newline="") as fh:
            _write_rows([r.row() for r in runs], fh)
    _write_rows(summarize(runs))


# -- parser -----------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="isrm", description="Semantic region mapping simulator and tools.")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging on stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-env", help="generate a floorplan file")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    _add_floorplan_args(p)
    p.set_defaults(func=cmd_gen_env)

    p = sub.add_parser("extract-dataset", help="explore environments and store deduplicated samples")
    p.add_argument("--env", nargs="*", help="floorplan files (default: generate --num-envs)")
    p.add_argument("--num-envs", type=int, default=5)
    p.add_argument("--steps", type=int, default=500)
    p.add_argument("--val-fraction", type=float, default=0.2)
    p.add_argument("--dim", type=int, default=clf.DEFAULT_DIM, help="feature dimension")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    _add_floorplan_args(p)
    p.set_defaults(func=cmd_extract_dataset)

    p = sub.add_parser("train-classifier", help="finetune the projection on a feature file")
    p.add_argument("--train", required=True)
    p.add_argument("--val")
    p.add_argument("--prototypes", help=".npy prototype matrix (default: seeded random)")
    p.add_argument("--loss", choices=[k.value for k in clf.LossKind], default="mscl")
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--lr", type=float, default=1e-2)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--tau", type=float, default=clf.DEFAULT_TAU)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_train_classifier)

    p = sub.add_parser("run-episode", help="explore one environment and write a run directory")
    p.add_argument("--env", help="floorplan file (default: generate from --seed)")
    p.add_argument("--config", help="key=value episode config file")
    p.add_argument("--mode", choices=["repeated", "spatial"])
    p.add_argument("--fusion", choices=["avg", "bayes"])
    p.add_argument("--noise", type=_on_off, metavar="on|off")
    p.add_argument("--steps", type=int)
    p.add_argument("--confusion-diag", type=float)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--render", action="store_true", help="also write map.ppm")
    p.add_argument("--out", required=True)
    _add_floorplan_args(p)
    p.set_defaults(func=cmd_run_episode)

    p = sub.add_parser("evaluate", help="metrics of saved maps against a floorplan")
    p.add_argument("--env", required=True)
    p.add_argument("--map", nargs="+", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("render", help="write a PPM of a map (or a floorplan's ground truth)")
    p.add_argument("--map")
    p.add_argument("--env")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("bench", help="run the ablation grid and print a summary table")
    p.add_argument("--num-envs", type=int, default=20)
    p.add_argument("--steps", type=int, default=1500)
    p.add_argument("--confusion-diag", type=float, default=0.7)
    p.add_argument("--variant", nargs="*", choices=[v.name for v in ABLATION])
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--runs", help="also write per-episode rows to this CSV")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, stream=sys.stderr,
                        format="%(message)s")
    try:
        args.func(args)
    except CliError as exc:
        print(f"error,{exc.kind},{exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError, RuntimeError) as exc:
        msg = str(exc).replace("\n", " ")
        print(f"error,{type(exc).__name__},{msg}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
