"""Standard benchmark environments and the ablation grid."""

from __future__ import annotations

import dataclasses
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import classifier as clf
from .simulator.episode import EpisodeConfig, run_episode
from .simulator.floorplan import Floorplan, FloorplanConfig, generate_floorplan

# Multi-room benchmark layout: at least 6 rooms and 4 distinct labels
BENCH_FLOORPLAN = FloorplanConfig(extent=(12.0, 12.0), min_room=3.0, max_room=5.5, min_rooms=6, min_labels=4)


def bench_floorplan(seed: int, base: FloorplanConfig = BENCH_FLOORPLAN) -> Floorplan:
    return generate_floorplan(dataclasses.replace(base, seed=seed))


@dataclass(frozen=True)
class Variant:
    name: str
    mode: str
    fusion: str
    noise: bool


# Rows of the ablation table
ABLATION = (
    Variant("repeated-avg", "repeated", "avg", False),
    Variant("repeated-bayes", "repeated", "bayes", False),
    Variant("spatial-bayes", "spatial", "bayes", False),
    Variant("spatial-avg", "spatial", "avg", False),
    Variant("spatial-avg-noise", "spatial", "avg", True),
)


@dataclass
class RunSummary:
    env_seed: int
    variant: str
    mask_acc: float
    ovr_acc: float
    mean_iou: float
    coverage: float
    steps: int
    collisions: int
    violations: int
    complete: bool
    error: str | None = None

    def row(self) -> dict:
        return dataclasses.asdict(self)


def run_variant(env_seed: int, variant: Variant, base: EpisodeConfig) -> RunSummary:
    fp = bench_floorplan(env_seed)
    cfg = dataclasses.replace(base, mode=variant.mode, fusion=variant.fusion, noise=variant.noise,
                              seed=base.seed + env_seed)
    r = run_episode(fp, cfg)
    m = r.metrics
    return RunSummary(env_seed, variant.name, m.mask_acc, m.ovr_acc, m.mean_iou, r.coverage, len(r.log),
                      r.collisions, r.violations, r.complete, r.error)


def _run(args):
    return run_variant(*args)


def run_grid(env_seeds, variants=ABLATION, base: EpisodeConfig | None = None, workers: int = 1) -> list[RunSummary]:
    """Every variant on every environment; results come back in input order."""
    base = base or EpisodeConfig(confusion_diag=0.7)
    jobs = [(s, v, base) for v in variants for s in env_seeds]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            return list(pool.map(_run, jobs))
    return [_run(j) for j in jobs]


def summarize(runs: list[RunSummary]) -> list[dict]:
    """Per-variant means, in the order variants first appear."""
    order = list(dict.fromkeys(r.variant for r in runs))
    rows = []
    for name in order:
        sel = [r for r in runs if r.variant == name]
        rows.append({
            "variant": name,
            "episodes": len(sel),
            "mask_acc": float(np.mean([r.mask_acc for r in sel])),
            "ovr_acc": float(np.mean([r.ovr_acc for r in sel])),
            "mean_iou": float(np.mean([r.mean_iou for r in sel])),
            "coverage": float(np.mean([r.coverage for r in sel])),
            "violations": int(sum(r.violations for r in sel)),
            "errors": int(sum(r.error is not None for r in sel)),
        })
    return rows


# -- projection finetuning benchmark ----------------------------------------------------

FINETUNE_NOISE = clf.FeatureGenerator.noise
LABEL_DECAY = 0.3


def region_frequencies(num_labels: int, decay: float = LABEL_DECAY) -> np.ndarray:
    """Geometrically decaying label frequencies (a few common regions, a long tail)."""
    w = np.exp(-decay * np.arange(num_labels))
    return w / w.sum()


@dataclass
class FinetuneOutcome:
    seed: int
    frozen: float
    mscl: float
    infonce: float


def finetune_benchmark(seed: int, num_labels: int = 14, dim: int = 64, n_train: int = 5000, n_val: int = 1000,
                       noise: float = FINETUNE_NOISE, decay: float = LABEL_DECAY,
                       config: clf.FinetuneConfig | None = None) -> FinetuneOutcome:
    """Validation accuracy of the frozen projection and of MSCL / InfoNCE finetuning."""
    prototypes = clf.random_prototypes(num_labels, dim, seed=seed)
    gen = clf.FeatureGenerator(prototypes, noise=noise, seed=seed)
    freq = region_frequencies(num_labels, decay)
    x_tr, y_tr = clf.make_feature_dataset(gen, n_train, seed=10_000 + seed, label_weights=freq)
    x_va, y_va = clf.make_feature_dataset(gen, n_val, seed=20_000 + seed, label_weights=freq)
    config = config or clf.FinetuneConfig(seed=seed)
    acc = {}
    for loss in ("mscl", "infonce"):
        w = clf.finetune_projection(x_tr, y_tr, prototypes, loss, config).projection
        acc[loss] = clf.accuracy(x_va @ w, y_va, prototypes)
    return FinetuneOutcome(seed, clf.accuracy(x_va, y_va, prototypes), acc["mscl"], acc["infonce"])
