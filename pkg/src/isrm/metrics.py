"""Map quality metrics against a ground-truth floorplan."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .grid import GridMap
from .simulator.floorplan import Floorplan


class GeometryMismatch(ValueError):
    pass


@dataclass
class MapMetrics:
    mask_acc: float
    ovr_acc: float
    mean_iou: float
    per_class_iou: dict[int, float] = field(default_factory=dict)
    explored_fraction: float = 0.0
    mask_empty: bool = False

    FIELDS = ("mask_acc", "ovr_acc", "mean_iou", "explored_fraction", "mask_empty")

    def row(self) -> dict:
        return {k: getattr(self, k) for k in self.FIELDS}


def compute_metrics(pred: GridMap, gt: Floorplan) -> MapMetrics:
    """Argmax-label accuracy over explored and over all navigable cells, plus IoU.

    Unobserved cells predict nothing, so they count as wrong for ``ovr_acc``
    and belong to no class for IoU. ``mean_iou`` averages over the classes
    present in the ground truth or the prediction (classes absent from both
    are left out). An empty explored set yields
    ``mask_acc = 0`` with ``mask_empty`` set.
    """
    if pred.shape != gt.occupancy.shape or pred.cell_size != gt.cell_size:
        raise GeometryMismatch(f"map {pred.shape}@{pred.cell_size} vs floorplan "
                               f"{gt.occupancy.shape}@{gt.cell_size}")
    if pred.num_labels != gt.labels.C:
        raise GeometryMismatch(f"map has {pred.num_labels} labels, floorplan {gt.labels.C}")
    nav = gt.free
    truth = gt.region[nav].astype(np.int64)
    labels = pred.labels()[nav]
    explored = pred.obs_count[nav] > 0
    correct = labels == truth

    n_explored = int(explored.sum())
    mask_empty = n_explored == 0
    mask_acc = 0.0 if mask_empty else float(correct[explored].mean())
    ovr_acc = float(correct.mean()) if truth.size else 0.0

    per_class = {}
    predicted = labels[explored]
    for k in np.union1d(truth, predicted):
        p, t = (labels == k) & explored, truth == k
        per_class[int(k)] = float(np.sum(p & t) / np.sum(p | t))
    mean_iou = float(np.mean(list(per_class.values()))) if per_class else 0.0
    return MapMetrics(mask_acc, ovr_acc, mean_iou, per_class,
                      float(n_explored / truth.size) if truth.size else 0.0, mask_empty)


def coverage(pred: GridMap, gt: Floorplan) -> float:
    nav = gt.free
    return float(np.count_nonzero(pred.obs_count[nav] > 0) / np.count_nonzero(nav))


def write_metrics_csv(rows: list[dict], fh) -> None:
    if not rows:
        return
    w = csv.DictWriter(fh, fieldnames=list(rows[0].keys()), lineterminator="\n")
    w.writeheader()
    for row in rows:
        w.writerow({k: (f"{v:.10g}" if isinstance(v, float) else v) for k, v in row.items()})


