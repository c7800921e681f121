"""Region classification over embeddings.

Cosine-similarity classification against per-label prototype embeddings, the
multi-modal supervised contrastive loss (MSCL) and a symmetric InfoNCE
baseline with analytic gradients, projection finetuning by plain gradient
descent, and the confusion-matrix classifier used inside the simulator.
"""

from __future__ import annotations

import csv
import enum
import logging
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.special import logsumexp

log = logging.getLogger(__name__)

DEFAULT_TAU = 0.07
DEFAULT_DIM = 64


class ObservationMode(enum.Enum):
    REPEATED = "repeated"
    SPATIAL = "spatial"


class LossKind(enum.Enum):
    MSCL = "mscl"
    INFONCE = "infonce"


class TrainingDiverged(FloatingPointError):
    pass


def _unit_rows(x: np.ndarray, what: str) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    norms = np.linalg.norm(x, axis=-1, keepdims=True)
    if np.any(norms == 0) or not np.all(np.isfinite(x)):
        raise ValueError(f"{what} must be finite with non-zero norm")
    return x / norms


def cosine_similarities(features: np.ndarray, prototypes: np.ndarray) -> np.ndarray:
    """Cosine similarity of each feature row against each prototype row."""
    return _unit_rows(features, "observation feature") @ _unit_rows(prototypes, "prototype").T


def softmax(z: np.ndarray, axis: int = -1) -> np.ndarray:
    z = z - z.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def classify(obs_feature: np.ndarray, prototypes: np.ndarray, tau: float = DEFAULT_TAU) -> tuple[int, np.ndarray]:
    """Return the cosine-argmax label and softmax(similarity / tau) over labels."""
    sims = cosine_similarities(np.atleast_2d(obs_feature), prototypes)[0]
    return int(np.argmax(sims)), softmax(sims / tau)


def classify_batch(features: np.ndarray, prototypes: np.ndarray) -> np.ndarray:
    return np.argmax(cosine_similarities(features, prototypes), axis=1)


# -- contrastive batches -------------------------------------------------------------


@dataclass
class ContrastiveBatch:
    """Image features followed by one text feature per distinct label.

    ``features`` stacks the N image features and the K deduplicated text
    features (in first-appearance order); ``labels`` holds the matching label
    of every row.
    """

    features: np.ndarray
    labels: np.ndarray
    num_images: int
    tau: float = DEFAULT_TAU

    @property
    def N(self) -> int:
        return self.num_images

    @property
    def K(self) -> int:
        return self.features.shape[0] - self.num_images

    @property
    def image_features(self) -> np.ndarray:
        return self.features[:self.num_images]

    @property
    def text_features(self) -> np.ndarray:
        return self.features[self.num_images:]

    @property
    def image_labels(self) -> np.ndarray:
        return self.labels[:self.num_images]

    @property
    def text_labels(self) -> np.ndarray:
        return self.labels[self.num_images:]

    def anchors(self, i: int) -> np.ndarray:
        """Indices every row other than ``i`` (the contrast set)."""
        idx = np.arange(self.features.shape[0])
        return idx[idx != i]

    def positives(self, i: int) -> np.ndarray:
        """Rows other than ``i`` sharing its label."""
        idx = self.anchors(i)
        return idx[self.labels[idx] == self.labels[i]]


def build_batch(images: np.ndarray, labels: Sequence[int], prototypes: np.ndarray,
                tau: float = DEFAULT_TAU) -> ContrastiveBatch:
    images = np.atleast_2d(np.asarray(images, dtype=np.float64))
    labels = np.asarray(labels, dtype=np.int64)
    prototypes = np.asarray(prototypes, dtype=np.float64)
    if images.shape[0] < 1:
        raise ValueError("a batch needs at least one image")
    if labels.shape != (images.shape[0],):
        raise ValueError("need exactly one label per image")
    if np.any(labels < 0) or np.any(labels >= prototypes.shape[0]):
        raise ValueError(f"label index outside [0, {prototypes.shape[0]})")
    _, first = np.unique(labels, return_index=True)
    text_labels = labels[np.sort(first)]
    features = np.concatenate([images, prototypes[text_labels]], axis=0)
    return ContrastiveBatch(features, np.concatenate([labels, text_labels]), images.shape[0], tau)


def mscl_loss(batch: ContrastiveBatch) -> tuple[float, np.ndarray]:
    """Multi-modal supervised contrastive loss summed over anchors, and its gradient.

    Anchors without any positive are skipped. The gradient is taken with
    respect to every row of ``batch.features``.
    """
    tau = batch.tau
    if tau <= 0:
        raise ValueError("temperature must be positive")
    x = batch.features
    y = batch.labels
    m = x.shape[0]
    s = x @ x.T / tau
    off_diag = ~np.eye(m, dtype=bool)
    pos = (y[:, None] == y[None, :]) & off_diag
    n_pos = pos.sum(axis=1)
    active = n_pos > 0
    if not np.any(active):
        raise ValueError("batch has no positive pairs")

    neg_inf = np.full_like(s, -np.inf)
    s_all = np.where(off_diag, s, neg_inf)
    s_pos = np.where(pos, s, neg_inf)
    lse_all = logsumexp(s_all[active], axis=1)
    lse_pos = logsumexp(s_pos[active], axis=1)
    loss = float(np.sum(lse_all - lse_pos + np.log(n_pos[active])))

    g = np.zeros_like(s)
    g[active] = (np.exp(s_all[active] - lse_all[:, None])
                 - np.exp(s_pos[active] - lse_pos[:, None]))
    grad = (g + g.T) @ x / tau
    return loss, grad


def infonce_loss(batch: ContrastiveBatch) -> tuple[float, np.ndarray]:
    """Symmetric image/text InfoNCE, each image paired with its own label's text.

    Texts are duplicated per image (repeated labels are not merged), and each
    direction is averaged over the batch. The gradient has the layout of
    ``batch.features``; contributions of duplicated texts accumulate onto
    their shared row.
    """
    tau = batch.tau
    if tau <= 0:
        raise ValueError("temperature must be positive")
    n = batch.N
    v = batch.image_features
    text_row = {int(lbl): batch.N + k for k, lbl in enumerate(batch.text_labels)}
    rows = np.array([text_row[int(lbl)] for lbl in batch.image_labels])
    t = batch.features[rows]
    z = v @ t.T / tau
    lse_r = logsumexp(z, axis=1)
    lse_c = logsumexp(z, axis=0)
    diag = np.diag(z)
    loss = float(np.mean(lse_r - diag) + np.mean(lse_c - diag))

    eye = np.eye(n)
    dz = (np.exp(z - lse_r[:, None]) - eye) / n + (np.exp(z - lse_c[None, :]) - eye) / n
    grad = np.zeros_like(batch.features)
    grad[:n] = dz @ t / tau
    np.add.at(grad, rows, dz.T @ v / tau)
    return loss, grad


_LOSSES = {LossKind.MSCL: mscl_loss, LossKind.INFONCE: infonce_loss}


# -- projection finetuning -------------------------------------------------------------


@dataclass
class FinetuneConfig:
    lr: float = 1e-2
    epochs: int = 10
    batch_size: int = 32
    tau: float = DEFAULT_TAU
    seed: int = 0


@dataclass
class FinetuneResult:
    projection: np.ndarray
    history: list[tuple[int, float, float]] = field(default_factory=list)

    def write_history(self, path_or_file) -> None:
        write_history_csv(self.history, path_or_file)


def projection_loss_and_grad(weights: np.ndarray, raw: np.ndarray, labels: np.ndarray, prototypes: np.ndarray,
                             loss: LossKind = LossKind.MSCL, tau: float = DEFAULT_TAU) -> tuple[float, np.ndarray]:
    """Contrastive loss of normalized ``raw @ weights`` and its gradient w.r.t. the weights."""
    z = raw @ weights
    norms = np.linalg.norm(z, axis=1, keepdims=True)
    u = z / norms
    batch = build_batch(u, labels, prototypes, tau)
    value, grad = _LOSSES[LossKind(loss)](batch)
    gu = grad[:batch.N]
    gz = (gu - u * np.sum(u * gu, axis=1, keepdims=True)) / norms
    return value, raw.T @ gz


def init_projection(d_in: int, d_out: int, seed: int = 0) -> np.ndarray:
    """Identity when the dimensions agree, otherwise a seeded scaled Gaussian."""
    if d_in == d_out:
        return np.eye(d_in)
    return np.random.default_rng(seed).normal(0.0, 1.0 / math.sqrt(d_in), size=(d_in, d_out))


def finetune_projection(raw: np.ndarray, labels: np.ndarray, prototypes: np.ndarray,
                        loss: LossKind | str = LossKind.MSCL, config: FinetuneConfig | None = None,
                        val: tuple[np.ndarray, np.ndarray] | None = None,
                        init: np.ndarray | None = None) -> FinetuneResult:
    """Train the visual projection with frozen raw features and frozen prototypes."""
    config = config or FinetuneConfig()
    loss = LossKind(loss)
    raw = np.asarray(raw, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if raw.shape[0] == 0:
        raise ValueError("empty training set")
    weights = init_projection(raw.shape[1], prototypes.shape[1], config.seed) if init is None else init.copy()
    rng = np.random.default_rng(config.seed)
    result = FinetuneResult(weights)
    for epoch in range(config.epochs):
        order = rng.permutation(raw.shape[0])
        losses = []
        for start in range(0, len(order), config.batch_size):
            idx = order[start:start + config.batch_size]
            try:
                value, grad = projection_loss_and_grad(weights, raw[idx], labels[idx], prototypes, loss, config.tau)
            except ValueError as exc:
                # a batch with no positive pair carries no MSCL signal
                log.debug("skipping batch at epoch %d: %s", epoch, exc)
                continue
            if not (math.isfinite(value) and np.all(np.isfinite(grad))):
                raise TrainingDiverged(f"non-finite loss at epoch {epoch}, batch offset {start}: {value}")
            weights = weights - config.lr * grad
            losses.append(value)
        val_acc = float("nan")
        if val is not None:
            val_acc = accuracy(val[0] @ weights, val[1], prototypes)
        result.history.append((epoch, float(np.mean(losses)) if losses else float("nan"), val_acc))
    result.projection = weights
    return result


def accuracy(features: np.ndarray, labels: np.ndarray, prototypes: np.ndarray) -> float:
    return float(np.mean(classify_batch(features, prototypes) == np.asarray(labels)))


def write_history_csv(history, path_or_file) -> None:
    def _write(fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "train_loss", "val_acc"])
        for epoch, train_loss, val_acc in history:
            w.writerow([epoch, f"{train_loss:.10g}", f"{val_acc:.10g}"])

    if hasattr(path_or_file, "write"):
        _write(path_or_file)
    else:
        with open(path_or_file, "w", newline="") as fh:
            _write(fh)


# -- synthetic embedding data ----------------------------------------------------------


def random_prototypes(num_labels: int, dim: int = DEFAULT_DIM, seed: int = 0) -> np.ndarray:
    return _unit_rows(np.random.default_rng(seed).normal(size=(num_labels, dim)), "prototype")


@dataclass
class FeatureGenerator:
    """Raw "pretrained" features as noisy mixtures of prototypes.

    A sample of label ``y`` mixes its own prototype (weight ``mix``) with the
    prototype of a fixed confuser label ``confuser[y]``, adds isotropic noise
    and a shared offset. With ``mix < 0.5`` a frozen identity projection
    mostly predicts the confuser, while a learned linear map can undo the
    mixing.
    """

    prototypes: np.ndarray
    mix: float = 0.4
    noise: float = 2.0
    offset_scale: float = 0.3
    seed: int = 0

    def __post_init__(self):
        rng = np.random.default_rng(self.seed)
        c, d = self.prototypes.shape
        shift = rng.integers(1, c) if c > 1 else 0
        self.confuser = (np.arange(c) + shift) % c
        self.offset = self.offset_scale * _unit_rows(rng.normal(size=(1, d)), "offset")[0]

    def sample(self, labels: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        labels = np.asarray(labels, dtype=np.int64)
        p = self.prototypes
        x = self.mix * p[labels] + (1.0 - self.mix) * p[self.confuser[labels]]
        x = x + self.offset + self.noise * rng.normal(size=x.shape) / math.sqrt(p.shape[1])
        return x


def make_feature_dataset(gen: FeatureGenerator, n: int, seed: int,
                         label_weights: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng(seed)
    c = gen.prototypes.shape[0]
    labels = rng.choice(c, size=n, p=label_weights)
    return gen.sample(labels, rng), labels


_FEAT_HEADER = struct.Struct("<4sIII")


def save_feature_dataset(path, raw: np.ndarray, labels: np.ndarray, num_labels: int) -> None:
    """``b"ISRF" | u32 D | u32 C | u32 count`` then per record D f32 values and a u16 label."""
    raw = np.asarray(raw)
    n, d = raw.shape
    rec = np.dtype([("x", "<f4", (d,)), ("y", "<u2")])
    arr = np.empty(n, dtype=rec)
    arr["x"] = raw
    arr["y"] = labels
    Path(path).write_bytes(_FEAT_HEADER.pack(b"ISRF", d, num_labels, n) + arr.tobytes())


def load_feature_dataset(path) -> tuple[np.ndarray, np.ndarray, int]:
    data = Path(path).read_bytes()
    magic, d, c, n = _FEAT_HEADER.unpack_from(data)
    if magic != b"ISRF":
        raise ValueError(f"bad feature dataset magic {magic!r}")
    rec = np.dtype([("x", "<f4", (d,)), ("y", "<u2")])
    arr = np.frombuffer(data, dtype=rec, count=n, offset=_FEAT_HEADER.size)
    return arr["x"].astype(np.float64), arr["y"].astype(np.int64), c


# -- simulator-facing classifier -------------------------------------------------------


@dataclass
class ObservationDistribution:
    mode: ObservationMode
    repeated: np.ndarray | None = None
    spatial: np.ndarray | None = None

    @property
    def num_labels(self) -> int:
        src = self.repeated if self.mode is ObservationMode.REPEATED else self.spatial
        return src.shape[-1]


def confusion_matrix(num_labels: int, diagonal: float) -> np.ndarray:
    """Row-stochastic matrix with ``diagonal`` on the diagonal and the rest spread evenly."""
    if num_labels == 1:
        return np.ones((1, 1))
    off = (1.0 - diagonal) / (num_labels - 1)
    m = np.full((num_labels, num_labels), off)
    np.fill_diagonal(m, diagonal)
    return m


def majority_label(ray_labels: np.ndarray, num_labels: int) -> int:
    return int(np.argmax(np.bincount(ray_labels, minlength=num_labels)))


def synth_classify(ray_labels: Sequence[int], confusion: np.ndarray, mode: ObservationMode | str,
                   rng: np.random.Generator | int | None = None, sample: bool = False) -> ObservationDistribution:
    """Stand-in classifier emitting confusion-matrix rows.

    Repeated mode returns the row of the majority visible label; spatial mode
    returns one row per ray. With ``sample=True`` the emitted row is that of a
    label drawn from the true label's row (one draw per observation in
    repeated mode, one per ray in spatial mode), so a confusable classifier
    sometimes reports the wrong label with the same confidence.
    """
    ray_labels = np.asarray(ray_labels, dtype=np.int64)
    confusion = np.asarray(confusion, dtype=np.float64)
    mode = ObservationMode(mode)
    if ray_labels.size == 0:
        raise ValueError("no visible rays to classify")
    if not np.allclose(confusion.sum(axis=1), 1.0, atol=1e-9):
        raise ValueError("confusion rows must sum to 1")
    num_labels = confusion.shape[0]
    if sample:
        rng = np.random.default_rng(rng)
    if mode is ObservationMode.REPEATED:
        label = majority_label(ray_labels, num_labels)
        if sample:
            label = int(rng.choice(num_labels, p=confusion[label]))
        return ObservationDistribution(mode, repeated=confusion[label].copy())
    labels = ray_labels
    if sample:
        cdf = np.cumsum(confusion[labels], axis=1)
        u = rng.random(labels.size)[:, None]
        labels = np.minimum((u >= cdf).sum(axis=1), num_labels - 1)
    return ObservationDistribution(mode, spatial=confusion[labels].copy())
