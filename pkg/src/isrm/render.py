"""PPM rendering of semantic maps, one pixel per cell.

Image rows run from high ``j`` (top) to low ``j`` so that world +y points up
and world +x points right. Unobserved cells are white and observed cells with
occupancy >= 0.5 are black; every other observed cell takes the color of its
argmax label.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .grid import GridMap

UNOBSERVED_COLOR = (255, 255, 255)
OBSTACLE_COLOR = (0, 0, 0)

# One color per label in the default label order
PALETTE = np.array([
    (31, 119, 180),   # bathroom
    (255, 127, 14),   # bedroom
    (44, 160, 44),    # closet
    (214, 39, 40),    # dining room
    (148, 103, 189),  # garage
    (140, 86, 75),    # gym
    (227, 119, 194),  # hallway
    (127, 127, 127),  # kitchen
    (188, 189, 34),   # library
    (23, 190, 207),   # living room
    (174, 199, 232),  # office
    (255, 187, 120),  # other room
    (152, 223, 138),  # outdoor
    (255, 152, 150),  # stairs
], dtype=np.uint8)

UNOBSERVED = -1
OBSTACLE = -2


def _check_palette(palette: np.ndarray, num_labels: int) -> np.ndarray:
    palette = np.asarray(palette, dtype=np.uint8)
    if palette.ndim != 2 or palette.shape[1] != 3 or palette.shape[0] < num_labels:
        raise ValueError(f"palette needs at least {num_labels} RGB rows")
    colors = {tuple(c) for c in palette[:num_labels].tolist()}
    if len(colors) < num_labels or colors & {UNOBSERVED_COLOR, OBSTACLE_COLOR}:
        raise ValueError("palette colors must be distinct and differ from white and black")
    return palette


def label_image(m: GridMap, occupied: float = 0.5) -> np.ndarray:
    """Per-cell label in image layout: label index, UNOBSERVED or OBSTACLE."""
    observed = m.obs_count > 0
    out = np.where(observed, m.labels(), UNOBSERVED)
    out[observed & (m.occupancy >= occupied)] = OBSTACLE
    return np.ascontiguousarray(out.T[::-1])


def map_image(m: GridMap, palette: np.ndarray = PALETTE) -> np.ndarray:
    """RGB uint8 array of shape (rows, cols, 3)."""
    palette = _check_palette(palette, m.num_labels)
    labels = label_image(m)
    img = np.empty(labels.shape + (3,), dtype=np.uint8)
    img[...] = UNOBSERVED_COLOR
    img[labels == OBSTACLE] = OBSTACLE_COLOR
    known = labels >= 0
    img[known] = palette[labels[known]]
    return img


def decode_image(img: np.ndarray, palette: np.ndarray = PALETTE, num_labels: int | None = None) -> np.ndarray:
    """Invert :func:`map_image`: colors back to labels, UNOBSERVED or OBSTACLE."""
    num_labels = palette.shape[0] if num_labels is None else num_labels
    palette = _check_palette(palette, num_labels)
    key = lambda rgb: (rgb[..., 0].astype(np.int64) << 16) | (rgb[..., 1].astype(np.int64) << 8) | rgb[..., 2]
    lut = {int(k): i for i, k in enumerate(key(palette[:num_labels]))}
    lut[int(key(np.array(UNOBSERVED_COLOR)))] = UNOBSERVED
    lut[int(key(np.array(OBSTACLE_COLOR)))] = OBSTACLE
    codes = key(img)
    try:
        return np.vectorize(lut.__getitem__, otypes=[np.int64])(codes)
    except KeyError as exc:
        raise ValueError(f"color {exc.args[0]:06x} is not in the palette") from None


def ppm_bytes(img: np.ndarray) -> bytes:
    h, w, _ = img.shape
    return f"P6\n{w} {h}\n255\n".encode("ascii") + np.ascontiguousarray(img, dtype=np.uint8).tobytes()


def read_ppm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    parts = data.split(maxsplit=4)
    if len(parts) < 5 or parts[0] != b"P6" or parts[3] != b"255":
        raise ValueError("not a binary 8-bit PPM")
    w, h = int(parts[1]), int(parts[2])
    return np.frombuffer(parts[4][:w * h * 3], dtype=np.uint8).reshape(h, w, 3)


def render_map(m: GridMap, out, palette: np.ndarray = PALETTE) -> Path:
    out = Path(out)
    out.write_bytes(ppm_bytes(map_image(m, palette)))
    return out


def floorplan_image(fp, palette: np.ndarray = PALETTE) -> np.ndarray:
    """Ground-truth panel in the same layout and colors as :func:`map_image`."""
    palette = _check_palette(palette, fp.labels.C)
    labels = np.where(fp.occupancy, OBSTACLE, fp.region.astype(np.int64))
    labels = np.ascontiguousarray(labels.T[::-1])
    img = np.empty(labels.shape + (3,), dtype=np.uint8)
    img[...] = OBSTACLE_COLOR
    known = labels >= 0
    img[known] = palette[labels[known]]
    return img
