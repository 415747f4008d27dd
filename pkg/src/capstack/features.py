"""Annotation-vector ingestion and generation.

The decoder never sees pixels, only per-region annotation vectors.  These
arrive either from the "ICFE" binary feature file (written by any external
exporter) or from the deterministic toy patch encoder that stands in for a
convolutional backbone at desk scale, plus a synthetic shapes-and-captions
dataset generator for end-to-end runs.

ICFE layout (all integers u32 little-endian):

    magic "ICFE" | version=1 | count | L | D
    per record: id_length | id bytes (utf-8) | L*D float32 little-endian
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import FormatError

ICFE_MAGIC = b"ICFE"
ICFE_VERSION = 1

SHAPES = ("square", "circle", "triangle")
COLORS = {
    "red": (220, 40, 40),
    "green": (40, 190, 70),
    "blue": (45, 90, 220),
    "yellow": (235, 220, 60),
}

# Single-shape placements on the 3x3 grid that have an unambiguous name.
_NAMED_CELLS = {
    (0, 1): "top",
    (2, 1): "bottom",
    (1, 0): "left",
    (1, 2): "right",
    (1, 1): "center",
}
_INVERSE_RELATION = {
    "above": "below",
    "below": "above",
    "left of": "right of",
    "right of": "left of",
}


@dataclass
class FeatureSet:
    """Per-image annotation vectors: L regions by D feature dimensions."""

    image_id: str
    annotations: np.ndarray

    def __post_init__(self):
        self.annotations = np.asarray(self.annotations, dtype=np.float64)
        if self.annotations.ndim != 2 or min(self.annotations.shape) < 1:
            raise ValueError(
                f"annotations must be a non-empty L x D matrix, got shape "
                f"{self.annotations.shape}"
            )
        if not np.isfinite(self.annotations).all():
            raise ValueError(f"non-finite annotation values for image {self.image_id!r}")


def write_features(sets, path):
    """Write feature sets in the ICFE binary layout; shapes must be uniform."""
    if sets:
        regions, dims = sets[0].annotations.shape
        for fs in sets:
            if fs.annotations.shape != (regions, dims):
                raise ValueError(
                    f"non-uniform annotation shapes: {fs.annotations.shape} vs "
                    f"{(regions, dims)}"
                )
    else:
        regions, dims = 0, 0
    with open(path, "wb") as fh:
        fh.write(ICFE_MAGIC)
        fh.write(struct.pack("<IIII", ICFE_VERSION, len(sets), regions, dims))
        for fs in sets:
            ident = fs.image_id.encode("utf-8")
            fh.write(struct.pack("<I", len(ident)))
            fh.write(ident)
            fh.write(fs.annotations.astype("<f4").tobytes())


def read_features(path):
    """Inverse of :func:`write_features` modulo the 32-bit storage rounding."""
    with open(path, "rb") as fh:
        buf = fh.read()

    def take(offset, n):
        if offset + n > len(buf):
            raise FormatError(f"{path}: truncated at byte {len(buf)} (needed {offset + n})")
        return buf[offset : offset + n], offset + n

    chunk, pos = take(0, 4)
    if chunk != ICFE_MAGIC:
        raise FormatError(f"{path}: bad magic {chunk!r}, expected {ICFE_MAGIC!r}")
    chunk, pos = take(pos, 16)
    version, count, regions, dims = struct.unpack("<IIII", chunk)
    if version != ICFE_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    sets = []
    for _ in range(count):
        chunk, pos = take(pos, 4)
        (id_len,) = struct.unpack("<I", chunk)
        chunk, pos = take(pos, id_len)
        image_id = chunk.decode("utf-8")
        chunk, pos = take(pos, regions * dims * 4)
        values = np.frombuffer(chunk, dtype="<f4").astype(np.float64)
        sets.append(FeatureSet(image_id, values.reshape(regions, dims)))
    return sets


def toy_patch_encode(img, grid, image_id=""):
    """Grid-pooled image descriptor standing in for a convolutional encoder.

    The image is split into ``grid x grid`` cells (row-major).  Each cell
    contributes channel mean intensities scaled to [0, 1] followed by the
    normalized cell-center (row, col); so L = grid**2 and D = channels + 2.
    The position features follow the fixed grid, independent of content.
    """
    img = np.asarray(img)
    if img.ndim != 3:
        raise ValueError(f"expected an H x W x C image, got shape {img.shape}")
    height, width, channels = img.shape
    if height < grid or width < grid:
        raise ValueError(f"image {height}x{width} smaller than grid {grid}")
    rows = []
    for i in range(grid):
        r0, r1 = i * height // grid, (i + 1) * height // grid
        for j in range(grid):
            c0, c1 = j * width // grid, (j + 1) * width // grid
            cell = img[r0:r1, c0:c1].astype(np.float64)
            means = cell.mean(axis=(0, 1)) / 255.0
            center = ((i + 0.5) / grid, (j + 0.5) / grid)
            rows.append(np.concatenate([means, center]))
    return FeatureSet(image_id, np.stack(rows))


@dataclass
class SyntheticSample:
    image_id: str
    image: np.ndarray
    captions: list
    split: str
    scene: dict = field(default_factory=dict)


def _draw_shape(img, shape, color, cell, grid):
    height, width, _ = img.shape
    r0, r1 = cell[0] * height // grid, (cell[0] + 1) * height // grid
    c0, c1 = cell[1] * width // grid, (cell[1] + 1) * width // grid
    cy, cx = (r0 + r1) / 2.0, (c0 + c1) / 2.0
    half = 0.38 * min(r1 - r0, c1 - c0)
    ys, xs = np.mgrid[r0:r1, c0:c1]
    if shape == "square":
        mask = (np.abs(ys - cy) <= half) & (np.abs(xs - cx) <= half)
    elif shape == "circle":
        mask = (ys - cy) ** 2 + (xs - cx) ** 2 <= half**2
    else:  # triangle pointing up
        rel = (ys - (cy - half)) / (2 * half)  # 0 at apex, 1 at base
        mask = (rel >= 0) & (rel <= 1) & (np.abs(xs - cx) <= rel * half)
    img[r0:r1, c0:c1][mask] = color


def _one_shape_captions(color, shape, position):
    return [
        f"a {color} {shape} at the {position}",
        f"the {color} {shape} is at the {position}",
        f"there is a {color} {shape} at the {position}",
        f"one {color} {shape} at the {position}",
        f"a {color} {shape} sits at the {position}",
    ]


def _two_shape_captions(c1, s1, relation, c2, s2):
    inverse = _INVERSE_RELATION[relation]
    return [
        f"a {c1} {s1} {relation} a {c2} {s2}",
        f"a {c2} {s2} {inverse} a {c1} {s1}",
        f"the {c1} {s1} is {relation} the {c2} {s2}",
        f"the {c2} {s2} is {inverse} the {c1} {s1}",
        f"there is a {c1} {s1} {relation} a {c2} {s2}",
    ]


def generate_synthetic_dataset(n, seed, image_size=48, grid=3):
    """Deterministic shapes-on-a-grid dataset with position-dependent captions.

    Each image holds one or two colored shapes placed in cells of a
    ``grid x grid`` layout; every image carries 5 paraphrase captions that are
    truthful by construction (the scene record spells out what was drawn).
    Samples are split 80/10/10 into train/val/test by index.
    """
    if n < 3:
        raise ValueError(f"need at least 3 samples for a train/val/test split, got {n}")
    if grid != 3:
        raise ValueError("caption templates assume the 3x3 placement grid")
    rng = np.random.default_rng(seed)
    n_train = int(n * 0.8)
    n_val = int(n * 0.1)
    color_names = list(COLORS)
    named_cells = list(_NAMED_CELLS)
    samples = []
    for idx in range(n):
        img = np.zeros((image_size, image_size, 3), dtype=np.uint8)
        two_shapes = rng.random() < 0.5
        if two_shapes:
            color1, color2 = (color_names[int(k)] for k in rng.integers(len(color_names), size=2))
            shape1, shape2 = (SHAPES[int(k)] for k in rng.integers(len(SHAPES), size=2))
            if rng.random() < 0.5:  # vertical pair: first shape above
                col = int(rng.integers(grid))
                r1, r2 = sorted(rng.choice(grid, size=2, replace=False))
                cell1, cell2 = (int(r1), col), (int(r2), col)
                relation = "above"
            else:
                rrow = int(rng.integers(grid))
                c1, c2 = sorted(rng.choice(grid, size=2, replace=False))
                cell1, cell2 = (rrow, int(c1)), (rrow, int(c2))
                relation = "left of"
            _draw_shape(img, shape1, COLORS[color1], cell1, grid)
            _draw_shape(img, shape2, COLORS[color2], cell2, grid)
            captions = _two_shape_captions(color1, shape1, relation, color2, shape2)
            scene = {
                "shapes": [(color1, shape1, cell1), (color2, shape2, cell2)],
                "relation": relation,
            }
        else:
            color = color_names[int(rng.integers(len(color_names)))]
            shape = SHAPES[int(rng.integers(len(SHAPES)))]
            cell = named_cells[int(rng.integers(len(named_cells)))]
            _draw_shape(img, shape, COLORS[color], cell, grid)
            position = _NAMED_CELLS[cell]
            captions = _one_shape_captions(color, shape, position)
            scene = {"shapes": [(color, shape, cell)], "position": position}
        split = "train" if idx < n_train else ("val" if idx < n_train + n_val else "test")
        samples.append(SyntheticSample(f"synth{idx:04d}", img, captions, split, scene))
    return samples


def write_manifest(samples, path):
    """Line-delimited manifest: id, split, then the 5 captions joined by '|'."""
    with open(path, "w", encoding="utf-8") as fh:
        for s in samples:
            fh.write(f"{s.image_id}\t{s.split}\t{'|'.join(s.captions)}\n")


def read_manifest(path):
    """Parse a manifest back into (image_id, split, captions) tuples."""
    entries = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise FormatError(f"{path}: line {lineno}: expected 3 tab-separated fields")
            image_id, split, caps = parts
            if split not in ("train", "val", "test"):
                raise FormatError(f"{path}: line {lineno}: unknown split {split!r}")
            entries.append((image_id, split, caps.split("|")))
    return entries
