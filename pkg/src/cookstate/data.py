"""Dataset manifest, deterministic splitting, preprocessing and batching.

Images enter the pipeline as raw ``3 x H x W`` arrays with values in
[0, 255]. The core reads PPM (P6, 8-bit) files or pre-converted SSTF tensor
files; decoding anything else is the job of the ``convert`` CLI helper.

Preprocessing is sample-wise: bilinear resize to the target grid, subtract
the image's own mean (over all pixels and channels), divide by its own
population standard deviation (floored at 1e-7). Augmentation composes one
affine map per image (rotate, shear, zoom, shift about the center, optional
horizontal flip) and resamples bilinearly; see :mod:`cookstate.augment`.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError, IOFailure
from .rng import BATCH, SPLIT, Rng
from .sstf import read_tensors
from .tensor import default_dtype

# The seven preparation-state classes, alphabetical.
CLASS_NAMES = ("creamy", "diced", "grated", "juiced", "julienne", "sliced", "whole")

# Published per-class figures for the challenge dataset; the stated grand
# total (5978) disagrees with their sum (6178), so validation reports both
# and enforces neither.
PUBLISHED_CLASS_COUNTS = {
    "creamy": 730, "diced": 700, "grated": 819, "juiced": 638,
    "julienne": 672, "sliced": 1315, "whole": 1304,
}
PUBLISHED_TOTAL = 5978

_SAMPLE_SUFFIXES = (".ppm", ".sstf")


# ---------------------------------------------------------------------------
# PPM I/O


def read_ppm(path) -> np.ndarray:
    """Read a binary P6 PPM into a uint8 array of shape 3 x H x W."""
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as exc:
        raise IOFailure(f"cannot read {path}: {exc}") from exc
    if not blob.startswith(b"P6"):
        raise DataError(f"{path}: not a binary P6 PPM")
    fields, off = [], 2
    while len(fields) < 3:
        while off < len(blob) and blob[off : off + 1].isspace():
            off += 1
        if blob[off : off + 1] == b"#":
            while off < len(blob) and blob[off : off + 1] != b"\n":
                off += 1
            continue
        start = off
        while off < len(blob) and not blob[off : off + 1].isspace():
            off += 1
        fields.append(blob[start:off])
    off += 1  # single whitespace after maxval
    w, h, maxval = (int(f) for f in fields)
    if maxval != 255:
        raise DataError(f"{path}: only 8-bit PPMs supported (maxval {maxval})")
    if len(blob) - off < h * w * 3:
        raise DataError(f"{path}: truncated pixel data")
    data = np.frombuffer(blob, dtype=np.uint8, count=h * w * 3, offset=off)
    return data.reshape(h, w, 3).transpose(2, 0, 1).copy()


def write_ppm(path, image) -> None:
    """Write a 3 x H x W array (values 0..255) as binary P6."""
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[0] != 3:
        raise DataError(f"write_ppm expects 3 x H x W, got {image.shape}")
    pixels = np.clip(np.rint(image), 0, 255).astype(np.uint8).transpose(1, 2, 0)
    header = f"P6\n{image.shape[2]} {image.shape[1]}\n255\n".encode()
    try:
        Path(path).write_bytes(header + pixels.tobytes())
    except OSError as exc:
        raise IOFailure(f"cannot write {path}: {exc}") from exc


def load_sample(path) -> np.ndarray:
    """Load one sample file (.ppm or .sstf) as float 3 x H x W in [0, 255]."""
    path = Path(path)
    if path.suffix == ".ppm":
        return read_ppm(path).astype(default_dtype())
    if path.suffix == ".sstf":
        tensors = read_tensors(path)
        if "image" not in tensors:
            raise DataError(f"{path}: SSTF sample must contain an 'image' record")
        img = tensors["image"].astype(default_dtype())
        if img.ndim != 3 or img.shape[0] != 3:
            raise DataError(f"{path}: image record must be 3 x H x W, got {img.shape}")
        return img
    raise DataError(f"{path}: unsupported sample format")


# ---------------------------------------------------------------------------
# manifest


@dataclass
class DatasetManifest:
    """Class-labeled sample index, sorted by (class, filename)."""

    root: str
    class_names: list
    entries: list  # (relative path, class index)
    skipped: list = field(default_factory=list)

    @property
    def counts(self) -> dict:
        out = {name: 0 for name in self.class_names}
        for _, label in self.entries:
            out[self.class_names[label]] += 1
        return out

    def labels(self) -> np.ndarray:
        return np.array([label for _, label in self.entries], dtype=np.int64)

    def __len__(self):
        return len(self.entries)

    def to_json(self) -> str:
        return json.dumps(
            {
                "format": "cookstate-manifest", "version": 1, "root": self.root,
                "class_names": list(self.class_names),
                "entries": [[p, int(l)] for p, l in self.entries],
                "skipped": list(self.skipped),
            },
            indent=2,
        )

    @classmethod
    def from_json(cls, text: str) -> "DatasetManifest":
        doc = json.loads(text)
        if doc.get("format") != "cookstate-manifest":
            raise DataError("not a manifest document")
        return cls(doc["root"], doc["class_names"],
                   [(p, int(l)) for p, l in doc["entries"]], doc.get("skipped", []))

    def validate_against_published(self) -> list:
        """Compare per-class counts with the published figures; returns a list
        of human-readable discrepancy lines (empty = everything matches)."""
        notes = []
        counts = self.counts
        for name in self.class_names:
            expected = PUBLISHED_CLASS_COUNTS.get(name)
            if expected is not None and counts[name] != expected:
                notes.append(f"class {name}: {counts[name]} samples, published {expected}")
        total = len(self.entries)
        published_sum = sum(PUBLISHED_CLASS_COUNTS.values())
        if total != PUBLISHED_TOTAL:
            notes.append(
                f"total {total} differs from the stated total {PUBLISHED_TOTAL}; note the "
                f"published per-class figures themselves sum to {published_sum}, so the two "
                f"published numbers are mutually inconsistent and neither is enforced"
            )
        return notes


def build_manifest(root, class_names=None) -> DatasetManifest:
    """Scan ``root`` (one subdirectory per class) into a sorted manifest.

    With an explicit ``class_names`` list, a subdirectory outside the
    vocabulary is an error; otherwise the vocabulary is the sorted list of
    subdirectories found. Unreadable or non-sample files are recorded in the
    skip report rather than failing the scan.
    """
    root = Path(root)
    if not root.is_dir():
        raise DataError(f"manifest root {root} is not a directory")
    found = sorted(d.name for d in root.iterdir() if d.is_dir())
    if class_names is None:
        class_names = found
        if not class_names:
            raise DataError(f"manifest root {root} has no class directories")
    else:
        class_names = list(class_names)
        unknown = [d for d in found if d not in class_names]
        if unknown:
            raise DataError(f"unknown class directories under {root}: {unknown}")
    entries, skipped = [], []
    for label, name in enumerate(class_names):
        cdir = root / name
        if not cdir.is_dir():
            warnings.warn(f"class directory {cdir} missing; count 0")
            continue
        files = sorted(p.name for p in cdir.iterdir() if p.is_file())
        kept = 0
        for fname in files:
            if not fname.lower().endswith(_SAMPLE_SUFFIXES):
                skipped.append(f"{name}/{fname}")
                continue
            entries.append((f"{name}/{fname}", label))
            kept += 1
        if kept == 0:
            warnings.warn(f"class {name!r} has no readable samples")
    return DatasetManifest(str(root), class_names, entries, skipped)


# ---------------------------------------------------------------------------
# splitting


@dataclass
class SplitPlan:
    """Deterministic partition of manifest indices into train/val/test."""

    seed: int
    mode: str  # "ratio" | "counts"
    train: list
    val: list
    test: list

    def sizes(self):
        return len(self.train), len(self.val), len(self.test)

    def to_json(self) -> str:
        return json.dumps(
            {"format": "cookstate-split", "version": 1, "seed": self.seed,
             "mode": self.mode, "train": self.train, "val": self.val, "test": self.test},
            indent=2,
        )

    @classmethod
    def from_json(cls, text: str) -> "SplitPlan":
        doc = json.loads(text)
        if doc.get("format") != "cookstate-split":
            raise DataError("not a split document")
        return cls(doc["seed"], doc["mode"], doc["train"], doc["val"], doc["test"])


def _partition_sizes(n, ratios=None, counts=None):
    if (ratios is None) == (counts is None):
        raise ConfigError("specify exactly one of ratios or counts")
    if counts is not None:
        counts = list(counts) + [0] * (3 - len(counts))
        if sum(counts) != n:
            raise ConfigError(f"explicit counts {counts} do not sum to {n}")
        return counts
    ratios = list(ratios) + [0.0] * (3 - len(ratios))
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ConfigError(f"ratios {ratios} must sum to 1")
    sizes = [int(n * r) for r in ratios]
    sizes[0] += n - sum(sizes)  # remainder goes to the training slice
    return sizes


def split_dataset(n, seed, ratios=None, counts=None, stratified=False, labels=None) -> SplitPlan:
    """Shuffle indices with the seeded generator and slice contiguously.

    Ratio sizes are ``floor(n * r)`` with the remainder assigned to train.
    ``stratified`` applies the same procedure per class (requires labels);
    leftover rounding samples land in train.
    """
    if n < 1:
        raise ConfigError("cannot split an empty dataset")
    mode = "counts" if counts is not None else "ratio"
    if not stratified:
        order = Rng(seed).stream(SPLIT).permutation(n)
        a, b, _c = _partition_sizes(n, ratios, counts)
        train = order[:a]
        val = order[a : a + b]
        test = order[a + b :]
    else:
        if labels is None:
            raise ConfigError("stratified split requires labels")
        if counts is not None:
            raise ConfigError("stratified split works with ratios, not explicit counts")
        labels = np.asarray(labels)
        parts = ([], [], [])
        for ci, cls in enumerate(np.unique(labels)):
            idx = np.flatnonzero(labels == cls)
            order = Rng(seed).stream(SPLIT, ci + 1).permutation(len(idx))
            a, b, _c = _partition_sizes(len(idx), ratios, None)
            shuffled = idx[order]
            parts[0].extend(shuffled[:a])
            parts[1].extend(shuffled[a : a + b])
            parts[2].extend(shuffled[a + b :])
        train, val, test = (np.array(sorted(p), dtype=np.int64) for p in parts)
    return SplitPlan(seed, mode, [int(i) for i in train], [int(i) for i in val],
                     [int(i) for i in test])


# ---------------------------------------------------------------------------
# preprocessing


def bilinear_resize(image, out_h, out_w) -> np.ndarray:
    """Resize C x H x W with bilinear interpolation (pixel-center convention)."""
    image = np.asarray(image)
    c, h, w = image.shape
    if h == out_h and w == out_w:
        return image.astype(default_dtype(), copy=True)
    ys = (np.arange(out_h) + 0.5) * (h / out_h) - 0.5
    xs = (np.arange(out_w) + 0.5) * (w / out_w) - 0.5
    y0 = np.clip(np.floor(ys), 0, h - 1).astype(np.int64)
    x0 = np.clip(np.floor(xs), 0, w - 1).astype(np.int64)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    wy = np.clip(ys - y0, 0.0, 1.0)
    wx = np.clip(xs - x0, 0.0, 1.0)
    img = image.astype(np.float64)  # interpolate at full precision
    top = img[:, y0][:, :, x0] * (1 - wx) + img[:, y0][:, :, x1] * wx
    bot = img[:, y1][:, :, x0] * (1 - wx) + img[:, y1][:, :, x1] * wx
    out = top * (1 - wy[None, :, None]) + bot * wy[None, :, None]
    return out.astype(default_dtype())


STD_FLOOR = 1e-7


def preprocess(image, target=(299, 299), per_channel=False) -> np.ndarray:
    """Resize then apply sample-wise centering and normalization.

    Statistics are taken over all pixels and channels jointly (per-channel
    mode behind the flag). The output has mean ~0 and std ~1; constant
    images come out all zero thanks to the standard-deviation floor.
    """
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[0] != 3:
        raise DataError(f"preprocess expects 3 x H x W, got {image.shape}")
    if image.shape[1] < 1 or image.shape[2] < 1:
        raise DataError("degenerate image with zero area")
    out = bilinear_resize(image, *target)
    axes = (1, 2) if per_channel else None
    mean = out.mean(axis=axes, keepdims=per_channel)
    std = out.std(axis=axes, keepdims=per_channel)
    return ((out - mean) / np.maximum(std, STD_FLOOR)).astype(default_dtype())


# ---------------------------------------------------------------------------
# datasets and batching


class ArrayDataset:
    """In-memory dataset of raw images (N x 3 x H x W, values 0..255)."""

    def __init__(self, images, labels):
        self.images = np.asarray(images)
        self.labels = np.asarray(labels, dtype=np.int64)
        if len(self.images) != len(self.labels):
            raise DataError("images and labels length mismatch")

    def __len__(self):
        return len(self.images)

    def load(self, i):
        return self.images[i], int(self.labels[i])


class ManifestDataset:
    """Disk-backed dataset resolving manifest entries lazily."""

    def __init__(self, manifest: DatasetManifest, root=None):
        self.manifest = manifest
        self.root = Path(root or manifest.root)

    def __len__(self):
        return len(self.manifest)

    def load(self, i):
        relpath, label = self.manifest.entries[i]
        return load_sample(self.root / relpath), label


def batch_iterator(dataset, indices, batch_size, seed, epoch=0, shuffle=True,
                   target=None, augment_config=None, per_channel=False, normalize=True):
    """Yield ``(X, y)`` batches for one epoch.

    One epoch is ``ceil(len(indices) / batch_size)`` batches with the final
    partial batch emitted. The order is a seeded permutation derived from
    ``(seed, epoch)``, so a fixed seed reproduces the exact stream and
    distinct epochs get distinct permutations. Augmentation (training
    streams only, by the caller's choice) runs on the raw image before
    preprocessing. ``normalize=False`` stacks samples as loaded (feature
    vectors, pre-normalized tensors).
    """
    from .augment import augment  # local import to avoid a cycle

    if batch_size < 1:
        raise ConfigError("batch_size must be >= 1")
    indices = np.asarray(indices, dtype=np.int64)
    if len(indices) == 0:
        raise ConfigError("empty split")
    if shuffle:
        order = Rng(seed).stream(BATCH, epoch).permutation(len(indices))
        indices = indices[order]
    aug_gen = Rng(seed).stream(BATCH + 100, epoch) if augment_config is not None else None
    for start in range(0, len(indices), batch_size):
        chunk = indices[start : start + batch_size]
        xs, ys = [], []
        for i in chunk:
            img, label = dataset.load(int(i))
            if augment_config is not None:
                img = augment(img, augment_config, aug_gen)
            if normalize:
                size = target or img.shape[1:]
                img = preprocess(img, size, per_channel)
            xs.append(np.asarray(img, dtype=default_dtype()))
            ys.append(label)
        yield np.stack(xs), np.array(ys, dtype=np.int64)


def num_batches(n_samples, batch_size) -> int:
    return -(-n_samples // batch_size)
