"""Raw inputs to non-negative data matrices.

Three sources produce the same output shape: a COCO-annotated image dump
reorganized into class folders, class folders loaded directly, and a
synthetic phantom generator for desk-scale runs.  Every emitted matrix
has one image per column, pixels in [0, 1], flattened row-major.
"""

import json
import shutil
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from pnmf.errors import BadConfig, EmptyClass, ParseError
from pnmf.parallel import thread_map
from pnmf.rng import gaussians, keyed_rng

CLASS_NAMES = ("normal", "tumor")
SPLITS = ("train", "val", "test")

# ITU-R 601 luma weights for RGB -> grayscale
LUMA = np.array([0.299, 0.587, 0.114])


@dataclass
class DatasetSplit:
    images: np.ndarray  # pixels x samples, float in [0, 1]
    labels: np.ndarray  # 0 = normal, 1 = tumor
    split: str


@dataclass
class SyntheticSpec:
    """Desk-scale stand-in for the MRI dumps: elliptical phantoms with a
    bright lesion disc added for the tumor class.

    ``lesion_intensity`` is the brightest lesion contrast; when
    ``lesion_intensity_min`` is set below it, per-image contrast is
    drawn uniformly from that range, which yields a spread of easy and
    borderline tumors instead of uniformly obvious ones.
    """

    n_per_class_per_split: dict = field(
        default_factory=lambda: {"train": 240, "val": 60, "test": 60}
    )
    image_side: int = 64
    lesion_intensity: float = 0.5
    lesion_intensity_min: float | None = 0.3
    lesion_radius_range: tuple = (3.5, 6.0)
    seed: int = 0

    def validate(self):
        for split in SPLITS:
            if self.n_per_class_per_split.get(split, 0) < 1:
                raise BadConfig(f"split {split!r} needs a positive sample count")
        if not 0.0 <= self.lesion_intensity <= 1.0:
            raise BadConfig("lesion_intensity must lie in [0, 1]")
        if self.lesion_intensity_min is not None and not (
            0.0 <= self.lesion_intensity_min <= self.lesion_intensity
        ):
            raise BadConfig("lesion_intensity_min must lie in [0, lesion_intensity]")
        lo, hi = self.lesion_radius_range
        if not 0 < lo <= hi < self.image_side / 2:
            raise BadConfig("lesion radius range must fit inside the image")


def grayscale(rgb: np.ndarray) -> np.ndarray:
    """Luma conversion of an (H, W, 3) array; pass-through for (H, W)."""
    if rgb.ndim == 2:
        return np.asarray(rgb, dtype=np.float64)
    return np.asarray(rgb, dtype=np.float64) @ LUMA


def bilinear_resize(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resampling with half-pixel centers and edge clamping."""
    img = np.asarray(img, dtype=np.float64)
    in_h, in_w = img.shape
    ys = (np.arange(out_h) + 0.5) * in_h / out_h - 0.5
    xs = (np.arange(out_w) + 0.5) * in_w / out_w - 0.5
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    wy = ys - y0
    wx = xs - x0
    y0c = np.clip(y0, 0, in_h - 1)
    y1c = np.clip(y0 + 1, 0, in_h - 1)
    x0c = np.clip(x0, 0, in_w - 1)
    x1c = np.clip(x0 + 1, 0, in_w - 1)
    top = img[y0c][:, x0c] * (1 - wx) + img[y0c][:, x1c] * wx
    bot = img[y1c][:, x0c] * (1 - wx) + img[y1c][:, x1c] * wx
    return top * (1 - wy[:, None]) + bot * wy[:, None]


def load_image_column(path, image_side: int) -> np.ndarray:
    """One image file to a flattened unit-range column."""
    with Image.open(path) as im:
        arr = np.asarray(im)
    if arr.ndim == 3:
        arr = grayscale(arr[:, :, :3])
    else:
        arr = np.asarray(arr, dtype=np.float64)
    if arr.max() > 1.0:
        arr = arr / 255.0
    if arr.shape != (image_side, image_side):
        arr = bilinear_resize(arr, image_side, image_side)
    return np.clip(arr, 0.0, 1.0).ravel()


def load_split(directory, image_side: int, split: str = "train"):
    """Load one split from ``directory/<class>/*`` image folders.

    Files are ordered lexicographically per class so column order is
    reproducible.  Unreadable files are skipped and reported.
    Returns (DatasetSplit, skipped-file list).
    """
    directory = Path(directory)
    columns = []
    labels = []
    skipped = []
    for label, cls in enumerate(CLASS_NAMES):
        class_dir = directory / cls
        files = sorted(p for p in class_dir.glob("*") if p.is_file()) if class_dir.is_dir() else []
        loaded = 0
        for path in files:
            try:
                columns.append(load_image_column(path, image_side))
            except Exception:
                skipped.append(str(path))
                continue
            labels.append(label)
            loaded += 1
        if loaded == 0:
            raise EmptyClass(f"no readable images for class {cls!r} in {directory}")
    images = np.stack(columns, axis=1)
    return DatasetSplit(images=images, labels=np.asarray(labels), split=split), skipped


def reorganize_coco(annotation_file, image_dir, out_dir, split: str = "train",
                    category_map: dict | None = None):
    """Copy a COCO-annotated image dump into ``out_dir/<split>/<class>/``.

    Each image goes to the class of its first annotation's category
    (mapped through ``category_map`` when given); images with no
    annotation default to ``normal``.  Returns
    ``{"counts": {class: n}, "skipped": [...]}``; referenced-but-missing
    files are reported, not fatal.
    """
    annotation_file = Path(annotation_file)
    image_dir = Path(image_dir)
    out_dir = Path(out_dir)
    try:
        with open(annotation_file) as fh:
            coco = json.load(fh)
        images = {img["id"]: img["file_name"] for img in coco["images"]}
        categories = {c["id"]: c["name"] for c in coco.get("categories", [])}
        annotations = coco.get("annotations", [])
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise ParseError(f"{annotation_file}: not a COCO annotation file ({exc})") from exc

    category_names = set(categories.values())
    if category_map is None:
        unmapped = category_names - set(CLASS_NAMES)
        if unmapped:
            raise ParseError(
                f"categories {sorted(unmapped)} need an explicit category->class map"
            )
        category_map = {name: name for name in category_names}
    bad_targets = set(category_map.values()) - set(CLASS_NAMES)
    if bad_targets:
        raise ParseError(f"category map targets {sorted(bad_targets)} are not valid classes")

    image_class = {}
    for ann in annotations:
        img_id = ann.get("image_id")
        if img_id not in images or img_id in image_class:
            continue
        name = categories.get(ann.get("category_id"))
        if name is None or name not in category_map:
            raise ParseError(f"annotation references unmapped category {name!r}")
        image_class[img_id] = category_map[name]

    counts = Counter()
    skipped = []
    for img_id, file_name in sorted(images.items(), key=lambda kv: kv[1]):
        cls = image_class.get(img_id, "normal")
        src = image_dir / file_name
        if not src.is_file():
            skipped.append(file_name)
            continue
        dst = out_dir / split / cls / file_name
        dst.parent.mkdir(parents=True, exist_ok=True)
        shutil.copyfile(src, dst)
        counts[cls] += 1
    return {"counts": dict(counts), "skipped": skipped}


def _phantom(side: int, rng) -> np.ndarray:
    """Smooth elliptical head phantom with mild per-image jitter."""
    yy, xx = np.mgrid[0:side, 0:side].astype(np.float64)
    cx = cy = (side - 1) / 2.0
    a = side * (0.40 + 0.004 * (rng.random() - 0.5))
    b = side * (0.46 + 0.004 * (rng.random() - 0.5))
    base = 0.55 + 0.01 * (rng.random() - 0.5)
    d2 = ((xx - cx) / a) ** 2 + ((yy - cy) / b) ** 2
    img = np.where(d2 < 1.0, base * (1.0 - d2), 0.0)
    noise = gaussians(rng, side * side).reshape(side, side) * 0.04
    return img + noise


def _add_lesion(img: np.ndarray, spec: SyntheticSpec, rng) -> np.ndarray:
    side = spec.image_side
    lo, hi = spec.lesion_radius_range
    radius = lo + (hi - lo) * rng.random()
    if spec.lesion_intensity_min is None:
        intensity = spec.lesion_intensity
    else:
        intensity = spec.lesion_intensity_min + (
            spec.lesion_intensity - spec.lesion_intensity_min
        ) * rng.random()
    # lesion center inside the inner half of the phantom
    angle = 2.0 * np.pi * rng.random()
    dist = 0.5 * rng.random()
    cx = (side - 1) / 2.0 + dist * side * 0.40 * np.cos(angle)
    cy = (side - 1) / 2.0 + dist * side * 0.46 * np.sin(angle)
    yy, xx = np.mgrid[0:side, 0:side].astype(np.float64)
    r = np.sqrt((xx - cx) ** 2 + (yy - cy) ** 2)
    disc = np.clip(radius - r + 0.5, 0.0, 1.0)  # one-pixel soft edge
    return img + intensity * disc


def generate_synthetic(spec: SyntheticSpec, threads: int = 1) -> dict:
    """Deterministic synthetic splits: {'train','val','test'} -> DatasetSplit.

    Normal images are phantom + texture noise; tumor images add one
    bright disc at a seeded interior position.  Pure function of the
    spec: per-image streams are keyed by (seed, split, class, index),
    so parallel generation is byte-identical to sequential.
    """
    spec.validate()
    side = spec.image_side
    out = {}
    for split in SPLITS:
        n = spec.n_per_class_per_split[split]
        images = np.empty((side * side, 2 * n))
        labels = np.repeat([0, 1], n)

        def make(col):
            label = col // n
            cls = CLASS_NAMES[label]
            i = col % n
            rng = keyed_rng(spec.seed, "synthetic", split, cls, i)
            img = _phantom(side, rng)
            if cls == "tumor":
                img = _add_lesion(img, spec, rng)
            images[:, col] = np.clip(img, 0.0, 1.0).ravel()

        thread_map(make, 2 * n, threads)
        out[split] = DatasetSplit(images=images, labels=labels, split=split)
    return out
