"""Synthetic shapes dataset and directory-of-images loader.

Each class is a distinct (shape, hue) family rendered at a random
position, scale, and rotation via signed-distance functions, so classes
are visually separable while samples vary. Rendering for sample i
depends only on (seed, i), which makes generation order-independent and
byte-stable across runs.

On-disk layout of a generated dataset directory:
    meta        flat "key = value" text: count, size, classes, seed
    pixels.bin  count * 3 * S * S little-endian float32, sample-major
    labels.bin  count little-endian uint16
"""

from __future__ import annotations

import colorsys
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import MissingArtifactError
from .rng import stream

BACKGROUND = -0.85
SHAPE_NAMES = ("disk", "annulus", "triangle", "square", "hexagon", "star", "cross", "dots")


@dataclass(frozen=True)
class DatasetSpec:
    count: int
    size: int = 32
    classes: int = 8
    seed: int = 0

    def __post_init__(self):
        if self.count < self.classes:
            raise ValueError("count must be >= classes")
        if self.classes < 1 or self.classes > 256:
            raise ValueError("classes must be in [1, 256]")
        if self.size < 8 or self.size % 4:
            raise ValueError("size must be >= 8 and divisible by 4")


@dataclass
class ImageSample:
    pixels: np.ndarray  # [3, S, S] float32 in [-1, 1]
    label: int
    id: int


def _rot(px: np.ndarray, py: np.ndarray, theta: float):
    c, s = np.cos(theta), np.sin(theta)
    return c * px + s * py, -s * px + c * py


def _box_sdf(px, py, hx, hy):
    dx = np.abs(px) - hx
    dy = np.abs(py) - hy
    outside = np.hypot(np.maximum(dx, 0.0), np.maximum(dy, 0.0))
    inside = np.minimum(np.maximum(dx, dy), 0.0)
    return outside + inside


def _ngon_sdf(px, py, r, n):
    # distance to a regular n-gon boundary, vertex up
    ang = np.arctan2(px, -py)
    sector = 2.0 * np.pi / n
    a = np.mod(ang + sector / 2.0, sector) - sector / 2.0
    rad = np.hypot(px, py)
    return rad * np.cos(a) - r * np.cos(sector / 2.0)


def _shape_sdf(kind: str, px, py, r):
    if kind == "disk":
        return np.hypot(px, py) - r
    if kind == "annulus":
        return np.abs(np.hypot(px, py) - 0.78 * r) - 0.3 * r
    if kind == "triangle":
        return _ngon_sdf(px, py, r, 3)
    if kind == "square":
        return _box_sdf(px, py, 0.8 * r, 0.8 * r)
    if kind == "hexagon":
        return _ngon_sdf(px, py, r, 6)
    if kind == "star":
        # alternate two pentagon radii to carve a five-pointed star
        outer = _ngon_sdf(px, py, r, 5)
        inner = _ngon_sdf(*_rot(px, py, np.pi / 5), 0.5 * r, 5)
        return np.minimum(outer, inner)
    if kind == "cross":
        return np.minimum(_box_sdf(px, py, r, 0.32 * r), _box_sdf(px, py, 0.32 * r, r))
    if kind == "dots":
        left = np.hypot(px - 0.55 * r, py) - 0.42 * r
        right = np.hypot(px + 0.55 * r, py) - 0.42 * r
        return np.minimum(left, right)
    raise ValueError(f"unknown shape {kind}")


def class_color(label: int, classes: int) -> np.ndarray:
    hue = (label + 0.3) / classes % 1.0
    rgb = colorsys.hsv_to_rgb(hue, 0.9, 0.95)
    return np.asarray(rgb, dtype=np.float64) * 2.0 - 1.0


def render_sample(spec: DatasetSpec, index: int) -> ImageSample:
    """Render sample `index`; depends only on (spec.seed, index)."""
    label = index % spec.classes
    gen = stream(spec.seed, "data", index)
    cx, cy = gen.uniform(-0.35, 0.35, size=2)
    radius = gen.uniform(0.28, 0.55)
    theta = gen.uniform(0.0, 2.0 * np.pi)

    s = spec.size
    axis = (np.arange(s, dtype=np.float64) + 0.5) / s * 2.0 - 1.0
    gy, gx = np.meshgrid(axis, axis, indexing="ij")
    px, py = _rot(gx - cx, gy - cy, theta)
    kind = SHAPE_NAMES[label % len(SHAPE_NAMES)]
    sdf = _shape_sdf(kind, px, py, radius)

    feather = 3.0 / s
    alpha = np.clip(0.5 - sdf / feather, 0.0, 1.0)
    fg = class_color(label, spec.classes)
    pixels = BACKGROUND + alpha[None, :, :] * (fg[:, None, None] - BACKGROUND)
    return ImageSample(pixels=pixels.astype(np.float32), label=label, id=index)


def generate_shapes(spec: DatasetSpec) -> list[ImageSample]:
    """Deterministic dataset; class counts balanced within one sample."""
    return [render_sample(spec, i) for i in range(spec.count)]


def samples_to_arrays(samples: list[ImageSample]) -> tuple[np.ndarray, np.ndarray]:
    pixels = np.stack([s.pixels for s in samples]).astype(np.float32)
    labels = np.asarray([s.label for s in samples], dtype=np.uint16)
    return pixels, labels


def write_dataset(out_dir: str | Path, spec: DatasetSpec, samples: list[ImageSample]) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    pixels, labels = samples_to_arrays(samples)
    (out / "meta").write_text(
        f"count = {spec.count}\nsize = {spec.size}\nclasses = {spec.classes}\nseed = {spec.seed}\n"
    )
    pixels.astype("<f4").tofile(out / "pixels.bin")
    labels.astype("<u2").tofile(out / "labels.bin")
    return out


def read_dataset(path: str | Path) -> tuple[np.ndarray, np.ndarray, DatasetSpec]:
    """Load a dataset directory -> (pixels [N,3,S,S], labels [N], spec)."""
    base = Path(path)
    meta_path = base / "meta"
    if not meta_path.is_file():
        raise MissingArtifactError(f"no dataset at {base} (missing {meta_path}); run gen-data first")
    fields = {}
    for line in meta_path.read_text().splitlines():
        if line.strip():
            key, _, value = line.partition("=")
            fields[key.strip()] = int(value.strip())
    spec = DatasetSpec(count=fields["count"], size=fields["size"], classes=fields["classes"], seed=fields["seed"])
    pixels = np.fromfile(base / "pixels.bin", dtype="<f4").reshape(spec.count, 3, spec.size, spec.size)
    labels = np.fromfile(base / "labels.bin", dtype="<u2")
    if labels.shape[0] != spec.count:
        raise MissingArtifactError(f"label file in {base} has {labels.shape[0]} entries, expected {spec.count}")
    return pixels, labels.astype(np.int64), spec


def load_image_dir(path: str | Path, size: int) -> list[ImageSample]:
    """Load class-subfolder images: center-crop to square, resize to
    size x size, scale pixels to [-1, 1]. Labels follow lexicographic
    subfolder order."""
    base = Path(path)
    if not base.is_dir():
        raise MissingArtifactError(f"image directory not found: {base}")
    class_dirs = sorted(d for d in base.iterdir() if d.is_dir())
    if not class_dirs:
        raise ValueError(f"no class subdirectories in {base}")
    samples: list[ImageSample] = []
    next_id = 0
    for label, class_dir in enumerate(class_dirs):
        files = sorted(f for f in class_dir.iterdir() if f.is_file())
        for f in files:
            try:
                with Image.open(f) as img:
                    img = img.convert("RGB")
                    w, h = img.size
                    side = min(w, h)
                    left = (w - side) // 2
                    top = (h - side) // 2
                    img = img.crop((left, top, left + side, top + side))
                    img = img.resize((size, size), Image.Resampling.BILINEAR)
                    arr = np.asarray(img, dtype=np.float32)
            except OSError as e:
                raise ValueError(f"unreadable image file {f}: {e}") from e
            pixels = (arr / 127.5 - 1.0).transpose(2, 0, 1).astype(np.float32)
            samples.append(ImageSample(pixels=pixels, label=label, id=next_id))
            next_id += 1
    if not samples:
        raise ValueError(f"no image files under {base}")
    return samples
