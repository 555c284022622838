"""Walk an image folder, run a backbone, and write a USDF feature file.

Folder layout: one subdirectory per class, images inside. Rows are ordered
by sorted file path, so extraction is reproducible byte for byte. Block 0
holds features of the images as-is; one extra block is added per rotation
angle, in the listed order, produced by reflect-padding the resized image,
rotating, and center-cropping back to the model input size.

The USDF layout written here matches the retrieval pipeline's format:
magic "USDF", u32 version=1, u32 n, u32 d, u32 R, u8 has_labels, the
(R+1) blocks of n*d little-endian float32, then n u32 labels. A sidecar
"<out>.manifest" records the model, angles, and any skipped files.
"""

from __future__ import annotations

import struct
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from .models import Backbone, load_backbone

IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg", ".bmp", ".gif", ".tiff", ".webp"}

_HEADER = struct.Struct("<4sIIIIB")
_VERSION = 1


@dataclass
class ExtractionJob:
    image_root: Path
    out_path: Path
    model: str = "seeded-cnn"
    angles: tuple = (-10.0, -5.0, 5.0, 10.0)
    batch_size: int = 16

    def __post_init__(self):
        self.image_root = Path(self.image_root)
        self.out_path = Path(self.out_path)
        self.angles = tuple(float(a) for a in self.angles)
        if any(a == 0.0 for a in self.angles):
            raise ValueError("angle 0 is the reference block; list only nonzero angles")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


@dataclass
class ExtractionReport:
    n: int
    d: int
    rotations: int
    labels: list
    skipped: list = field(default_factory=list)


def list_images(root: Path) -> tuple[list[Path], dict[str, int]]:
    """Sorted image paths plus the subfolder-name -> class-id mapping."""
    root = Path(root)
    if not root.is_dir():
        raise FileNotFoundError(f"image root {root} is not a directory")
    classes = sorted(p.name for p in root.iterdir() if p.is_dir())
    if not classes:
        raise FileNotFoundError(f"no class subfolders under {root}")
    class_ids = {name: i for i, name in enumerate(classes)}
    paths = sorted(p for name in classes for p in (root / name).iterdir()
                   if p.suffix.lower() in IMAGE_SUFFIXES)
    return paths, class_ids


def rotate_reflect(image: Image.Image, angle: float) -> Image.Image:
    """Rotate without empty corners: reflect-pad, rotate, center-crop."""
    w, h = image.size
    pad_w, pad_h = w // 4 + 1, h // 4 + 1
    arr = np.asarray(image)
    padded = np.pad(arr, ((pad_h, pad_h), (pad_w, pad_w), (0, 0)), mode="reflect")
    rotated = Image.fromarray(padded).rotate(angle, resample=Image.Resampling.BILINEAR)
    left, top = pad_w, pad_h
    return rotated.crop((left, top, left + w, top + h))


def _to_tensor(image: Image.Image, backbone: Backbone) -> torch.Tensor:
    arr = np.asarray(image, dtype=np.float32) / 255.0
    arr = (arr - np.array(backbone.mean, dtype=np.float32)) / np.array(
        backbone.std, dtype=np.float32)
    return torch.from_numpy(arr.transpose(2, 0, 1))


def _run_batches(tensors: list[torch.Tensor], backbone: Backbone,
                 batch_size: int) -> np.ndarray:
    chunks = []
    with torch.inference_mode():
        for start in range(0, len(tensors), batch_size):
            batch = torch.stack(tensors[start:start + batch_size])
            chunks.append(backbone.module(batch).numpy().astype(np.float32))
    return np.concatenate(chunks, axis=0)


def extract(job: ExtractionJob) -> ExtractionReport:
    """Extract all blocks and write the USDF file plus its manifest."""
    torch.set_num_threads(1)  # keeps repeated extraction byte-identical
    backbone = load_backbone(job.model)
    paths, class_ids = list_images(job.image_root)

    images = []
    labels = []
    skipped = []
    for path in paths:
        try:
            with Image.open(path) as handle:
                image = handle.convert("RGB")
        except Exception as exc:
            skipped.append(path.name)
            print(f"warning: skipping undecodable image {path}: {exc}", file=sys.stderr)
            continue
        size = (backbone.input_size, backbone.input_size)
        images.append(image.resize(size, Image.Resampling.BILINEAR))
        labels.append(class_ids[path.parent.name])

    blocks = [_run_batches([_to_tensor(im, backbone) for im in images], backbone,
                           job.batch_size)]
    for angle in job.angles:
        rotated = [_to_tensor(rotate_reflect(im, angle), backbone) for im in images]
        blocks.append(_run_batches(rotated, backbone, job.batch_size))

    n, d = blocks[0].shape
    write_usdf(job.out_path, np.stack(blocks), np.asarray(labels, dtype=np.uint32))
    manifest = {
        "model": backbone.name,
        "rotation_angles": ",".join(f"{a:g}" for a in job.angles),
        "image_root": str(job.image_root),
        "skipped": ",".join(skipped),
    }
    lines = [f"{key}={manifest[key]}" for key in sorted(manifest)]
    Path(str(job.out_path) + ".manifest").write_text("\n".join(lines) + "\n")
    return ExtractionReport(n=n, d=d, rotations=len(job.angles),
                            labels=labels, skipped=skipped)


def write_usdf(path: Path, blocks: np.ndarray, labels: np.ndarray) -> None:
    """Serialize (R+1, n, d) float32 blocks and n labels in USDF layout."""
    blocks = np.ascontiguousarray(blocks, dtype=np.float32)
    rotations, n, d = blocks.shape[0] - 1, blocks.shape[1], blocks.shape[2]
    if not np.all(np.isfinite(blocks)):
        raise ValueError("backbone produced non-finite features")
    with open(path, "wb") as f:
        f.write(_HEADER.pack(b"USDF", _VERSION, n, d, rotations, 1))
        f.write(blocks.astype("<f4", copy=False).tobytes())
        f.write(labels.astype("<u4", copy=False).tobytes())
