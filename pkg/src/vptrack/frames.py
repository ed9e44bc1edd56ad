"""Image container conventions and annotated-frame types shared by the
renderer, the augmentation ops, and the datasets.

Images are plain numpy arrays: dtype uint8, shape (H, W, C) with C of 1 or 3.
Labels are real-valued source-pixel coordinates, ordered (P_w, P_r1, P_r2).
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from PIL import Image

LABEL_NAMES = ("p_w", "p_r1", "p_r2")


def validate_image(img: np.ndarray) -> np.ndarray:
    if not isinstance(img, np.ndarray):
        raise TypeError(f"image must be ndarray, got {type(img).__name__}")
    if img.dtype != np.uint8:
        raise ValueError(f"image dtype must be uint8, got {img.dtype}")
    if img.ndim != 3 or img.shape[2] not in (1, 3):
        raise ValueError(f"image shape must be (H, W, 1|3), got {img.shape}")
    if img.shape[0] < 1 or img.shape[1] < 1:
        raise ValueError(f"degenerate image size {img.shape}")
    return img


@dataclass
class AnnotatedFrame:
    """One frame with its three virtual-point labels in source coordinates."""
    image: np.ndarray
    labels: np.ndarray  # (3, 2) float64, rows P_w, P_r1, P_r2, columns (x, y)
    index: int = 0
    source: str = ""
    valid: bool = True

    def __post_init__(self):
        validate_image(self.image)
        self.labels = np.asarray(self.labels, dtype=np.float64)
        if self.labels.shape != (3, 2):
            raise ValueError(f"labels must be (3, 2), got {self.labels.shape}")

    @property
    def p_w(self) -> np.ndarray:
        return self.labels[0]

    @property
    def p_r1(self) -> np.ndarray:
        return self.labels[1]

    @property
    def p_r2(self) -> np.ndarray:
        return self.labels[2]

    def labels_in_bounds(self, margin: float = 0.0) -> bool:
        h, w = self.image.shape[:2]
        x, y = self.labels[:, 0], self.labels[:, 1]
        return bool(np.all((x >= margin) & (x <= w - 1 - margin)
                           & (y >= margin) & (y <= h - 1 - margin)))

    def copy(self) -> "AnnotatedFrame":
        return replace(self, image=self.image.copy(), labels=self.labels.copy())


def save_png(path, img: np.ndarray):
    validate_image(img)
    arr = img[:, :, 0] if img.shape[2] == 1 else img
    Image.fromarray(arr).save(Path(path), format="PNG")


def load_png(path) -> np.ndarray:
    with Image.open(Path(path)) as im:
        arr = np.asarray(im.convert("RGB") if im.mode not in ("L", "RGB") else im)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    return validate_image(np.ascontiguousarray(arr))


def resize_bilinear(img: np.ndarray, width: int, height: int) -> np.ndarray:
    """Anisotropic bilinear resize (Pillow), e.g. 1920x1080 -> 416x416."""
    validate_image(img)
    arr = img[:, :, 0] if img.shape[2] == 1 else img
    out = np.asarray(Image.fromarray(arr).resize((width, height), Image.BILINEAR))
    if out.ndim == 2:
        out = out[:, :, None]
    return np.ascontiguousarray(out)
