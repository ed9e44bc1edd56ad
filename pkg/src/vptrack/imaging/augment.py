"""Geometric augmentations that move pixels and point labels through the
same transform, plus occlusion and randomized RoI cropping.

All warps use inverse bilinear sampling with edge clamping. Labels that end
up outside the frame mark the sample invalid rather than raising.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np

from ..frames import AnnotatedFrame

log = logging.getLogger(__name__)

MAX_ROTATION_DEG = 10.0
MAX_PERSPECTIVE_FRAC = 0.08


@dataclass
class AugmentSpec:
    """Reproducible description of one augmentation application."""
    kind: str  # hflip | rotation | occlusion | random_crop | perspective
    seed: int = 0
    angle_range: tuple[float, float] = (-MAX_ROTATION_DEG, MAX_ROTATION_DEG)
    occlusion_size: tuple[int, int] = (20, 60)
    crop_size: int = 256
    corner_frac: float = MAX_PERSPECTIVE_FRAC

    KINDS = ("hflip", "rotation", "occlusion", "random_crop", "perspective")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown augmentation kind {self.kind!r}")

    def to_json(self) -> str:
        return json.dumps({"kind": self.kind, "seed": self.seed,
                           "angle_range": list(self.angle_range),
                           "occlusion_size": list(self.occlusion_size),
                           "crop_size": self.crop_size, "corner_frac": self.corner_frac})

    @classmethod
    def from_json(cls, s: str) -> "AugmentSpec":
        d = json.loads(s)
        return cls(kind=d["kind"], seed=d.get("seed", 0),
                   angle_range=tuple(d.get("angle_range", (-10.0, 10.0))),
                   occlusion_size=tuple(d.get("occlusion_size", (20, 60))),
                   crop_size=d.get("crop_size", 256),
                   corner_frac=d.get("corner_frac", MAX_PERSPECTIVE_FRAC))


# -- warp machinery ------------------------------------------------------


def bilinear_sample(img: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Sample img at real coordinates (xs, ys), clamping to the border."""
    h, w = img.shape[:2]
    xs = np.clip(xs, 0.0, w - 1.0)
    ys = np.clip(ys, 0.0, h - 1.0)
    x0 = np.floor(xs).astype(int)
    y0 = np.floor(ys).astype(int)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = (xs - x0)[..., None]
    fy = (ys - y0)[..., None]
    f = img.astype(np.float64)
    out = (f[y0, x0] * (1 - fx) * (1 - fy) + f[y0, x1] * fx * (1 - fy)
           + f[y1, x0] * (1 - fx) * fy + f[y1, x1] * fx * fy)
    return np.clip(np.rint(out), 0, 255).astype(np.uint8)


def warp_homography(img: np.ndarray, H: np.ndarray) -> np.ndarray:
    """Warp by forward homography H (maps source -> destination)."""
    h, w = img.shape[:2]
    Hinv = np.linalg.inv(H)
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    denom = Hinv[2, 0] * xs + Hinv[2, 1] * ys + Hinv[2, 2]
    if np.any(np.abs(denom) < 1e-9):
        raise ValueError("degenerate homography: vanishing denominator inside frame")
    sx = (Hinv[0, 0] * xs + Hinv[0, 1] * ys + Hinv[0, 2]) / denom
    sy = (Hinv[1, 0] * xs + Hinv[1, 1] * ys + Hinv[1, 2]) / denom
    return bilinear_sample(img, sx, sy)


def apply_homography_points(H: np.ndarray, pts: np.ndarray) -> np.ndarray:
    p = np.hstack([pts, np.ones((len(pts), 1))]) @ H.T
    return p[:, :2] / p[:, 2:3]


def homography_from_corners(src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    """DLT solve for the 3x3 homography mapping 4 src corners to dst."""
    A = []
    b = []
    for (x, y), (u, v) in zip(src, dst):
        A.append([x, y, 1, 0, 0, 0, -u * x, -u * y])
        b.append(u)
        A.append([0, 0, 0, x, y, 1, -v * x, -v * y])
        b.append(v)
    try:
        h = np.linalg.solve(np.asarray(A, dtype=np.float64), np.asarray(b, dtype=np.float64))
    except np.linalg.LinAlgError as e:
        raise ValueError(f"degenerate homography: {e}") from e
    return np.append(h, 1.0).reshape(3, 3)


def _warped_frame(frame: AnnotatedFrame, H: np.ndarray) -> AnnotatedFrame:
    img = warp_homography(frame.image, H)
    labels = apply_homography_points(H, frame.labels)
    out = AnnotatedFrame(image=img, labels=labels, index=frame.index, source=frame.source)
    out.valid = out.labels_in_bounds()
    return out


# -- ops -----------------------------------------------------------------


def hflip(frame: AnnotatedFrame) -> AnnotatedFrame:
    """Mirror about the vertical axis. Labels keep their physical identity:
    P_r1 remains the wheel-side rail edge, so roles are not swapped."""
    w = frame.image.shape[1]
    labels = frame.labels.copy()
    labels[:, 0] = (w - 1) - labels[:, 0]
    return AnnotatedFrame(image=np.ascontiguousarray(frame.image[:, ::-1]),
                          labels=labels, index=frame.index, source=frame.source)


def rotate(frame: AnnotatedFrame, angle_deg: float,
           max_angle: float = MAX_ROTATION_DEG) -> AnnotatedFrame:
    if abs(angle_deg) > max_angle:
        raise ValueError(f"|angle| = {abs(angle_deg)} exceeds limit {max_angle}")
    h, w = frame.image.shape[:2]
    cx, cy = (w - 1) / 2.0, (h - 1) / 2.0
    t = np.deg2rad(angle_deg)
    c, s = np.cos(t), np.sin(t)
    H = np.array([[c, -s, cx - c * cx + s * cy],
                  [s, c, cy - s * cx - c * cy],
                  [0.0, 0.0, 1.0]])
    return _warped_frame(frame, H)


def occlude(frame: AnnotatedFrame, box: tuple[int, int, int, int],
            rng: np.random.Generator | None = None) -> AnnotatedFrame:
    """Fill box (x0, y0, w, h) with noise (or mid-gray without an rng).
    Pixels only; labels pass through unchanged."""
    x0, y0, bw, bh = (int(v) for v in box)
    h, w = frame.image.shape[:2]
    if bw < 1 or bh < 1 or x0 < 0 or y0 < 0 or x0 + bw > w or y0 + bh > h:
        raise ValueError(f"occlusion box {box} outside {w}x{h} image")
    img = frame.image.copy()
    if rng is None:
        img[y0:y0 + bh, x0:x0 + bw] = 128
    else:
        img[y0:y0 + bh, x0:x0 + bw] = rng.integers(
            0, 256, size=(bh, bw, img.shape[2]), dtype=np.uint8)
    return AnnotatedFrame(image=img, labels=frame.labels.copy(),
                          index=frame.index, source=frame.source)


def perspective(frame: AnnotatedFrame, corner_offsets: np.ndarray,
                max_frac: float = MAX_PERSPECTIVE_FRAC) -> AnnotatedFrame:
    """Warp by the homography that moves the 4 corners (TL,TR,BR,BL) by
    corner_offsets (4,2) px; offsets are capped at max_frac of the side."""
    off = np.asarray(corner_offsets, dtype=np.float64)
    if off.shape != (4, 2):
        raise ValueError(f"corner_offsets must be (4,2), got {off.shape}")
    h, w = frame.image.shape[:2]
    lim = max_frac * np.array([w, h])
    if np.any(np.abs(off) > lim):
        raise ValueError(f"corner jitter exceeds {max_frac:.0%} of side length")
    src = np.array([[0, 0], [w - 1, 0], [w - 1, h - 1], [0, h - 1]], dtype=np.float64)
    dst = src + off
    # reject collapsed quads before solving
    def cross2(a, b):
        return a[0] * b[1] - a[1] * b[0]

    area = 0.5 * abs(cross2(dst[1] - dst[0], dst[3] - dst[0])
                     + cross2(dst[3] - dst[2], dst[1] - dst[2]))
    if area < 0.05 * w * h:
        raise ValueError("degenerate homography: target corners nearly collinear")
    H = homography_from_corners(src, dst)
    return _warped_frame(frame, H)


def random_crop_roi(frame: AnnotatedFrame, n: int = 5, size: int = 256,
                    margin: int = 10, rng: np.random.Generator | None = None
                    ) -> list[AnnotatedFrame]:
    """n randomized size x size crops, each containing all three labels at
    least margin px from the crop border. Emits fewer (with a logged warning)
    when the constraint leaves no valid window."""
    rng = rng or np.random.default_rng(0)
    h, w = frame.image.shape[:2]
    if size > w or size > h:
        raise ValueError(f"crop size {size} exceeds source {w}x{h}")
    xs, ys = frame.labels[:, 0], frame.labels[:, 1]
    # offset o valid iff margin <= p - o <= size-1-margin for every label
    x_lo = max(0.0, float(xs.max()) - (size - 1 - margin))
    x_hi = min(float(w - size), float(xs.min()) - margin)
    y_lo = max(0.0, float(ys.max()) - (size - 1 - margin))
    y_hi = min(float(h - size), float(ys.min()) - margin)
    if x_hi < x_lo or y_hi < y_lo:
        log.warning("random_crop_roi: no valid %dpx window for frame %s[%d]; emitting 0 of %d",
                    size, frame.source, frame.index, n)
        return []
    crops = []
    for _ in range(n):
        ox = int(np.floor(rng.uniform(x_lo, np.nextafter(x_hi + 1, x_lo))))
        oy = int(np.floor(rng.uniform(y_lo, np.nextafter(y_hi + 1, y_lo))))
        ox = int(np.clip(ox, np.ceil(x_lo), np.floor(x_hi)))
        oy = int(np.clip(oy, np.ceil(y_lo), np.floor(y_hi)))
        labels = frame.labels - np.array([ox, oy], dtype=np.float64)
        crops.append(AnnotatedFrame(
            image=np.ascontiguousarray(frame.image[oy:oy + size, ox:ox + size]),
            labels=labels, index=frame.index, source=frame.source))
    return crops


def apply_augment(frame: AnnotatedFrame, spec: AugmentSpec):
    """Dispatch one spec. random_crop returns a list; the rest one frame."""
    rng = np.random.default_rng(spec.seed)
    if spec.kind == "hflip":
        return hflip(frame)
    if spec.kind == "rotation":
        return rotate(frame, float(rng.uniform(*spec.angle_range)))
    if spec.kind == "occlusion":
        h, w = frame.image.shape[:2]
        bw = int(rng.integers(spec.occlusion_size[0], spec.occlusion_size[1] + 1))
        bh = int(rng.integers(spec.occlusion_size[0], spec.occlusion_size[1] + 1))
        bw, bh = min(bw, w), min(bh, h)
        x0 = int(rng.integers(0, w - bw + 1))
        y0 = int(rng.integers(0, h - bh + 1))
        return occlude(frame, (x0, y0, bw, bh), rng)
    if spec.kind == "perspective":
        h, w = frame.image.shape[:2]
        off = rng.uniform(-1.0, 1.0, (4, 2)) * np.array([w, h]) * spec.corner_frac
        return perspective(frame, off, max_frac=spec.corner_frac)
    if spec.kind == "random_crop":
        return random_crop_roi(frame, size=spec.crop_size, rng=rng)
    raise ValueError(f"unknown kind {spec.kind!r}")  # pragma: no cover
