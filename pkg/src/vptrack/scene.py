"""Procedural wheel-rail scene generator with exact point labels, trajectory
synthesis, and dataset manifest I/O.

The renderer is deliberately simple: textured ballast, sleeper bands, a
vertical railhead with two bright edge lines, a specular glint line at the
contact level, and a dark wheel disk whose rim crosses the contact line at
the flange point. Every label is the analytic feature position, so synthetic
ground truth is exact by construction. Corner-case toggles (switch-like extra
lines, platform-like bright band, grass occlusion) exist to manufacture
detector failures for the rule engine.
"""
from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy import ndimage

from .frames import AnnotatedFrame, load_png, save_png, validate_image
from .imaging import CorruptionSpec, apply_corruption

log = logging.getLogger(__name__)

ANNOTATION_COLUMNS = ("filename", "x_w", "y_w", "x_r1", "y_r1", "x_r2", "y_r2")
FRAME_NAME = "frame_{:06d}.png"


@dataclass
class SceneParams:
    width: int = 1920
    height: int = 1080
    mm_per_px: float = 0.78
    railhead_mm: float = 72.0
    x_r1: float | None = None        # wheel-side rail edge; default 0.56 * width
    y_ref: float | None = None       # contact line; default 0.62 * height
    wheel_radius_frac: float = 0.42  # of height
    texture_seed: int = 0
    ballast_grain: float = 1.0
    sleeper_spacing: float = 170.0
    sleeper_contrast: float = 1.0
    vegetation_density: float = 1.0
    illumination: float = 1.0
    max_abs_mm: float = 15.0
    extra_lines: int = 0             # switch-like bright verticals
    bright_band: bool = False        # platform-like horizontal band
    grass_occlusion: bool = False    # vegetation blob over the contact area

    def __post_init__(self):
        if self.railhead_mm <= 0 or self.mm_per_px <= 0:
            raise ValueError("railhead width and scale must be positive")
        if self.x_r1 is None:
            self.x_r1 = 0.56 * self.width
        if self.y_ref is None:
            self.y_ref = 0.62 * self.height
        if not (0 < self.x_r2 and self.x_r1 < self.width and 0 < self.y_ref < self.height):
            raise ValueError("rail geometry outside the frame")

    @property
    def railhead_px(self) -> float:
        return self.railhead_mm / self.mm_per_px

    @property
    def x_r2(self) -> float:
        return self.x_r1 - self.railhead_px

    def x_w(self, d_mm: float) -> float:
        return self.x_r1 + d_mm / self.mm_per_px

    @classmethod
    def desk_scale(cls, **overrides) -> "SceneParams":
        """Quarter-resolution profile: 960x540 at 1.56 mm/px (railhead ~46 px)."""
        base = dict(width=960, height=540, mm_per_px=1.56, sleeper_spacing=96.0)
        base.update(overrides)
        return cls(**base)


@dataclass
class TrajectoryParams:
    n_frames: int
    fps: float = 30.0
    sinusoids: tuple = ((5.0, 0.5, 0.0),)  # (amplitude mm, frequency Hz, phase rad)
    jitter_mm: float = 0.0
    cam_jitter_px: float = 0.0
    drift_period: int = 0                  # texture epoch advances every k frames; 0 = static
    a_ymax_mps2: float = 10.0
    violating: bool = False
    seed: int = 0

    def max_step_mm(self) -> float:
        dt = 1.0 / self.fps
        return 0.5 * self.a_ymax_mps2 * dt * dt * 1000.0

    def sample(self) -> tuple[np.ndarray, np.ndarray]:
        """Ground-truth series (t_seconds, D_mm). A violating trajectory gets
        one injected step at twice the plausibility bound; a compliant one is
        validated against it."""
        rng = np.random.default_rng(self.seed)
        t = np.arange(self.n_frames) / self.fps
        d = np.zeros(self.n_frames)
        for amp, freq, phase in self.sinusoids:
            d += amp * np.sin(2.0 * np.pi * freq * t + phase)
        if self.jitter_mm > 0:
            d += rng.normal(0.0, self.jitter_mm, self.n_frames)
        bound = self.max_step_mm()
        if self.violating:
            if self.n_frames < 2:
                raise ValueError("violating trajectory needs at least 2 frames")
            d[self.n_frames // 2:] += 2.0 * bound
        elif self.n_frames > 1:
            worst = float(np.max(np.abs(np.diff(d))))
            if worst > bound:
                raise ValueError(
                    f"per-frame step {worst:.3f} mm exceeds plausibility bound "
                    f"{bound:.3f} mm; tag the trajectory violating=True if intended")
        return t, d


# -- rendering -----------------------------------------------------------


def _column_coverage(width: int, x0: float, line_w: float) -> np.ndarray:
    """Fraction of each pixel column covered by a vertical band of width
    line_w centered at real coordinate x0 (antialiased line drawing)."""
    j = np.arange(width)
    left, right = x0 - line_w / 2.0, x0 + line_w / 2.0
    return np.clip(np.minimum(right, j + 0.5) - np.maximum(left, j - 0.5), 0.0, 1.0)


def _row_coverage(height: int, y0: float, line_w: float) -> np.ndarray:
    i = np.arange(height)
    top, bot = y0 - line_w / 2.0, y0 + line_w / 2.0
    return np.clip(np.minimum(bot, i + 0.5) - np.maximum(top, i - 0.5), 0.0, 1.0)


def _blend(base: np.ndarray, alpha: np.ndarray, color: np.ndarray):
    base *= (1.0 - alpha[:, :, None])
    base += alpha[:, :, None] * color.reshape(1, 1, 3)


def render_frame(scene: SceneParams, d_mm: float, frame_index: int = 0,
                 texture_epoch: int = 0, shift: tuple[float, float] = (0.0, 0.0)
                 ) -> AnnotatedFrame:
    """Render one frame at displacement d_mm. Deterministic in all arguments."""
    if abs(d_mm) > scene.max_abs_mm:
        raise ValueError(f"|D| = {abs(d_mm):.2f} mm exceeds configured bound "
                         f"{scene.max_abs_mm} mm")
    h, w = scene.height, scene.width
    dx, dy = float(shift[0]), float(shift[1])
    x_r1 = scene.x_r1 + dx
    x_r2 = scene.x_r2 + dx
    x_w = scene.x_w(d_mm) + dx
    y_ref = scene.y_ref + dy
    labels = np.array([[x_w, y_ref], [x_r1, y_ref], [x_r2, y_ref]])
    # safety border keeps every drawn feature resolvable inside the frame
    if not np.all((labels[:, 0] >= 4) & (labels[:, 0] <= w - 5)
                  & (labels[:, 1] >= 4) & (labels[:, 1] <= h - 5)):
        raise ValueError(f"labels {labels.tolist()} leave the {w}x{h} frame")

    rng = np.random.default_rng((scene.texture_seed, texture_epoch))
    img = np.empty((h, w, 3), dtype=np.float64)

    # ballast: coarse value noise with a brownish tint
    grain = rng.standard_normal((h // 8 + 1, w // 8 + 1))
    grain = np.kron(grain, np.ones((8, 8)))[:h, :w]
    grain = ndimage.gaussian_filter(grain, 2.0)
    base = 96.0 + 26.0 * scene.ballast_grain * grain \
        + 10.0 * rng.standard_normal((h, w))
    img[:, :, 0] = base * 1.05
    img[:, :, 1] = base
    img[:, :, 2] = base * 0.92

    # sleepers: lighter horizontal bands, phase tied to the texture seed
    ii = np.arange(h, dtype=np.float64)[:, None] + float(rng.uniform(0, scene.sleeper_spacing))
    band = ((ii % scene.sleeper_spacing) < 0.35 * scene.sleeper_spacing).astype(np.float64)
    img += (band * 24.0 * scene.sleeper_contrast)[..., None] \
        * np.array([1.0, 0.98, 0.94]).reshape(1, 1, 3)

    # vegetation: sparse green blotches away from nothing in particular
    n_blobs = int(10 * scene.vegetation_density)
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    for _ in range(n_blobs):
        cx, cy = rng.uniform(0, w), rng.uniform(0, h)
        r = rng.uniform(8, 26)
        a = np.clip(1.0 - np.hypot(xx - cx, yy - cy) / r, 0.0, 1.0) * 0.7
        _blend(img, a, np.array([58.0, 96.0, 44.0]))

    if scene.bright_band:
        a = _row_coverage(h, y_ref - 0.22 * h, 0.08 * h)[:, None] * np.ones((1, w)) * 0.85
        _blend(img, a, np.array([205.0, 200.0, 190.0]))

    # railhead: steel band between the two edges, darker below the contact line
    head_col = _column_coverage(w, (x_r1 + x_r2) / 2.0, x_r1 - x_r2 - 1.0)
    above = (np.arange(h)[:, None] < y_ref)
    shade = np.where(above, 172.0, 148.0) + 6.0 * rng.standard_normal((h, w))
    a_head = head_col[None, :] * np.ones((h, 1))
    steel = np.stack([shade * 0.98, shade, shade * 1.05], axis=2)
    img = img * (1.0 - a_head[:, :, None]) + steel * a_head[:, :, None]

    # the two bright rail-edge lines and the specular contact glint
    for x_edge in (x_r2, x_r1):
        a = _column_coverage(w, x_edge, 2.6)[None, :] * np.ones((h, 1)) * 0.9
        _blend(img, a, np.array([226.0, 228.0, 234.0]))
    glint_rows = _row_coverage(h, y_ref, 2.2)[:, None]
    glint = glint_rows * (head_col + _column_coverage(w, x_r1, 3.0)
                          + _column_coverage(w, x_r2, 3.0)).clip(0, 1)[None, :] * 0.95
    _blend(img, glint, np.array([240.0, 242.0, 246.0]))

    if scene.extra_lines > 0:
        for _ in range(scene.extra_lines):
            x_line = rng.uniform(0.05 * w, 0.95 * w)
            a = _column_coverage(w, x_line, 2.6)[None, :] * np.ones((h, 1)) * 0.85
            _blend(img, a, np.array([222.0, 224.0, 230.0]))

    # wheel: dark disk with its rim passing exactly through (x_w, y_ref)
    r_wheel = scene.wheel_radius_frac * h
    phi = np.deg2rad(20.0)
    cx = x_w + r_wheel * np.sin(phi)
    cy = y_ref - r_wheel * np.cos(phi)
    dist = np.hypot(xx - cx, yy - cy)
    a_disk = np.clip(r_wheel - dist + 0.5, 0.0, 1.0)
    _blend(img, a_disk, np.array([46.0, 46.0, 50.0]))
    rim = np.clip(1.0 - np.abs(dist - (r_wheel - 0.02 * h)) / 2.0, 0.0, 1.0) * a_disk
    _blend(img, rim, np.array([28.0, 28.0, 32.0]))

    if scene.grass_occlusion:
        a = np.clip(1.0 - np.hypot(xx - (x_r1 + 6), yy - y_ref) / (0.06 * h), 0.0, 1.0)
        _blend(img, np.clip(a * 1.6, 0, 1), np.array([62.0, 104.0, 48.0]))

    img *= scene.illumination
    out = np.clip(np.rint(img), 0, 255).astype(np.uint8)
    return AnnotatedFrame(image=out, labels=labels, index=frame_index,
                          source=f"scene{scene.texture_seed}")


def generate_sequence(scene: SceneParams, traj: TrajectoryParams,
                      corrupt_spec: CorruptionSpec | None = None):
    """Render a frame sequence along a trajectory.

    Returns (frames, t_seconds, d_mm). Camera vibration shifts the whole
    scene (labels included); texture drift advances the texture epoch on the
    configured period."""
    t, d = traj.sample()
    rng = np.random.default_rng((traj.seed, 0xCA11))
    frames = []
    for i in range(traj.n_frames):
        shift = tuple(rng.normal(0.0, traj.cam_jitter_px, 2)) \
            if traj.cam_jitter_px > 0 else (0.0, 0.0)
        epoch = i // traj.drift_period if traj.drift_period > 0 else 0
        f = render_frame(scene, float(d[i]), frame_index=i,
                         texture_epoch=epoch, shift=shift)
        if corrupt_spec is not None:
            f = replace(f, image=apply_corruption(
                f.image, replace(corrupt_spec, seed=corrupt_spec.seed + i)))
        frames.append(f)
    return frames, t, d


def write_sequence(out_dir, frames, t: np.ndarray, d: np.ndarray) -> Path:
    """Write frame_%06d.png plus trajectory.csv (frame,t_seconds,D_mm)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for f in frames:
        save_png(out / FRAME_NAME.format(f.index), f.image)
    with open(out / "trajectory.csv", "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["frame", "t_seconds", "D_mm"])
        for f, ti, di in zip(frames, t, d):
            wr.writerow([f.index, f"{ti:.6f}", f"{di:.6f}"])
    return out


def read_trajectory_csv(path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    rows = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            rows.append((int(row["frame"]), float(row["t_seconds"]), float(row["D_mm"])))
    a = np.asarray(rows, dtype=np.float64).reshape(-1, 3)
    return a[:, 0].astype(int), a[:, 1], a[:, 2]


# -- manifests -----------------------------------------------------------


@dataclass
class ManifestItem:
    path: str
    labels: np.ndarray   # (3,2) float64: P_w, P_r1, P_r2
    source: str = ""     # leakage group key: crops of one frame share it
    split: str | None = None

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.float64).reshape(3, 2)


@dataclass
class DatasetManifest:
    items: list[ManifestItem] = field(default_factory=list)
    provenance: dict = field(default_factory=dict)
    skipped: list[str] = field(default_factory=list)

    def __len__(self):
        return len(self.items)

    def split_items(self, split: str) -> list[ManifestItem]:
        return [it for it in self.items if it.split == split]

    def to_json_file(self, path):
        doc = {"provenance": self.provenance, "skipped": self.skipped,
               "items": [{"path": it.path, "labels": it.labels.tolist(),
                          "source": it.source, "split": it.split}
                         for it in self.items]}
        Path(path).write_text(json.dumps(doc, indent=1))

    @classmethod
    def from_json_file(cls, path) -> "DatasetManifest":
        doc = json.loads(Path(path).read_text())
        return cls(items=[ManifestItem(path=d["path"], labels=np.asarray(d["labels"]),
                                       source=d.get("source", ""), split=d.get("split"))
                          for d in doc["items"]],
                   provenance=doc.get("provenance", {}),
                   skipped=doc.get("skipped", []))


def split_dataset(manifest: DatasetManifest, ratios=(0.6, 0.2, 0.2),
                  seed: int = 0) -> DatasetManifest:
    """Deterministic 6/2/2 split keeping every source group in one split."""
    if len(manifest) < 5:
        raise ValueError(f"need at least 5 items to split, have {len(manifest)}")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must sum to 1, got {ratios}")
    groups: dict[str, list[int]] = {}
    for i, it in enumerate(manifest.items):
        groups.setdefault(it.source or it.path, []).append(i)
    keys = sorted(groups)
    order = np.random.default_rng(seed).permutation(len(keys))
    n = len(manifest)
    # largest-remainder item targets
    raw = [r * n for r in ratios]
    targets = [int(np.floor(v)) for v in raw]
    rem = n - sum(targets)
    for i in np.argsort([t - v for t, v in zip(targets, raw)])[:rem]:
        targets[i] += 1
    names = ("train", "val", "test")
    deficits = list(targets)
    assignment: dict[str, str] = {}
    for gi in order:
        key = keys[gi]
        size = len(groups[key])
        best = max(range(3), key=lambda s: (deficits[s] - size, -s))
        assignment[key] = names[best]
        deficits[best] -= size
    items = [replace(it, labels=it.labels.copy(),
                     split=assignment[it.source or it.path]) for it in manifest.items]
    return DatasetManifest(items=items, provenance=dict(manifest.provenance),
                           skipped=list(manifest.skipped))


class ManifestError(ValueError):
    def __init__(self, errors: list[str]):
        super().__init__(f"{len(errors)} invalid annotation row(s); first: {errors[0]}")
        self.errors = errors


def write_annotations_csv(manifest: DatasetManifest, path):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(ANNOTATION_COLUMNS)
        for it in manifest.items:
            wr.writerow([it.path] + [f"{v:.6f}" for v in it.labels.reshape(-1)])


def read_external_dataset(root, partial: bool = False) -> DatasetManifest:
    """Load root/annotations.csv plus its images into a manifest.

    Each row is validated: the file must exist and every label must fall
    inside that image. Invalid rows raise ManifestError, or are skipped
    (itemized in manifest.skipped) when partial=True."""
    root = Path(root)
    csv_path = root / "annotations.csv"
    if not csv_path.exists():
        raise FileNotFoundError(f"{csv_path} not found")
    items: list[ManifestItem] = []
    errors: list[str] = []
    with open(csv_path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(ANNOTATION_COLUMNS) - set(reader.fieldnames or ())
        if missing:
            raise ManifestError([f"annotations.csv missing columns {sorted(missing)}"])
        for ln, row in enumerate(reader, start=2):
            name = row["filename"]
            img_path = root / name
            try:
                vals = [float(row[c]) for c in ANNOTATION_COLUMNS[1:]]
            except (TypeError, ValueError):
                errors.append(f"line {ln}: non-numeric label in {row}")
                continue
            if not img_path.exists():
                errors.append(f"line {ln}: image {name} not found")
                continue
            img = load_png(img_path)
            labels = np.asarray(vals).reshape(3, 2)
            h, w = img.shape[:2]
            if np.any(labels[:, 0] < 0) or np.any(labels[:, 0] > w - 1) \
                    or np.any(labels[:, 1] < 0) or np.any(labels[:, 1] > h - 1):
                errors.append(f"line {ln}: label outside {w}x{h} image {name}")
                continue
            items.append(ManifestItem(path=str(img_path), labels=labels, source=name))
    if errors and not partial:
        raise ManifestError(errors)
    if errors:
        log.warning("read_external_dataset: skipped %d invalid row(s)", len(errors))
    return DatasetManifest(items=items, provenance={"kind": "external", "root": str(root)},
                           skipped=errors)
