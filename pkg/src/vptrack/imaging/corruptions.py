"""Parametric image corruption models.

Nine corruption families, each driven by a 1..5 severity scale through the
tables below (severity 0 is accepted everywhere and means identity). All math
runs in 64-bit reals on a [0,1] intensity scale, rounds half-to-even and
clamps back into [0,255] at the end, so every output is a valid uint8 image
regardless of input or severity.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from ..frames import validate_image, load_png

KINDS = ("gaussian_noise", "shot_noise", "impulse_noise", "defocus_blur",
         "motion_blur", "snow", "frost", "fog", "brightness")

# severity tables, index [c-1]
GAUSSIAN_SIGMA = (0.04, 0.06, 0.08, 0.10, 0.14)
SHOT_LAMBDA = (500.0, 250.0, 100.0, 60.0, 25.0)
IMPULSE_FRACTION = (0.01, 0.02, 0.03, 0.05, 0.07)   # c*alpha product
DEFOCUS_RADIUS = (2, 3, 4, 6, 8)
MOTION_EXTENT = (4, 6, 8, 12, 16)                   # r, always even: r+1 centered taps
SNOW_DENSITY = (0.002, 0.004, 0.007, 0.011, 0.016)
SNOW_WHITEN = (0.06, 0.10, 0.14, 0.18, 0.24)
FROST_OPACITY = (0.18, 0.26, 0.34, 0.44, 0.54)
FOG_WEIGHT = (0.12, 0.20, 0.28, 0.38, 0.48)
BRIGHTNESS_SHIFT = (0.08, 0.12, 0.18, 0.24, 0.30)   # lightness shift in [0,1]

_FROST_DIR = Path(__file__).parent / "_frost"
_FROST_CACHE: list[np.ndarray] | None = None


@dataclass
class CorruptionSpec:
    """Reproducible description of one corruption application."""
    kind: str
    severity: int
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown corruption kind {self.kind!r}")
        if not 0 <= int(self.severity) <= 5:
            raise ValueError(f"severity must be in 0..5, got {self.severity}")
        self.severity = int(self.severity)
        self.seed = int(self.seed)

    def to_json(self) -> str:
        return json.dumps({"kind": self.kind, "severity": self.severity, "seed": self.seed})

    @classmethod
    def from_json(cls, s: str) -> "CorruptionSpec":
        d = json.loads(s)
        return cls(kind=d["kind"], severity=d["severity"], seed=d.get("seed", 0))


def _check_severity(c: int) -> int:
    c = int(c)
    if not 1 <= c <= 5:
        raise ValueError(f"severity must be in 1..5, got {c}")
    return c


def _to_float(img: np.ndarray) -> np.ndarray:
    validate_image(img)
    return img.astype(np.float64) / 255.0


def _to_u8(x: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(x * 255.0), 0, 255).astype(np.uint8)


# -- noise ---------------------------------------------------------------


def gaussian_noise(img: np.ndarray, c: int, rng: np.random.Generator | None = None) -> np.ndarray:
    c = _check_severity(c)
    rng = rng or np.random.default_rng(0)
    x = _to_float(img)
    return _to_u8(x + GAUSSIAN_SIGMA[c - 1] * rng.standard_normal(x.shape))


def shot_noise(img: np.ndarray, c: int, rng: np.random.Generator | None = None,
               lam: float | None = None) -> np.ndarray:
    c = _check_severity(c)
    rng = rng or np.random.default_rng(0)
    lam = SHOT_LAMBDA[c - 1] if lam is None else float(lam)
    if lam <= 0:
        raise ValueError(f"shot-noise lambda must be positive, got {lam}")
    x = _to_float(img)
    return _to_u8(rng.poisson(x * lam) / lam)


def impulse_noise(img: np.ndarray, c: int, rng: np.random.Generator | None = None,
                  alpha: float | None = None) -> np.ndarray:
    """Salt-and-pepper. Total altered fraction is the table value at severity c,
    or c*alpha when alpha is given; half salt, half pepper, whole pixels."""
    c = _check_severity(c)
    rng = rng or np.random.default_rng(0)
    frac = IMPULSE_FRACTION[c - 1] if alpha is None else c * float(alpha)
    if not 0.0 <= frac <= 1.0:
        raise ValueError(f"altered fraction c*alpha = {frac} outside [0, 1]")
    h, w = img.shape[:2]
    u = rng.uniform(size=(h, w))
    salt = rng.uniform(size=(h, w)) < 0.5
    out = img.copy()
    hit = u < frac
    out[hit & salt] = 255
    out[hit & ~salt] = 0
    return out


# -- blur ----------------------------------------------------------------


def disk_kernel(radius: int) -> np.ndarray:
    """Uniform circular PSF: support strictly inside the radius, sum 1."""
    if radius < 1:
        raise ValueError(f"disk radius must be >= 1, got {radius}")
    ax = np.arange(-radius, radius + 1)
    yy, xx = np.meshgrid(ax, ax, indexing="ij")
    k = (xx * xx + yy * yy <= radius * radius).astype(np.float64)
    return k / k.sum()


def motion_kernel(extent: int, angle_deg: float = 0.0) -> np.ndarray:
    """Centered uniform line PSF with extent+1 taps of 1/(extent+1).

    Centering keeps image content in place; a one-sided kernel would shift
    everything by extent/2 px and silently bias point labels."""
    if extent < 1:
        raise ValueError(f"motion extent must be >= 1, got {extent}")
    half = extent // 2 + 1
    k = np.zeros((2 * half + 1, 2 * half + 1), dtype=np.float64)
    theta = np.deg2rad(angle_deg)
    taps = np.arange(extent + 1) - extent / 2.0
    rows = np.rint(half + taps * np.sin(theta)).astype(int)
    cols = np.rint(half + taps * np.cos(theta)).astype(int)
    np.add.at(k, (rows, cols), 1.0 / (extent + 1))
    # trim all-zero margins
    nz = np.argwhere(k > 0)
    (r0, c0), (r1, c1) = nz.min(0), nz.max(0)
    m = max(half - r0, r1 - half, half - c0, c1 - half)
    return np.ascontiguousarray(k[half - m:half + m + 1, half - m:half + m + 1])


def _convolve_channels(img: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    x = _to_float(img)
    out = np.empty_like(x)
    for ch in range(x.shape[2]):
        out[:, :, ch] = ndimage.convolve(x[:, :, ch], kernel, mode="reflect")
    return _to_u8(out)


def defocus_blur(img: np.ndarray, c: int) -> np.ndarray:
    c = _check_severity(c)
    return _convolve_channels(img, disk_kernel(DEFOCUS_RADIUS[c - 1]))


def motion_blur(img: np.ndarray, c: int, angle_deg: float = 0.0) -> np.ndarray:
    c = _check_severity(c)
    return _convolve_channels(img, motion_kernel(MOTION_EXTENT[c - 1], angle_deg))


# -- weather -------------------------------------------------------------


def snow(img: np.ndarray, c: int, rng: np.random.Generator | None = None) -> np.ndarray:
    """White motion-blurred particles over a globally whitened image."""
    c = _check_severity(c)
    rng = rng or np.random.default_rng(0)
    x = _to_float(img)
    h, w = x.shape[:2]
    layer = np.zeros((h, w))
    hit = rng.uniform(size=(h, w)) < SNOW_DENSITY[c - 1]
    layer[hit] = rng.uniform(0.7, 1.0, size=int(hit.sum()))
    extent = 4 + 2 * c
    streaks = ndimage.convolve(layer, motion_kernel(extent, rng.uniform(-30.0, -10.0)),
                               mode="constant")
    streaks = np.clip(streaks * (extent + 1) * 0.8, 0.0, 1.0)
    whitened = x + SNOW_WHITEN[c - 1] * (1.0 - x)
    return _to_u8(np.maximum(whitened, streaks[:, :, None]))


def _load_frost_templates() -> list[np.ndarray]:
    global _FROST_CACHE
    if _FROST_CACHE is None:
        paths = sorted(_FROST_DIR.glob("*.png"))
        _FROST_CACHE = [load_png(p) for p in paths]
    return _FROST_CACHE


def frost(img: np.ndarray, c: int, rng: np.random.Generator | None = None,
          templates: list[np.ndarray] | None = None) -> np.ndarray:
    """Overlay a randomly cropped frosted-glass texture; brightening only."""
    c = _check_severity(c)
    rng = rng or np.random.default_rng(0)
    if templates is None:
        templates = _load_frost_templates()
    if not templates:
        raise ValueError("frost requires at least one template image; none configured")
    t = templates[int(rng.integers(len(templates)))].astype(np.float64) / 255.0
    if t.ndim == 3:
        t = t.mean(axis=2)
    h, w = img.shape[:2]
    reps = (-(-h // t.shape[0]) + 1, -(-w // t.shape[1]) + 1)
    tiled = np.tile(t, reps)
    oy = int(rng.integers(tiled.shape[0] - h + 1))
    ox = int(rng.integers(tiled.shape[1] - w + 1))
    crop = tiled[oy:oy + h, ox:ox + w, None]
    x = _to_float(img)
    o = FROST_OPACITY[c - 1]
    return _to_u8(np.maximum(x, (1.0 - o) * x + o * crop))


def diamond_square(n_pow: int, rng: np.random.Generator, roughness: float = 0.55) -> np.ndarray:
    """Plasma fractal on a (2^n_pow + 1)^2 grid, min-max scaled to [0,1]."""
    size = 2 ** n_pow + 1
    g = np.zeros((size, size))
    g[::size - 1, ::size - 1] = rng.uniform(0.0, 1.0, (2, 2))
    step, scale = size - 1, 1.0
    while step > 1:
        half = step // 2
        idx = np.arange(0, size - 1, step)
        # diamond: square centers from 4 corners
        tl = g[np.ix_(idx, idx)]
        tr = g[np.ix_(idx, idx + step)]
        bl = g[np.ix_(idx + step, idx)]
        br = g[np.ix_(idx + step, idx + step)]
        g[np.ix_(idx + half, idx + half)] = (tl + tr + bl + br) / 4.0 \
            + rng.uniform(-scale, scale, (len(idx), len(idx)))
        # square: edge midpoints from available axial neighbors
        for r0, c0 in ((0, half), (half, 0)):
            rows = np.arange(r0, size, step)
            cols = np.arange(c0, size, step)
            acc = np.zeros((len(rows), len(cols)))
            cnt = np.zeros_like(acc)
            for dr, dc in ((-half, 0), (half, 0), (0, -half), (0, half)):
                rr, cc = rows + dr, cols + dc
                rm, cm = (rr >= 0) & (rr < size), (cc >= 0) & (cc < size)
                acc[np.ix_(rm, cm)] += g[np.ix_(rr[rm], cc[cm])]
                cnt[np.ix_(rm, cm)] += 1.0
            g[np.ix_(rows, cols)] = acc / cnt + rng.uniform(-scale, scale, acc.shape)
        step = half
        scale *= roughness
    lo, hi = g.min(), g.max()
    return (g - lo) / (hi - lo) if hi > lo else np.zeros_like(g)


def fog(img: np.ndarray, c: int, rng: np.random.Generator | None = None,
        weight: float | None = None) -> np.ndarray:
    """Blend with a diamond-square plasma field; weight 1.0 yields the field."""
    c = _check_severity(c)
    rng = rng or np.random.default_rng(0)
    h, w = img.shape[:2]
    n_pow = max(1, int(np.ceil(np.log2(max(h, w, 2) - 1))))
    plasma = diamond_square(n_pow, rng)[:h, :w]
    fw = FOG_WEIGHT[c - 1] if weight is None else float(weight)
    x = _to_float(img)
    return _to_u8((1.0 - fw) * x + fw * plasma[:, :, None])


# -- photometric ---------------------------------------------------------


def rgb_to_hls(rgb: np.ndarray) -> np.ndarray:
    """Vectorized RGB->HLS on [0,1] arrays of shape (..., 3)."""
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    maxc = np.max(rgb, axis=-1)
    minc = np.min(rgb, axis=-1)
    l = (maxc + minc) / 2.0
    delta = maxc - minc
    gray = delta == 0
    safe = np.where(gray, 1.0, delta)
    s = np.where(gray, 0.0,
                 np.where(l <= 0.5, delta / np.where(maxc + minc == 0, 1.0, maxc + minc),
                          delta / np.where(2.0 - maxc - minc == 0, 1.0, 2.0 - maxc - minc)))
    rc = (maxc - r) / safe
    gc = (maxc - g) / safe
    bc = (maxc - b) / safe
    h = np.where(r == maxc, bc - gc, np.where(g == maxc, 2.0 + rc - bc, 4.0 + gc - rc))
    h = np.where(gray, 0.0, (h / 6.0) % 1.0)
    return np.stack([h, l, s], axis=-1)


def hls_to_rgb(hls: np.ndarray) -> np.ndarray:
    h, l, s = hls[..., 0], hls[..., 1], hls[..., 2]
    m2 = np.where(l <= 0.5, l * (1.0 + s), l + s - l * s)
    m1 = 2.0 * l - m2

    def ramp(hue):
        hue = hue % 1.0
        return np.where(hue < 1 / 6, m1 + (m2 - m1) * hue * 6.0,
                        np.where(hue < 0.5, m2,
                                 np.where(hue < 2 / 3, m1 + (m2 - m1) * (2 / 3 - hue) * 6.0, m1)))

    rgb = np.stack([ramp(h + 1 / 3), ramp(h), ramp(h - 1 / 3)], axis=-1)
    return np.where(s[..., None] == 0, l[..., None], rgb)


def brightness(img: np.ndarray, c: int, sign: int = 1) -> np.ndarray:
    """Shift the HLS lightness channel by the severity table amount."""
    c = _check_severity(c)
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    x = _to_float(img)
    if x.shape[2] == 1:
        return _to_u8(x + sign * BRIGHTNESS_SHIFT[c - 1])
    hls = rgb_to_hls(x)
    hls[..., 1] = np.clip(hls[..., 1] + sign * BRIGHTNESS_SHIFT[c - 1], 0.0, 1.0)
    return _to_u8(hls_to_rgb(hls))


# -- dispatch ------------------------------------------------------------


def apply_corruption(img: np.ndarray, spec: CorruptionSpec) -> np.ndarray:
    """Apply spec to img; severity 0 returns an unmodified copy."""
    validate_image(img)
    if spec.severity == 0:
        return img.copy()
    rng = np.random.default_rng(spec.seed)
    c = spec.severity
    if spec.kind == "gaussian_noise":
        return gaussian_noise(img, c, rng)
    if spec.kind == "shot_noise":
        return shot_noise(img, c, rng)
    if spec.kind == "impulse_noise":
        return impulse_noise(img, c, rng)
    if spec.kind == "defocus_blur":
        return defocus_blur(img, c)
    if spec.kind == "motion_blur":
        return motion_blur(img, c, angle_deg=float(rng.uniform(-45.0, 45.0)))
    if spec.kind == "snow":
        return snow(img, c, rng)
    if spec.kind == "frost":
        return frost(img, c, rng)
    if spec.kind == "fog":
        return fog(img, c, rng)
    if spec.kind == "brightness":
        return brightness(img, c, sign=1 if rng.uniform() < 0.5 else -1)
    raise ValueError(f"unknown kind {spec.kind!r}")  # pragma: no cover


def corrupt_random(img: np.ndarray, severity_range: tuple[int, int] = (1, 3),
                   seed: int | None = None, rng: np.random.Generator | None = None,
                   kinds: tuple[str, ...] = KINDS) -> tuple[np.ndarray, CorruptionSpec]:
    """Pick a kind and severity uniformly, apply, return (image, spec)."""
    if not kinds:
        raise ValueError("kinds must be non-empty")
    bad = [k for k in kinds if k not in KINDS]
    if bad:
        raise ValueError(f"unknown kinds {bad}")
    lo, hi = int(severity_range[0]), int(severity_range[1])
    if not (0 <= lo <= hi <= 5):
        raise ValueError(f"invalid severity range {severity_range}")
    if rng is None:
        rng = np.random.default_rng(seed)
    kind = kinds[int(rng.integers(len(kinds)))]
    severity = int(rng.integers(lo, hi + 1))
    spec = CorruptionSpec(kind=kind, severity=severity, seed=int(rng.integers(2 ** 63)))
    return apply_corruption(img, spec), spec
