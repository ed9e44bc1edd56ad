"""One-time generator for the bundled frosted-glass textures.

Run from the repo root:  python3 tools/make_frost_templates.py
Writes three seeded 512x512 grayscale PNGs into src/vptrack/imaging/_frost/.
"""
from pathlib import Path

import numpy as np
from PIL import Image
from scipy import ndimage

OUT = Path(__file__).resolve().parent.parent / "src" / "vptrack" / "imaging" / "_frost"


def make_template(seed: int, sig_a: tuple, sig_b: tuple) -> np.ndarray:
    rng = np.random.default_rng(seed)
    base = rng.standard_normal((512, 512))
    veins = 0.5 * np.abs(ndimage.gaussian_filter(base, sig_a)) \
        + 0.5 * np.abs(ndimage.gaussian_filter(base, sig_b))
    body = ndimage.gaussian_filter(rng.standard_normal((512, 512)), 3.0)
    t = 3.5 * veins + 0.6 * body
    t = (t - t.min()) / (t.max() - t.min())
    t = t ** 1.4                      # sharpen crystalline highlights
    t = 0.22 + 0.74 * t               # frost is never fully dark
    return np.clip(np.rint(t * 255.0), 0, 255).astype(np.uint8)


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    recipes = [(101, (7.0, 1.0), (1.0, 7.0)),
               (202, (9.0, 2.0), (2.0, 5.0)),
               (303, (4.0, 1.0), (1.0, 11.0))]
    for i, (seed, sa, sb) in enumerate(recipes, 1):
        img = make_template(seed, sa, sb)
        Image.fromarray(img, mode="L").save(OUT / f"frost_{i:02d}.png")
        print(f"frost_{i:02d}.png  mean={img.mean():.1f}  std={img.std():.1f}")


if __name__ == "__main__":
    main()
