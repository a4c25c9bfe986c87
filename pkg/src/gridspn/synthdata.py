"""Procedural digit-glyph image corpus.

Renders the digits 0-9 with a few bundled fonts under position, size,
rotation, brightness and noise jitter.  Deterministic given the seed, so
tests and benchmarks can regenerate identical datasets on machines with no
image corpus at hand."""

import glob
import os

import numpy as np
from PIL import Image, ImageDraw, ImageFont

from .data import ImageDataset
from .seeding import substream

__all__ = ["make_digit_dataset", "FONT_CANDIDATES"]

FONT_CANDIDATES = [
    "DejaVuSans.ttf",
    "DejaVuSans-Bold.ttf",
    "DejaVuSerif.ttf",
    "DejaVuSansMono.ttf",
]

_FONT_DIRS = [
    "/usr/share/fonts",
    "/usr/local/share/fonts",
]


def _find_fonts():
    found = {}
    roots = list(_FONT_DIRS)
    try:
        import matplotlib
        roots.insert(0, os.path.join(os.path.dirname(matplotlib.__file__),
                                     "mpl-data", "fonts", "ttf"))
    except ImportError:
        pass
    for root in roots:
        for path in glob.glob(os.path.join(root, "**", "*.ttf"), recursive=True):
            name = os.path.basename(path)
            if name in FONT_CANDIDATES and name not in found:
                found[name] = path
    paths = [found[n] for n in FONT_CANDIDATES if n in found]
    if not paths:
        raise RuntimeError("no usable TTF fonts found for the synthetic corpus")
    return paths


def make_digit_dataset(n: int, seed: int, side: int = 28,
                       noise: float = 10.0) -> ImageDataset:
    """n labelled glyph images, (n, side, side) uint8, classes balanced by
    round-robin."""
    rng = substream(seed, "synth-digits")
    fonts = _find_fonts()
    font_cache = {}
    images = np.empty((n, side, side), dtype=np.uint8)
    labels = np.arange(n, dtype=np.int64) % 10
    big = side * 2  # render large, rotate, then downscale for soft edges
    for i in range(n):
        digit = labels[i]
        font_path = fonts[rng.integers(len(fonts))]
        size = int(rng.integers(int(big * 0.55), int(big * 0.8)))
        key = (font_path, size)
        if key not in font_cache:
            font_cache[key] = ImageFont.truetype(font_path, size)
        font = font_cache[key]
        canvas = Image.new("L", (big, big), 0)
        draw = ImageDraw.Draw(canvas)
        left, top, right, bottom = draw.textbbox((0, 0), str(digit), font=font)
        ox = (big - (right - left)) // 2 - left + int(rng.integers(-4, 5))
        oy = (big - (bottom - top)) // 2 - top + int(rng.integers(-4, 5))
        draw.text((ox, oy), str(digit), fill=255, font=font)
        angle = float(rng.uniform(-12.0, 12.0))
        canvas = canvas.rotate(angle, resample=Image.BILINEAR)
        small = canvas.resize((side, side), resample=Image.LANCZOS)
        pixels = np.asarray(small, dtype=np.float64)
        pixels *= float(rng.uniform(0.7, 1.0))
        if noise > 0:
            pixels += rng.normal(0.0, noise, size=pixels.shape)
        images[i] = np.clip(np.rint(pixels), 0, 255).astype(np.uint8)
    return ImageDataset(images=images, labels=labels)
