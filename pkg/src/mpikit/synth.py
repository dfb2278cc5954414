"""Procedural street-like scenes with known background under the occluders.

Each scene has three background classes (0 road, 1 sidewalk, 2 other)
laid out around a vanishing point, and a handful of brightly coloured
rectangles/ellipses standing on the ground as foreground objects. The
label map is the *complete* background; the image shows the occluders.

Class colours (RGB, before per-scene jitter and pixel noise)::

    road      (0.42, 0.42, 0.45)  grey
    sidewalk  (0.78, 0.62, 0.64)  pink-beige
    other     (0.30, 0.52, 0.30)  green, with a bluish sky band on top
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ROAD, SIDEWALK, OTHER = 0, 1, 2
CLASS_NAMES = ("road", "sidewalk", "other")
CLASS_COLORS = np.array([[0.42, 0.42, 0.45], [0.78, 0.62, 0.64], [0.30, 0.52, 0.30]])
SKY_COLOR = np.array([0.55, 0.70, 0.90])
OCCLUDER_COLORS = np.array([
    [0.85, 0.10, 0.10], [0.10, 0.20, 0.85], [0.95, 0.85, 0.10], [0.05, 0.05, 0.05],
    [0.90, 0.45, 0.05], [0.60, 0.10, 0.70], [0.10, 0.80, 0.85], [0.98, 0.98, 0.98],
])
MAX_FG_FRACTION = 0.5
# scenes whose occluders are only specks say little about inpainting
MIN_FG_FRACTION = 0.025


@dataclass(frozen=True)
class SceneConfig:
    h: int = 64
    w: int = 128
    n_fg_objects: tuple = (1, 3)
    fg_size_frac: tuple = (0.2, 0.45)  # object height as a fraction of image height
    horizon_frac: tuple = (0.25, 0.45)
    road_bottom_frac: tuple = (0.5, 0.9)  # road width at the bottom row / image width
    sidewalk_slope: tuple = (0.5, 1.2)   # sidewalk width growth per row below the horizon
    noise_amplitude: float = 0.04
    seed: int = 0

    def __post_init__(self):
        if self.h < 16 or self.w < 16:
            raise ValueError("scenes must be at least 16 x 16")
        lo, hi = self.n_fg_objects
        if not 0 <= lo <= hi:
            raise ValueError("n_fg_objects must be a (min, max) range with 0 <= min <= max")
        for name in ("fg_size_frac", "horizon_frac", "road_bottom_frac"):
            a, b = getattr(self, name)
            if not 0 < a <= b <= 1:
                raise ValueError(f"{name} must be a range inside (0, 1]")


def _scene_rng(cfg: SceneConfig, index: int):
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([cfg.seed, index])))


def _layout(cfg: SceneConfig, rng):
    h, w = cfg.h, cfg.w
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64) + 0.5
    horizon = rng.uniform(*cfg.horizon_frac) * h
    vx = rng.uniform(0.35, 0.65) * w
    half_bottom = rng.uniform(*cfg.road_bottom_frac) * w / 2
    centre_bottom = vx + rng.uniform(-0.15, 0.15) * w
    t = np.clip((yy - horizon) / (h - horizon), 0.0, None)  # 0 at horizon, 1 at bottom
    centre = vx + (centre_bottom - vx) * t
    half = 0.02 * w + (half_bottom - 0.02 * w) * t
    below = yy > horizon
    labels = np.full((h, w), OTHER, dtype=np.uint8)
    sides = rng.integers(1, 4)  # 1 left, 2 right, 3 both
    slope = rng.uniform(*cfg.sidewalk_slope)
    walk = 1.0 + slope * (yy - horizon)
    left_edge, right_edge = centre - half, centre + half
    if sides & 1:
        labels[below & (xx >= left_edge - walk) & (xx < left_edge)] = SIDEWALK
    if sides & 2:
        labels[below & (xx > right_edge) & (xx <= right_edge + walk)] = SIDEWALK
    labels[below & (xx >= left_edge) & (xx <= right_edge)] = ROAD
    return labels, horizon, yy, xx


def _render_background(cfg, rng, labels, horizon, yy):
    colors = CLASS_COLORS + rng.uniform(-0.05, 0.05, size=CLASS_COLORS.shape)
    img = colors[labels]
    sky = (labels == OTHER) & (yy < horizon * rng.uniform(0.4, 0.8))
    img[sky] = SKY_COLOR + rng.uniform(-0.05, 0.05, size=3)
    return img


def _draw_occluders(cfg, rng, img, horizon, yy, xx):
    h, w = cfg.h, cfg.w
    fg = np.zeros((h, w), dtype=bool)
    lo, hi = cfg.n_fg_objects
    for _ in range(int(rng.integers(lo, hi + 1))):
        oh = rng.uniform(*cfg.fg_size_frac) * h
        ow = oh * rng.uniform(0.8, 2.0)
        bottom = rng.uniform(min(horizon + 0.15 * h, h), h)
        cx = rng.uniform(0.1 * w, 0.9 * w)
        cy = bottom - oh / 2
        if rng.random() < 0.5:
            shape = (np.abs(yy - cy) <= oh / 2) & (np.abs(xx - cx) <= ow / 2)
        else:
            shape = ((yy - cy) / (oh / 2)) ** 2 + ((xx - cx) / (ow / 2)) ** 2 <= 1.0
        color = OCCLUDER_COLORS[rng.integers(len(OCCLUDER_COLORS))]
        shade = 1.0 - 0.3 * np.clip((yy - (cy - oh / 2)) / max(oh, 1.0), 0, 1)[..., None]
        img[shape] = (color * shade)[shape]
        fg |= shape
    return fg


def generate_scene(cfg: SceneConfig, index: int):
    """One (image (3, H, W) float32, bg_labels (H, W) uint8, fg_mask (H, W) uint8) triplet.

    Image values are multiples of 1/255, so they survive an 8-bit round trip.
    """
    rng = _scene_rng(cfg, index)
    while True:
        labels, horizon, yy, xx = _layout(cfg, rng)
        img = _render_background(cfg, rng, labels, horizon, yy)
        fg = _draw_occluders(cfg, rng, img, horizon, yy, xx)
        frac = fg.mean()
        if frac <= MAX_FG_FRACTION and (frac >= MIN_FG_FRACTION or cfg.n_fg_objects[1] == 0):
            break
    img = img + rng.normal(0.0, cfg.noise_amplitude, size=img.shape)
    img = np.rint(np.clip(img, 0.0, 1.0) * 255.0) / 255.0
    mask = (~fg).astype(np.uint8)
    return img.transpose(2, 0, 1).astype(np.float32), labels, mask


def generate(cfg: SceneConfig, n: int, start: int = 0):
    """``n`` scenes with indices ``start .. start + n - 1``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return [generate_scene(cfg, i) for i in range(start, start + n)]
