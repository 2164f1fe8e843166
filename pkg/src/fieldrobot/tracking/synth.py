"""Synthetic detection streams with known object identities.

A plot is a single row of objects laid out along the image x axis.  The
camera pans right at a constant rate, so every object enters on the right
edge, crosses the frame and leaves on the left.  Objects are detected while
at least half of their box is inside the frame; the emitted box is the
visible part.  Optional corruption: one short detection dropout per object,
a few short-lived spurious boxes per plot, and Gaussian jitter on centers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .boxes import FRAME_HEIGHT, FRAME_WIDTH, BoundingBox, FrameDetections, clamp_box

FRAME_RATE = 30.0
SPURIOUS = -1


@dataclass(frozen=True)
class SynthConfig:
    width: int = FRAME_WIDTH
    height: int = FRAME_HEIGHT
    objects_mean: float = 17.0
    objects_spread: float = 4.0
    camera_speed: float = 6.0  # px per frame
    dropout_max: int = 5
    dropout_prob: float = 0.0
    spurious_max: int = 0
    spurious_frames: int = 3  # spurious boxes live 1..spurious_frames frames
    position_noise: float = 0.0
    min_visible: float = 0.5


@dataclass
class SyntheticPlot:
    index: int
    n_objects: int
    frames: list = field(default_factory=list)  # FrameDetections
    ids: list = field(default_factory=list)  # per frame, object id per box (SPURIOUS for clutter)
    flow: dict = field(default_factory=dict)  # frame -> (dx, dy)

    def sidecar(self) -> dict:
        return {
            "plot": self.index,
            "objects": self.n_objects,
            "frames": [{"frame": fd.frame_index, "ids": ids} for fd, ids in zip(self.frames, self.ids)],
        }


def _layout(n: int, rng: np.random.Generator, cfg: SynthConfig):
    w = rng.uniform(50.0, 90.0, n)
    h = rng.uniform(60.0, 110.0, n)
    cy = cfg.height / 2 + rng.uniform(-80.0, 80.0, n)
    x = np.empty(n)
    x[0] = cfg.width + w[0] / 2 + 1.0
    for i in range(1, n):
        x[i] = x[i - 1] + (w[i - 1] + w[i]) / 2 + rng.uniform(20.0, 120.0)
    return x, cy, w, h


def generate_plot(index: int, seed: int, cfg: SynthConfig = SynthConfig(), n_objects: int | None = None) -> SyntheticPlot:
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), int(index)]))
    if n_objects is None:
        n_objects = max(1, int(round(rng.normal(cfg.objects_mean, cfg.objects_spread))))
    x, cy, w, h = _layout(n_objects, rng, cfg)
    n_frames = int(math.ceil((x[-1] + w[-1] / 2 + 1.0) / cfg.camera_speed)) + 1

    dropped = [set() for _ in range(n_objects)]
    if cfg.dropout_prob > 0 and cfg.dropout_max > 0:
        for i in range(n_objects):
            if rng.random() < cfg.dropout_prob:
                length = int(rng.integers(1, cfg.dropout_max + 1))
                # start somewhere while the object is near the frame center
                center_frame = (x[i] - cfg.width / 2) / cfg.camera_speed
                start = int(center_frame + rng.integers(-20, 21))
                dropped[i] = set(range(start, start + length))

    spurious = {}
    for _ in range(int(rng.integers(0, cfg.spurious_max + 1)) if cfg.spurious_max > 0 else 0):
        start = int(rng.integers(1, max(2, n_frames - cfg.spurious_frames)))
        life = int(rng.integers(1, cfg.spurious_frames + 1))
        # clutter lives in a band above the row so it never overlaps real objects
        box = BoundingBox(float(rng.uniform(60, cfg.width - 60)), float(rng.uniform(35, 70)),
                          float(rng.uniform(30, 60)), float(rng.uniform(30, 60)), float(rng.uniform(0.3, 0.6)))
        for f in range(start, start + life):
            spurious.setdefault(f, []).append(box.moved_to(box.cx - cfg.camera_speed * (f - start), box.cy))

    plot = SyntheticPlot(index, n_objects)
    for f in range(n_frames):
        offset = cfg.camera_speed * f
        boxes, ids = [], []
        for i in range(n_objects):
            cx = x[i] - offset
            if cx + w[i] / 2 < 0 or cx - w[i] / 2 > cfg.width or f in dropped[i]:
                continue
            full = BoundingBox(float(cx), float(cy[i]), float(w[i]), float(h[i]), 0.9)
            vis = clamp_box(full, cfg.width, cfg.height)
            if vis is None or vis.area < cfg.min_visible * full.area:
                continue
            if cfg.position_noise > 0:
                vis = vis.moved_to(*(np.array([vis.cx, vis.cy]) + rng.normal(0.0, cfg.position_noise, 2)))
            boxes.append(vis)
            ids.append(i)
        for b in spurious.get(f, []):
            vis = clamp_box(b, cfg.width, cfg.height)
            if vis is not None:
                boxes.append(vis)
                ids.append(SPURIOUS)
        order = rng.permutation(len(boxes))
        plot.frames.append(FrameDetections(f, f / FRAME_RATE, tuple(boxes[k] for k in order)))
        plot.ids.append([ids[k] for k in order])
        if f > 0:
            plot.flow[f] = (-cfg.camera_speed, 0.0)
    return plot


def plot_sizes(n_plots: int, seed: int, cfg: SynthConfig = SynthConfig()) -> list:
    """Objects per plot, drawn around ``objects_mean`` and then nudged so the
    set averages ``objects_mean`` exactly (to the nearest whole object)."""
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 2**31 - 1]))
    sizes = np.maximum(1, np.rint(rng.normal(cfg.objects_mean, cfg.objects_spread, n_plots))).astype(int)
    excess = int(sizes.sum() - round(cfg.objects_mean * n_plots))
    order = rng.permutation(n_plots)
    k = 0
    while excess != 0:
        i = order[k % n_plots]
        if excess > 0 and sizes[i] > 1:
            sizes[i] -= 1
            excess -= 1
        elif excess < 0:
            sizes[i] += 1
            excess += 1
        k += 1
    return [int(v) for v in sizes]


def generate_plots(n_plots: int, seed: int, cfg: SynthConfig = SynthConfig()) -> list:
    return [generate_plot(i, seed, cfg, n) for i, n in enumerate(plot_sizes(n_plots, seed, cfg))]
