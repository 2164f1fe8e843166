"""Feature motion between frames and flow-based box projection.

Two motion providers share one call signature,
``provider(prev_frame, frame, box) -> list[FeatureMotion]``:

* :class:`RecordedFlow` replays per-frame displacements written by the
  synthetic stream generator.
* :class:`BlockMatchingFlow` tracks excess-green features between RGB
  images by exhaustive SSD block matching.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from ..errors import NoFeaturesError
from .boxes import BoundingBox


@dataclass(frozen=True)
class FeatureMotion:
    x: float
    y: float
    dx: float
    dy: float


def excess_green(rgb) -> np.ndarray:
    """Per-pixel ``(2G - R - B) / (R + G + B)``; black pixels map to 0."""
    img = np.asarray(rgb, dtype=float)
    r, g, b = img[..., 0], img[..., 1], img[..., 2]
    total = r + g + b
    out = np.zeros_like(total)
    np.divide(2 * g - r - b, total, out=out, where=total > 0)
    return out


def mean_flow(motions) -> np.ndarray:
    if not motions:
        raise NoFeaturesError("no feature motions inside the box")
    return np.array([[m.dx, m.dy] for m in motions]).mean(axis=0)


def project_box(box: BoundingBox, motions) -> np.ndarray:
    """Box center shifted by the mean displacement of its features."""
    return np.array([box.cx, box.cy]) + mean_flow(motions)


class RecordedFlow:
    """Per-frame global displacements ``{frame: (dx, dy)}`` from frame-1 to frame."""

    def __init__(self, displacements: dict):
        self.displacements = {int(k): (float(v[0]), float(v[1])) for k, v in displacements.items()}

    @classmethod
    def load(cls, path) -> "RecordedFlow":
        disp = {}
        with open(path) as fh:
            for line in fh:
                if line.strip():
                    rec = json.loads(line)
                    disp[rec["frame"]] = (rec["dx"], rec["dy"])
        return cls(disp)

    def __call__(self, prev_frame: int, frame: int, box: BoundingBox):
        dx = dy = 0.0
        for f in range(prev_frame + 1, frame + 1):
            if f not in self.displacements:
                return []
            dx += self.displacements[f][0]
            dy += self.displacements[f][1]
        return [FeatureMotion(box.cx, box.cy, dx, dy)]


def feature_points(exg: np.ndarray, box: BoundingBox, max_points: int = 20, margin: int = 0) -> list:
    """Strongest local maxima of the excess-green gradient magnitude inside ``box``."""
    h, w = exg.shape
    x0, y0, x1, y1 = box.corners
    x0 = max(int(np.floor(x0)), margin)
    y0 = max(int(np.floor(y0)), margin)
    x1 = min(int(np.ceil(x1)), w - margin)
    y1 = min(int(np.ceil(y1)), h - margin)
    if x1 - x0 < 3 or y1 - y0 < 3:
        return []
    gy, gx = np.gradient(exg[y0:y1, x0:x1])
    mag = np.hypot(gx, gy)
    peaks = (mag == ndimage.maximum_filter(mag, size=5)) & (mag > 1e-3)
    ys, xs = np.nonzero(peaks)
    if len(xs) == 0:
        return []
    order = np.lexsort((xs, ys, -mag[ys, xs]))[:max_points]
    return [(int(xs[i] + x0), int(ys[i] + y0)) for i in order]


def block_match(prev: np.ndarray, curr: np.ndarray, x: int, y: int, half: int = 4, search: int = 16):
    """Displacement of the patch around ``(x, y)`` from ``prev`` to ``curr`` by minimum SSD."""
    h, w = prev.shape
    if not (half <= x < w - half and half <= y < h - half):
        return None
    patch = prev[y - half : y + half + 1, x - half : x + half + 1]
    lo_y, hi_y = max(y - search - half, 0), min(y + search + half + 1, h)
    lo_x, hi_x = max(x - search - half, 0), min(x + search + half + 1, w)
    region = curr[lo_y:hi_y, lo_x:hi_x]
    if region.shape[0] < patch.shape[0] or region.shape[1] < patch.shape[1]:
        return None
    windows = np.lib.stride_tricks.sliding_window_view(region, patch.shape)
    ssd = ((windows - patch) ** 2).sum(axis=(2, 3))
    iy, ix = np.unravel_index(int(np.argmin(ssd)), ssd.shape)
    return float(lo_x + ix + half - x), float(lo_y + iy + half - y)


class BlockMatchingFlow:
    """Feature flow between consecutive RGB frames of an image sequence."""

    def __init__(self, frames, max_points: int = 20, half: int = 4, search: int = 16):
        self.frames = frames  # mapping frame index -> RGB array or path
        self.max_points = max_points
        self.half = half
        self.search = search
        self._exg = {}

    @classmethod
    def from_directory(cls, directory, **kw) -> "BlockMatchingFlow":
        files = sorted(p for p in Path(directory).iterdir() if p.suffix.lower() in (".png", ".jpg", ".jpeg", ".bmp"))
        return cls({i: p for i, p in enumerate(files)}, **kw)

    def _index(self, frame: int) -> np.ndarray:
        if frame not in self._exg:
            src = self.frames[frame]
            if isinstance(src, (str, Path)):
                from PIL import Image

                with Image.open(src) as im:
                    src = np.asarray(im.convert("RGB"))
            self._exg[frame] = excess_green(src)
            # keep memory bounded for long sequences
            for old in [f for f in self._exg if f < frame - 2]:
                del self._exg[old]
        return self._exg[frame]

    def __call__(self, prev_frame: int, frame: int, box: BoundingBox):
        if prev_frame not in self.frames or frame not in self.frames:
            return []
        prev, curr = self._index(prev_frame), self._index(frame)
        out = []
        for x, y in feature_points(prev, box, self.max_points, margin=self.half):
            d = block_match(prev, curr, x, y, self.half, self.search)
            if d is not None:
                out.append(FeatureMotion(float(x), float(y), d[0], d[1]))
        return out
