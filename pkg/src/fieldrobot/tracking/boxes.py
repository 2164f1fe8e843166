"""Axis-aligned boxes, Jaccard similarity and global box matching."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import linear_sum_assignment

from ..errors import ConfigError

FRAME_WIDTH, FRAME_HEIGHT = 640, 480


@dataclass(frozen=True)
class BoundingBox:
    cx: float
    cy: float
    w: float
    h: float
    score: float = 1.0

    def __post_init__(self):
        if not (self.w > 0 and self.h > 0):
            raise ConfigError(f"box size must be positive, got {self.w}x{self.h}")

    @property
    def corners(self) -> tuple[float, float, float, float]:
        return self.cx - self.w / 2, self.cy - self.h / 2, self.cx + self.w / 2, self.cy + self.h / 2

    @property
    def area(self) -> float:
        return self.w * self.h

    def moved_to(self, cx: float, cy: float) -> "BoundingBox":
        return replace(self, cx=float(cx), cy=float(cy))

    def contains(self, x: float, y: float) -> bool:
        x0, y0, x1, y1 = self.corners
        return x0 <= x <= x1 and y0 <= y <= y1

    def to_dict(self) -> dict:
        return {"cx": self.cx, "cy": self.cy, "w": self.w, "h": self.h, "score": self.score}


def clamp_box(box: BoundingBox, width: float = FRAME_WIDTH, height: float = FRAME_HEIGHT):
    """Intersection of ``box`` with the frame, or None if nothing is left."""
    x0, y0, x1, y1 = box.corners
    x0, x1 = max(x0, 0.0), min(x1, width)
    y0, y1 = max(y0, 0.0), min(y1, height)
    if x1 <= x0 or y1 <= y0:
        return None
    return BoundingBox((x0 + x1) / 2, (y0 + y1) / 2, x1 - x0, y1 - y0, box.score)


def jaccard(a: BoundingBox, b: BoundingBox) -> float:
    ax0, ay0, ax1, ay1 = a.corners
    bx0, by0, bx1, by1 = b.corners
    iw = min(ax1, bx1) - max(ax0, bx0)
    ih = min(ay1, by1) - max(ay0, by0)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    # areas from corners so identical boxes give exactly 1
    union = (ax1 - ax0) * (ay1 - ay0) + (bx1 - bx0) * (by1 - by0) - inter
    return min(1.0, inter / union)


def jaccard_matrix(boxes_a, boxes_b) -> np.ndarray:
    """Pairwise Jaccard indices, vectorized."""
    if not boxes_a or not boxes_b:
        return np.zeros((len(boxes_a), len(boxes_b)))
    A = np.array([b.corners for b in boxes_a])
    B = np.array([b.corners for b in boxes_b])
    iw = np.minimum(A[:, None, 2], B[None, :, 2]) - np.maximum(A[:, None, 0], B[None, :, 0])
    ih = np.minimum(A[:, None, 3], B[None, :, 3]) - np.maximum(A[:, None, 1], B[None, :, 1])
    inter = np.clip(iw, 0, None) * np.clip(ih, 0, None)
    area_a = (A[:, 2] - A[:, 0]) * (A[:, 3] - A[:, 1])
    area_b = (B[:, 2] - B[:, 0]) * (B[:, 3] - B[:, 1])
    return np.minimum(1.0, inter / (area_a[:, None] + area_b[None, :] - inter))


@dataclass(frozen=True)
class Match:
    track: int  # index into the projected list
    detection: int
    score: float


@dataclass
class MatchSet:
    matches: list = field(default_factory=list)
    unmatched_tracks: list = field(default_factory=list)
    unmatched_detections: list = field(default_factory=list)

    @property
    def total(self) -> float:
        return float(sum(m.score for m in self.matches))


def _break_ties(S: np.ndarray, pairs: list, tol: float = 1e-12) -> list:
    """Among equal-total assignments, give lower track indices the higher-scoring detection."""
    det = dict(pairs)
    changed = True
    while changed:
        changed = False
        rows = sorted(det)
        for a, i in enumerate(rows):
            for j in rows[a + 1 :]:
                di, dj = det[i], det[j]
                if S[i, dj] > S[i, di] + tol and abs(S[i, dj] + S[j, di] - S[i, di] - S[j, dj]) <= tol:
                    det[i], det[j] = dj, di
                    changed = True
    return sorted(det.items())


def match_boxes(projected, detections, s_min: float = 0.0) -> MatchSet:
    """One-to-one matching maximizing the summed Jaccard index.

    Pairs scoring below ``s_min`` are dropped after the assignment, so both
    sides of a dropped pair end up unmatched.
    """
    n, m = len(projected), len(detections)
    S = jaccard_matrix(list(projected), list(detections))
    pairs = []
    if n and m:
        rows, cols = linear_sum_assignment(S, maximize=True)
        pairs = _break_ties(S, [(int(r), int(c)) for r, c in zip(rows, cols)])
    kept = [Match(r, c, float(S[r, c])) for r, c in pairs if S[r, c] > 0 and S[r, c] >= s_min]
    used_t = {mt.track for mt in kept}
    used_d = {mt.detection for mt in kept}
    return MatchSet(
        matches=sorted(kept, key=lambda mt: mt.track),
        unmatched_tracks=[i for i in range(n) if i not in used_t],
        unmatched_detections=[j for j in range(m) if j not in used_d],
    )


@dataclass(frozen=True)
class FrameDetections:
    frame_index: int
    timestamp: float
    boxes: tuple = ()

    def to_dict(self) -> dict:
        return {"frame": self.frame_index, "t": self.timestamp, "boxes": [b.to_dict() for b in self.boxes]}

    @classmethod
    def from_dict(cls, d: dict) -> "FrameDetections":
        boxes = tuple(BoundingBox(float(b["cx"]), float(b["cy"]), float(b["w"]), float(b["h"]),
                                  float(b.get("score", 1.0))) for b in d.get("boxes", []))
        return cls(int(d["frame"]), float(d.get("t", 0.0)), boxes)
