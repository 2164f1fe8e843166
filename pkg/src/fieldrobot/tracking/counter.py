"""Tracking-by-detection stand counter.

Each frame, every live track is moved forward by the mean feature flow
inside its box (filtered by a constant-velocity Kalman filter), the moved
boxes are matched to the frame's detections, and the per-track
success/lost counters decide when an object is counted or dropped.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional

import numpy as np

from ..errors import ConfigError, NoFeaturesError, SequencingError
from .boxes import BoundingBox, FrameDetections, match_boxes
from .flow import mean_flow
from .kalman import DEFAULT_Q, DEFAULT_R, TrackKalman, kalman_predict, kalman_update

CREATED, MATCHED, COUNTED, REMOVED = "created", "matched", "counted", "removed"


@dataclass(frozen=True)
class CountingParams:
    s_min: float = 0.3
    p: int = 3
    q: int = 5
    pos_var: float = 25.0
    vel_var: float = 25.0

    def __post_init__(self):
        if not 0 < self.s_min < 1:
            raise ConfigError("s_min must lie in (0, 1)")
        if self.p < 1 or self.q < 0:
            raise ConfigError("need p >= 1 and q >= 0")


@dataclass
class Track:
    id: int
    box: BoundingBox
    kalman: TrackKalman
    success: int = 1
    lost: int = 0
    counted: bool = False


@dataclass(frozen=True)
class CountEvent:
    kind: str
    track: int
    frame: int
    detection: int = -1  # index into the frame's boxes for created/matched

    def to_dict(self) -> dict:
        d = {"event": self.kind, "track": self.track, "frame": self.frame}
        if self.detection >= 0:
            d["detection"] = self.detection
        return d


@dataclass
class CounterState:
    tracks: list = field(default_factory=list)
    count: int = 0
    next_id: int = 0
    last_frame: Optional[int] = None
    events: list = field(default_factory=list)


@dataclass
class CountResult:
    count: int
    events: list

    def to_dict(self) -> dict:
        return {"count": self.count, "events": [e.to_dict() for e in self.events]}

    def counted_tracks(self) -> list:
        return [e.track for e in self.events if e.kind == COUNTED]


def identity_refiner(track: Track, patch=None) -> BoundingBox:
    return track.box


# provider(prev_frame, frame, box) -> list[FeatureMotion]
MotionProvider = Callable[[int, int, BoundingBox], list]
Refiner = Callable[[Track, object], BoundingBox]


def _project(track: Track, provider: MotionProvider, prev: int, frame: int) -> BoundingBox:
    dt = float(frame - prev)
    kalman_predict(track.kalman, dt)
    try:
        flow = mean_flow(provider(prev, frame, track.box))
    except NoFeaturesError:
        # Kalman prediction alone
        return track.box.moved_to(*track.kalman.center)
    z = np.array([track.box.cx + flow[0], track.box.cy + flow[1], flow[0] / dt, flow[1] / dt])
    kalman_update(track.kalman, z)
    return track.box.moved_to(*track.kalman.center)


def process_frame(
    state: CounterState,
    fd: FrameDetections,
    provider: MotionProvider,
    params: CountingParams = CountingParams(),
    refiner: Refiner = identity_refiner,
    patches=None,
) -> list:
    """Advance the counter by one frame; returns the events it produced.

    ``patches`` optionally maps track id to an image patch handed to the
    refiner.
    """
    frame = fd.frame_index
    if state.last_frame is not None and frame <= state.last_frame:
        raise SequencingError(f"frame {frame} does not follow frame {state.last_frame}")
    prev = state.last_frame
    events = []

    if prev is not None:
        for tr in state.tracks:
            tr.box = _project(tr, provider, prev, frame)

    ms = match_boxes([tr.box for tr in state.tracks], list(fd.boxes), params.s_min)
    for m in ms.matches:
        tr = state.tracks[m.track]
        tr.box = fd.boxes[m.detection]
        tr.box = refiner(tr, None if patches is None else patches.get(tr.id))
        tr.kalman.x[:2] = (tr.box.cx, tr.box.cy)
        events.append(CountEvent(MATCHED, tr.id, frame, m.detection))
        if tr.counted:
            continue
        tr.lost = 0
        tr.success += 1
        if tr.success > params.p:
            tr.counted = True
            state.count += 1
            events.append(CountEvent(COUNTED, tr.id, frame))

    survivors = []
    unmatched = set(ms.unmatched_tracks)
    for i, tr in enumerate(state.tracks):
        if i in unmatched:
            tr.lost += 1
            if tr.lost > params.q:
                events.append(CountEvent(REMOVED, tr.id, frame))
                continue
        survivors.append(tr)
    state.tracks = survivors

    for j in ms.unmatched_detections:
        box = fd.boxes[j]
        velocity = (0.0, 0.0)
        if prev is not None:
            try:
                velocity = tuple(mean_flow(provider(prev, frame, box)) / (frame - prev))
            except NoFeaturesError:
                pass
        kf = TrackKalman.start((box.cx, box.cy), velocity, params.pos_var, params.vel_var, DEFAULT_Q, DEFAULT_R)
        state.tracks.append(Track(state.next_id, box, kf))
        events.append(CountEvent(CREATED, state.next_id, frame, j))
        state.next_id += 1

    state.last_frame = frame
    state.events.extend(events)
    return events


def count_stream(
    stream: Iterable[FrameDetections],
    provider: MotionProvider,
    params: CountingParams = CountingParams(),
    refiner: Refiner = identity_refiner,
) -> CountResult:
    state = CounterState()
    for fd in stream:
        process_frame(state, fd, provider, params, refiner)
    return CountResult(state.count, list(state.events))


def track_assignments(events: list) -> dict:
    """``{frame: {detection index: track id}}`` from an event log."""
    out: dict = {}
    for e in events:
        if e.kind in (MATCHED, CREATED):
            out.setdefault(e.frame, {})[e.detection] = e.track
    return out
