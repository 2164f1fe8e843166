"""Detection-agnostic multi-object tracking and stand counting."""

from .boxes import BoundingBox, FrameDetections, MatchSet, clamp_box, jaccard, match_boxes
from .counter import CountingParams, CountResult, Track, count_stream, identity_refiner, process_frame
from .flow import BlockMatchingFlow, FeatureMotion, RecordedFlow, excess_green, project_box
from .kalman import TrackKalman, kalman_predict, kalman_update

__all__ = [
    "BoundingBox", "FrameDetections", "MatchSet", "clamp_box", "jaccard", "match_boxes",
    "CountingParams", "CountResult", "Track", "count_stream", "identity_refiner", "process_frame",
    "BlockMatchingFlow", "FeatureMotion", "RecordedFlow", "excess_green", "project_box",
    "TrackKalman", "kalman_predict", "kalman_update",
]
