"""Detection-stream, flow and count file formats (JSON / JSON Lines)."""

from __future__ import annotations

import json
from pathlib import Path

from .boxes import FrameDetections
from .counter import CountResult


def dumps_detections(frames) -> str:
    return "".join(json.dumps(fd.to_dict()) + "\n" for fd in frames)


def _open_for_write(path):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    return open(path, "w")


def write_detections(path, frames) -> None:
    with _open_for_write(path) as fh:
        fh.write(dumps_detections(frames))


def read_detections(path) -> list:
    with open(path) as fh:
        return [FrameDetections.from_dict(json.loads(line)) for line in fh if line.strip()]


def write_flow(path, flow: dict) -> None:
    with _open_for_write(path) as fh:
        for f in sorted(flow):
            fh.write(json.dumps({"frame": f, "dx": flow[f][0], "dy": flow[f][1]}) + "\n")


def write_count(path, result: CountResult, extra: dict | None = None) -> None:
    doc = result.to_dict()
    if extra:
        doc.update(extra)
    with _open_for_write(path) as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")
