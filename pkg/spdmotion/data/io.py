"""
Text formats for skeleton streams and their ground truth.

Sequence file (JSON-lines): a header line
``{"capture_rate", "joint_count", "kind", "layout", "version"}`` followed by one
line per frame ``{"frame": index, "joints": [x0, y0, z0, x1, ...]}`` with strictly
increasing frame indices.

Annotation file (JSON):
``{"version", "total_frames", "classes": [...], "segments": [{"start_frame",
"end_frame", "class_name"}, ...]}`` with sorted, disjoint, half-open segments.
"""
import json
import logging
from typing import IO, Iterable, Iterator, Tuple

import numpy as np
from fvcore.common.file_io import PathManager

from .annotations import AnnotationSet, Segment
from .skeleton import JointLayout, SkeletonSequence, get_layout

__all__ = [
    "FORMAT_VERSION",
    "FileFormatError",
    "save_sequence",
    "load_sequence",
    "read_sequence_header",
    "iter_frames",
    "save_annotations",
    "load_annotations",
]

FORMAT_VERSION = 1

logger = logging.getLogger(__name__)


class FileFormatError(ValueError):
    pass


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True)


def sequence_header(seq: SkeletonSequence) -> dict:
    return {
        "version": FORMAT_VERSION,
        "capture_rate": seq.capture_rate,
        "joint_count": seq.joint_count,
        "layout": seq.layout.name,
        "kind": seq.layout.kind,
    }


def save_sequence(seq: SkeletonSequence, path: str) -> None:
    with PathManager.open(path, "w") as f:
        f.write(_dumps(sequence_header(seq)) + "\n")
        for k, frame in enumerate(seq.frames):
            f.write(_dumps({"frame": k, "joints": frame.reshape(-1).tolist()}) + "\n")


def read_sequence_header(line: str) -> Tuple[float, JointLayout]:
    try:
        header = json.loads(line)
    except json.JSONDecodeError as e:
        raise FileFormatError("malformed sequence header: {}".format(e)) from e
    if not isinstance(header, dict):
        raise FileFormatError("sequence header must be a JSON object")
    missing = {"version", "capture_rate", "joint_count", "layout"} - set(header)
    if missing:
        raise FileFormatError("sequence header misses {}".format(sorted(missing)))
    if header["version"] != FORMAT_VERSION:
        raise FileFormatError(
            "unsupported sequence file version {} (expected {})".format(
                header["version"], FORMAT_VERSION
            )
        )
    layout = get_layout(header["layout"], int(header["joint_count"]))
    if header.get("kind", layout.kind) != layout.kind:
        raise FileFormatError(
            "header kind '{}' does not match layout '{}'".format(header["kind"], layout.name)
        )
    return float(header["capture_rate"]), layout


def iter_frames(lines: Iterable[str], joint_count: int) -> Iterator[Tuple[int, np.ndarray]]:
    """
    Parse frame lines into (frame index, (joint_count, 3) array). Blank lines are
    skipped; malformed frames raise :class:`FileFormatError`.
    """
    prev = -1
    for line in lines:
        line = line.strip()
        if not line:
            continue
        try:
            record = json.loads(line)
            index, joints = int(record["frame"]), record["joints"]
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
            raise FileFormatError("malformed frame line: {!r}".format(line[:80])) from e
        if index <= prev:
            raise FileFormatError(
                "frame indices must be strictly increasing ({} after {})".format(index, prev)
            )
        if len(joints) != 3 * joint_count:
            raise FileFormatError(
                "frame {} has {} coordinates, expected {}".format(index, len(joints), 3 * joint_count)
            )
        coords = np.asarray(joints, dtype=np.float64).reshape(joint_count, 3)
        if not np.isfinite(coords).all():
            raise FileFormatError("frame {} has non-finite coordinates".format(index))
        prev = index
        yield index, coords


def read_sequence(f: IO[str]) -> SkeletonSequence:
    header = f.readline()
    if not header.strip():
        raise FileFormatError("empty sequence file")
    capture_rate, layout = read_sequence_header(header)
    frames = [coords for _, coords in iter_frames(f, layout.joint_count)]
    if not frames:
        raise FileFormatError("sequence file has no frames")
    return SkeletonSequence(np.stack(frames), capture_rate, layout)


def load_sequence(path: str) -> SkeletonSequence:
    with PathManager.open(path, "r") as f:
        return read_sequence(f)


def save_annotations(annotations: AnnotationSet, path: str) -> None:
    data = {
        "version": FORMAT_VERSION,
        "total_frames": annotations.total_frames,
        "classes": list(annotations.classes),
        "segments": [
            {
                "start_frame": seg.start,
                "end_frame": seg.end,
                "class_name": annotations.classes[seg.label],
            }
            for seg in annotations.segments
        ],
    }
    with PathManager.open(path, "w") as f:
        f.write(_dumps(data) + "\n")


def load_annotations(path: str) -> AnnotationSet:
    with PathManager.open(path, "r") as f:
        try:
            data = json.load(f)
        except json.JSONDecodeError as e:
            raise FileFormatError("malformed annotation file {}: {}".format(path, e)) from e
    if data.get("version") != FORMAT_VERSION:
        raise FileFormatError(
            "unsupported annotation file version {}".format(data.get("version"))
        )
    classes = list(data["classes"])
    index = {name: k for k, name in enumerate(classes)}
    segments = []
    for item in data["segments"]:
        if item["class_name"] not in index:
            raise FileFormatError("unknown class '{}'".format(item["class_name"]))
        segments.append(
            Segment(int(item["start_frame"]), int(item["end_frame"]), index[item["class_name"]])
        )
    return AnnotationSet(int(data["total_frames"]), classes, segments)
