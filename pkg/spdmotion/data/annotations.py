from dataclasses import dataclass, field
from typing import List, NamedTuple, Sequence

import numpy as np

__all__ = ["IDLE", "Segment", "AnnotationSet", "frame_labels_from_segments"]

# Frame label of idle (no motion) frames in multiclass labelings
IDLE = -1


class Segment(NamedTuple):
    """
    Half-open frame span [start, end) with a class index.
    """

    start: int
    end: int
    label: int

    @property
    def length(self) -> int:
        return self.end - self.start


def check_segments(segments: Sequence[Segment], total_frames: int = None) -> None:
    prev_end = 0
    for seg in segments:
        if not seg.start < seg.end:
            raise ValueError("segment {} has start >= end".format(tuple(seg)))
        if seg.start < prev_end:
            raise ValueError("segments overlap or are unsorted at {}".format(tuple(seg)))
        if seg.start < 0 or (total_frames is not None and seg.end > total_frames):
            raise ValueError(
                "segment {} outside [0, {})".format(tuple(seg), total_frames)
            )
        prev_end = seg.end


def frame_labels_from_segments(
    segments: Sequence[Segment], total_frames: int, mode: str = "multiclass"
) -> np.ndarray:
    """
    Per-frame state labels. Binary: 1 inside any segment, 0 elsewhere.
    Multiclass: the segment's class index inside segments, :data:`IDLE` elsewhere.
    """
    if mode not in ("binary", "multiclass"):
        raise ValueError("unknown labeling mode '{}'".format(mode))
    idle = 0 if mode == "binary" else IDLE
    labels = np.full(total_frames, idle, dtype=np.int64)
    for seg in segments:
        labels[seg.start : seg.end] = 1 if mode == "binary" else seg.label
    return labels


@dataclass
class AnnotationSet:
    """
    Ground truth of a stream: sorted, disjoint motion segments and the class names.
    Frames not covered by a segment are idle.
    """

    total_frames: int
    classes: List[str]
    segments: List[Segment] = field(default_factory=list)

    def __post_init__(self):
        self.segments = [Segment(int(s), int(e), int(c)) for s, e, c in self.segments]
        if self.total_frames < 0:
            raise ValueError("total_frames must be non-negative")
        check_segments(self.segments, self.total_frames)
        for seg in self.segments:
            if not 0 <= seg.label < len(self.classes):
                raise ValueError("segment {} has an unknown class index".format(tuple(seg)))

    def frame_labels(self, mode: str = "multiclass") -> np.ndarray:
        return frame_labels_from_segments(self.segments, self.total_frames, mode)

    def idle_segments(self) -> List[Segment]:
        """
        Gaps between motion segments, labeled :data:`IDLE`.
        """
        gaps, cursor = [], 0
        for seg in self.segments:
            if seg.start > cursor:
                gaps.append(Segment(cursor, seg.start, IDLE))
            cursor = seg.end
        if cursor < self.total_frames:
            gaps.append(Segment(cursor, self.total_frames, IDLE))
        return gaps
