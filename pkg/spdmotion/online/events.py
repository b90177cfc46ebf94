"""
Detector events and their JSON-lines log.

One event per line: ``{"frame_index": N, "kind": ..., "payload": {...}}`` with
sorted keys, where ``frame_index`` is the number of frames consumed when the
event was emitted.
"""
import json
from dataclasses import dataclass, field
from typing import IO, Dict, Iterable, List, NamedTuple

from fvcore.common.file_io import PathManager

__all__ = [
    "EVENT_KINDS",
    "DetectorEvent",
    "SegmentPrediction",
    "EventLogWriter",
    "read_event_log",
    "load_event_log",
    "segments_from_events",
]

EVENT_KINDS = (
    "state_sample",
    "transition_candidate",
    "transition_confirmed",
    "transition_rejected",
    "segment_complete",
    "segment_discarded",
    "motion_recognized",
    "budget_violation",
)


@dataclass(frozen=True)
class DetectorEvent:
    kind: str
    frame_index: int
    payload: Dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in EVENT_KINDS:
            raise ValueError("unknown event kind '{}'".format(self.kind))

    def to_json(self) -> str:
        return json.dumps(
            {"kind": self.kind, "frame_index": self.frame_index, "payload": self.payload},
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, line: str) -> "DetectorEvent":
        d = json.loads(line)
        return cls(d["kind"], int(d["frame_index"]), d.get("payload", {}))


class SegmentPrediction(NamedTuple):
    start_frame: int
    end_frame: int
    label: int
    decision_latency_frames: int
    class_name: str = ""
    early: bool = False


class EventLogWriter:
    """
    Append events to a JSON-lines file (or an open text stream), flushing every line.
    """

    def __init__(self, output):
        if isinstance(output, str):
            self._f = PathManager.open(output, "w")
            self._owned = True
        else:
            self._f = output
            self._owned = False

    def write(self, event: DetectorEvent) -> None:
        self._f.write(event.to_json() + "\n")
        self._f.flush()

    def write_all(self, events: Iterable[DetectorEvent]) -> None:
        for e in events:
            self.write(e)

    def close(self) -> None:
        if self._owned:
            self._f.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_event_log(f: IO[str]) -> List[DetectorEvent]:
    events = []
    for line in f:
        line = line.strip()
        if line:
            events.append(DetectorEvent.from_json(line))
    for a, b in zip(events, events[1:]):
        if b.frame_index < a.frame_index:
            raise ValueError(
                "event log out of order: frame {} after frame {}".format(b.frame_index, a.frame_index)
            )
    return events


def load_event_log(path: str) -> List[DetectorEvent]:
    with PathManager.open(path, "r") as f:
        return read_event_log(f)


def segments_from_events(events: Iterable[DetectorEvent]) -> List[SegmentPrediction]:
    """
    Recognized, non-discarded segments of a run, in start order. A segment's
    end comes from its ``segment_complete`` event when there is one (an early
    recognition carries the deadline as provisional end).
    """
    recognized, ends, discarded = {}, {}, set()
    for e in events:
        sid = e.payload.get("segment_id")
        if e.kind == "motion_recognized":
            recognized[sid] = e
        elif e.kind == "segment_complete":
            ends[sid] = e.payload["end_frame"]
        elif e.kind == "segment_discarded":
            discarded.add(sid)
    predictions = []
    for sid, e in recognized.items():
        if sid in discarded:
            continue
        p = e.payload
        predictions.append(
            SegmentPrediction(
                start_frame=p["start_frame"],
                end_frame=ends.get(sid, p["end_frame"]),
                label=p["class"],
                decision_latency_frames=p["decision_latency_frames"],
                class_name=p.get("class_name", ""),
                early=p.get("early", False),
            )
        )
    return sorted(predictions, key=lambda s: s.start_frame)