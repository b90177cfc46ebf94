import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Iterable, List, Optional, Sequence

import numpy as np

from spdmotion.data import SkeletonSequence

from .config import ConfigError, OnlineConfig
from .detector import DetectorModel, MotionClassifier
from .events import DetectorEvent

__all__ = [
    "ReplayClock",
    "LiveClock",
    "verification_decision",
    "OnlineEngine",
    "replay_sequence",
]

logger = logging.getLogger(__name__)


class ReplayClock:
    """
    Simulated inference timing: every window takes ``seconds``, or the next
    entry of ``trace`` when a recorded timing trace is given.
    """

    def __init__(self, seconds: float = 0.0, trace: Optional[Sequence[float]] = None):
        self.seconds = float(seconds)
        self._trace = None if trace is None else iter([float(t) for t in trace])

    def measure(self, fn: Callable, *args):
        result = fn(*args)
        if self._trace is None:
            return result, self.seconds
        try:
            return result, next(self._trace)
        except StopIteration:
            raise ValueError("timing trace exhausted") from None


class LiveClock:
    def measure(self, fn: Callable, *args):
        start = time.perf_counter()
        result = fn(*args)
        return result, time.perf_counter() - start


def verification_decision(target: int, states: Sequence[int], te: int) -> bool:
    """
    Majority vote of the verification process: ``states`` are the detector
    outputs of the ``te`` tests (trigger window first); the transition to
    ``target`` holds iff strictly more than te / 2 of them equal ``target``.
    """
    if len(states) != te:
        raise ValueError("expected {} test states, got {}".format(te, len(states)))
    return 2 * sum(1 for s in states if s == target) > te


@dataclass
class _Verification:
    from_state: int
    to_state: int
    trigger_frame: int
    votes: List[int] = field(default_factory=list)


@dataclass
class _OpenSegment:
    segment_id: int
    start: int
    state: int
    recognized: bool = False


class OnlineEngine:
    """
    Streaming motion recognition over one skeleton stream.

    Frames are pushed one at a time. Every ``r`` frames, once ``ws`` frames are
    buffered, the detector labels the trailing window ``[N - ws, N)`` (N =
    frames consumed); a state change starts a verification over ``te`` windows
    and a confirmed change opens and/or closes a motion segment, which the
    classifier then recognizes. With a deadline, an open segment is
    recognized from its first ``T * cr`` frames as soon as they are available,
    unless a pending end could still leave it below the minimum length.
    Frames that no later window or segment can read are released.

    Events carry ``frame_index = N`` and are emitted in frame order.
    """

    def __init__(
        self,
        detector: DetectorModel,
        classifier: MotionClassifier,
        config: OnlineConfig,
        *,
        clock=None,
    ):
        config.validate()
        if config.ws != detector.window_size:
            raise ConfigError(
                "ws == detector window size violated: ws={}, detector trained on {}".format(
                    config.ws, detector.window_size
                )
            )
        if classifier.layout.joint_count != detector.layout.joint_count:
            raise ValueError(
                "detector and classifier disagree on the joint count ({} vs {})".format(
                    detector.layout.joint_count, classifier.layout.joint_count
                )
            )
        self.detector = detector
        self.classifier = classifier
        self.config = config
        if clock is None:
            clock = LiveClock() if config.clock == "live" else ReplayClock(config.simulated_inference_seconds)
        self.clock = clock
        self.reset()

    def reset(self) -> None:
        # frames before _base are no longer reachable and have been released
        self._frames: List[np.ndarray] = []
        self._base = 0
        self.state = self.detector.idle_state
        self._pending: Optional[_Verification] = None
        self._open: Optional[_OpenSegment] = None
        self._next_eval = self.config.ws
        self._next_segment_id = 0
        self._boundary = 0
        self.num_windows = 0
        self.total_seconds = 0.0
        self.max_seconds = 0.0
        self.violations = 0
        self.finished = False

    @property
    def frames_consumed(self) -> int:
        return self._base + len(self._frames)

    @property
    def buffered_frames(self) -> int:
        return len(self._frames)

    def _sequence(self, start: int, end: int) -> SkeletonSequence:
        if start < self._base:
            raise RuntimeError("frame {} was already released (buffer starts at {})".format(start, self._base))
        frames = self._frames[start - self._base : end - self._base]
        return SkeletonSequence(np.stack(frames), self.config.cr, self.detector.layout)

    def _release(self) -> None:
        """
        Drop the frames no future window, segment start or classification can read.
        """
        keep = self._next_eval - self.config.ws
        trigger = self._pending.trigger_frame if self._pending is not None else self._next_eval
        keep = min(keep, max(trigger - self.config.offset, self._boundary))
        if self._open is not None:
            keep = min(keep, self._open.start)
        drop = keep - self._base
        if drop >= self.config.ws:
            del self._frames[:drop]
            self._base = keep

    def _event(self, kind: str, n: int, **payload) -> DetectorEvent:
        return DetectorEvent(kind, n, payload)

    def push(self, frame) -> List[DetectorEvent]:
        """
        Consume one frame of shape (joints, 3); returns the events it triggers.
        """
        if self.finished:
            raise RuntimeError("engine already finalized")
        frame = np.asarray(frame, dtype=np.float64)
        joints = self.detector.layout.joint_count
        if frame.shape != (joints, 3):
            raise ValueError(
                "frame {} has shape {}, expected ({}, 3)".format(self.frames_consumed, frame.shape, joints)
            )
        if not np.isfinite(frame).all():
            raise ValueError("non-finite coordinates in frame {}".format(self.frames_consumed))
        self._frames.append(frame)
        n = self.frames_consumed

        events = []
        if n == self._next_eval:
            events += self._evaluate_window(n)
        events += self._check_deadline(n)
        self._release()
        return events

    def _evaluate_window(self, n: int) -> List[DetectorEvent]:
        window = self._sequence(n - self.config.ws, n)
        state, seconds = self.clock.measure(self.detector.detect_window, window)
        self.num_windows += 1
        self.total_seconds += seconds
        self.max_seconds = max(self.max_seconds, seconds)
        events = [
            self._event(
                "state_sample",
                n,
                state=state,
                state_name=self.detector.label_name(state),
                window_start=n - self.config.ws,
                window_end=n,
                seconds=seconds,
            )
        ]
        events += self._budget_monitor(n, seconds)
        events += self._verify(state, n)
        return events

    def _budget_monitor(self, n: int, seconds: float) -> List[DetectorEvent]:
        r = self.config.r
        self._next_eval = n + r
        budget = self.config.budget_seconds
        if seconds <= budget:
            return []
        self.violations += 1
        skipped = 0
        if self.config.clock == "live":
            # frames that arrived while the detector was busy; stay on the r grid
            busy_until = n + int(math.ceil(seconds * self.config.cr))
            while self._next_eval < busy_until:
                self._next_eval += r
                skipped += 1
        logger.warning(
            "Window ending at frame {} took {:.4f}s, budget is {:.4f}s".format(n, seconds, budget)
        )
        return [
            self._event(
                "budget_violation",
                n,
                seconds=seconds,
                budget_seconds=budget,
                window_end=n,
                skipped_windows=skipped,
            )
        ]

    def _verify(self, state: int, n: int) -> List[DetectorEvent]:
        events = []
        if self._pending is None:
            if state == self.state:
                return events
            self._pending = _Verification(self.state, state, n, [state])
            events.append(
                self._event(
                    "transition_candidate",
                    n,
                    trigger_frame=n,
                    **{"from": self.state, "to": state},
                )
            )
        else:
            self._pending.votes.append(state)
        if len(self._pending.votes) == self.config.te:
            events += self._resolve(n)
        return events

    def _resolve(self, n: int) -> List[DetectorEvent]:
        p, self._pending = self._pending, None
        transition = {"from": p.from_state, "to": p.to_state}
        if not verification_decision(p.to_state, p.votes, self.config.te):
            return [
                self._event(
                    "transition_rejected",
                    n,
                    trigger_frame=p.trigger_frame,
                    votes=p.votes,
                    reason="majority",
                    **transition,
                )
            ]

        t = max(p.trigger_frame - self.config.offset, self._boundary)
        self.state = p.to_state
        events = []
        closing = self._open is not None
        opening = self.detector.is_active(p.to_state)
        confirmed = self._event(
            "transition_confirmed",
            n,
            trigger_frame=p.trigger_frame,
            transition_frame=t,
            votes=p.votes,
            latency_frames=n - p.trigger_frame,
            segment_id=self._next_segment_id if opening else None,
            **transition,
        )
        events.append(confirmed)
        if closing:
            events += self._close_segment(t, n)
        if opening:
            self._open = _OpenSegment(self._next_segment_id, t, p.to_state)
            self._next_segment_id += 1
            self._boundary = t
        return events

    def _close_segment(self, end: int, n: int, end_of_stream: bool = False) -> List[DetectorEvent]:
        seg, self._open = self._open, None
        self._boundary = end
        min_frames = max(2, self.config.min_segment_frames)
        payload = dict(
            segment_id=seg.segment_id,
            start_frame=seg.start,
            end_frame=end,
            state=seg.state,
            end_of_stream=end_of_stream,
        )
        if end - seg.start < min_frames:
            return [self._event("segment_discarded", n, min_frames=min_frames, **payload)]
        events = [self._event("segment_complete", n, **payload)]
        if not seg.recognized:
            events += self._recognize(seg, end, n, early=False)
        return events

    def _recognize(self, seg: _OpenSegment, end: int, n: int, early: bool) -> List[DetectorEvent]:
        """
        Classify frames [seg.start, end) and emit motion_recognized.
        """
        label = self.classifier.classify(self._sequence(seg.start, end))
        seg.recognized = True
        return [
            self._event(
                "motion_recognized",
                n,
                segment_id=seg.segment_id,
                start_frame=seg.start,
                end_frame=end,
                **{"class": label},
                class_name=self.classifier.label_name(label),
                early=early,
                decision_latency_frames=n - end,
            )
        ]

    def _check_deadline(self, n: int) -> List[DetectorEvent]:
        horizon = self.config.deadline_frames
        seg = self._open
        if horizon is None or seg is None or seg.recognized:
            return []
        if n < seg.start + horizon:
            return []
        # wait while a confirmed end could still make the segment too short to keep
        trigger = self._pending.trigger_frame if self._pending is not None else self._next_eval
        earliest_end = max(trigger - self.config.offset, seg.start)
        if earliest_end - seg.start < max(2, self.config.min_segment_frames):
            return []
        return self._recognize(seg, seg.start + horizon, n, early=True)

    def finalize(self) -> List[DetectorEvent]:
        """
        End of stream: a pending verification is rejected, an open segment is
        closed at the last frame.
        """
        if self.finished:
            return []
        n = self.frames_consumed
        events = []
        if self._pending is not None:
            p, self._pending = self._pending, None
            logger.info(
                "Stream ended during the verification of {} -> {} (trigger at frame {})".format(
                    p.from_state, p.to_state, p.trigger_frame
                )
            )
            events.append(
                self._event(
                    "transition_rejected",
                    n,
                    trigger_frame=p.trigger_frame,
                    votes=p.votes,
                    reason="end_of_stream",
                    **{"from": p.from_state, "to": p.to_state},
                )
            )
        if self._open is not None:
            events += self._close_segment(n, n, end_of_stream=True)
        self.finished = True
        return events

    def summary(self) -> dict:
        """
        Running-time summary of the windows evaluated so far.
        """
        windows = self.num_windows
        return {
            "frames": self.frames_consumed,
            "windows": windows,
            "mean_window_seconds": self.total_seconds / windows if windows else 0.0,
            "max_window_seconds": self.max_seconds,
            "total_seconds": self.total_seconds,
            "budget_seconds": self.config.budget_seconds,
            "budget_violations": self.violations,
        }


def replay_sequence(
    engine: OnlineEngine, frames: Iterable[np.ndarray], sink: Optional[Callable] = None
) -> List[DetectorEvent]:
    """
    Push every frame, finalize, and return all events. ``sink`` (e.g.
    :meth:`EventLogWriter.write`) receives each event as it is produced.
    """
    if isinstance(frames, SkeletonSequence):
        if abs(frames.capture_rate - engine.config.cr) > 1e-9:
            raise ConfigError(
                "cr == stream capture rate violated: cr={}, stream at {}".format(
                    engine.config.cr, frames.capture_rate
                )
            )
        frames = frames.frames
    events = []
    for frame in frames:
        produced = engine.push(frame)
        if sink is not None:
            for e in produced:
                sink(e)
        events += produced
    produced = engine.finalize()
    if sink is not None:
        for e in produced:
            sink(e)
    events += produced
    return events
