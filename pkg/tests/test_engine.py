import numpy as np
import pytest
from conftest import SMALL_LAYOUT, RecordingClassifier, ScriptedDetector, indexed_frames

from spdmotion.data import IDLE, SkeletonSequence
from spdmotion.online import (
    ConfigError,
    EventLogWriter,
    OnlineConfig,
    OnlineEngine,
    ReplayClock,
    read_event_log,
    replay_sequence,
    segments_from_events,
    verification_decision,
)


def run(state_of, n_frames, mode="binary", clock=None, **settings):
    params = dict(ws=12, r=6, te=3, cr=30.0)
    params.update(settings)
    config = OnlineConfig(**params)
    detector = ScriptedDetector(state_of, config.ws, mode)
    classifier = RecordingClassifier(label=2)
    engine = OnlineEngine(detector, classifier, config, clock=clock)
    events = replay_sequence(engine, indexed_frames(n_frames))
    return engine, detector, classifier, events


def of_kind(events, kind):
    return [e for e in events if e.kind == kind]


def active_between(first, last, state=1, idle=0):
    return lambda end: state if first <= end <= last else idle


def test_verification_decision():
    assert verification_decision(1, [1, 0, 1, 1, 0], 5)
    assert not verification_decision(1, [1, 0, 1, 0], 4)
    assert verification_decision(3, [3], 1)
    with pytest.raises(ValueError):
        verification_decision(1, [1, 1], 3)


def test_windows_follow_the_refresh_schedule():
    _, detector, _, events = run(lambda end: 0, 40)
    assert detector.windows == [(0, 12), (6, 18), (12, 24), (18, 30), (24, 36)]
    samples = of_kind(events, "state_sample")
    assert [e.frame_index for e in samples] == [12, 18, 24, 30, 36]
    assert samples[0].payload["window_start"] == 0 and samples[0].payload["window_end"] == 12
    assert len(events) == len(samples)


def test_majority_over_five_tests():
    state_of = lambda end: 1 if end in (16, 28, 34) else 0
    _, _, _, events = run(state_of, 44, ws=10, te=5)
    candidate = of_kind(events, "transition_candidate")[0]
    assert candidate.frame_index == 16
    assert candidate.payload["from"] == 0 and candidate.payload["to"] == 1
    confirmed = of_kind(events, "transition_confirmed")[0]
    assert confirmed.frame_index == 40
    p = confirmed.payload
    assert p["votes"] == [1, 0, 1, 1, 0]
    assert p["trigger_frame"] == 16 and p["transition_frame"] == 10
    assert p["latency_frames"] == 24 and p["segment_id"] == 0
    # the stream ends inside the motion
    complete = of_kind(events, "segment_complete")[0]
    assert complete.payload["start_frame"] == 10 and complete.payload["end_frame"] == 44
    assert complete.payload["end_of_stream"]


def test_binary_segment_life_cycle():
    engine, _, classifier, events = run(active_between(30, 60), 90)
    kinds = [e.kind for e in events if e.kind != "state_sample"]
    assert kinds == [
        "transition_candidate",
        "transition_confirmed",
        "transition_candidate",
        "transition_confirmed",
        "segment_complete",
        "motion_recognized",
    ]
    opened, closed = of_kind(events, "transition_confirmed")
    assert (opened.frame_index, opened.payload["transition_frame"]) == (42, 24)
    assert (closed.frame_index, closed.payload["transition_frame"]) == (78, 60)
    assert closed.payload["segment_id"] is None

    recognized = of_kind(events, "motion_recognized")[0]
    assert recognized.frame_index == 78
    p = recognized.payload
    assert (p["start_frame"], p["end_frame"]) == (24, 60)
    assert p["class"] == 2 and p["class_name"] == "motion_2"
    assert p["decision_latency_frames"] == 18 and not p["early"]
    assert classifier.calls == [(24, 60)]

    assert segments_from_events(events) == [(24, 60, 2, 18, "motion_2", False)]
    frames = [e.frame_index for e in events]
    assert frames == sorted(frames)
    assert engine.summary()["windows"] == 14


def test_short_segment_is_discarded():
    _, _, classifier, events = run(active_between(30, 30), 60, te=1)
    discarded = of_kind(events, "segment_discarded")
    assert len(discarded) == 1
    p = discarded[0].payload
    assert (p["start_frame"], p["end_frame"], p["min_frames"]) == (24, 30, 9)
    assert discarded[0].frame_index == 36
    assert not of_kind(events, "motion_recognized") and classifier.calls == []
    assert segments_from_events(events) == []


def test_majority_rejection():
    engine, _, _, events = run(active_between(30, 30), 50)
    rejected = of_kind(events, "transition_rejected")
    assert len(rejected) == 1
    assert rejected[0].frame_index == 42
    assert rejected[0].payload["votes"] == [1, 0, 0]
    assert rejected[0].payload["reason"] == "majority"
    assert engine.state == 0
    assert not of_kind(events, "transition_confirmed")


def test_early_recognition_at_deadline():
    _, _, classifier, events = run(active_between(30, 60), 90, deadline=1.0)
    recognized = of_kind(events, "motion_recognized")
    assert len(recognized) == 1
    p = recognized[0].payload
    assert recognized[0].frame_index == 54
    assert p["early"] and p["end_frame"] == 54 and p["decision_latency_frames"] == 0
    assert classifier.calls == [(24, 54)]
    # the segment end still comes from the detector
    assert segments_from_events(events)[0].end_frame == 60
    assert segments_from_events(events)[0].early


def test_deadline_already_passed_when_confirmed():
    _, _, classifier, events = run(active_between(30, 60), 90, deadline=0.6)
    recognized = of_kind(events, "motion_recognized")[0]
    assert recognized.frame_index == 42
    assert recognized.payload["end_frame"] == 42
    assert classifier.calls == [(24, 42)]


def test_multiclass_transitions():
    def state_of(end):
        if 30 <= end <= 48:
            return 0
        if 54 <= end <= 78:
            return 1
        return IDLE

    _, _, classifier, events = run(state_of, 100, mode="multiclass")
    confirmed = of_kind(events, "transition_confirmed")
    assert [(e.payload["from"], e.payload["to"]) for e in confirmed] == [(IDLE, 0), (0, 1), (1, IDLE)]
    assert [e.payload["transition_frame"] for e in confirmed] == [24, 48, 78]
    assert [e.frame_index for e in confirmed] == [42, 66, 96]
    assert [e.payload["segment_id"] for e in confirmed] == [0, 1, None]

    complete = of_kind(events, "segment_complete")
    assert [(e.payload["start_frame"], e.payload["end_frame"]) for e in complete] == [(24, 48), (48, 78)]
    assert [e.payload["state"] for e in complete] == [0, 1]
    assert [e.frame_index for e in complete] == [66, 96]
    assert classifier.calls == [(24, 48), (48, 78)]


def test_end_of_stream_during_verification():
    engine, _, _, events = run(active_between(30, 30), 34)
    rejected = of_kind(events, "transition_rejected")
    assert len(rejected) == 1
    assert rejected[0].payload["reason"] == "end_of_stream"
    assert rejected[0].frame_index == 34
    assert engine.finalize() == []
    with pytest.raises(RuntimeError):
        engine.push(indexed_frames(1)[0])


def test_replay_budget_violations_match_trace():
    rng = np.random.default_rng(0)
    trace = rng.uniform(0.0, 0.4, size=14).tolist()
    engine, detector, _, events = run(lambda end: 0, 90, clock=ReplayClock(trace=trace))
    expected = sum(1 for s in trace if s > 0.2)
    violations = of_kind(events, "budget_violation")
    assert len(violations) == expected == engine.violations
    assert all(e.payload["skipped_windows"] == 0 for e in violations)
    assert len(detector.windows) == 14
    assert engine.summary()["total_seconds"] == pytest.approx(sum(trace))


def test_live_budget_violation_skips_windows():
    clock = ReplayClock(trace=[0.5] + [0.0] * 20)
    config = OnlineConfig(ws=12, r=6, te=3, cr=30.0, clock="live")
    detector = ScriptedDetector(lambda end: 0, 12)
    engine = OnlineEngine(detector, RecordingClassifier(), config, clock=clock)
    events = replay_sequence(engine, indexed_frames(40))
    violation = of_kind(events, "budget_violation")[0]
    assert violation.frame_index == 12
    assert violation.payload["skipped_windows"] == 2
    assert violation.payload["budget_seconds"] == pytest.approx(0.2)
    assert [w[1] for w in detector.windows] == [12, 30, 36]


def test_replay_is_deterministic(tmp_path):
    paths = []
    for k in range(2):
        _, _, _, events = run(active_between(30, 60), 90, deadline=1.0)
        path = str(tmp_path / "run{}.events.jsonl".format(k))
        with EventLogWriter(path) as writer:
            writer.write_all(events)
        paths.append(path)
    with open(paths[0]) as a, open(paths[1]) as b:
        text = a.read()
        assert text == b.read()
    with open(paths[0]) as f:
        assert [e.to_json() for e in read_event_log(f)] == text.splitlines()


def test_configuration_checks():
    detector = ScriptedDetector(lambda end: 0, 12)
    with pytest.raises(ConfigError, match="window size"):
        OnlineEngine(detector, RecordingClassifier(), OnlineConfig(ws=15, r=6, te=3, cr=30.0))
    with pytest.raises(ConfigError, match="r <= 0"):
        OnlineEngine(detector, RecordingClassifier(), OnlineConfig(ws=12, r=10, te=3, cr=30.0))

    engine = OnlineEngine(detector, RecordingClassifier(), OnlineConfig(ws=12, r=6, te=3, cr=30.0))
    slow = SkeletonSequence(indexed_frames(20), 25.0, SMALL_LAYOUT)
    with pytest.raises(ConfigError, match="capture rate"):
        replay_sequence(engine, slow)
    with pytest.raises(ValueError, match="shape"):
        engine.push(np.zeros((3, 3)))


def test_reset_starts_a_new_stream():
    engine, detector, _, first = run(active_between(30, 60), 90)
    engine.reset()
    detector.windows.clear()
    second = replay_sequence(engine, indexed_frames(90))
    assert [e.to_json() for e in second] == [e.to_json() for e in first]


def test_deadline_before_minimum_length_never_recognizes_a_discarded_segment():
    # T*cr = 6 frames is shorter than the 9-frame minimum segment
    _, _, classifier, events = run(active_between(30, 30), 60, te=1, deadline=0.2)
    assert len(of_kind(events, "segment_discarded")) == 1
    assert not of_kind(events, "motion_recognized") and classifier.calls == []


def test_early_recognition_waits_for_the_minimum_length():
    _, _, classifier, events = run(active_between(30, 60), 90, te=1, deadline=0.2)
    recognized = of_kind(events, "motion_recognized")
    assert len(recognized) == 1
    assert recognized[0].frame_index == 36
    p = recognized[0].payload
    assert p["early"] and (p["start_frame"], p["end_frame"]) == (24, 30)
    assert p["decision_latency_frames"] == 6
    assert classifier.calls == [(24, 30)]
    assert not of_kind(events, "segment_discarded")


def test_idle_stream_buffer_stays_bounded():
    engine, _, _, events = run(lambda end: 0, 5000)
    assert engine.frames_consumed == 5000
    assert engine.buffered_frames <= 3 * engine.config.ws
    summary = engine.summary()
    assert summary["frames"] == 5000 and summary["windows"] == len(of_kind(events, "state_sample"))


def test_long_segment_is_classified_after_releasing_frames():
    engine, _, classifier, events = run(active_between(30, 1500), 1800)
    assert classifier.calls == [(24, 1500)]
    assert segments_from_events(events) == [(24, 1500, 2, 18, "motion_2", False)]
    assert engine.buffered_frames <= 3 * engine.config.ws
