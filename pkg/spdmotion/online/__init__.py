from .config import ConfigError, OnlineConfig
from .events import (
    EVENT_KINDS,
    DetectorEvent,
    EventLogWriter,
    SegmentPrediction,
    load_event_log,
    read_event_log,
    segments_from_events,
)
from .detector import (
    DetectorModel,
    MotionClassifier,
    detection_accuracy,
    load_motion_model,
    train_classifier,
    train_detector,
)
from .engine import LiveClock, OnlineEngine, ReplayClock, replay_sequence, verification_decision

__all__ = [k for k in globals().keys() if not k.startswith("_")]
