from typing import Callable

import numpy as np
import pytest
import torch

from spdmotion.config import get_cfg
from spdmotion.data import IDLE, PartitionScheme, get_layout

JOINTS = 4


def small_cfg():
    """
    A network small enough for exhaustive gradient checks: 4 custom joints in
    two overlapping 3-joint parts, 6 frames, 3x3 SPDC output, 3-d features.
    """
    cfg = get_cfg()
    cfg.INPUT.LAYOUT = "custom4"
    cfg.INPUT.INTERP_FRAMES = 6
    cfg.MODEL.SPDC.OUT_DIM = 3
    cfg.MODEL.FEATURE_DIM = 3
    cfg.MODEL.MARGIN = 1.0
    cfg.OUTPUT_DIR = ""
    cfg.MUTE_HEADER = True
    return cfg


SMALL_SCHEME = PartitionScheme(((0, 1, 2), (1, 2, 3)))
SMALL_LAYOUT = get_layout("custom4", JOINTS)


@pytest.fixture
def cfg():
    return small_cfg()


@pytest.fixture
def scheme():
    return SMALL_SCHEME


def indexed_frames(n: int, joints: int = JOINTS) -> np.ndarray:
    """
    Frames whose coordinates encode their own index: frame k is k plus a
    per-joint offset, so a stub model can tell where a window sits.
    """
    base = np.arange(n, dtype=np.float64)[:, None, None]
    offsets = np.arange(joints * 3, dtype=np.float64).reshape(1, joints, 3) * 1e-3
    return base + offsets


def frame_index(frame: np.ndarray) -> int:
    return int(round(frame[0, 0]))


class ScriptedDetector:
    """
    Stands in for a trained detector: the state of a window is ``state_of(end)``
    with ``end`` the exclusive end frame of the window.
    """

    def __init__(self, state_of: Callable[[int], int], window_size: int, mode: str = "binary"):
        self.state_of = state_of
        self.window_size = window_size
        self.mode = mode
        self.layout = SMALL_LAYOUT
        self.windows = []

    @property
    def idle_state(self):
        return 0 if self.mode == "binary" else IDLE

    def is_active(self, state):
        return state != self.idle_state

    def label_name(self, state):
        if state == self.idle_state:
            return "idle"
        return "active" if self.mode == "binary" else "motion_{}".format(state)

    def detect_window(self, window):
        assert len(window) == self.window_size
        start = frame_index(window.frames[0])
        end = frame_index(window.frames[-1]) + 1
        self.windows.append((start, end))
        return self.state_of(end)


class RecordingClassifier:
    """
    Classifies every segment as ``label`` and remembers the spans it saw.
    """

    def __init__(self, label: int = 0):
        self.label = label
        self.layout = SMALL_LAYOUT
        self.calls = []

    def label_name(self, label):
        return "motion_{}".format(label)

    def classify(self, segment):
        start = frame_index(segment.frames[0])
        self.calls.append((start, start + len(segment)))
        return self.label


@pytest.fixture(autouse=True)
def _deterministic_torch():
    torch.manual_seed(0)
    yield
