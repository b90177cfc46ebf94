import logging
from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np

__all__ = [
    "JointLayout",
    "SkeletonSequence",
    "LAYOUTS",
    "INTERP_PRESETS",
    "get_layout",
    "normalize",
    "interpolate",
    "derivative",
    "preprocess",
]

logger = logging.getLogger(__name__)

# Interpolation lengths used for the different capture setups (INPUT.INTERP_PRESET)
INTERP_PRESETS = {"hand": 500, "daily": 200, "industrial": 600}


@dataclass(frozen=True)
class JointLayout:
    """
    Joint convention of a skeleton.

    Attributes:
        joint_count (int): number of joints per frame
        kind (str): "hand", "body" or "custom"
        name (str): convention name, e.g. "hand22", "body25", "body21"
        root (int): joint used as the origin by :func:`normalize`
        names (tuple[str]): optional joint names
    """

    joint_count: int
    kind: str = "custom"
    name: str = "custom"
    root: int = 0
    names: Optional[Tuple[str, ...]] = None

    def __post_init__(self):
        if self.joint_count < 2:
            raise ValueError("a joint layout needs at least 2 joints, got {}".format(self.joint_count))
        if self.kind not in ("hand", "body", "custom"):
            raise ValueError("unknown layout kind '{}'".format(self.kind))
        if not 0 <= self.root < self.joint_count:
            raise ValueError("root joint {} out of range".format(self.root))
        if self.names is not None and len(self.names) != self.joint_count:
            raise ValueError(
                "layout has {} joints but {} names".format(self.joint_count, len(self.names))
            )


HAND22_NAMES = ("wrist", "palm") + tuple(
    "{}_{}".format(finger, k)
    for finger in ("thumb", "index", "middle", "ring", "pinky")
    for k in ("base", "first", "second", "tip")
)

BODY25_NAMES = (
    "spine_base", "spine_mid", "neck", "head",
    "shoulder_left", "elbow_left", "wrist_left", "hand_left",
    "shoulder_right", "elbow_right", "wrist_right", "hand_right",
    "hip_left", "knee_left", "ankle_left", "foot_left",
    "hip_right", "knee_right", "ankle_right", "foot_right",
    "spine_shoulder", "hand_tip_left", "thumb_left", "hand_tip_right", "thumb_right",
)

BODY21_NAMES = (
    "hips", "right_up_leg", "right_leg", "right_foot",
    "left_up_leg", "left_leg", "left_foot",
    "spine", "spine1", "spine2", "neck", "neck1", "head",
    "right_shoulder", "right_arm", "right_fore_arm", "right_hand",
    "left_shoulder", "left_arm", "left_fore_arm", "left_hand",
)

LAYOUTS: Dict[str, JointLayout] = {
    "hand22": JointLayout(22, "hand", "hand22", 0, HAND22_NAMES),
    "body25": JointLayout(25, "body", "body25", 0, BODY25_NAMES),
    "body21": JointLayout(21, "body", "body21", 0, BODY21_NAMES),
}


def get_layout(name: str, joint_count: Optional[int] = None) -> JointLayout:
    if name in LAYOUTS:
        layout = LAYOUTS[name]
        if joint_count is not None and joint_count != layout.joint_count:
            raise ValueError(
                "layout '{}' has {} joints, got {}".format(name, layout.joint_count, joint_count)
            )
        return layout
    if joint_count is None:
        raise ValueError("custom layout '{}' needs an explicit joint count".format(name))
    return JointLayout(joint_count, "custom", name)


@dataclass(frozen=True, eq=False)
class SkeletonSequence:
    """
    An immutable sequence of skeleton frames.

    ``frames`` has shape (L, joint_count, 3) and is stored read-only.
    """

    frames: np.ndarray
    capture_rate: float
    layout: JointLayout

    def __post_init__(self):
        frames = np.array(self.frames, dtype=np.float64, copy=True)
        if frames.ndim != 3 or frames.shape[2] != 3:
            raise ValueError(
                "frames must have shape (L, joints, 3), got {}".format(frames.shape)
            )
        if frames.shape[0] < 1:
            raise ValueError("a skeleton sequence needs at least one frame")
        if frames.shape[1] != self.layout.joint_count:
            raise ValueError(
                "frames have {} joints but layout '{}' has {}".format(
                    frames.shape[1], self.layout.name, self.layout.joint_count
                )
            )
        if not self.capture_rate > 0:
            raise ValueError("capture rate must be positive, got {}".format(self.capture_rate))
        bad = ~np.isfinite(frames).all(axis=(1, 2))
        if bad.any():
            raise ValueError(
                "non-finite coordinates in frame {}".format(int(np.flatnonzero(bad)[0]))
            )
        frames.setflags(write=False)
        object.__setattr__(self, "frames", frames)
        object.__setattr__(self, "capture_rate", float(self.capture_rate))

    def __len__(self):
        return self.frames.shape[0]

    @property
    def joint_count(self) -> int:
        return self.frames.shape[1]

    def replace_frames(self, frames: np.ndarray) -> "SkeletonSequence":
        return SkeletonSequence(frames, self.capture_rate, self.layout)

    def slice(self, start: int, end: int) -> "SkeletonSequence":
        if not 0 <= start < end <= len(self):
            raise ValueError(
                "invalid span [{}, {}) for a sequence of {} frames".format(start, end, len(self))
            )
        return self.replace_frames(self.frames[start:end])


def _mean_pairwise_distance(frames: np.ndarray) -> float:
    i, j = np.triu_indices(frames.shape[1], k=1)
    return float(np.linalg.norm(frames[:, i] - frames[:, j], axis=-1).mean())


def normalize(seq: SkeletonSequence) -> SkeletonSequence:
    """
    Put the layout's root joint at the origin of every frame, then scale the
    whole sequence so that its mean pairwise joint distance is 1.
    """
    root = seq.layout.root
    centered = seq.frames - seq.frames[:, root : root + 1, :]
    size = _mean_pairwise_distance(centered)
    if not size > 0:
        raise ValueError("zero-size skeleton")
    return seq.replace_frames(centered / size)


def interpolate(seq: SkeletonSequence, n_frames: int) -> SkeletonSequence:
    """
    Linear resampling of the time axis to exactly ``n_frames`` uniformly spaced
    frames. The first and last frames are preserved.
    """
    if n_frames < 1:
        raise ValueError("n_frames must be >= 1, got {}".format(n_frames))
    n_src = len(seq)
    if n_src == 1:
        return seq.replace_frames(np.repeat(seq.frames, n_frames, axis=0))

    positions = np.linspace(0.0, n_src - 1, n_frames)
    lower = np.minimum(np.floor(positions).astype(np.int64), n_src - 2)
    frac = (positions - lower)[:, None, None]
    frames = (1.0 - frac) * seq.frames[lower] + frac * seq.frames[lower + 1]
    return seq.replace_frames(frames)


def derivative(seq: SkeletonSequence) -> SkeletonSequence:
    """
    Forward differences scaled by the capture rate (coordinate units per second).
    The output has one frame less than the input.
    """
    if len(seq) < 2:
        raise ValueError("derivative needs at least 2 frames, got {}".format(len(seq)))
    return seq.replace_frames(np.diff(seq.frames, axis=0) * seq.capture_rate)


def preprocess(
    seq: SkeletonSequence,
    n_frames: int,
    *,
    normalize_input: bool = True,
    derivative_input: bool = False,
) -> SkeletonSequence:
    """
    Bring a raw sequence into the form the network is trained on.

    Coordinate mode: interpolate to ``n_frames``, then normalize.
    Derivative mode: normalize the positions, differentiate, then interpolate;
    velocities are not re-centered.
    """
    if derivative_input:
        if normalize_input:
            seq = normalize(seq)
        return interpolate(derivative(seq), n_frames)
    seq = interpolate(seq, n_frames)
    if normalize_input:
        seq = normalize(seq)
    return seq
