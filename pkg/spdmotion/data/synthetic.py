"""
Synthetic skeleton streams with exact ground truth.

Each motion class is a template of sinusoidal part motions (one frequency,
amplitude, phase and direction per part); a stream alternates noisy rest-pose
idle periods with template motions. With a zero idle range motions follow each
other back to back, which is the regime multiclass detectors are trained for.
"""
import logging
from collections import deque
from dataclasses import asdict, dataclass
from typing import List, Tuple

import numpy as np

from .annotations import AnnotationSet, Segment
from .partition import SKELETON_EDGES, build_partition
from .skeleton import JointLayout, SkeletonSequence, get_layout

__all__ = ["SyntheticSpec", "ClassTemplate", "class_templates", "rest_pose", "gen_synthetic"]

logger = logging.getLogger(__name__)


@dataclass
class SyntheticSpec:
    num_classes: int = 4
    layout: str = "body25"
    capture_rate: float = 30.0
    segments_per_stream: Tuple[int, int] = (3, 5)
    motion_seconds: Tuple[float, float] = (1.5, 2.5)
    idle_seconds: Tuple[float, float] = (1.0, 2.0)
    # per-frame gaussian noise on every coordinate
    noise: float = 0.005
    # extra jitter of the rest pose during idle periods
    idle_noise: float = 0.002
    # relative spread of the per-instance playback speed
    speed_jitter: float = 0.1
    seed: int = 0
    # templates are shared by every stream generated with the same value
    template_seed: int = 1234

    def validate(self) -> None:
        if self.num_classes < 2:
            raise ValueError("synthetic data needs at least 2 classes")
        lo, hi = self.segments_per_stream
        if not 1 <= lo <= hi:
            raise ValueError("segments_per_stream must satisfy 1 <= min <= max")
        for name in ("motion_seconds", "idle_seconds"):
            lo, hi = getattr(self, name)
            if lo < 0 or hi < lo:
                raise ValueError("{} must satisfy 0 <= min <= max".format(name))
        if self.motion_seconds[0] * self.capture_rate < 6:
            raise ValueError("motions must last at least 6 frames")
        if self.capture_rate <= 0:
            raise ValueError("capture rate must be positive")
        if min(self.noise, self.idle_noise, self.speed_jitter) < 0:
            raise ValueError("noise levels must be non-negative")
        if self.speed_jitter >= 1:
            raise ValueError("speed_jitter must be < 1")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class ClassTemplate:
    frequency: np.ndarray  # (P,) Hz
    amplitude: np.ndarray  # (P,)
    phase: np.ndarray  # (P,)
    direction: np.ndarray  # (P, 3) unit vectors


def rest_pose(layout: JointLayout, seed: int = 1234) -> np.ndarray:
    """
    A fixed (J, 3) pose built by walking the skeleton graph from the root with
    random bone directions; layouts without a graph get random joint positions.
    """
    rng = np.random.default_rng(seed)
    edges = SKELETON_EDGES.get(layout.name)
    if edges is None:
        return rng.uniform(-0.5, 0.5, size=(layout.joint_count, 3))

    neighbours = {j: [] for j in range(layout.joint_count)}
    for a, b in edges:
        neighbours[a].append(b)
        neighbours[b].append(a)
    pose = np.zeros((layout.joint_count, 3))
    seen = {layout.root}
    queue = deque([layout.root])
    while queue:
        a = queue.popleft()
        for b in neighbours[a]:
            if b in seen:
                continue
            bone = rng.normal(size=3)
            pose[b] = pose[a] + bone / np.linalg.norm(bone) * rng.uniform(0.15, 0.3)
            seen.add(b)
            queue.append(b)
    return pose


def class_templates(spec: SyntheticSpec, num_parts: int) -> List[ClassTemplate]:
    rng = np.random.default_rng(spec.template_seed)
    templates = []
    for c in range(spec.num_classes):
        amplitude = rng.uniform(0.04, 0.1, size=num_parts)
        # each class drives one part strongly
        amplitude[c % num_parts] = 0.35
        direction = rng.normal(size=(num_parts, 3))
        direction /= np.linalg.norm(direction, axis=1, keepdims=True)
        templates.append(
            ClassTemplate(
                frequency=0.5 + 0.4 * c + rng.uniform(0.0, 0.1, size=num_parts),
                amplitude=amplitude,
                phase=rng.uniform(0.0, 2 * np.pi, size=num_parts),
                direction=direction,
            )
        )
    return templates


def _joint_weights(layout: JointLayout, parts) -> np.ndarray:
    """
    (P, J) weights: a joint moves more the further down its part's chain it sits.
    """
    weights = np.zeros((len(parts), layout.joint_count))
    for p, part in enumerate(parts):
        for k, j in enumerate(part):
            weights[p, j] = (k + 1) / len(part)
    return weights


def _motion(template: ClassTemplate, weights: np.ndarray, n: int, cr: float, speed: float):
    t = np.arange(n) / cr * speed
    # (n, P)
    wave = np.sin(2 * np.pi * template.frequency[None, :] * t[:, None] + template.phase[None, :])
    wave = wave * template.amplitude[None, :]
    # (n, J, 3) = sum_p wave[n, p] * weights[p, J] * direction[p, 3]
    return np.einsum("np,pj,pc->njc", wave, weights, template.direction)


def gen_synthetic(spec: SyntheticSpec, stream_index: int = 0) -> Tuple[SkeletonSequence, AnnotationSet]:
    """
    Generate one stream and its ground truth. Streams are reproducible from
    ``(spec.seed, stream_index)``.
    """
    spec.validate()
    layout = get_layout(spec.layout)
    parts = build_partition(layout).parts
    templates = class_templates(spec, len(parts))
    weights = _joint_weights(layout, parts)
    pose = rest_pose(layout, spec.template_seed)
    cr = spec.capture_rate
    rng = np.random.default_rng([spec.seed, stream_index])

    def frames_for(seconds_range):
        return int(round(rng.uniform(*seconds_range) * cr))

    chunks, segments = [], []
    cursor = 0

    def idle(n):
        nonlocal cursor
        if n > 0:
            chunks.append(pose[None] + rng.normal(scale=spec.idle_noise, size=(n,) + pose.shape))
            cursor += n

    idle(frames_for(spec.idle_seconds))
    num_segments = int(rng.integers(spec.segments_per_stream[0], spec.segments_per_stream[1] + 1))
    prev_label, prev_end = None, None
    for _ in range(num_segments):
        label = int(rng.integers(spec.num_classes))
        if prev_end == cursor and label == prev_label:
            # back-to-back motions must change class to stay separable
            label = (label + 1 + int(rng.integers(spec.num_classes - 1))) % spec.num_classes
        n = frames_for(spec.motion_seconds)
        speed = 1.0 + rng.uniform(-spec.speed_jitter, spec.speed_jitter)
        chunks.append(pose[None] + _motion(templates[label], weights, n, cr, speed))
        segments.append(Segment(cursor, cursor + n, label))
        cursor += n
        prev_label, prev_end = label, cursor
        idle(frames_for(spec.idle_seconds))

    frames = np.concatenate(chunks, axis=0)
    frames = frames + rng.normal(scale=spec.noise, size=frames.shape)
    classes = ["motion_{}".format(c) for c in range(spec.num_classes)]
    logger.debug(
        "Synthetic stream {}: {} frames, {} segments".format(stream_index, cursor, len(segments))
    )
    return SkeletonSequence(frames, cr, layout), AnnotationSet(cursor, classes, segments)
