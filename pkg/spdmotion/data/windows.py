from collections import Counter
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

from .skeleton import SkeletonSequence

__all__ = [
    "LabeledWindow",
    "subsequence_spans",
    "split_subsequences",
    "dominant_label",
    "extract_random_windows",
]

NUM_SUBSEQUENCES = 6


def subsequence_spans(length: int) -> List[Tuple[int, int]]:
    """
    Spans of the temporal pyramid: whole, two halves, three thirds.
    Boundaries are floor(k * L / n); the last piece of each level absorbs the remainder.
    """
    if length < NUM_SUBSEQUENCES:
        raise ValueError(
            "sequence of {} frames is too short to split into {} subsequences".format(
                length, NUM_SUBSEQUENCES
            )
        )
    spans = [(0, length)]
    for pieces in (2, 3):
        cuts = [k * length // pieces for k in range(pieces)] + [length]
        spans += list(zip(cuts[:-1], cuts[1:]))
    return spans


def split_subsequences(seq: SkeletonSequence) -> List[SkeletonSequence]:
    return [seq.slice(s, e) for s, e in subsequence_spans(len(seq))]


def dominant_label(frame_labels: Sequence[int]) -> int:
    """
    The most frequent label. Ties go to the label whose first frame comes
    later in the window (the incoming state).
    """
    if len(frame_labels) == 0:
        raise ValueError("dominant_label of an empty window")
    counts = Counter(int(x) for x in frame_labels)
    first_seen = {}
    for k, x in enumerate(frame_labels):
        first_seen.setdefault(int(x), k)
    return max(counts, key=lambda c: (counts[c], first_seen[c]))


@dataclass(frozen=True)
class LabeledWindow:
    window: SkeletonSequence
    label: int
    span: Tuple[int, int]


def extract_random_windows(
    seq: SkeletonSequence,
    frame_labels: Sequence[int],
    ws: int,
    count: int,
    rng_seed: int,
) -> List[LabeledWindow]:
    """
    ``count`` windows of exactly ``ws`` frames at uniform random offsets, each
    labeled by :func:`dominant_label` of its per-frame labels.
    """
    if len(frame_labels) != len(seq):
        raise ValueError(
            "got {} frame labels for a sequence of {} frames".format(len(frame_labels), len(seq))
        )
    if ws < 1:
        raise ValueError("window size must be positive, got {}".format(ws))
    if ws > len(seq):
        raise ValueError(
            "window size {} exceeds sequence length {}".format(ws, len(seq))
        )
    rng = np.random.default_rng(rng_seed)
    starts = rng.integers(0, len(seq) - ws + 1, size=count)
    labels = np.asarray(frame_labels)
    windows = []
    for s in starts.tolist():
        windows.append(
            LabeledWindow(seq.slice(s, s + ws), dominant_label(labels[s : s + ws]), (s, s + ws))
        )
    return windows
