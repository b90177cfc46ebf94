"""
Segmentation and recognition metrics.

Protocol (recorded in every report):

* segments are half-open frame spans ``[start, end)`` with a class label;
* IoU is intersection over union of two spans;
* matching is greedy by descending IoU, one prediction per ground-truth segment,
  ties resolved on the span coordinates;
* Jaccard: mean over ground truth of the best same-class IoU (0 if none);
* F1: a prediction is a true positive when matched to a same-class ground-truth
  segment with IoU >= threshold;
* SL / EL: for matched pairs ``max(0, 1 - |offset| / gt_length)`` of the start
  (end) frame, unmatched ground truth scores 0;
* detection rate / FP rate: class-agnostic matching by default.
"""
import json
from dataclasses import asdict, dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from fvcore.common.file_io import PathManager
from sklearn.metrics import accuracy_score

from spdmotion.data.annotations import IDLE, Segment, frame_labels_from_segments

__all__ = [
    "segment_iou",
    "match_segments",
    "jaccard_index",
    "f1_score",
    "sl_el_scores",
    "detection_rate_fp",
    "frame_accuracy",
    "prediction_frame_labels",
    "labels_from_gt",
    "MetricsReport",
]


def _as_segments(segments, *, require_positive: bool = False) -> List[Segment]:
    out = [Segment(int(s[0]), int(s[1]), int(s[2])) for s in segments]
    for s in out:
        if s.end < s.start or (require_positive and s.end == s.start):
            raise ValueError("invalid segment [{}, {})".format(s.start, s.end))
    return out


def segment_iou(a, b) -> float:
    inter = max(0, min(a[1], b[1]) - max(a[0], b[0]))
    union = (a[1] - a[0]) + (b[1] - b[0]) - inter
    return inter / union if union > 0 else 0.0


def match_segments(
    pred, gt, iou_threshold: float = 0.5, match_class: bool = True
) -> List[Tuple[int, int, float]]:
    """
    Greedy one-to-one matching by descending IoU.

    Returns:
        list of (pred index, gt index, iou) for pairs with a positive IoU of at
        least ``iou_threshold`` (and the same class when ``match_class``).
    """
    pred = _as_segments(pred)
    gt = _as_segments(gt, require_positive=True)
    candidates = []
    for i, p in enumerate(pred):
        for j, g in enumerate(gt):
            if match_class and p.label != g.label:
                continue
            iou = segment_iou(p, g)
            if iou > 0 and iou >= iou_threshold:
                candidates.append((-iou, tuple(g), tuple(p), i, j))
    candidates.sort()
    used_pred, used_gt, matches = set(), set(), []
    for neg_iou, _, _, i, j in candidates:
        if i in used_pred or j in used_gt:
            continue
        used_pred.add(i)
        used_gt.add(j)
        matches.append((i, j, -neg_iou))
    return matches


def jaccard_index(pred, gt) -> float:
    pred = _as_segments(pred)
    gt = _as_segments(gt, require_positive=True)
    if not gt:
        raise ValueError("jaccard index of an empty ground truth")
    scores = []
    for g in gt:
        best = max((segment_iou(p, g) for p in pred if p.label == g.label), default=0.0)
        scores.append(best)
    return float(np.mean(scores))


def _precision_recall(n_tp: int, n_pred: int, n_gt: int) -> Tuple[float, float]:
    precision = n_tp / n_pred if n_pred else 0.0
    recall = n_tp / n_gt if n_gt else 0.0
    return precision, recall


def f1_score(pred, gt, iou_threshold: float = 0.5) -> float:
    pred = _as_segments(pred)
    gt = _as_segments(gt, require_positive=True)
    if not pred:
        return 0.0
    tp = len(match_segments(pred, gt, iou_threshold))
    precision, recall = _precision_recall(tp, len(pred), len(gt))
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def sl_el_scores(pred, gt, iou_threshold: float = 0.0) -> Tuple[float, float]:
    """
    Start / end localization scores; pairs come from :func:`match_segments`
    (same class, any overlap by default).
    """
    pred = _as_segments(pred)
    gt = _as_segments(gt, require_positive=True)
    if not gt:
        raise ValueError("sl/el scores of an empty ground truth")
    sl = np.zeros(len(gt))
    el = np.zeros(len(gt))
    for i, j, _ in match_segments(pred, gt, iou_threshold):
        p, g = pred[i], gt[j]
        sl[j] = max(0.0, 1.0 - abs(p.start - g.start) / g.length)
        el[j] = max(0.0, 1.0 - abs(p.end - g.end) / g.length)
    return float(sl.mean()), float(el.mean())


def detection_rate_fp(
    pred, gt, iou_threshold: float = 0.5, match_class: bool = False
) -> Tuple[float, float]:
    """
    Returns:
        (matched gt / gt count, unmatched predictions / prediction count);
        each ratio is 0 when its denominator is 0.
    """
    pred = _as_segments(pred)
    gt = _as_segments(gt, require_positive=True)
    matched = len(match_segments(pred, gt, iou_threshold, match_class=match_class))
    detection_rate = matched / len(gt) if gt else 0.0
    fp_rate = (len(pred) - matched) / len(pred) if pred else 0.0
    return detection_rate, fp_rate


def frame_accuracy(pred_labels: Sequence[int], gt_labels: Sequence[int]) -> float:
    if len(pred_labels) != len(gt_labels):
        raise ValueError(
            "frame label lengths differ: {} vs {}".format(len(pred_labels), len(gt_labels))
        )
    if len(gt_labels) == 0:
        raise ValueError("frame accuracy of an empty labeling")
    return float(accuracy_score(np.asarray(gt_labels), np.asarray(pred_labels)))


def prediction_frame_labels(pred, total_frames: int) -> np.ndarray:
    """
    Multiclass frame labels of a prediction list (``IDLE`` outside segments).
    Spans are clipped to the stream; a later segment overwrites an earlier one
    where they overlap.
    """
    labels = np.full(total_frames, IDLE, dtype=np.int64)
    for s in sorted(_as_segments(pred)):
        start, end = max(0, s.start), min(total_frames, s.end)
        if start < end:
            labels[start:end] = s.label
    return labels


@dataclass
class MetricsReport:
    jaccard: float
    f1: float
    sl_score: float
    el_score: float
    detection_rate: float
    fp_rate: float
    prediction_accuracy: float
    detection_accuracy: Optional[float] = None
    num_gt: int = 0
    num_pred: int = 0
    num_streams: int = 0
    mean_decision_latency_frames: Optional[float] = None
    protocol: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in (
            "jaccard",
            "f1",
            "sl_score",
            "el_score",
            "detection_rate",
            "fp_rate",
            "prediction_accuracy",
            "detection_accuracy",
        ):
            v = getattr(self, name)
            if v is not None and not 0.0 <= v <= 1.0:
                raise ValueError("{} = {} outside [0, 1]".format(name, v))

    def scores(self) -> dict:
        """
        The numeric metrics only, for tables and result verification.
        """
        d = asdict(self)
        d.pop("protocol")
        return {k: v for k, v in d.items() if v is not None}

    def to_dict(self) -> dict:
        return asdict(self)

    def save(self, path: str) -> None:
        with PathManager.open(path, "w") as f:
            f.write(json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n")

    @classmethod
    def load(cls, path: str) -> "MetricsReport":
        with PathManager.open(path, "r") as f:
            return cls(**json.load(f))


def labels_from_gt(gt, total_frames: int) -> np.ndarray:
    return frame_labels_from_segments(_as_segments(gt, require_positive=True), total_frames, "multiclass")
