import glob
import logging
import os
from collections import OrderedDict
from typing import List, Optional, Sequence, Tuple

import numpy as np

from spdmotion.data.annotations import AnnotationSet
from spdmotion.data.io import load_annotations
from spdmotion.online.events import DetectorEvent, load_event_log, segments_from_events
from spdmotion.utils import create_small_table

from .metrics import (
    MetricsReport,
    detection_rate_fp,
    f1_score,
    frame_accuracy,
    jaccard_index,
    labels_from_gt,
    prediction_frame_labels,
    sl_el_scores,
)

__all__ = ["DatasetEvaluator", "MotionEvaluator", "EVENTS_SUFFIX", "pair_event_logs", "evaluate_event_logs"]

EVENTS_SUFFIX = ".events.jsonl"


class DatasetEvaluator:
    """
    Base class for an evaluator: accumulate with :meth:`process`, summarize with
    :meth:`evaluate`.
    """

    def reset(self):
        pass

    def process(self, input, output):
        pass

    def evaluate(self):
        pass


class MotionEvaluator(DatasetEvaluator):
    """
    Scores online runs against ground truth. Streams are laid end to end on one
    timeline before scoring, so every metric is pooled over all segments and
    frames rather than averaged per stream.
    """

    def __init__(self, iou_threshold: float = 0.5):
        self.iou_threshold = iou_threshold
        self._logger = logging.getLogger(__name__)
        self.reset()

    def reset(self):
        self._gt = []
        self._pred = []
        self._gt_labels = []
        self._pred_labels = []
        self._latencies = []
        self._offset = 0
        self._streams = 0

    def process(self, annotations: AnnotationSet, events: Sequence[DetectorEvent]):
        """
        Args:
            annotations: ground truth of one stream
            events: the online events of that stream
        """
        total = annotations.total_frames
        predictions = segments_from_events(events)
        off = self._offset
        self._gt += [(s.start + off, s.end + off, s.label) for s in annotations.segments]
        self._pred += [(p.start_frame + off, p.end_frame + off, p.label) for p in predictions]
        self._gt_labels.append(labels_from_gt(annotations.segments, total))
        self._pred_labels.append(prediction_frame_labels(predictions, total))
        self._latencies += [p.decision_latency_frames for p in predictions]
        self._offset += total
        self._streams += 1

    def evaluate(self, detection_accuracy: Optional[float] = None) -> MetricsReport:
        if not self._gt:
            raise ValueError("no ground-truth segments were processed")
        sl, el = sl_el_scores(self._pred, self._gt)
        dr, fp = detection_rate_fp(self._pred, self._gt, self.iou_threshold)
        report = MetricsReport(
            jaccard=jaccard_index(self._pred, self._gt),
            f1=f1_score(self._pred, self._gt, self.iou_threshold),
            sl_score=sl,
            el_score=el,
            detection_rate=dr,
            fp_rate=fp,
            prediction_accuracy=frame_accuracy(
                np.concatenate(self._pred_labels), np.concatenate(self._gt_labels)
            ),
            detection_accuracy=detection_accuracy,
            num_gt=len(self._gt),
            num_pred=len(self._pred),
            num_streams=self._streams,
            mean_decision_latency_frames=float(np.mean(self._latencies)) if self._latencies else None,
            protocol={
                "iou_threshold": self.iou_threshold,
                "matching": "greedy-iou",
                "sl_el_matching": "same-class, any overlap",
                "detection_matching": "class-agnostic",
                "prediction_accuracy": "per-frame, idle counted as a class",
            },
        )
        self._logger.info("Online recognition results:\n" + create_small_table(
            OrderedDict((k, v) for k, v in report.scores().items() if isinstance(v, float))
        ))
        return report


def pair_event_logs(events_path: str, data_dir: str) -> List[Tuple[str, str]]:
    """
    (event log, annotation file) pairs. A directory of logs is matched to the
    ground truth by stem: ``stream_0003.events.jsonl`` <-> ``stream_0003.ann.json``.
    """
    ann_files = sorted(glob.glob(os.path.join(data_dir, "*.ann.json")))
    if not ann_files:
        raise FileNotFoundError("no annotation files found in '{}'".format(data_dir))
    by_stem = {os.path.basename(p)[: -len(".ann.json")]: p for p in ann_files}
    if os.path.isdir(events_path):
        log_files = sorted(glob.glob(os.path.join(events_path, "*" + EVENTS_SUFFIX)))
    else:
        log_files = [events_path]
    if not log_files:
        raise FileNotFoundError("no event logs found in '{}'".format(events_path))
    pairs = []
    for log_file in log_files:
        name = os.path.basename(log_file)
        stem = name[: -len(EVENTS_SUFFIX)] if name.endswith(EVENTS_SUFFIX) else os.path.splitext(name)[0]
        if stem not in by_stem:
            if len(log_files) == 1 and len(by_stem) == 1:
                stem = next(iter(by_stem))
            else:
                raise FileNotFoundError("no ground truth for event log '{}'".format(log_file))
        pairs.append((log_file, by_stem[stem]))
    return pairs


def evaluate_event_logs(
    events_path: str,
    data_dir: str,
    iou_threshold: float = 0.5,
    detection_accuracy: Optional[float] = None,
) -> MetricsReport:
    evaluator = MotionEvaluator(iou_threshold)
    for log_file, ann_file in pair_event_logs(events_path, data_dir):
        evaluator.process(load_annotations(ann_file), load_event_log(log_file))
    return evaluator.evaluate(detection_accuracy)
