"""
Grid runs of the online engine over window size, verification tests and
early-classification deadline, one CSV row per configuration.
"""
import csv
import itertools
import logging
from collections import OrderedDict, defaultdict
from typing import List, Optional, Sequence, Tuple

from fvcore.common.file_io import PathManager
from tabulate import tabulate
from tqdm import tqdm

from spdmotion.data import AnnotationSet, SkeletonSequence
from spdmotion.online import DetectorModel, MotionClassifier, OnlineConfig, OnlineEngine, replay_sequence

from .evaluator import MotionEvaluator

__all__ = ["SWEEP_COLUMNS", "run_sweep", "write_sweep_csv", "sweep_acceptance"]

logger = logging.getLogger(__name__)

_METRIC_COLUMNS = (
    "jaccard",
    "f1",
    "sl_score",
    "el_score",
    "detection_rate",
    "fp_rate",
    "prediction_accuracy",
    "detection_accuracy",
    "num_gt",
    "num_pred",
    "mean_decision_latency_frames",
)
SWEEP_COLUMNS = ("ws", "r", "te", "deadline") + _METRIC_COLUMNS + (
    "mean_window_seconds",
    "budget_violations",
    "error",
)


def _run_cell(
    detector: DetectorModel,
    classifier: MotionClassifier,
    config: OnlineConfig,
    streams: Sequence[Tuple[SkeletonSequence, AnnotationSet]],
    iou_threshold: float,
) -> dict:
    engine = OnlineEngine(detector, classifier, config)
    evaluator = MotionEvaluator(iou_threshold)
    windows, seconds, violations = 0, 0.0, 0
    for seq, annotations in streams:
        engine.reset()
        events = replay_sequence(engine, seq)
        summary = engine.summary()
        windows += summary["windows"]
        seconds += summary["total_seconds"]
        violations += summary["budget_violations"]
        evaluator.process(annotations, events)
    report = evaluator.evaluate()
    row = {k: getattr(report, k) for k in _METRIC_COLUMNS}
    row["mean_window_seconds"] = seconds / windows if windows else 0.0
    row["budget_violations"] = violations
    return row


def run_sweep(
    detectors: Sequence[DetectorModel],
    classifier: MotionClassifier,
    streams: Sequence[Tuple[SkeletonSequence, AnnotationSet]],
    base: OnlineConfig,
    tests: Sequence[int],
    deadlines: Sequence[Optional[float]],
    iou_threshold: float = 0.5,
    detection_accuracies: Optional[Sequence[Optional[float]]] = None,
) -> List[dict]:
    """
    Run every (detector, te, deadline) cell on all ``streams``. The window size
    of a cell is its detector's. A failing cell is logged and recorded in the
    ``error`` column; the sweep goes on.

    ``detection_accuracies`` holds the held-out window accuracy of each
    detector (None where not measured); the column stays empty without it.
    """
    if detection_accuracies is None:
        detection_accuracies = [None] * len(detectors)
    if len(detection_accuracies) != len(detectors):
        raise ValueError("one detection accuracy per detector expected")
    rows = []
    grid = list(itertools.product(range(len(detectors)), tests, deadlines))
    for k, te, deadline in tqdm(grid, desc="sweep"):
        detector = detectors[k]
        config = base.replace(ws=detector.window_size, te=te, deadline=deadline)
        row = {"ws": config.ws, "r": config.r, "te": te, "deadline": deadline, "error": ""}
        try:
            row.update(_run_cell(detector, classifier, config.validate(), streams, iou_threshold))
            row["detection_accuracy"] = detection_accuracies[k]
        except Exception as e:
            logger.warning("Sweep cell ws={} te={} T={} failed: {}".format(config.ws, te, deadline, e))
            row["error"] = "{}: {}".format(type(e).__name__, e)
        rows.append(row)

    table = tabulate(
        [[row.get(c, "") for c in ("ws", "te", "deadline", "f1", "jaccard", "detection_rate", "fp_rate")]
         for row in rows],
        headers=["ws", "te", "T", "F1", "Jaccard", "DR", "FP"],
        tablefmt="pipe",
        floatfmt=".4f",
    )
    logger.info("Sweep results:\n" + table)
    return rows


def write_sweep_csv(rows: Sequence[dict], path: str) -> None:
    with PathManager.open(path, "w") as f:
        writer = csv.DictWriter(f, fieldnames=list(SWEEP_COLUMNS), lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({c: "" if row.get(c) is None else row.get(c, "") for c in SWEEP_COLUMNS})


def _ok(rows):
    return [row for row in rows if not row.get("error")]


def sweep_acceptance(rows: Sequence[dict], cr: float, tolerance: float = 0.03) -> "OrderedDict[str, bool]":
    """
    Shape checks over a finished sweep:

    * ``visibility_window``: among the no-deadline rows, some window size of
      0.6 to 0.8 s lies within ``tolerance`` of the best F1 (best over te).
    * ``deadline_monotone``: for every (ws, te), F1 never drops by more than
      ``tolerance`` as the deadline grows.
    * ``deadline_converges``: the F1 at the longest deadline is within
      ``tolerance`` of the no-deadline F1 of the same (ws, te).

    A check with no rows to look at fails.
    """
    rows = _ok(rows)
    best_by_ws = defaultdict(float)
    for row in rows:
        if row["deadline"] is None:
            best_by_ws[row["ws"]] = max(best_by_ws[row["ws"]], row["f1"])
    band = set()
    if best_by_ws:
        top = max(best_by_ws.values())
        band = {ws for ws, f1 in best_by_ws.items() if f1 >= top - tolerance}
    visible = any(0.6 * cr - 1e-9 <= ws <= 0.8 * cr + 1e-9 for ws in band)

    groups = defaultdict(dict)
    for row in rows:
        groups[(row["ws"], row["te"])][row["deadline"]] = row["f1"]
    monotone, converges = [], []
    for by_deadline in groups.values():
        timed = sorted(d for d in by_deadline if d is not None)
        if not timed:
            continue
        f1s = [by_deadline[d] for d in timed]
        monotone.append(all(b >= a - tolerance for a, b in zip(f1s, f1s[1:])))
        if None in by_deadline:
            converges.append(abs(f1s[-1] - by_deadline[None]) <= tolerance)

    checks = OrderedDict(
        visibility_window=visible,
        deadline_monotone=bool(monotone) and all(monotone),
        deadline_converges=bool(converges) and all(converges),
    )
    logger.info(
        "Sweep checks:\n"
        + tabulate([[k, "pass" if v else "FAIL"] for k, v in checks.items()], headers=["check", ""], tablefmt="pipe")
    )
    return checks
