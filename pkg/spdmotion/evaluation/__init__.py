from .metrics import (
    MetricsReport,
    detection_rate_fp,
    f1_score,
    frame_accuracy,
    jaccard_index,
    match_segments,
    segment_iou,
    sl_el_scores,
)
from .testing import flatten_results_dict, print_csv_format, verify_results

# evaluator and sweep depend on spdmotion.online; import them from their modules

__all__ = [k for k in globals().keys() if not k.startswith("_")]
