from .annotations import IDLE, AnnotationSet, Segment
from .build import (
    build_classifier_dataset,
    build_held_out_pairs,
    build_train_loader,
    build_window_dataset,
    interp_frames,
    load_stream_dir,
    preprocess_batch,
    save_stream,
)
from .io import FileFormatError, load_annotations, load_sequence, save_annotations, save_sequence
from .pairs import PairBatch, PairLoader, sample_pairs
from .partition import PartitionScheme, body_partition, build_partition, hand_partition, partition_frames
from .skeleton import (
    LAYOUTS,
    JointLayout,
    SkeletonSequence,
    derivative,
    get_layout,
    interpolate,
    normalize,
    preprocess,
)
from .synthetic import SyntheticSpec, gen_synthetic
from .windows import (
    LabeledWindow,
    dominant_label,
    extract_random_windows,
    split_subsequences,
    subsequence_spans,
)

__all__ = [k for k in globals().keys() if not k.startswith("_")]
