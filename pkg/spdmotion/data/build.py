import glob
import itertools
import logging
import os
from typing import List, Sequence, Tuple

import numpy as np
import torch
from fvcore.common.file_io import PathManager
from tabulate import tabulate
from termcolor import colored

from .annotations import IDLE, AnnotationSet
from .io import load_annotations, load_sequence, save_annotations, save_sequence
from .pairs import PairLoader, sample_pairs
from .skeleton import INTERP_PRESETS, SkeletonSequence, preprocess
from .windows import LabeledWindow, extract_random_windows

__all__ = [
    "Stream",
    "stream_paths",
    "save_stream",
    "load_stream_dir",
    "cut_segments",
    "build_classifier_dataset",
    "build_window_dataset",
    "interp_frames",
    "preprocess_batch",
    "build_train_loader",
    "build_held_out_pairs",
    "print_class_histogram",
]

Stream = Tuple[SkeletonSequence, AnnotationSet]

SEQUENCE_SUFFIX = ".seq.jsonl"
ANNOTATION_SUFFIX = ".ann.json"


def stream_paths(directory: str, index: int) -> Tuple[str, str]:
    stem = os.path.join(directory, "stream_{:04d}".format(index))
    return stem + SEQUENCE_SUFFIX, stem + ANNOTATION_SUFFIX


def save_stream(directory: str, index: int, seq: SkeletonSequence, annotations: AnnotationSet):
    PathManager.mkdirs(directory)
    seq_path, ann_path = stream_paths(directory, index)
    save_sequence(seq, seq_path)
    save_annotations(annotations, ann_path)
    return seq_path, ann_path


def load_stream_dir(directory: str) -> List[Stream]:
    """
    Load every ``*.seq.jsonl`` file of a directory together with its
    ``*.ann.json`` ground truth, in file name order.
    """
    seq_files = sorted(glob.glob(os.path.join(directory, "*" + SEQUENCE_SUFFIX)))
    if not seq_files:
        raise FileNotFoundError("no sequence files found in '{}'".format(directory))
    streams = []
    for seq_file in seq_files:
        ann_file = seq_file[: -len(SEQUENCE_SUFFIX)] + ANNOTATION_SUFFIX
        seq = load_sequence(seq_file)
        annotations = load_annotations(ann_file)
        if annotations.total_frames != len(seq):
            raise ValueError(
                "{} covers {} frames but the sequence has {}".format(
                    ann_file, annotations.total_frames, len(seq)
                )
            )
        streams.append((seq, annotations))
    logger = logging.getLogger(__name__)
    logger.info("Loaded {} streams from {}".format(len(streams), directory))
    return streams


def cut_segments(seq: SkeletonSequence, annotations: AnnotationSet) -> List[Tuple[SkeletonSequence, int]]:
    return [(seq.slice(s.start, s.end), s.label) for s in annotations.segments]


def build_classifier_dataset(streams: Sequence[Stream]) -> Tuple[List[SkeletonSequence], List[int], List[str]]:
    """
    Segmented motion instances (one per annotated segment) for classifier training.
    """
    classes = streams[0][1].classes
    sequences, labels = [], []
    for seq, annotations in streams:
        if annotations.classes != classes:
            raise ValueError("streams disagree on the class list")
        for instance, label in cut_segments(seq, annotations):
            sequences.append(instance)
            labels.append(label)
    print_class_histogram(labels, classes)
    return sequences, labels, classes


def build_window_dataset(
    streams: Sequence[Stream], ws: int, mode: str, count: int, seed: int
) -> List[LabeledWindow]:
    """
    Random fixed-size windows from every stream, labeled by their dominant state.
    Binary mode labels are {0 idle, 1 active}; multiclass labels are class
    indices with :data:`IDLE` for idle frames.
    """
    shortest = min(len(seq) for seq, _ in streams)
    if ws > shortest:
        raise ValueError(
            "window size {} exceeds the shortest sequence ({} frames)".format(ws, shortest)
        )
    windows = []
    for k, (seq, annotations) in enumerate(streams):
        labels = annotations.frame_labels(mode)
        windows += extract_random_windows(seq, labels, ws, count, seed + k)
    states = sorted({w.label for w in windows})
    if len(states) < 2:
        raise ValueError(
            "{} detector needs at least two window states, got {}".format(mode, states)
        )
    return windows


def interp_frames(cfg) -> int:
    """
    Interpolation length: the ``INPUT.INTERP_PRESET`` length when a preset is
    named, ``INPUT.INTERP_FRAMES`` otherwise.
    """
    preset = cfg.INPUT.INTERP_PRESET
    if not preset:
        return cfg.INPUT.INTERP_FRAMES
    if preset not in INTERP_PRESETS:
        raise ValueError(
            "unknown INPUT.INTERP_PRESET '{}', expected one of {}".format(preset, sorted(INTERP_PRESETS))
        )
    return INTERP_PRESETS[preset]


def preprocess_batch(seqs: Sequence[SkeletonSequence], cfg) -> torch.Tensor:
    """
    Stack preprocessed sequences into a float64 tensor of shape (N, L, J, 3).
    """
    length = interp_frames(cfg)
    frames = [
        preprocess(
            s,
            length,
            normalize_input=cfg.INPUT.NORMALIZE,
            derivative_input=cfg.INPUT.DERIVATIVE,
        ).frames
        for s in seqs
    ]
    return torch.as_tensor(np.stack(frames), dtype=torch.float64)


def build_train_loader(cfg, data: torch.Tensor, labels: Sequence[int]) -> PairLoader:
    return PairLoader(
        data,
        labels,
        cfg.DATALOADER.PAIRS_PER_EPOCH,
        cfg.SOLVER.PAIRS_PER_BATCH,
        ratio=cfg.DATALOADER.POSITIVE_RATIO,
        seed=max(cfg.SEED, 0),
    )


def build_held_out_pairs(cfg, labels: Sequence[int]) -> List[Tuple[int, int, int]]:
    # fixed set, disjoint seed stream from the training epochs
    return sample_pairs(
        labels, cfg.DATALOADER.HELD_OUT_PAIRS, 0.5, rng_seed=max(cfg.SEED, 0) + 1_000_003
    )


def print_class_histogram(labels: Sequence[int], class_names: Sequence[str]) -> None:
    """
    Log how many instances each class (and the idle state, if present) has.
    """
    names = {k: name for k, name in enumerate(class_names)}
    names[IDLE] = "idle"
    values, counts = np.unique(np.asarray(labels), return_counts=True)
    data = list(
        itertools.chain(*[[names.get(int(v), str(int(v))), int(n)] for v, n in zip(values, counts)])
    )
    n_cols = min(6, len(data))
    data.extend([None] * (-len(data) % n_cols))
    if len(values) > 1:
        data.extend(["total", int(counts.sum())] + [None] * (n_cols - 2))
    rows = itertools.zip_longest(*[data[i::n_cols] for i in range(n_cols)])
    table = tabulate(
        rows,
        headers=["class", "#instances"] * (n_cols // 2),
        tablefmt="pipe",
        numalign="left",
        stralign="center",
    )
    logging.getLogger(__name__).info(
        "Distribution of instances among {} classes:\n".format(len(values)) + colored(table, "cyan")
    )
