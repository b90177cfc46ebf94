import logging
from typing import Dict, List, Optional, Sequence

import numpy as np
import torch
from sklearn.metrics import accuracy_score

from spdmotion.checkpoint import ModelFormatError, load_model, save_model
from spdmotion.config import CfgNode, get_cfg
from spdmotion.data import (
    IDLE,
    PartitionScheme,
    SkeletonSequence,
    build_classifier_dataset,
    build_partition,
    build_window_dataset,
    get_layout,
    interp_frames,
    preprocess_batch,
)
from spdmotion.data.build import Stream
from spdmotion.engine.defaults import SiameseTrainer
from spdmotion.modeling import Gallery, build_gallery, build_model, knn_classify_batch

__all__ = [
    "MotionModel",
    "DetectorModel",
    "MotionClassifier",
    "train_detector",
    "train_classifier",
    "detection_accuracy",
    "load_motion_model",
]

logger = logging.getLogger(__name__)

MODEL_KINDS = ("detector", "classifier")


class MotionModel:
    """
    A trained Siamese network plus the 1-NN gallery it classifies against.
    Inputs are raw :class:`SkeletonSequence` objects; preprocessing follows
    the config the network was trained with.
    """

    kind = ""

    def __init__(
        self,
        cfg: CfgNode,
        network,
        gallery: Gallery,
        class_names: Sequence[str],
        layout,
        *,
        config_yaml: Optional[str] = None,
    ):
        self.cfg = cfg
        self.network = network.eval()
        self.gallery = gallery
        self.class_names = list(class_names)
        self.layout = layout
        self.config_yaml = config_yaml if config_yaml is not None else cfg.dump()

    @property
    def scheme(self) -> PartitionScheme:
        return self.network.scheme

    @property
    def interp_frames(self) -> int:
        return interp_frames(self.cfg)

    def label_name(self, label: int) -> str:
        return self.class_names[label]

    @torch.no_grad()
    def embed(self, seqs: Sequence[SkeletonSequence]) -> torch.Tensor:
        for s in seqs:
            if s.layout.joint_count != self.layout.joint_count:
                raise ValueError(
                    "sequence has {} joints, model expects {}".format(
                        s.layout.joint_count, self.layout.joint_count
                    )
                )
        return self.network(preprocess_batch(seqs, self.cfg))

    def predict(self, seqs: Sequence[SkeletonSequence]) -> List[int]:
        return knn_classify_batch(self.embed(seqs), self.gallery)

    def meta(self) -> Dict:
        net = self.network
        return {
            "kind": self.kind,
            "config": self.config_yaml,
            "layout": {"name": self.layout.name, "joint_count": self.layout.joint_count},
            "scheme": [list(p) for p in self.scheme.parts],
            "epsilon": net.epsilon,
            "margin": net.margin,
            "feature_dim": net.feature_dim,
            "interp_frames": self.interp_frames,
            "class_names": self.class_names,
        }

    def tensors(self) -> Dict[str, torch.Tensor]:
        tensors = {"model." + k: v for k, v in self.network.state_dict().items()}
        tensors["gallery.features"] = self.gallery.features
        tensors["gallery.labels"] = torch.as_tensor(self.gallery.labels, dtype=torch.int64)
        return tensors

    def save(self, path: str) -> None:
        save_model(path, self.tensors(), self.meta())
        logger.info("Saved {} model to {}".format(self.kind, path))

    @classmethod
    def _from_file(cls, tensors, meta) -> Dict:
        cfg = get_cfg()
        cfg.merge_from_other_cfg(CfgNode.load_cfg(meta["config"]))
        layout = get_layout(meta["layout"]["name"], meta["layout"]["joint_count"])
        scheme = PartitionScheme(tuple(tuple(p) for p in meta["scheme"]))
        network = build_model(cfg, scheme)
        state = {k[len("model.") :]: v for k, v in tensors.items() if k.startswith("model.")}
        network.load_state_dict(state, strict=True)
        gallery = Gallery(tensors["gallery.features"], tensors["gallery.labels"].tolist())
        return dict(
            cfg=cfg,
            network=network,
            gallery=gallery,
            class_names=meta["class_names"],
            layout=layout,
            config_yaml=meta["config"],
        )

    @classmethod
    def load(cls, path: str) -> "MotionModel":
        tensors, meta = load_model(path)
        if meta.get("kind") != cls.kind:
            raise ModelFormatError(
                "{} holds a '{}' model, expected '{}'".format(path, meta.get("kind"), cls.kind)
            )
        return cls(**cls._from_file(tensors, meta))


class MotionClassifier(MotionModel):
    """
    Recognizes segmented motions; gallery labels are class indices.
    """

    kind = "classifier"

    def classify(self, segment: SkeletonSequence) -> int:
        return self.predict([segment])[0]


class DetectorModel(MotionModel):
    """
    Kinetic-state detector on fixed windows of ``window_size`` frames.

    Binary mode states are 0 (idle) and 1 (active); multiclass states are class
    indices, with :data:`IDLE` for idle windows.
    """

    kind = "detector"

    @property
    def mode(self) -> str:
        return self.cfg.DETECTOR.MODE

    @property
    def window_size(self) -> int:
        return self.cfg.DETECTOR.WINDOW_SIZE

    @property
    def idle_state(self) -> int:
        return 0 if self.mode == "binary" else IDLE

    def is_active(self, state: int) -> bool:
        return state != self.idle_state

    def label_name(self, label: int) -> str:
        if label == self.idle_state:
            return "idle"
        if self.mode == "binary":
            return "active"
        return self.class_names[label]

    def meta(self) -> Dict:
        meta = super().meta()
        meta.update(mode=self.mode, window_size=self.window_size)
        return meta

    def detect_window(self, window: SkeletonSequence) -> int:
        if len(window) != self.window_size:
            raise ValueError(
                "window of {} frames, detector expects {}".format(len(window), self.window_size)
            )
        return self.predict([window])[0]


def load_motion_model(path: str) -> MotionModel:
    """
    Load a detector or classifier file, dispatching on its stored kind.
    """
    tensors, meta = load_model(path)
    kind = meta.get("kind")
    if kind not in MODEL_KINDS:
        raise ModelFormatError("{} holds an unknown model kind '{}'".format(path, kind))
    model_cls = DetectorModel if kind == "detector" else MotionClassifier
    return model_cls(**model_cls._from_file(tensors, meta))


def _train_network(cfg, data, labels, scheme, resume):
    trainer = SiameseTrainer(cfg, data, labels, scheme)
    trainer.resume_or_load(resume=resume)
    trainer.train()
    return trainer.model


def train_classifier(cfg: CfgNode, streams: Sequence[Stream], *, resume: bool = False) -> MotionClassifier:
    """
    Train the Siamese network on the annotated motion segments of ``streams``
    and keep every training segment in the gallery.
    """
    seqs, labels, classes = build_classifier_dataset(streams)
    if len(set(labels)) < 2:
        raise ValueError("classifier training needs at least two motion classes")
    layout = seqs[0].layout
    scheme = build_partition(layout, cfg.INPUT.PARTITION_FILE)
    data = preprocess_batch(seqs, cfg)
    network = _train_network(cfg, data, labels, scheme, resume)
    gallery = build_gallery(network, data, labels)
    return MotionClassifier(cfg, network, gallery, classes, layout)


def train_detector(cfg: CfgNode, streams: Sequence[Stream], *, resume: bool = False) -> DetectorModel:
    """
    Train a kinetic-state detector on random ``DETECTOR.WINDOW_SIZE``-frame
    windows labeled by their dominant state.
    """
    mode = cfg.DETECTOR.MODE
    if mode not in ("binary", "multiclass"):
        raise ValueError("unknown detector mode '{}'".format(mode))
    windows = build_window_dataset(
        streams,
        cfg.DETECTOR.WINDOW_SIZE,
        mode,
        cfg.DETECTOR.WINDOWS_PER_SEQUENCE,
        max(cfg.SEED, 0),
    )
    seqs = [w.window for w in windows]
    labels = [w.label for w in windows]
    layout = seqs[0].layout
    scheme = build_partition(layout, cfg.INPUT.PARTITION_FILE)
    data = preprocess_batch(seqs, cfg)
    network = _train_network(cfg, data, labels, scheme, resume)
    gallery = build_gallery(network, data, labels)
    logger.info(
        "Detector gallery: {} windows over states {}".format(len(gallery), gallery.classes)
    )
    return DetectorModel(cfg, network, gallery, streams[0][1].classes, layout)


def detection_accuracy(
    detector: DetectorModel, streams: Sequence[Stream], count: int, seed: int = 0, batch_size: int = 64
) -> float:
    """
    Window-level accuracy of the detector on random windows of held-out streams.
    """
    windows = build_window_dataset(streams, detector.window_size, detector.mode, count, seed)
    predicted = []
    for k in range(0, len(windows), batch_size):
        predicted += detector.predict([w.window for w in windows[k : k + batch_size]])
    return float(accuracy_score(np.asarray([w.label for w in windows]), np.asarray(predicted)))
