import json
import os

import numpy as np
import pytest
import torch

from conftest import SMALL_SCHEME, small_cfg

from spdmotion.checkpoint import ModelFormatError, load_model
from spdmotion.config import get_cfg
from spdmotion.engine import SiameseTrainer
from spdmotion.data import IDLE, AnnotationSet, SyntheticSpec, gen_synthetic
from spdmotion.online import (
    DetectorModel,
    MotionClassifier,
    detection_accuracy,
    load_motion_model,
    train_classifier,
    train_detector,
)


def tiny_cfg(output_dir=""):
    cfg = get_cfg()
    cfg.INPUT.INTERP_FRAMES = 6
    cfg.MODEL.SPDC.OUT_DIM = 3
    cfg.MODEL.FEATURE_DIM = 4
    cfg.SOLVER.EPOCHS = 1
    cfg.SOLVER.PAIRS_PER_BATCH = 2
    cfg.SOLVER.WARMUP_ITERS = 0
    cfg.DATALOADER.PAIRS_PER_EPOCH = 4
    cfg.DATALOADER.HELD_OUT_PAIRS = 4
    cfg.DETECTOR.MODE = "multiclass"
    cfg.DETECTOR.WINDOW_SIZE = 15
    cfg.DETECTOR.WINDOWS_PER_SEQUENCE = 10
    cfg.SEED = 3
    cfg.OUTPUT_DIR = output_dir
    return cfg


@pytest.fixture(scope="module")
def streams():
    # back-to-back motions alternate classes, so every stream holds both
    spec = SyntheticSpec(num_classes=2, segments_per_stream=(2, 3), idle_seconds=(0.0, 0.0), seed=0)
    return [gen_synthetic(spec, k) for k in range(3)]


def state_dicts_equal(a, b):
    sa, sb = a.state_dict(), b.state_dict()
    return sa.keys() == sb.keys() and all(torch.equal(sa[k], sb[k]) for k in sa)


def test_same_seed_same_classifier(streams):
    a = train_classifier(tiny_cfg(), streams)
    b = train_classifier(tiny_cfg(), streams)
    assert state_dicts_equal(a.network, b.network)
    assert torch.equal(a.gallery.features, b.gallery.features)
    assert a.gallery.labels == b.gallery.labels
    assert a.class_names == ["motion_0", "motion_1"]
    assert not a.network.training


def test_training_writes_checkpoint_and_metrics(streams, tmp_path):
    out = str(tmp_path / "run")
    train_classifier(tiny_cfg(out), streams)
    assert os.path.isfile(os.path.join(out, "model_final.spdm"))
    _, meta = load_model(os.path.join(out, "model_final.spdm"))
    assert meta["iteration"] == 1

    with open(os.path.join(out, "metrics.json")) as f:
        lines = [json.loads(line) for line in f if line.strip()]
    assert lines and "loss_contrastive" in lines[-1]
    with open(os.path.join(out, "inference", "res_final.json")) as f:
        results = json.load(f)
    assert results["held_out"]["loss_contrastive"] >= 0


def test_resume_restores_weights(streams, tmp_path):
    out = str(tmp_path / "run")
    first = train_classifier(tiny_cfg(out), streams)
    resumed = train_classifier(tiny_cfg(out), streams, resume=True)
    # nothing left to train: the final checkpoint is reloaded as is
    assert state_dicts_equal(first.network, resumed.network)


def test_classifier_save_load(streams, tmp_path):
    model = train_classifier(tiny_cfg(), streams)
    path = str(tmp_path / "classifier.spdm")
    model.save(path)
    loaded = MotionClassifier.load(path)
    assert state_dicts_equal(model.network, loaded.network)
    assert loaded.class_names == model.class_names
    assert loaded.scheme == model.scheme

    segments = [seq.slice(s.start, s.end) for seq, ann in streams for s in ann.segments]
    assert torch.equal(model.embed(segments), loaded.embed(segments))
    assert [loaded.classify(s) for s in segments] == model.predict(segments)

    again = str(tmp_path / "again.spdm")
    loaded.save(again)
    with open(path, "rb") as a, open(again, "rb") as b:
        assert a.read() == b.read()

    assert isinstance(load_motion_model(path), MotionClassifier)
    with pytest.raises(ModelFormatError, match="expected 'detector'"):
        DetectorModel.load(path)


def test_classifier_needs_two_classes(streams):
    seq, ann = streams[0]
    one_class = AnnotationSet(ann.total_frames, ann.classes, [s for s in ann.segments if s.label == 0])
    with pytest.raises(ValueError, match="two motion classes"):
        train_classifier(tiny_cfg(), [(seq, one_class)])


def test_detector_train_detect_and_reload(streams, tmp_path):
    detector = train_detector(tiny_cfg(), streams)
    assert detector.mode == "multiclass" and detector.window_size == 15
    assert detector.idle_state == IDLE
    assert set(detector.gallery.classes) <= {IDLE, 0, 1}

    seq = streams[0][0]
    state = detector.detect_window(seq.slice(0, 15))
    assert state in detector.gallery.classes
    assert detector.label_name(IDLE) == "idle"
    with pytest.raises(ValueError, match="window of 14 frames"):
        detector.detect_window(seq.slice(0, 14))

    accuracy = detection_accuracy(detector, streams, 5, seed=1)
    assert 0.0 <= accuracy <= 1.0

    path = str(tmp_path / "detector.spdm")
    detector.save(path)
    loaded = load_motion_model(path)
    assert isinstance(loaded, DetectorModel)
    assert loaded.window_size == 15 and loaded.mode == "multiclass"
    assert loaded.detect_window(seq.slice(0, 15)) == state
    windows = [seq.slice(k, k + 15) for k in range(0, 60, 5)]
    assert np.array_equal(loaded.predict(windows), detector.predict(windows))


def separable_pairs_data(n_per_class=8, seed=0):
    # two static poses plus small jitter: one class per pose
    rng = np.random.default_rng(seed)
    poses = [
        np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [1.0, 1.0, 0.0], [0.0, 1.0, 0.0]]),
        np.array([[0.0, 0.0, 0.0], [0.0, 0.0, 1.0], [0.5, 0.0, 2.0], [1.0, 0.0, 3.0]]),
    ]
    data, labels = [], []
    for label, pose in enumerate(poses):
        for _ in range(n_per_class):
            data.append(pose + rng.normal(scale=0.05, size=(6, 4, 3)))
            labels.append(label)
    return torch.as_tensor(np.stack(data)), labels


def descent_cfg():
    cfg = small_cfg()
    cfg.SEED = 0
    cfg.SOLVER.EPOCHS = 15
    cfg.SOLVER.PAIRS_PER_BATCH = 4
    cfg.SOLVER.BASE_LR = 0.01
    cfg.SOLVER.MOMENTUM = 0.0
    cfg.SOLVER.WARMUP_ITERS = 0
    cfg.SOLVER.CLIP_GRADIENTS.ENABLED = True
    cfg.SOLVER.CLIP_GRADIENTS.CLIP_VALUE = 5.0
    cfg.DATALOADER.PAIRS_PER_EPOCH = 16
    cfg.DATALOADER.HELD_OUT_PAIRS = 32
    return cfg


def test_training_lowers_the_contrastive_loss():
    data, labels = separable_pairs_data()
    trainer = SiameseTrainer(descent_cfg(), data, labels, SMALL_SCHEME)
    trainer.resume_or_load(resume=False)
    before = trainer.held_out_loss()
    results = trainer.train()
    after = results["held_out"]["loss_contrastive"]
    assert np.isfinite(before) and after < before

    losses = [v for v, _ in trainer.storage.history("loss_contrastive").values()]
    assert len(losses) == trainer.max_iter == 60
    assert np.mean(losses[-10:]) < np.mean(losses[:10])


def test_nan_loss_stops_training(monkeypatch):
    import spdmotion.modeling.meta_arch.siamese as siamese

    data, labels = separable_pairs_data()
    trainer = SiameseTrainer(descent_cfg(), data, labels, SMALL_SCHEME)
    monkeypatch.setattr(siamese, "contrastive_loss", lambda *args: torch.tensor(float("nan")))
    with pytest.raises(FloatingPointError, match="iteration=0"):
        trainer.train()
