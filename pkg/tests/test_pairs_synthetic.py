import numpy as np
import pytest
import torch

from spdmotion.data import (
    PairLoader,
    SyntheticSpec,
    extract_random_windows,
    gen_synthetic,
    sample_pairs,
)


def test_sample_pairs_balance_and_labels():
    labels = [0, 0, 1, 1]
    pairs = sample_pairs(labels, 20, 0.5, rng_seed=1)
    assert sum(b for _, _, b in pairs) == 10
    for i, j, b in pairs:
        assert (labels[i] == labels[j]) == bool(b)
        if b:
            assert i != j
    assert pairs == sample_pairs(labels, 20, 0.5, rng_seed=1)
    assert pairs != sample_pairs(labels, 20, 0.5, rng_seed=2)


def test_sample_pairs_positive_fraction():
    labels = np.random.default_rng(0).integers(0, 5, size=200)
    pairs = sample_pairs(labels, 10000, 0.5, rng_seed=7)
    assert abs(np.mean([b for _, _, b in pairs]) - 0.5) <= 0.02


def test_sample_pairs_single_class():
    with pytest.raises(ValueError, match="two classes"):
        sample_pairs([3, 3, 3], 4)


def test_pair_loader_epochs():
    data = torch.arange(6, dtype=torch.float64).reshape(6, 1, 1, 1).expand(6, 6, 2, 3)
    loader = PairLoader(data, [0, 0, 0, 1, 1, 1], pairs_per_epoch=10, batch_size=4, seed=3)
    assert loader.batches_per_epoch == 3
    it = iter(loader)
    batches = [next(it) for _ in range(6)]
    assert [b.first.shape[0] for b in batches] == [4, 4, 2, 4, 4, 2]
    first_epoch = sample_pairs(loader.labels, 10, 0.5, rng_seed=3)
    assert batches[0].first[:, 0, 0, 0].tolist() == [float(i) for i, _, _ in first_epoch[:4]]
    assert batches[0].same.dtype == torch.float64


def test_gen_synthetic_reproducible_and_tiled():
    spec = SyntheticSpec(num_classes=3, seed=5)
    seq, ann = gen_synthetic(spec, 2)
    seq2, ann2 = gen_synthetic(spec, 2)
    assert np.array_equal(seq.frames, seq2.frames) and ann == ann2
    assert len(seq) == ann.total_frames
    # motion and idle segments cover every frame exactly once
    covered = sorted(ann.segments + ann.idle_segments())
    assert covered[0].start == 0 and covered[-1].end == ann.total_frames
    assert all(a.end == b.start for a, b in zip(covered, covered[1:]))
    other, _ = gen_synthetic(spec, 3)
    assert len(other) != len(seq) or not np.array_equal(other.frames, seq.frames)


def test_gen_synthetic_zero_gap():
    spec = SyntheticSpec(num_classes=3, idle_seconds=(0.0, 0.0), seed=1)
    _, ann = gen_synthetic(spec, 0)
    assert ann.segments[0].start == 0 and ann.segments[-1].end == ann.total_frames
    for a, b in zip(ann.segments, ann.segments[1:]):
        assert a.end == b.start and a.label != b.label


def test_gen_synthetic_invalid_spec():
    with pytest.raises(ValueError):
        gen_synthetic(SyntheticSpec(num_classes=1))
    with pytest.raises(ValueError):
        gen_synthetic(SyntheticSpec(motion_seconds=(0.1, 0.2)))


def test_synthetic_templates_are_separable_on_raw_windows():
    spec = SyntheticSpec(num_classes=4, noise=0.0, idle_noise=0.0, seed=11)
    train = [gen_synthetic(spec, k) for k in range(6)]
    test = [gen_synthetic(spec, k) for k in range(6, 9)]

    def motion_windows(streams, seed):
        x, y = [], []
        for k, (seq, ann) in enumerate(streams):
            labels = ann.frame_labels()
            for w in extract_random_windows(seq, labels, 15, 60, seed + k):
                s, e = w.span
                # keep windows lying entirely inside one motion
                if w.label >= 0 and (labels[s:e] == w.label).all():
                    x.append(w.window.frames.reshape(-1))
                    y.append(w.label)
        return np.stack(x), np.array(y)

    x_train, y_train = motion_windows(train, 0)
    x_test, y_test = motion_windows(test, 100)
    dist = np.linalg.norm(x_test[:, None, :] - x_train[None, :, :], axis=-1)
    predicted = y_train[np.argmin(dist, axis=1)]
    assert np.mean(predicted == y_test) > 0.9
