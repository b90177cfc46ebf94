from typing import Iterator, List, NamedTuple, Sequence, Tuple

import numpy as np
import torch

__all__ = ["PairBatch", "sample_pairs", "PairLoader"]


class PairBatch(NamedTuple):
    first: torch.Tensor  # (B, L, J, 3)
    second: torch.Tensor  # (B, L, J, 3)
    same: torch.Tensor  # (B,) float64, 1 = same class


def sample_pairs(
    labels: Sequence[int], count: int, ratio: float = 0.5, rng_seed: int = 0
) -> List[Tuple[int, int, int]]:
    """
    Draw ``count`` index pairs (i, j, b) with exactly round(count * ratio)
    positives (b = 1, same label) and the rest negatives, in shuffled order.

    A positive partner is a different item of the anchor's class when the class
    has one, otherwise the anchor itself.
    """
    labels = np.asarray(labels)
    classes = np.unique(labels)
    if len(classes) < 2:
        raise ValueError("need at least two classes to draw negative pairs")
    if not 0.0 <= ratio <= 1.0:
        raise ValueError("positive ratio must lie in [0, 1], got {}".format(ratio))
    rng = np.random.default_rng(rng_seed)
    by_class = {c: np.flatnonzero(labels == c) for c in classes.tolist()}
    others = {c: np.flatnonzero(labels != c) for c in classes.tolist()}

    n_pos = int(round(count * ratio))
    pairs = []
    for k in range(count):
        i = int(rng.integers(len(labels)))
        c = labels[i].item()
        if k < n_pos:
            mates = by_class[c][by_class[c] != i]
            j = int(mates[rng.integers(len(mates))]) if len(mates) else i
            pairs.append((i, j, 1))
        else:
            j = int(others[c][rng.integers(len(others[c]))])
            pairs.append((i, j, 0))
    order = rng.permutation(count)
    return [pairs[k] for k in order.tolist()]


class PairLoader:
    """
    Endless iterator of :class:`PairBatch` drawn from a preprocessed dataset.
    Epoch ``e`` uses the pair set ``sample_pairs(..., rng_seed=seed + e)``.
    """

    def __init__(self, data: torch.Tensor, labels, pairs_per_epoch, batch_size, ratio=0.5, seed=0):
        assert data.shape[0] == len(labels), (data.shape, len(labels))
        assert batch_size > 0 and pairs_per_epoch > 0
        self.data = data
        self.labels = np.asarray(labels)
        self.pairs_per_epoch = pairs_per_epoch
        self.batch_size = batch_size
        self.ratio = ratio
        self.seed = seed

    @property
    def batches_per_epoch(self) -> int:
        return -(-self.pairs_per_epoch // self.batch_size)

    def collate(self, pairs) -> PairBatch:
        first = torch.as_tensor([p[0] for p in pairs])
        second = torch.as_tensor([p[1] for p in pairs])
        same = torch.as_tensor([p[2] for p in pairs], dtype=torch.float64)
        return PairBatch(self.data[first], self.data[second], same)

    def __iter__(self) -> Iterator[PairBatch]:
        epoch = 0
        while True:
            pairs = sample_pairs(self.labels, self.pairs_per_epoch, self.ratio, self.seed + epoch)
            for k in range(0, len(pairs), self.batch_size):
                yield self.collate(pairs[k : k + self.batch_size])
            epoch += 1
