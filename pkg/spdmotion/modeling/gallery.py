from dataclasses import dataclass
from typing import List, Sequence

import torch

from .spd import DTYPE

__all__ = ["Gallery", "build_gallery", "knn_classify", "knn_classify_batch"]


@dataclass(eq=False)
class Gallery:
    """
    Labeled reference features for 1-NN classification.

    Attributes:
        features: (N, f) float64
        labels: N class labels, aligned with ``features``
    """

    features: torch.Tensor
    labels: List[int]

    def __post_init__(self):
        self.features = torch.as_tensor(self.features, dtype=DTYPE)
        self.labels = [int(c) for c in self.labels]
        if self.features.dim() != 2:
            raise ValueError("gallery features must be (N, f), got {}".format(tuple(self.features.shape)))
        if self.features.shape[0] != len(self.labels):
            raise ValueError(
                "{} gallery features but {} labels".format(self.features.shape[0], len(self.labels))
            )

    def __len__(self):
        return len(self.labels)

    @property
    def classes(self) -> List[int]:
        return sorted(set(self.labels))


@torch.no_grad()
def build_gallery(model, inputs: torch.Tensor, labels: Sequence[int], batch_size: int = 64) -> Gallery:
    """
    Embed preprocessed sequences (N, L, J, 3) with ``model`` into a gallery.
    """
    was_training = model.training
    model.eval()
    chunks = [model(inputs[k : k + batch_size]) for k in range(0, inputs.shape[0], batch_size)]
    model.train(was_training)
    features = torch.cat(chunks, dim=0) if chunks else torch.zeros(0, model.feature_dim, dtype=DTYPE)
    return Gallery(features.cpu(), list(labels))


def knn_classify_batch(features: torch.Tensor, gallery: Gallery) -> List[int]:
    """
    1-NN labels for (Q, f) query features. Distances are exact Euclidean norms
    of differences; ties go to the lowest gallery index.
    """
    if len(gallery) == 0:
        raise ValueError("empty gallery")
    features = torch.as_tensor(features, dtype=DTYPE).cpu()
    if features.dim() == 1:
        features = features.unsqueeze(0)
    if features.shape[-1] != gallery.features.shape[-1]:
        raise ValueError(
            "query dimension {} does not match gallery dimension {}".format(
                features.shape[-1], gallery.features.shape[-1]
            )
        )
    diffs = features.unsqueeze(1) - gallery.features.unsqueeze(0)
    dist = torch.linalg.vector_norm(diffs, dim=-1)
    # argmin returns the first minimal index
    nearest = torch.argmin(dist, dim=1)
    return [gallery.labels[k] for k in nearest.tolist()]


def knn_classify(feature: torch.Tensor, gallery: Gallery) -> int:
    return knn_classify_batch(feature, gallery)[0]
