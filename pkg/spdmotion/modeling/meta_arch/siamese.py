from typing import Dict, List, Optional, Union

import torch
from torch import nn

from spdmotion.data.pairs import PairBatch
from spdmotion.data.partition import PartitionScheme, partition_frames
from spdmotion.data.windows import subsequence_spans

from ..layers import (
    PartConv,
    SPDCNet,
    st_frame_features,
    st_temporal_pool,
    stage,
    ts_ga_forward,
    xavier_linear,
)
from ..spd import DTYPE, log_eig, set_eigengap_mode, set_eigengap_tolerance, vec_dim, vec_map
from .build import META_ARCH_REGISTRY

__all__ = ["SpdSiameseNetwork", "contrastive_loss"]

# Both branches end in (v + 1) x (v + 1) matrices, v = vec length of a 4x4 GA matrix
BRANCH_DIM = vec_dim(4) + 1
NUM_BRANCHES = 2


def contrastive_loss(y1: torch.Tensor, y2: torch.Tensor, b, margin: float) -> torch.Tensor:
    """
    Mean of b * d + (1 - b) * max(0, margin - d) with d = ||y1 - y2||_2.

    Args:
        y1, y2: (f,) or (B, f) features
        b: 1 for same-class pairs, 0 otherwise; scalar or (B,)
        margin (float): g > 0
    """
    if y1.shape != y2.shape:
        raise ValueError(
            "feature shapes differ: {} vs {}".format(tuple(y1.shape), tuple(y2.shape))
        )
    if not margin > 0:
        raise ValueError("margin must be positive, got {}".format(margin))
    b = torch.as_tensor(b, dtype=y1.dtype, device=y1.device)
    d = torch.linalg.vector_norm(y1 - y2, dim=-1)
    loss = b * d + (1 - b) * torch.clamp(margin - d, min=0)
    return loss.mean()


@META_ARCH_REGISTRY.register()
class SpdSiameseNetwork(nn.Module):
    """
    Skeleton sequence -> feature vector.

    Per part: 3x3 conv, temporal pyramid of 6 subsequences, ST and TS
    Gaussian-aggregation branches (2 x parts x 6 SPD matrices in total), SPDC
    fusion, LogEig + VecMap, fully connected layer. The Siamese pair shares this
    single module.

    SPDC input order: all ST matrices (part-major, subsequence-minor), then all TS
    matrices in the same order.
    """

    def __init__(self, cfg, scheme: PartitionScheme):
        super().__init__()
        self.scheme = scheme
        self.epsilon = cfg.MODEL.SPD.EPSILON
        self.margin = cfg.MODEL.MARGIN
        self.feature_dim = cfg.MODEL.FEATURE_DIM
        self.spdc_dim = cfg.MODEL.SPDC.OUT_DIM
        if not self.epsilon > 0:
            raise ValueError("MODEL.SPD.EPSILON must be positive")
        if not self.margin > 0:
            raise ValueError("MODEL.MARGIN must be positive")
        if not 1 <= self.spdc_dim <= BRANCH_DIM:
            raise ValueError(
                "MODEL.SPDC.OUT_DIM must lie in [1, {}], got {}".format(BRANCH_DIM, self.spdc_dim)
            )
        set_eigengap_tolerance(cfg.MODEL.SPD.EIGENGAP_TOL)
        set_eigengap_mode(cfg.MODEL.SPD.EIGENGAP_MODE, cfg.MODEL.SPD.EIGENGAP_JITTER)

        num_parts = len(scheme)
        self.num_spd = NUM_BRANCHES * num_parts * 6
        self.conv = PartConv(
            num_parts,
            shared=cfg.MODEL.CONV.SHARE_ACROSS_PARTS,
            init_scale=cfg.MODEL.CONV.INIT_SCALE,
            init_identity=cfg.MODEL.CONV.INIT_IDENTITY,
        )
        self.spdc = SPDCNet(self.num_spd, BRANCH_DIM, self.spdc_dim)
        self.fc = xavier_linear(vec_dim(self.spdc_dim), self.feature_dim)
        self.to(torch.device(cfg.MODEL.DEVICE))

    @property
    def device(self):
        return self.fc.weight.device

    def spd_descriptors(self, x: torch.Tensor, collect: Optional[List] = None) -> torch.Tensor:
        """
        Args:
            x: (B, L, J, 3) preprocessed sequences, L >= 6

        Returns:
            (B, 2 * parts * 6, 11, 11) SPD matrices fed to the SPDC layer
        """
        if x.dim() != 4 or x.shape[-1] != 3:
            raise ValueError("expected input of shape (B, L, J, 3), got {}".format(tuple(x.shape)))
        spans = subsequence_spans(x.shape[1])
        st, ts = [], []
        for p, part_frames in enumerate(partition_frames(x, self.scheme)):
            with stage("conv"):
                frames = self.conv(part_frames, p)
            # stages 1-3 of the ST branch are per frame, shared by all spans
            frame_vectors = st_frame_features(frames, self.epsilon, collect)
            for s, e in spans:
                st.append(st_temporal_pool(frame_vectors[:, s:e], self.epsilon, collect))
                ts.append(ts_ga_forward(frames[:, s:e], self.epsilon, collect))
        return torch.stack(st + ts, dim=1)

    def embed(self, x: torch.Tensor, collect: Optional[List] = None) -> torch.Tensor:
        """
        (B, L, J, 3) -> (B, f) features.
        """
        x = x.to(device=self.device, dtype=DTYPE)
        fused = self.spdc(self.spd_descriptors(x, collect))
        if collect is not None:
            collect.append(("spdc", fused))
        with stage("tangent"):
            tangent = vec_map(log_eig(fused))
        with stage("fc"):
            return self.fc(tangent)

    def losses(self, batch: PairBatch) -> Dict[str, torch.Tensor]:
        n = batch.first.shape[0]
        features = self.embed(torch.cat([batch.first, batch.second], dim=0))
        loss = contrastive_loss(features[:n], features[n:], batch.same.to(self.device), self.margin)
        return {"loss_contrastive": loss}

    def forward(self, inputs: Union[torch.Tensor, PairBatch]):
        if isinstance(inputs, PairBatch):
            return self.losses(inputs)
        return self.embed(inputs)
