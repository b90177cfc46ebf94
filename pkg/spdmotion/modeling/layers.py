import contextlib
import math
from typing import List, Optional

import torch
from torch import nn

from .spd import DTYPE, bilinear_sum, conv_forward, gaussian_aggregate, log_eig, re_eig, vec_map

__all__ = [
    "ForwardStageError",
    "StiefelParameter",
    "random_stiefel",
    "PartConv",
    "st_frame_features",
    "st_temporal_pool",
    "st_ga_forward",
    "ts_ga_forward",
    "SPDCNet",
    "xavier_linear",
]


class ForwardStageError(RuntimeError):
    """
    A failure inside the network forward pass, tagged with the failing stage.
    """

    def __init__(self, stage: str, cause: Exception):
        super().__init__("forward failed at stage '{}': {}".format(stage, cause))
        self.stage = stage


@contextlib.contextmanager
def stage(name: str):
    try:
        yield
    except ForwardStageError:
        raise
    except (ValueError, RuntimeError) as e:
        raise ForwardStageError(name, e) from e


class StiefelParameter(nn.Parameter):
    """
    A weight whose last two dims hold a matrix with orthonormal rows. The solver
    keeps it on the Stiefel manifold.
    """


def random_stiefel(*shape: int, generator: Optional[torch.Generator] = None) -> torch.Tensor:
    """
    Random (..., p, n) matrices with orthonormal rows, p <= n, from the QR
    decomposition of Gaussian matrices.
    """
    *batch, p, n = shape
    if p > n:
        raise ValueError("a Stiefel weight needs rows <= cols, got {}x{}".format(p, n))
    g = torch.randn(*batch, n, p, dtype=DTYPE, generator=generator)
    q, r = torch.linalg.qr(g)
    sign = torch.sign(torch.diagonal(r, dim1=-2, dim2=-1))
    sign = torch.where(sign == 0, torch.ones_like(sign), sign)
    return (q * sign.unsqueeze(-2)).transpose(-1, -2).contiguous()


class PartConv(nn.Module):
    """
    One 3x3 kernel plus bias per part (or one shared by all parts), applied to
    every frame's (m_p x 3) part matrix with zero padding 1.
    """

    def __init__(self, num_parts: int, *, shared=False, init_scale=0.05, init_identity=True):
        super().__init__()
        n = 1 if shared else num_parts
        weight = torch.empty(n, 3, 3, dtype=DTYPE).uniform_(-init_scale, init_scale)
        if init_identity:
            weight[:, 1, 1] += 1.0
        self.weight = nn.Parameter(weight)
        self.bias = nn.Parameter(torch.zeros(n, dtype=DTYPE))
        self.shared = shared
        self.num_parts = num_parts

    def forward(self, x: torch.Tensor, part: int) -> torch.Tensor:
        k = 0 if self.shared else part
        return conv_forward(x, self.weight[k], self.bias[k])

    def extra_repr(self):
        return "num_parts={}, shared={}".format(self.num_parts, self.shared)


def st_frame_features(part_frames: torch.Tensor, eps: float, collect: Optional[List] = None):
    """
    ST branch stages 1-3 on (..., n, m, 3) part frames: per-frame spatial
    aggregation over the part's joints, ReEig, LogEig + VecMap.
    Returns (..., n, 10) frame vectors.
    """
    with stage("st.spatial_ga"):
        spatial = gaussian_aggregate(part_frames)
    with stage("st.reeig1"):
        spatial = re_eig(spatial, eps)
    if collect is not None:
        collect.append(("st.reeig1", spatial))
    with stage("st.logeig"):
        return vec_map(log_eig(spatial))


def st_temporal_pool(frame_vectors: torch.Tensor, eps: float, collect: Optional[List] = None):
    """
    ST branch stages 4-5: temporal aggregation of (..., n, v) frame vectors, ReEig.
    """
    with stage("st.temporal_ga"):
        temporal = gaussian_aggregate(frame_vectors)
    with stage("st.reeig2"):
        out = re_eig(temporal, eps)
    if collect is not None:
        collect.append(("st.reeig2", out))
    return out


def st_ga_forward(part_seq: torch.Tensor, eps: float, collect: Optional[List] = None):
    """
    Spatial-then-temporal statistics of one part subsequence (..., n, m, 3),
    returning an (..., 11, 11) SPD matrix.
    """
    return st_temporal_pool(st_frame_features(part_seq, eps, collect), eps, collect)


def ts_ga_forward(part_seq: torch.Tensor, eps: float, collect: Optional[List] = None):
    """
    Temporal-then-spatial statistics of one part subsequence (..., n, m, 3):
    each joint's trajectory is aggregated over time, ReEig, LogEig + VecMap,
    then the per-joint vectors are aggregated over the part, ReEig.
    """
    trajectories = part_seq.transpose(-3, -2)
    with stage("ts.temporal_ga"):
        temporal = gaussian_aggregate(trajectories)
    with stage("ts.reeig1"):
        temporal = re_eig(temporal, eps)
    if collect is not None:
        collect.append(("ts.reeig1", temporal))
    with stage("ts.logeig"):
        joint_vectors = vec_map(log_eig(temporal))
    with stage("ts.spatial_ga"):
        spatial = gaussian_aggregate(joint_vectors)
    with stage("ts.reeig2"):
        out = re_eig(spatial, eps)
    if collect is not None:
        collect.append(("ts.reeig2", out))
    return out


class SPDCNet(nn.Module):
    """
    Fuses K SPD matrices of size n into one p x p SPD matrix
    Y = sum_k W_k X_k W_k^T with orthonormal-row weights W_k.
    """

    def __init__(self, num_inputs: int, in_dim: int, out_dim: int):
        super().__init__()
        self.weight = StiefelParameter(random_stiefel(num_inputs, out_dim, in_dim))
        self.num_inputs = num_inputs
        self.in_dim = in_dim
        self.out_dim = out_dim

    def forward(self, inputs: torch.Tensor) -> torch.Tensor:
        """
        Args:
            inputs: (B, K, n, n)
        Returns:
            (B, p, p)
        """
        assert inputs.shape[-3:] == (self.num_inputs, self.in_dim, self.in_dim), inputs.shape
        with stage("spdc"):
            return bilinear_sum(inputs, self.weight)

    def extra_repr(self):
        return "num_inputs={}, in_dim={}, out_dim={}".format(
            self.num_inputs, self.in_dim, self.out_dim
        )


def xavier_linear(in_features: int, out_features: int) -> nn.Linear:
    fc = nn.Linear(in_features, out_features).to(DTYPE)
    bound = math.sqrt(6.0 / (in_features + out_features))
    nn.init.uniform_(fc.weight, -bound, bound)
    nn.init.zeros_(fc.bias)
    return fc
