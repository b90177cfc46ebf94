"""
Operations on symmetric positive (semi-)definite matrices.

All functions work on float64 tensors with arbitrary leading batch
dimensions, i.e. matrices of shape ``(..., d, d)``. Eigen-based maps
(ReEig, LogEig, ExpEig) are implemented as autograd functions whose
backward pass uses the Loewner (divided-difference) form of the
derivative of a spectral function, so they can sit inside a network.

Eigendecompositions use ``torch.linalg.eigh`` (symmetric solver, ascending
eigenvalues).
"""
import math
from collections import Counter
from typing import Callable, List, Sequence, Union

import numpy as np
import torch
import torch.nn.functional as F
from torch import Tensor
from torch.autograd import Function

__all__ = [
    "symmetrize",
    "check_symmetric",
    "gaussian_aggregate",
    "re_eig",
    "log_eig",
    "exp_eig",
    "vec_map",
    "vec_dim",
    "spdc_transform",
    "bilinear_sum",
    "conv_forward",
    "is_spd",
    "eigen_diagnostics",
    "reset_eigen_diagnostics",
    "set_eigengap_tolerance",
    "set_eigengap_mode",
]

DTYPE = torch.float64
SYMMETRY_TOL = 1e-12

_EIGENGAP_TOL = 1e-8
EIGENGAP_MODES = ("limit", "jitter")
_EIGENGAP_MODE = "limit"
_EIGENGAP_JITTER = 1e-9
_DIAGNOSTICS = Counter()


def set_eigengap_tolerance(tol: float) -> None:
    global _EIGENGAP_TOL
    assert tol > 0, tol
    _EIGENGAP_TOL = float(tol)


def set_eigengap_mode(mode: str, jitter: float = 1e-9) -> None:
    """
    How backprop treats eigenvalue pairs closer than the eigengap tolerance:
    "limit" uses the coalesced derivative (f'(s_i) + f'(s_j)) / 2, "jitter"
    spreads the eigenvalues by ``jitter * k`` (k = ascending index) and takes
    the divided difference of the spread values.
    """
    global _EIGENGAP_MODE, _EIGENGAP_JITTER
    if mode not in EIGENGAP_MODES:
        raise ValueError("unknown eigengap mode '{}', expected one of {}".format(mode, EIGENGAP_MODES))
    assert jitter > 0, jitter
    _EIGENGAP_MODE = mode
    _EIGENGAP_JITTER = float(jitter)


def eigen_diagnostics() -> dict:
    """
    Counters collected during backprop: ``degenerate_eigengaps`` is the number of
    eigenvalue pairs (summed over all backward calls) whose gap fell below the
    eigengap tolerance; ``jittered_eigengaps`` counts those of them handled in
    "jitter" mode.
    """
    return dict(_DIAGNOSTICS)


def reset_eigen_diagnostics() -> None:
    _DIAGNOSTICS.clear()


def _as_matrix(X) -> Tensor:
    if not isinstance(X, Tensor):
        X = torch.as_tensor(np.asarray(X, dtype=np.float64))
    return X.to(DTYPE)


def symmetrize(X: Tensor) -> Tensor:
    return 0.5 * (X + X.transpose(-1, -2))


def check_symmetric(X: Tensor, tol: float = SYMMETRY_TOL, name: str = "input") -> None:
    if X.dim() < 2 or X.shape[-1] != X.shape[-2]:
        raise ValueError("{} must be square, got shape {}".format(name, tuple(X.shape)))
    if X.numel() == 0:
        return
    scale = max(1.0, float(X.detach().abs().max()))
    asym = float((X.detach() - X.detach().transpose(-1, -2)).abs().max())
    if asym > tol * scale:
        raise ValueError(
            "{} is not symmetric (max |X - X^T| = {:.3e})".format(name, asym)
        )


class EigenvalueFunction(Function):
    """
    Y = U f(diag(s)) U^T for X = U diag(s) U^T.

    Backward uses the Daleckii-Krein formula
    dX = U (L o (U^T sym(dY) U)) U^T with L_ij = (f(s_i) - f(s_j)) / (s_i - s_j),
    and L_ij = (f'(s_i) + f'(s_j)) / 2 where |s_i - s_j| < eigengap tolerance
    (or a jittered divided difference, see :func:`set_eigengap_mode`).
    """

    @staticmethod
    def forward(ctx, X, fn, dfn, domain_check):
        s, U = torch.linalg.eigh(symmetrize(X))
        if domain_check is not None:
            domain_check(s)
        fs = fn(s)
        ctx.save_for_backward(s, U, fs)
        ctx.fn = fn
        ctx.dfn = dfn
        return symmetrize(U @ torch.diag_embed(fs) @ U.transpose(-1, -2))

    @staticmethod
    def backward(ctx, grad_output):
        s, U, fs = ctx.saved_tensors
        gap = s.unsqueeze(-1) - s.unsqueeze(-2)
        close = gap.abs() < _EIGENGAP_TOL

        n = s.shape[-1]
        degenerate = (int(close.sum()) - s.numel()) // 2
        if degenerate > 0:
            _DIAGNOSTICS["degenerate_eigengaps"] += degenerate

        safe_gap = torch.where(close, torch.ones_like(gap), gap)
        quotient = (fs.unsqueeze(-1) - fs.unsqueeze(-2)) / safe_gap
        dfs = ctx.dfn(s)
        limit = 0.5 * (dfs.unsqueeze(-1) + dfs.unsqueeze(-2))
        loewner = torch.where(close, limit, quotient)
        if degenerate > 0 and _EIGENGAP_MODE == "jitter":
            _DIAGNOSTICS["jittered_eigengaps"] += degenerate
            # ascending eigenvalues: every spread gap is at least the jitter
            spread = s + _EIGENGAP_JITTER * torch.arange(n, dtype=s.dtype, device=s.device)
            spread_gap = spread.unsqueeze(-1) - spread.unsqueeze(-2)
            off_diagonal = close & ~torch.eye(n, dtype=torch.bool, device=s.device)
            f_spread = ctx.fn(spread)
            jittered = (f_spread.unsqueeze(-1) - f_spread.unsqueeze(-2)) / torch.where(
                off_diagonal, spread_gap, torch.ones_like(spread_gap)
            )
            loewner = torch.where(off_diagonal, jittered, loewner)

        Ut = U.transpose(-1, -2)
        inner = loewner * (Ut @ symmetrize(grad_output) @ U)
        grad_input = U @ inner @ Ut
        assert grad_input.shape[-1] == n
        return grad_input, None, None, None


def _apply_spectral(X: Tensor, fn: Callable, dfn: Callable, domain_check=None) -> Tensor:
    return EigenvalueFunction.apply(X, fn, dfn, domain_check)


def gaussian_aggregate(samples: Union[Tensor, Sequence]) -> Tensor:
    """
    Embed the mean and covariance of a sample set into an SPD block matrix

        Y = [[S + m m^T, m],
             [m^T,       1]]

    with the population covariance S (divisor n).

    Args:
        samples: tensor of shape (..., n, d) (n samples of dimension d), or a
            non-empty list of d-vectors.

    Returns:
        Tensor of shape (..., d + 1, d + 1). PSD always, PD iff S is PD.
    """
    if not isinstance(samples, Tensor):
        if len(samples) == 0:
            raise ValueError("empty aggregation")
        vectors = [np.asarray(v, dtype=np.float64).reshape(-1) for v in samples]
        dims = {v.shape[0] for v in vectors}
        if len(dims) != 1:
            raise ValueError(
                "dimension mismatch in aggregation: got dimensions {}".format(sorted(dims))
            )
        samples = torch.as_tensor(np.stack(vectors))
    samples = samples.to(DTYPE)
    if samples.dim() < 2:
        raise ValueError("samples must have shape (..., n, d), got {}".format(tuple(samples.shape)))
    n = samples.shape[-2]
    if n == 0:
        raise ValueError("empty aggregation")

    mu = samples.mean(dim=-2)
    centered = samples - mu.unsqueeze(-2)
    cov = centered.transpose(-1, -2) @ centered / n
    top_left = cov + mu.unsqueeze(-1) * mu.unsqueeze(-2)

    one = torch.ones(mu.shape[:-1] + (1, 1), dtype=DTYPE, device=samples.device)
    top = torch.cat([top_left, mu.unsqueeze(-1)], dim=-1)
    bottom = torch.cat([mu.unsqueeze(-2), one], dim=-1)
    return symmetrize(torch.cat([top, bottom], dim=-2))


def re_eig(X, eps: float = 1e-4) -> Tensor:
    """
    Rectify eigenvalues: U diag(max(s, eps)) U^T. Output eigenvalues are >= eps.
    """
    if eps <= 0:
        raise ValueError("ReEig threshold must be positive, got {}".format(eps))
    X = _as_matrix(X)
    check_symmetric(X)
    return _apply_spectral(
        X,
        lambda s: s.clamp(min=eps),
        lambda s: (s > eps).to(s.dtype),
    )


def _require_positive(s: Tensor) -> None:
    if bool((s <= 0).any()):
        raise ValueError(
            "log of non-PD matrix (smallest eigenvalue {:.3e})".format(float(s.min()))
        )


def log_eig(X) -> Tensor:
    """
    Matrix logarithm of an SPD matrix: U diag(log s) U^T.
    """
    X = _as_matrix(X)
    check_symmetric(X)
    return _apply_spectral(X, torch.log, torch.reciprocal, _require_positive)


def exp_eig(S) -> Tensor:
    """
    Matrix exponential of a symmetric matrix: U diag(exp s) U^T (strictly PD).
    """
    S = _as_matrix(S)
    check_symmetric(S)
    return _apply_spectral(S, torch.exp, torch.exp)


def vec_dim(d: int) -> int:
    return d * (d + 1) // 2


def vec_map(S) -> Tensor:
    """
    Isometric vectorization of symmetric matrices.

    Entries are taken from the upper triangle column by column (equivalently the
    lower triangle row by row): a11, a12, a22, a13, a23, a33, ...; off-diagonal
    entries are scaled by sqrt(2) so that ||vec(A) - vec(B)||_2 == ||A - B||_F.
    """
    S = _as_matrix(S)
    d = S.shape[-1]
    rows, cols = torch.tril_indices(d, d)
    scale = torch.where(
        rows == cols,
        torch.ones(rows.shape[0], dtype=DTYPE),
        torch.full((rows.shape[0],), math.sqrt(2.0), dtype=DTYPE),
    ).to(S.device)
    return S[..., cols, rows] * scale


def bilinear_sum(X: Tensor, W: Tensor) -> Tensor:
    """
    Batched SPDC compression Y = sum_k W_k X_k W_k^T.

    Args:
        X: (..., K, n, n) SPD inputs
        W: (K, p, n) weights with orthonormal rows

    Returns:
        (..., p, p)
    """
    return symmetrize(torch.einsum("kpi,...kij,kqj->...pq", W, X, W))


def spdc_transform(inputs: List[Tensor], weights: List[Tensor]) -> Tensor:
    """
    Fuse SPD matrices X_i into one compact SPD matrix Y = sum_i W_i X_i W_i^T.

    Each W_i has shape (d_out, d_in_i) with orthonormal rows; all W_i share d_out.
    """
    if len(inputs) == 0 or len(weights) == 0:
        raise ValueError("spdc_transform needs at least one input")
    if len(inputs) != len(weights):
        raise ValueError(
            "got {} inputs but {} weights".format(len(inputs), len(weights))
        )
    d_out = None
    out = None
    for i, (X, W) in enumerate(zip(inputs, weights)):
        X, W = _as_matrix(X), _as_matrix(W)
        if d_out is None:
            d_out = W.shape[0]
        if W.shape[0] != d_out:
            raise ValueError(
                "weight {} has {} rows, expected {}".format(i, W.shape[0], d_out)
            )
        if W.shape[1] != X.shape[-1]:
            raise ValueError(
                "weight {} has {} columns but input {} has dimension {}".format(
                    i, W.shape[1], i, X.shape[-1]
                )
            )
        term = W @ X @ W.transpose(-1, -2)
        out = term if out is None else out + term
    return symmetrize(out)


def conv_forward(part_matrices, kernel, bias: float = 0.0) -> Tensor:
    """
    3x3 cross-correlation, stride 1, zero padding 1 (same-size output), plus bias,
    applied independently to every (m x 3) part matrix.

    Args:
        part_matrices: (..., m, 3)
        kernel: (3, 3)
        bias: scalar or 1-element tensor
    """
    X = _as_matrix(part_matrices)
    kernel = _as_matrix(kernel)
    lead = X.shape[:-2]
    m, c = X.shape[-2:]
    flat = X.reshape(-1, 1, m, c)
    bias = torch.as_tensor(bias, dtype=DTYPE).reshape(1)
    out = F.conv2d(flat, kernel.reshape(1, 1, 3, 3), bias, stride=1, padding=1)
    return out.reshape(lead + (m, c))


def is_spd(M, tol: float = 1e-10) -> bool:
    M = _as_matrix(M)
    if M.dim() < 2 or M.shape[-1] != M.shape[-2]:
        raise ValueError("is_spd expects square matrices, got {}".format(tuple(M.shape)))
    if float((M - M.transpose(-1, -2)).abs().max()) > tol:
        return False
    return bool(torch.linalg.eigvalsh(symmetrize(M)).min() > tol)
