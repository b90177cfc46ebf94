import math

import numpy as np
import pytest
import torch

from spdmotion.modeling.layers import random_stiefel, st_ga_forward, ts_ga_forward
from spdmotion.modeling.spd import (
    conv_forward,
    eigen_diagnostics,
    exp_eig,
    gaussian_aggregate,
    is_spd,
    log_eig,
    re_eig,
    reset_eigen_diagnostics,
    set_eigengap_mode,
    spdc_transform,
    vec_map,
)

EPS = 1e-4


def random_spd(d, rng, low=1e-3, high=1e3):
    q, _ = np.linalg.qr(rng.normal(size=(d, d)))
    s = np.exp(rng.uniform(np.log(low), np.log(high), size=d))
    return torch.as_tensor((q * s) @ q.T)


def random_sym(d, rng):
    a = rng.normal(size=(d, d))
    return torch.as_tensor(0.5 * (a + a.T))


def test_gaussian_aggregate_symmetric_samples():
    Y = gaussian_aggregate([[1.0], [-1.0]])
    assert torch.allclose(Y, torch.eye(2, dtype=torch.float64))


def test_gaussian_aggregate_constant_samples():
    Y = gaussian_aggregate([[2.5]] * 7)
    expected = torch.tensor([[6.25, 2.5], [2.5, 1.0]], dtype=torch.float64)
    assert torch.allclose(Y, expected)


def test_gaussian_aggregate_block_structure():
    samples = np.array([[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]])
    Y = gaussian_aggregate(samples.tolist()).numpy()
    mu = samples.mean(axis=0)
    cov = (samples - mu).T @ (samples - mu) / 3
    assert np.allclose(cov, 8.0 / 3.0 * np.ones((2, 2)))
    assert np.allclose(Y[:2, :2], cov + np.outer(mu, mu))
    assert np.allclose(Y[:2, 2], mu)
    assert Y[2, 2] == 1.0
    # Schur complement of the unit corner is the covariance
    schur = Y[:2, :2] - np.outer(Y[:2, 2], Y[2, :2])
    assert np.allclose(schur, cov, atol=1e-12)


def test_gaussian_aggregate_errors():
    with pytest.raises(ValueError, match="empty aggregation"):
        gaussian_aggregate([])
    with pytest.raises(ValueError, match="dimension mismatch"):
        gaussian_aggregate([[1.0, 2.0], [1.0]])


def test_gaussian_aggregate_generic_samples_are_pd():
    rng = np.random.default_rng(0)
    assert is_spd(gaussian_aggregate(rng.normal(size=(5, 3)).tolist()))


def test_re_eig_examples():
    eye = torch.diag(torch.tensor([2.0, 3.0], dtype=torch.float64))
    assert torch.allclose(re_eig(eye, EPS), eye)
    clamped = re_eig(torch.diag(torch.tensor([1e-6, 2.0], dtype=torch.float64)), EPS)
    assert torch.allclose(clamped, torch.diag(torch.tensor([1e-4, 2.0], dtype=torch.float64)))
    zero = re_eig(torch.zeros(3, 3, dtype=torch.float64), EPS)
    assert torch.allclose(zero, EPS * torch.eye(3, dtype=torch.float64))


def test_re_eig_rejects_asymmetric():
    with pytest.raises(ValueError, match="not symmetric"):
        re_eig(torch.tensor([[1.0, 2.0], [0.0, 1.0]], dtype=torch.float64), EPS)


def test_re_eig_idempotent():
    rng = np.random.default_rng(1)
    for _ in range(50):
        X = random_sym(5, rng)
        once = re_eig(X, EPS)
        assert torch.allclose(re_eig(once, EPS), once, atol=1e-12)


def test_log_exp_examples():
    assert torch.allclose(log_eig(torch.eye(3, dtype=torch.float64)), torch.zeros(3, 3, dtype=torch.float64))
    d = torch.diag(torch.tensor([math.e, math.e ** 2], dtype=torch.float64))
    assert torch.allclose(log_eig(d), torch.diag(torch.tensor([1.0, 2.0], dtype=torch.float64)))
    assert torch.allclose(exp_eig(torch.zeros(2, 2, dtype=torch.float64)), torch.eye(2, dtype=torch.float64))


def test_log_eig_rejects_non_pd():
    with pytest.raises(ValueError, match="log of non-PD matrix"):
        log_eig(torch.diag(torch.tensor([1.0, -1.0], dtype=torch.float64)))


def test_log_exp_roundtrip():
    rng = np.random.default_rng(2)
    for _ in range(200):
        X = random_spd(4, rng)
        assert torch.linalg.matrix_norm(exp_eig(log_eig(X)) - X) < 1e-8 * max(1.0, float(X.abs().max()))
        S = random_sym(4, rng)
        assert torch.linalg.matrix_norm(log_eig(exp_eig(S)) - S) < 1e-8


def test_vec_map_examples():
    v = vec_map(torch.tensor([[1.0, 2.0], [2.0, 3.0]], dtype=torch.float64))
    assert torch.allclose(v, torch.tensor([1.0, 2.0 * math.sqrt(2.0), 3.0], dtype=torch.float64))
    assert float((v ** 2).sum()) == pytest.approx(18.0)
    assert torch.equal(vec_map(torch.zeros(3, 3, dtype=torch.float64)), torch.zeros(6, dtype=torch.float64))
    assert torch.equal(
        vec_map(torch.eye(3, dtype=torch.float64)),
        torch.tensor([1.0, 0.0, 1.0, 0.0, 0.0, 1.0], dtype=torch.float64),
    )


def test_vec_map_isometry():
    rng = np.random.default_rng(3)
    for _ in range(1000):
        A, B = random_sym(4, rng), random_sym(4, rng)
        vec_dist = torch.linalg.vector_norm(vec_map(A) - vec_map(B))
        fro_dist = torch.linalg.matrix_norm(A - B)
        assert abs(float(vec_dist - fro_dist)) < 1e-10


def test_spdc_transform_examples():
    X = torch.diag(torch.tensor([1.0, 2.0], dtype=torch.float64))
    I = torch.eye(2, dtype=torch.float64)
    assert torch.allclose(spdc_transform([X], [I]), X)
    out = spdc_transform([I, 2 * I], [I, I])
    assert torch.allclose(out, 3 * I)


def test_spdc_transform_errors():
    I = torch.eye(2, dtype=torch.float64)
    with pytest.raises(ValueError):
        spdc_transform([], [])
    with pytest.raises(ValueError):
        spdc_transform([I], [I, I])
    with pytest.raises(ValueError, match="columns"):
        spdc_transform([I], [torch.eye(3, dtype=torch.float64)])


def test_spdc_transform_pd_on_random_inputs():
    rng = np.random.default_rng(4)
    gen = torch.Generator().manual_seed(4)
    for _ in range(1000):
        inputs = [random_spd(5, rng, 1e-2, 10.0) for _ in range(3)]
        weights = list(random_stiefel(3, 2, 5, generator=gen))
        out = spdc_transform(inputs, weights)
        assert float((out - out.T).abs().max()) < 1e-12
        assert float(torch.linalg.eigvalsh(out).min()) > 0


def test_is_spd():
    assert is_spd(torch.eye(3, dtype=torch.float64), 1e-10)
    assert not is_spd(torch.diag(torch.tensor([1.0, -1.0], dtype=torch.float64)))
    with pytest.raises(ValueError):
        is_spd(torch.zeros(2, 3, dtype=torch.float64))


def test_conv_forward_identity_kernel():
    X = torch.randn(5, 4, 3, dtype=torch.float64)
    kernel = torch.zeros(3, 3, dtype=torch.float64)
    kernel[1, 1] = 1.0
    assert torch.allclose(conv_forward(X, kernel), X)


def test_conv_forward_all_ones():
    out = conv_forward(torch.ones(5, 3, dtype=torch.float64), torch.ones(3, 3, dtype=torch.float64))
    # zero padding: interior sees 9 ones, edges 6, corners 4
    expected = torch.tensor(
        [[4, 6, 4], [6, 9, 6], [6, 9, 6], [6, 9, 6], [4, 6, 4]], dtype=torch.float64
    )
    assert torch.equal(out, expected)


def test_conv_forward_linear():
    X, Y = torch.randn(2, 6, 3, dtype=torch.float64), torch.randn(2, 6, 3, dtype=torch.float64)
    k = torch.randn(3, 3, dtype=torch.float64)
    lhs = conv_forward(2.0 * X - 3.0 * Y, k)
    rhs = 2.0 * conv_forward(X, k) - 3.0 * conv_forward(Y, k)
    assert torch.allclose(lhs, rhs, atol=1e-12)


def _min_eig_slack(M):
    s = torch.linalg.eigvalsh(M)
    return float(s.min()), 64 * np.finfo(np.float64).eps * float(s.abs().max())


def test_branches_output_spd_with_reeig_floor():
    rng = np.random.default_rng(5)
    for _ in range(1000):
        n = int(rng.integers(1, 8))
        part = torch.as_tensor(rng.normal(size=(n, 3, 3)))
        collect = []
        st = st_ga_forward(part, EPS, collect)
        ts = ts_ga_forward(part, EPS, collect)
        assert st.shape == (11, 11) and ts.shape == (11, 11)
        for _, M in collect:
            low, slack = _min_eig_slack(M)
            assert low >= EPS * (1 - 1e-9) - slack


def test_st_branch_frozen_subsequence_hits_floor():
    frame = torch.as_tensor(np.random.default_rng(6).normal(size=(1, 4, 3)))
    part = frame.repeat(5, 1, 1)
    out = st_ga_forward(part, EPS)
    low, slack = _min_eig_slack(out)
    assert abs(low - EPS) <= slack + 1e-12


def test_branches_ignore_frame_order_within_a_subsequence():
    part = torch.as_tensor(np.random.default_rng(7).normal(size=(6, 3, 3)))
    perm = part[torch.tensor([3, 0, 5, 1, 4, 2])]
    # temporal means of each joint trajectory do not depend on the frame order
    a = gaussian_aggregate(part.transpose(0, 1))[..., :3, 3]
    b = gaussian_aggregate(perm.transpose(0, 1))[..., :3, 3]
    assert torch.allclose(a, b, atol=1e-12)
    assert torch.allclose(st_ga_forward(part, EPS), st_ga_forward(perm, EPS), atol=1e-8)
    assert torch.allclose(ts_ga_forward(part, EPS), ts_ga_forward(perm, EPS), atol=1e-8)


def test_eigengap_diagnostics_count_degenerate_pairs():
    reset_eigen_diagnostics()
    X = torch.eye(3, dtype=torch.float64).requires_grad_(True)
    log_eig(X).sum().backward()
    assert eigen_diagnostics().get("degenerate_eigengaps", 0) == 3
    # d sum(log X) / dX at X = I is the all-ones matrix
    assert torch.allclose(X.grad, torch.ones(3, 3, dtype=torch.float64))
    reset_eigen_diagnostics()
    assert eigen_diagnostics() == {}


@pytest.fixture
def jitter_mode():
    set_eigengap_mode("jitter", 1e-9)
    yield
    set_eigengap_mode("limit")


def test_jittered_eigengaps_match_the_limit(jitter_mode):
    reset_eigen_diagnostics()
    X = torch.diag(torch.tensor([1.0, 1.0, 2.0], dtype=torch.float64)).requires_grad_(True)
    G = torch.tensor([[1.0, 2.0, 0.5], [2.0, -1.0, 0.0], [0.5, 0.0, 3.0]], dtype=torch.float64)
    (log_eig(X) * G).sum().backward()
    assert eigen_diagnostics() == {"degenerate_eigengaps": 1, "jittered_eigengaps": 1}
    jittered = X.grad.clone()

    set_eigengap_mode("limit")
    X.grad = None
    (log_eig(X) * G).sum().backward()
    assert torch.all(torch.isfinite(jittered))
    assert torch.allclose(jittered, X.grad, atol=1e-6)
    reset_eigen_diagnostics()


def test_unknown_eigengap_mode():
    with pytest.raises(ValueError, match="eigengap mode"):
        set_eigengap_mode("perturb")
