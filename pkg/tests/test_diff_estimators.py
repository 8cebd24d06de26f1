import numpy as np
import pytest
import torch
from hypothesis import given, settings, strategies as st

from motok.diff import gumbel_softmax, sample_gumbel, straight_through
from motok.diff.gradcheck import check_gradients
from motok.diff.ops import OpShapeError


def test_straight_through_forward_is_quantized():
    c = torch.tensor([1.0, 2.0], dtype=torch.float64, requires_grad=True)
    q = torch.tensor([3.0, 4.0], dtype=torch.float64, requires_grad=True)
    assert straight_through(c, q).tolist() == [3.0, 4.0]


@settings(max_examples=50)
@given(seed=st.integers(0, 10_000), n=st.integers(1, 20))
def test_straight_through_gradient_copy_bit_identical(seed, n):
    g = torch.Generator().manual_seed(seed)
    c = torch.randn(n, generator=g, dtype=torch.float64, requires_grad=True)
    q = torch.randn(n, generator=g, dtype=torch.float64, requires_grad=True)
    upstream = torch.randn(n, generator=g, dtype=torch.float64)
    straight_through(c, q).backward(upstream)
    assert torch.equal(c.grad, upstream)
    assert q.grad is None or torch.all(q.grad == 0)


def test_straight_through_shape_mismatch():
    with pytest.raises(OpShapeError, match="straight_through"):
        straight_through(torch.zeros(2), torch.zeros(3))


def test_gumbel_rejects_non_positive_temperature():
    for tau in (0.0, -1.0):
        with pytest.raises(ValueError, match="temperature"):
            gumbel_softmax(torch.zeros(3), tau)


@settings(max_examples=60)
@given(seed=st.integers(0, 10_000), tau=st.floats(0.01, 10.0), k=st.integers(2, 12))
def test_gumbel_output_on_simplex(seed, tau, k):
    g = torch.Generator().manual_seed(seed)
    logits = torch.randn(5, k, generator=g, dtype=torch.float64) * 3
    y = gumbel_softmax(logits, tau, generator=g)
    assert torch.all(y >= 0)
    assert torch.allclose(y.sum(-1), torch.ones(5, dtype=torch.float64), atol=1e-9)


def test_gumbel_uniform_logits_argmax_frequencies():
    g = torch.Generator().manual_seed(0)
    y = gumbel_softmax(torch.zeros(100_000, 5, dtype=torch.float64), 1.0, generator=g)
    freq = np.bincount(y.argmax(-1).numpy(), minlength=5) / 100_000
    assert np.all(np.abs(freq - 0.2) < 0.02)


def test_gumbel_low_temperature_concentrates():
    g = torch.Generator().manual_seed(0)
    logits = torch.tensor([10.0, 0.0, 0.0], dtype=torch.float64).expand(10_000, 3)
    y = gumbel_softmax(logits, 0.1, generator=g)
    near = (torch.abs(y - torch.tensor([1.0, 0.0, 0.0], dtype=torch.float64)).max(-1).values < 1e-3)
    assert near.double().mean() >= 0.99


def test_gumbel_gradient_with_shared_noise():
    g = torch.Generator().manual_seed(5)
    logits = torch.randn(4, 6, generator=g, dtype=torch.float64, requires_grad=True)
    noise = sample_gumbel((4, 6), g)
    w = torch.randn(4, 6, generator=g, dtype=torch.float64)
    errs = check_gradients(lambda: (gumbel_softmax(logits, 0.7, noise=noise) * w).sum(), {"logits": logits})
    assert errs["logits"] < 1e-4


def test_gumbel_noise_shape_checked():
    with pytest.raises(OpShapeError):
        gumbel_softmax(torch.zeros(2, 3), 1.0, noise=torch.zeros(3, 2))
