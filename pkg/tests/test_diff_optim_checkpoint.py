import numpy as np
import pytest
import torch

from motok.diff import Adam, NonFiniteGradientError, adam_step, clip_by_global_norm
from motok.diff import checkpoint
from motok.diff.checkpoint import CheckpointError
from motok.diff.layers import GRUCell, Linear


def _param(values):
    return torch.nn.Parameter(torch.tensor(values, dtype=torch.float64))


def test_zero_gradient_leaves_parameter():
    p = _param([1.0, -2.0])
    opt = Adam([("p", p)], lr=0.1)
    p.grad = torch.zeros(2, dtype=torch.float64)
    opt.step()
    assert p.tolist() == [1.0, -2.0]


def test_single_step_descends_quadratic():
    x = _param([1.0])
    opt = Adam([("x", x)], lr=2e-4)
    (x ** 2).sum().backward()
    opt.step()
    assert x.item() < 1.0


def test_adam_converges_on_quadratic():
    x = _param([1.0, -0.5, 2.0])
    a = torch.tensor([1.0, 3.0, 0.5], dtype=torch.float64)
    opt = Adam([("x", x)], lr=0.01)
    for _ in range(1000):
        opt.zero_grad()
        (a * x ** 2).sum().backward()
        adam_step(opt)
    assert x.norm().item() < 1e-2


def test_adam_matches_reference_update():
    x = _param([0.3, -0.7])
    opt = Adam([("x", x)], lr=0.05)
    ref = torch.optim.Adam([torch.nn.Parameter(x.detach().clone())], lr=0.05)
    y = ref.param_groups[0]["params"][0]
    for _ in range(5):
        for p in (x, y):
            p.grad = None
            (p ** 3).sum().backward()
        opt.step()
        ref.step()
    assert torch.allclose(x, y, atol=1e-12)


def test_nan_gradient_rejected_with_name():
    p = _param([1.0])
    opt = Adam([("decoder.weight", p)])
    p.grad = torch.tensor([float("nan")], dtype=torch.float64)
    with pytest.raises(NonFiniteGradientError, match="decoder.weight"):
        opt.step()


def test_clip_by_global_norm():
    grads = {"a": torch.tensor([3.0]), "b": torch.tensor([4.0])}
    total = clip_by_global_norm(grads, 1.0)
    assert total == pytest.approx(5.0)
    assert grads["a"].item() == pytest.approx(0.6)
    assert grads["b"].item() == pytest.approx(0.8)


def test_checkpoint_round_trip(tmp_path):
    tensors = {"w": np.arange(6, dtype=np.float64).reshape(2, 3), "i": np.array([1, 2], dtype=np.int64),
               "f": np.ones((2, 2, 2), dtype=np.float32)}
    digest = checkpoint.save(tmp_path / "a.ckpt", "toy", {"k": 3}, tensors)
    kind, hyper, back = checkpoint.load(tmp_path / "a.ckpt")
    assert kind == "toy" and hyper == {"k": 3}
    for k, v in tensors.items():
        assert back[k].dtype == v.dtype
        assert np.array_equal(back[k], v)
    assert digest == checkpoint.file_hash(tmp_path / "a.ckpt")


def test_checkpoint_is_deterministic():
    t = {"b": np.zeros(2), "a": np.ones(3)}
    assert checkpoint.dumps("k", {"x": 1, "y": 2}, t) == checkpoint.dumps("k", {"y": 2, "x": 1}, dict(reversed(t.items())))


def test_checkpoint_rejects_bad_files():
    data = checkpoint.dumps("k", {}, {"a": np.ones((2, 3))})
    with pytest.raises(CheckpointError, match="magic"):
        checkpoint.loads(b"NOTACKPT" + data[8:])
    with pytest.raises(CheckpointError, match="truncated"):
        checkpoint.loads(data[:-3])
    with pytest.raises(CheckpointError, match="declared shape"):
        checkpoint.loads(data, expected_shapes={"a": (3, 2)})
    with pytest.raises(CheckpointError, match="missing"):
        checkpoint.loads(data, expected_shapes={"b": (1,)})


def test_load_state_validates_shapes():
    lin = Linear(3, 2)
    tensors = checkpoint.state_tensors(lin)
    other = Linear(3, 2, generator=torch.Generator().manual_seed(9))
    checkpoint.load_state(other, tensors)
    assert torch.equal(other.weight, lin.weight)
    with pytest.raises(CheckpointError):
        checkpoint.load_state(Linear(4, 2), tensors)


def test_gru_recurrent_weights_orthogonal():
    cell = GRUCell(4, 6, generator=torch.Generator().manual_seed(0))
    for block in cell.w_hh.detach().chunk(3, dim=0):
        assert torch.allclose(block @ block.T, torch.eye(6, dtype=torch.float64), atol=1e-10)
