import numpy as np
import pytest
import torch
from hypothesis import given, settings, strategies as st
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from motok.diff.gradcheck import check_gradients
from motok.diff.ops import OpShapeError
from motok.quantizer import MotionTokenizer, VQModel, _sample_windows, nearest_codes, quantize, vq_loss

C = 95


def small_tokenizer(**kw):
    params = dict(codebook_size=8, code_dim=4, hidden=16, n_steps=5, batch_size=4, window=16, random_state=0)
    params.update(kw)
    return MotionTokenizer(**params)


@pytest.fixture(scope="module")
def fitted():
    rng = np.random.default_rng(0)
    motions = [rng.normal(size=(int(n), C)) for n in rng.integers(16, 40, size=6)]
    return small_tokenizer().fit(motions), motions


@pytest.fixture
def model():
    return VQModel(C, 16, 4, 8, generator=torch.Generator().manual_seed(0))


@pytest.mark.parametrize("t,rows", [(24, 6), (4, 1), (40, 10)])
def test_encode_length(model, t, rows):
    assert model.encode(torch.zeros(1, t, C, dtype=torch.float64)).shape == (1, rows, 4)


def test_encode_rejects_short(model):
    with pytest.raises(ValueError, match="at least 4"):
        model.encode(torch.zeros(1, 3, C, dtype=torch.float64))


@pytest.mark.parametrize("t", [1, 6])
def test_decode_length(model, t):
    assert model.decoder(torch.zeros(1, t, 4, dtype=torch.float64)).shape == (1, 4 * t, C)


def test_encoder_ignores_contact_channels(model):
    x = torch.randn(1, 8, C, dtype=torch.float64)
    y = x.clone()
    y[..., -4:] = 7.0
    assert torch.equal(model.encode(x), model.encode(y))


def test_quantize_exact_entry_and_tie():
    book = torch.tensor([[0.0, 0.0], [5.0, 5.0], [1.0, 0.0], [2.0, 2.0], [9.0, 9.0], [-1.0, 0.0]],
                        dtype=torch.float64)
    latent = torch.tensor([[2.0, 2.0], [0.0, 0.0]], dtype=torch.float64)
    q, idx, _ = quantize(latent, book)
    assert idx.tolist() == [3, 0]
    assert torch.equal(q, book[[3, 0]])
    # (0, 3) is equidistant from entries 2 and 5; the lower index wins
    mid = torch.tensor([[0.0, 1.0]], dtype=torch.float64)
    assert nearest_codes(mid, book).tolist() == [0]
    tie = torch.tensor([[0.0, 3.0]], dtype=torch.float64)
    d = ((tie - book) ** 2).sum(-1)
    assert d[2] == d[5] and nearest_codes(tie, book[[2, 5]]).tolist() == [0]
    assert nearest_codes(tie, book[[5, 2]]).tolist() == [0]


def test_quantize_errors():
    with pytest.raises(ValueError, match="empty codebook"):
        nearest_codes(torch.zeros(2, 3), torch.zeros(0, 3))
    with pytest.raises(OpShapeError):
        nearest_codes(torch.zeros(2, 3), torch.zeros(4, 2))


@settings(max_examples=40)
@given(seed=st.integers(0, 10_000), k=st.integers(2, 40), dup=st.booleans())
def test_quantize_matches_scan_and_rows_are_codes(seed, k, dup):
    rng = np.random.default_rng(seed)
    book = rng.normal(size=(k, 3)).round(1)
    if dup:
        book[k - 1] = book[0]
    latent = rng.normal(size=(50, 3)).round(1)
    idx = nearest_codes(torch.from_numpy(latent), torch.from_numpy(book)).numpy()
    for row, i in zip(latent, idx):
        d = [((row - b) ** 2).sum() for b in book]
        assert i == min(range(k), key=lambda j: (d[j], j))
    q, _, _ = quantize(torch.from_numpy(latent), torch.from_numpy(book))
    assert all(any(np.array_equal(r, b) for b in book) for r in q.numpy())


def test_vq_loss_zero_for_perfect_case():
    m = torch.randn(2, 8, C, dtype=torch.float64)
    z = torch.randn(2, 2, 4, dtype=torch.float64)
    rep = vq_loss(m, m.clone(), z, z.clone())
    assert rep.total.item() == 0.0


def test_vq_loss_beta_scales_commitment_only():
    g = torch.Generator().manual_seed(0)
    m, r = torch.randn(1, 8, C, generator=g), torch.randn(1, 8, C, generator=g)
    z, c = torch.randn(1, 2, 4, generator=g), torch.randn(1, 2, 4, generator=g)
    a, b = vq_loss(m, r, z, c, 1.0), vq_loss(m, r, z, c, 2.0)
    assert b.commitment_term.item() == pytest.approx(2 * a.commitment_term.item())
    assert b.reconstruction.item() == a.reconstruction.item()
    assert b.codebook_term.item() == a.codebook_term.item()
    assert all(v >= 0 for v in a.as_floats().values())


def test_vq_loss_stop_gradient_wiring():
    z = torch.randn(1, 3, 4, dtype=torch.float64, requires_grad=True)
    c = torch.randn(1, 3, 4, dtype=torch.float64, requires_grad=True)
    m = torch.zeros(1, 4, 2, dtype=torch.float64)
    vq_loss(m, m, z, c, 1.0).codebook_term.backward()
    assert z.grad is None and c.grad is not None
    c.grad = None
    vq_loss(m, m, z, c, 1.0).commitment_term.backward()
    assert c.grad is None and z.grad is not None
    z.grad = None
    vq_loss(m, m, z, c, 0.0).total.backward()
    assert torch.all(z.grad == 0)


def test_vq_gradients_through_straight_through(model):
    """Straight-through gradients match finite differences of the equivalent smooth surrogate.

    With assignments held fixed, the quantised latent is the encoder output plus a
    frozen offset for the decoder path, and the codebook only sees its own term.
    """
    g = torch.Generator().manual_seed(1)
    x = torch.randn(2, 8, C, generator=g, dtype=torch.float64)
    with torch.no_grad():
        model.codebook.copy_(torch.randn(8, 4, generator=g, dtype=torch.float64))
        idx = nearest_codes(model.encode(x), model.codebook)
        z0 = model.encode(x)
        e0 = model.codebook[idx]
        offset = e0 - z0

    def st_loss():
        latent = model.encode(x)
        q, _, codes = quantize(latent, model.codebook, indices=idx)
        return vq_loss(x, model.decoder(q), latent, codes).total

    def surrogate():
        latent = model.encode(x)
        codes = model.codebook[idx]
        rec = (model.decoder(latent + offset) - x).abs().mean()
        return rec + ((z0 - codes) ** 2).mean() + ((latent - e0) ** 2).mean()

    leaves = {"enc_w": model.encoder.down1.weight, "dec_w": model.decoder.inp.weight, "book": model.codebook}
    errs = check_gradients(surrogate, leaves)
    assert max(errs.values()) < 1e-4
    grads = {}
    for fn in (st_loss, surrogate):
        model.zero_grad()
        fn().backward()
        grads[fn.__name__] = {k: v.grad.clone() for k, v in leaves.items()}
    for k in leaves:
        assert torch.allclose(grads["st_loss"][k], grads["surrogate"][k], atol=1e-12), k


def test_tokenize_framing_and_lengths(fitted):
    tok, _ = fitted
    motion = np.random.default_rng(1).normal(size=(24, C))
    ids = tok.tokenize(motion)
    assert len(ids) == 8 and ids[0] == tok.bom and ids[-1] == tok.eom
    assert np.all(ids[1:-1] < tok.codebook_size)
    assert len(tok.tokenize(motion[:4])) == 3
    assert tok.detokenize(ids).shape == (24, C)
    # T not divisible by 4: trailing frames cropped
    assert len(tok.detokenize(tok.tokenize(motion[:23]))) == 20


def test_detokenize_and_context_errors(fitted):
    tok, _ = fitted
    k = tok.codebook_size
    with pytest.raises(ValueError, match="no interior"):
        tok.detokenize([k, k + 1])
    with pytest.raises(ValueError, match="BOM"):
        tok.detokenize([0, 1, k + 1])
    with pytest.raises(ValueError, match="out of range"):
        tok.detokenize([k, k + 2, k + 1])
    with pytest.raises(ValueError, match="special"):
        tok.token_context(k)
    assert tok.token_context(3).shape == (4, C)


def test_untrained_tokenizer_rejected():
    with pytest.raises(NotFittedError):
        small_tokenizer().tokenize(np.zeros((8, C)))


def test_estimator_api(fitted):
    tok, motions = fitted
    params = tok.get_params()
    assert params["codebook_size"] == 8 and params["beta"] == 1.0
    assert clone(tok).get_params() == params
    out = tok.transform(motions[:2])
    back = tok.inverse_transform(out)
    assert [len(b) for b in back] == [len(m) - len(m) % 4 for m in motions[:2]]
    assert tok.usage_counts_.sum() > 0 and (tok.usage_counts_ >= 0).all()


def test_fit_is_deterministic():
    rng = np.random.default_rng(3)
    motions = [rng.normal(size=(20, C)) for _ in range(3)]
    a = small_tokenizer().fit(motions)
    b = small_tokenizer().fit(motions)
    for (na, pa), (nb, pb) in zip(a.model_.named_parameters(), b.model_.named_parameters()):
        assert na == nb and torch.equal(pa, pb)


def test_single_sample_memorisation():
    motion = np.random.default_rng(5).normal(size=(16, C)) * 0.5
    tok = MotionTokenizer(codebook_size=8, code_dim=8, hidden=32, n_steps=600, batch_size=1, window=16,
                          lr=2e-3, dtype="float32", random_state=0)
    tok.fit([motion])
    hist = tok.history_
    assert hist[-1]["total"] < 0.05 * hist[0]["total"]
    assert tok.reconstruction_error([motion]) < 0.05


@settings(max_examples=40, deadline=None)
@given(lengths=st.lists(st.integers(8, 50), min_size=1, max_size=5), window=st.integers(4, 64),
       seed=st.integers(0, 2**16))
def test_windows_snap_to_stride(lengths, window, seed):
    # row r of every motion holds the value r, so a window's first row is its start frame
    motions = [np.repeat(np.arange(n, dtype=float)[:, None], 3, axis=1) for n in lengths]
    (batch,) = _sample_windows(motions, np.random.default_rng(seed), 6, window, stride=4)
    assert batch.shape[1] % 4 == 0 and batch.shape[1] <= window
    starts = batch[:, 0, 0]
    assert (starts % 4 == 0).all()
    assert np.array_equal(batch - starts[:, None, None], np.broadcast_to(np.arange(batch.shape[1])[None, :, None],
                                                                         batch.shape))


def test_whole_sequence_batches():
    motions = [np.full((n, 2), float(n)) for n in (9, 13, 20)]
    parts = _sample_windows(motions, np.random.default_rng(0), 5, None)
    assert len(parts) == 5
    for p in parts:
        assert p.shape[0] == 1 and p.shape[1] == int(p[0, 0, 0]) - int(p[0, 0, 0]) % 4


def test_whole_sequence_fit_mixed_lengths():
    rng = np.random.default_rng(4)
    motions = [rng.normal(size=(n, C)) for n in (13, 22, 31)]
    a = small_tokenizer(window=None, batch_size=3).fit(motions)
    b = small_tokenizer(window=None, batch_size=3).fit(motions)
    assert np.isfinite([h["total"] for h in a.history_]).all()
    assert torch.equal(a.model_.codebook, b.model_.codebook)


def test_lr_decay_starts_at_full_rate():
    rng = np.random.default_rng(6)
    motions = [rng.normal(size=(20, C)) for _ in range(3)]
    one = [small_tokenizer(n_steps=1, lr_decay=flag, lr=1e-2).fit(motions).model_.codebook for flag in (False, True)]
    assert torch.equal(*one)
    two = [small_tokenizer(n_steps=2, lr_decay=flag, lr=1e-2).fit(motions).model_.codebook for flag in (False, True)]
    assert not torch.equal(*two)


def test_nan_input_rejected():
    bad = np.zeros((8, C))
    bad[0, 0] = np.nan
    with pytest.raises(ValueError, match="non-finite"):
        small_tokenizer().fit([bad])
