import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from twoaspect import autodiff as ad
from twoaspect.autodiff import Tensor, backward
from twoaspect.errors import ConfigError, ShapeError
from twoaspect.interaction import (
    InteractionModule,
    TransformerBlock,
    add_positional,
    positional_encoding,
    task_query_attend,
)


def zero_outputs(block):
    for p in (block.proj["o"][0], block.proj["o"][1], block.w2, block.b2):
        p.data[...] = 0


def test_pe_row_zero():
    pe = positional_encoding(5, 8)
    np.testing.assert_array_equal(pe[0], [0, 1] * 4)


def test_pe_odd_width():
    assert positional_encoding(3, 5).shape == (3, 5)


def test_add_positional_is_additive(rng):
    x = rng.normal(size=(6, 4))
    with ad.precision(np.float64):
        zero = add_positional(Tensor(np.zeros((6, 4)))).data
        np.testing.assert_array_equal(zero, positional_encoding(6, 4))
        np.testing.assert_allclose(add_positional(Tensor(x)).data - zero, x, atol=1e-12)


@pytest.mark.parametrize("u, d", [(17, 16), (24, 24)])
def test_block_shape(u, d):
    block = TransformerBlock(d, 4, 32, np.random.default_rng(0), "b")
    assert block.forward(Tensor(np.random.default_rng(1).normal(size=(u, d)))).shape == (u, d)


def test_block_zero_outputs_is_identity(rng):
    block = TransformerBlock(8, 2, 16, rng, "b")
    zero_outputs(block)
    x = rng.normal(size=(5, 8)).astype(np.float32)
    np.testing.assert_array_equal(block.forward(Tensor(x)).data, x)


def test_heads_must_divide_width():
    with pytest.raises(ConfigError):
        TransformerBlock(10, 4, 8, np.random.default_rng(0), "b")


@settings(max_examples=15, deadline=None)
@given(st.permutations(range(7)), st.integers(0, 100))
def test_block_permutation_equivariant(perm, seed):
    rng = np.random.default_rng(seed)
    perm = np.array(perm)
    with ad.precision(np.float64):
        block = TransformerBlock(8, 2, 16, rng, "b")
        x = rng.normal(size=(7, 8))
        pe = positional_encoding(7, 8)
        out = block.forward(add_positional(Tensor(x), pe)).data
        out_perm = block.forward(add_positional(Tensor(x[perm]), pe[perm])).data
    np.testing.assert_allclose(out_perm, out[perm], atol=1e-10)


def test_query_equal_tokens_returns_token(rng):
    z = rng.normal(size=4)
    pooled, alpha = task_query_attend(Tensor(np.tile(z, (5, 1)), dtype=np.float64), Tensor(rng.normal(size=4)))
    np.testing.assert_allclose(pooled.data, z, atol=1e-12)
    np.testing.assert_allclose(alpha.data, 0.2)


def test_query_argmax_limit():
    pooled, _ = task_query_attend(Tensor([[1.0, 0.0], [0.0, 1.0]], dtype=np.float64),
                                  Tensor([200.0, 0.0], dtype=np.float64))
    np.testing.assert_allclose(pooled.data, [1.0, 0.0], atol=1e-12)


@given(st.integers(0, 10_000))
def test_query_output_in_convex_hull(seed):
    rng = np.random.default_rng(seed)
    tokens = rng.normal(size=(6, 5)) * 3
    pooled, alpha = task_query_attend(Tensor(tokens, dtype=np.float64), Tensor(rng.normal(size=5) * 3, dtype=np.float64))
    assert np.all(pooled.data >= tokens.min(axis=0) - 1e-12)
    assert np.all(pooled.data <= tokens.max(axis=0) + 1e-12)
    assert alpha.data.sum() == pytest.approx(1.0)


def test_query_width_mismatch():
    with pytest.raises(ShapeError):
        task_query_attend(Tensor(np.zeros((3, 4))), Tensor(np.zeros(5)))


def make_module(**kw):
    kw.setdefault("perspectives", 2)
    return InteractionModule(6, 8, 2, 16, np.random.default_rng(0), **kw)


def test_zeroed_blocks_give_positional_input(rng):
    mod = make_module()
    for block in mod.blocks:
        zero_outputs(block)
    x = rng.normal(size=(6, 8)).astype(np.float32)
    rep, outs = mod.two_perspective_encode(Tensor(x))
    expected = add_positional(Tensor(x)).data
    assert rep.shape == (12, 8)
    np.testing.assert_array_equal(rep.data[:6], expected)
    np.testing.assert_array_equal(rep.data[6:], expected)


def test_random_init_halves_differ(rng):
    rep, _ = make_module().two_perspective_encode(Tensor(rng.normal(size=(6, 8))))
    assert np.abs(rep.data[:6] - rep.data[6:]).max() > 0


def test_tied_init_halves_equal(rng):
    rep, outs = make_module(tie_block_init=True).two_perspective_encode(Tensor(rng.normal(size=(6, 8))))
    np.testing.assert_array_equal(outs[0].data, outs[1].data)


def test_single_perspective():
    mod = make_module(perspectives=1)
    rep, outs = mod.two_perspective_encode(Tensor(np.ones((6, 8))))
    assert rep.shape == (6, 8) and len(outs) == 1 and len(mod.blocks) == 1


def test_feature_axis_concat():
    mod = make_module(concat_axis="features")
    feats, _ = mod.forward(Tensor(np.ones((2, 6, 8))))
    assert mod.query_width == 16
    assert feats["va"].shape == (2, 16)


def test_bad_perspectives():
    with pytest.raises(ConfigError):
        make_module(perspectives=3)


def test_every_parameter_receives_gradient(rng):
    mod = make_module()
    feats, _ = mod.forward(Tensor(rng.normal(size=(3, 6, 8))))
    backward(sum(((f * f).sum() for f in feats.values()), Tensor(0.0)))
    missing = [n for n, p in mod.named_parameters() if p.grad is None or not np.any(p.grad)]
    # key biases shift every score equally, so softmax cancels their gradient
    assert set(missing) <= {f"interaction.block{i}.attn.bk" for i in range(2)}
