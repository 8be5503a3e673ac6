import numpy as np
import pytest
from pydantic import ValidationError

from src.errors import ShapeMismatchError
from src.model import (
    ModelConfig,
    PatchToken,
    PatchTokens,
    TokenKind,
    attention_stack,
    decode_patch,
    decode_patches,
    encode_patch,
    encode_patches,
    init_patch_model,
    resolution_encoding,
    rope_2d,
)
from src.model.layers import attention, init_attention
from src.numerics import ParamSet, RngStream, Tensor


def test_rope_preserves_norm():
    rng = np.random.default_rng(0)
    for _ in range(20):
        v = rng.normal(size=16)
        coord = tuple(rng.uniform(-50, 50, size=2))
        assert abs(np.linalg.norm(rope_2d(v, coord)) - np.linalg.norm(v)) <= 1e-12


def test_rope_dot_product_depends_only_on_offset():
    rng = np.random.default_rng(1)
    q, k = rng.normal(size=8), rng.normal(size=8)
    a, b = np.array([3.0, 5.0]), np.array([1.0, 7.0])
    base = rope_2d(q, tuple(a)) @ rope_2d(k, tuple(b))
    for shift in rng.uniform(-20, 20, size=(10, 2)):
        moved = rope_2d(q, tuple(a + shift)) @ rope_2d(k, tuple(b + shift))
        assert abs(moved - base) <= 1e-8


def test_rope_rejects_head_dim_not_divisible_by_four():
    with pytest.raises(ShapeMismatchError):
        rope_2d(np.ones(6), (0.0, 0.0))


def test_rope_identity_at_origin():
    v = np.arange(8.0)
    np.testing.assert_allclose(rope_2d(v, (0.0, 0.0)), v, atol=1e-15)


def test_attention_logits_translation_invariant():
    d, heads = 8, 2
    params = ParamSet()
    init_attention(params, "attn", d, RngStream(0))
    x = Tensor(np.random.default_rng(2).normal(size=(5, d)))
    coords = np.array([[0, 0], [0, 1], [1, 0], [2, 3], [4, 4]], dtype=np.float64)
    out = attention(params, "attn", x, x, heads, coords, coords).numpy()
    shifted = attention(params, "attn", x, x, heads, coords + 17.0, coords + 17.0).numpy()
    np.testing.assert_allclose(shifted, out, atol=1e-8)


def test_resolution_encoding():
    enc = resolution_encoding(64, 8)
    assert enc.shape == (8,)
    assert enc[0] == pytest.approx(np.sin(64.0))
    assert enc[1] == pytest.approx(np.cos(64.0))
    assert not np.allclose(resolution_encoding(32, 8), enc)
    with pytest.raises(ShapeMismatchError):
        resolution_encoding(16, 7)
    with pytest.raises(ValueError):
        resolution_encoding(-1, 8)


def test_model_config_validation():
    assert ModelConfig().head_dim == 16
    with pytest.raises(ValidationError):
        ModelConfig(d=30, heads=4)
    with pytest.raises(ValidationError):
        ModelConfig(d=24, heads=4)
    with pytest.raises(ValidationError):
        ModelConfig(patch_size=7)
    with pytest.raises(ValidationError):
        ModelConfig(channels=[8])


def test_patch_token_requires_nonnegative_coords():
    with pytest.raises(ValidationError):
        PatchToken(embedding=Tensor(np.zeros(8)), coord=(-1.0, 0.0), kind=TokenKind.TARGET)


def test_encode_attend_decode_shapes(tiny_model):
    params = init_patch_model(tiny_model, RngStream(0))
    p = tiny_model.patch_size
    images = np.random.default_rng(3).uniform(size=(5, p, p))
    labels = (images > 0.5).astype(np.float64)
    emb, skips = encode_patches(tiny_model, params, images, labels, 32)
    assert emb.shape == (5, tiny_model.d)
    tokens = PatchTokens(
        embeddings=emb,
        coords=np.array([[0, 0], [0, 1], [1, 0], [1, 1], [2, 2]], dtype=np.float64),
        kinds=np.array([0, 0, 1, 1, 1]),
    )
    attended = attention_stack(tiny_model, params, tokens)
    assert attended.shape == (5, tiny_model.d)
    logits = decode_patches(tiny_model, params, attended, skips)
    assert logits.shape == (5, p, p)


def test_single_patch_helpers_match_batched(tiny_model):
    params = init_patch_model(tiny_model, RngStream(0))
    p = tiny_model.patch_size
    image = np.random.default_rng(4).uniform(size=(p, p))
    emb, skips = encode_patch(tiny_model, params, image, None, 16)
    batched, batched_skips = encode_patches(tiny_model, params, image[None], None, 16)
    np.testing.assert_allclose(emb.numpy(), batched.numpy()[0])
    np.testing.assert_allclose(
        decode_patch(tiny_model, params, emb, skips).numpy(),
        decode_patches(tiny_model, params, batched, batched_skips).numpy()[0],
    )


def test_resolution_conditioning_changes_embedding(tiny_model):
    params = init_patch_model(tiny_model, RngStream(0))
    image = np.full((1, 8, 8), 0.5)
    a, _ = encode_patches(tiny_model, params, image, None, 16)
    b, _ = encode_patches(tiny_model, params, image, None, 64)
    assert not np.allclose(a.numpy(), b.numpy())


def test_type_embedding_distinguishes_target_from_context(tiny_model):
    params = init_patch_model(tiny_model, RngStream(0))
    emb = Tensor(np.random.default_rng(5).normal(size=(2, tiny_model.d)))
    coords = np.zeros((2, 2))
    as_target = attention_stack(tiny_model, params, PatchTokens(embeddings=emb, coords=coords, kinds=np.array([0, 0])))
    kinds = np.array([int(TokenKind.TARGET), int(TokenKind.CONTEXT_JOINT)])
    as_context = attention_stack(tiny_model, params, PatchTokens(embeddings=emb, coords=coords, kinds=kinds))
    assert params["layers.0.type"].shape == (len(TokenKind), tiny_model.d) == (2, tiny_model.d)
    assert not np.allclose(as_target.numpy()[1], as_context.numpy()[1])


def test_attention_stack_rejects_empty_and_misshaped(tiny_model):
    params = init_patch_model(tiny_model, RngStream(0))
    empty = PatchTokens(embeddings=Tensor(np.zeros((0, tiny_model.d))), coords=np.zeros((0, 2)), kinds=np.zeros(0, int))
    with pytest.raises(ValueError):
        attention_stack(tiny_model, params, empty)
    with pytest.raises(ShapeMismatchError):
        encode_patches(tiny_model, params, np.zeros((2, 4, 4)), None, 16)


def test_init_is_deterministic(tiny_model):
    a = init_patch_model(tiny_model, RngStream(5))
    b = init_patch_model(tiny_model, RngStream(5))
    assert a.names() == b.names()
    for name in a.names():
        np.testing.assert_array_equal(a[name].numpy(), b[name].numpy())


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_attention_stack_is_permutation_equivariant(tiny_model, seed):
    params = init_patch_model(tiny_model, RngStream(seed))
    rng = np.random.default_rng(seed)
    n = 7
    tokens = PatchTokens(
        embeddings=Tensor(rng.normal(size=(n, tiny_model.d))),
        coords=rng.integers(0, 6, size=(n, 2)).astype(np.float64),
        kinds=rng.integers(0, len(TokenKind), size=n),
    )
    order = rng.permutation(n)
    permuted = PatchTokens(
        embeddings=Tensor(tokens.embeddings.numpy()[order]),
        coords=tokens.coords[order],
        kinds=tokens.kinds[order],
    )
    out = attention_stack(tiny_model, params, tokens).numpy()
    out_permuted = attention_stack(tiny_model, params, permuted).numpy()
    np.testing.assert_allclose(out_permuted, out[order], rtol=1e-10, atol=1e-12)
