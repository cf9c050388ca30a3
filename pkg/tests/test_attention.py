import numpy as np
import pytest

from mfsb.core.attention import AttentionParams, cross_attention_block, scaled_dot_attention
from mfsb.core.tensor import Tensor, check_gradients, tensor_sum
from mfsb.utils.errors import ConfigError, EmptyContextError, ShapeError


def loop_attention(q, k, v, n_heads):
    """Reference: one query, one head, one key at a time"""
    lq, d = q.shape
    d_head = d // n_heads
    out = np.zeros((lq, d))
    for h in range(n_heads):
        cols = slice(h * d_head, (h + 1) * d_head)
        for i in range(lq):
            scores = np.array([
                sum(q[i, cols][c] * k[j, cols][c] for c in range(d_head)) / np.sqrt(d_head)
                for j in range(k.shape[0])
            ])
            weights = np.exp(scores - scores.max())
            weights /= weights.sum()
            for j in range(k.shape[0]):
                out[i, cols] += weights[j] * v[j, cols]
    return out


class TestScaledDotAttention:
    def test_single_key_passes_value_through(self, rng):
        q = rng.normal(size=(3, 4))
        v = rng.normal(size=(1, 4))
        out = scaled_dot_attention(q, rng.normal(size=(1, 4)), v)
        np.testing.assert_array_equal(out.data, np.repeat(v, 3, axis=0))

    def test_identical_keys_average_values(self, rng):
        k = np.tile(rng.normal(size=(1, 4)), (3, 1))
        v = rng.normal(size=(3, 4))
        out = scaled_dot_attention(rng.normal(size=(2, 4)), k, v)
        np.testing.assert_allclose(out.data, np.tile(v.mean(axis=0), (2, 1)), atol=1e-12)

    @pytest.mark.parametrize("n_heads", [1, 2, 4])
    def test_matches_loop_oracle(self, rng, n_heads):
        q, k, v = rng.normal(size=(2, 4)), rng.normal(size=(3, 4)), rng.normal(size=(3, 4))
        out = scaled_dot_attention(q, k, v, n_heads=n_heads)
        np.testing.assert_allclose(out.data, loop_attention(q, k, v, n_heads), atol=1e-10)

    def test_weights_are_distributions(self, rng):
        _, weights = scaled_dot_attention(
            rng.normal(size=(5, 8)), rng.normal(size=(6, 8)), rng.normal(size=(6, 8)),
            n_heads=2, return_weights=True,
        )
        assert weights.shape == (2, 5, 6)
        assert np.all(weights.data >= 0)
        np.testing.assert_allclose(weights.data.sum(axis=-1), np.ones((2, 5)), atol=1e-9)

    def test_joint_key_value_permutation(self, rng):
        q, k, v = rng.normal(size=(2, 4)), rng.normal(size=(5, 4)), rng.normal(size=(5, 4))
        perm = rng.permutation(5)
        a = scaled_dot_attention(q, k, v, n_heads=2).data
        b = scaled_dot_attention(q, k[perm], v[perm], n_heads=2).data
        np.testing.assert_allclose(a, b, atol=1e-9)

    def test_batched_context(self, rng):
        q = rng.normal(size=(2, 4))
        k = rng.normal(size=(3, 5, 4))
        out = scaled_dot_attention(q, k, k)
        assert out.shape == (3, 2, 4)
        np.testing.assert_allclose(out.data[1], scaled_dot_attention(q, k[1], k[1]).data)

    def test_empty_context(self, rng):
        with pytest.raises(EmptyContextError):
            scaled_dot_attention(rng.normal(size=(2, 4)), np.zeros((0, 4)), np.zeros((0, 4)))

    def test_key_value_length_mismatch(self, rng):
        with pytest.raises(ShapeError):
            scaled_dot_attention(rng.normal(size=(2, 4)), rng.normal(size=(3, 4)), rng.normal(size=(2, 4)))

    def test_dimension_mismatch(self, rng):
        with pytest.raises(ShapeError):
            scaled_dot_attention(rng.normal(size=(2, 4)), rng.normal(size=(3, 6)), rng.normal(size=(3, 6)))

    def test_heads_must_divide_dimension(self, rng):
        x = rng.normal(size=(2, 6))
        with pytest.raises(ConfigError):
            scaled_dot_attention(x, x, x, n_heads=4)


class TestCrossAttentionBlock:
    def test_zero_weights_are_identity(self, rng):
        q = rng.normal(size=(4, 8))
        kv = rng.normal(size=(3, 8))
        out = cross_attention_block(q, kv, kv, AttentionParams.zeros(8, n_heads=2))
        np.testing.assert_array_equal(out.data, q)

    def test_identity_projections_single_token(self, rng):
        q, v = rng.normal(size=(1, 4)), rng.normal(size=(1, 4))
        eye = np.eye(4)
        params = AttentionParams(*(Tensor(eye) for _ in range(4)))
        out = cross_attention_block(q, rng.normal(size=(1, 4)), v, params)
        np.testing.assert_allclose(out.data, q + v, atol=1e-12)

    def test_default_init_is_identity(self, rng):
        params = AttentionParams.create(8, 2, rng)
        q = rng.normal(size=(3, 8))
        kv = rng.normal(size=(5, 8))
        np.testing.assert_array_equal(cross_attention_block(q, kv, kv, params).data, q)

    def test_gradients_of_all_projections(self, rng):
        params = AttentionParams.create(4, 2, rng, std=0.5, zero_output=False)
        q = Tensor(rng.normal(size=(2, 4)))
        k = Tensor(rng.normal(size=(3, 4)))
        v = Tensor(rng.normal(size=(3, 4)))
        mix = Tensor(rng.normal(size=(2, 4)))

        def f():
            return tensor_sum(cross_attention_block(q, k, v, params) * mix)

        assert check_gradients(f, list(params.matrices().values())) < 1e-4

    def test_projection_shapes_validated(self):
        with pytest.raises(ShapeError):
            AttentionParams(
                Tensor(np.zeros((4, 4))), Tensor(np.zeros((4, 4))),
                Tensor(np.zeros((4, 4))), Tensor(np.zeros((4, 3))),
            )

    def test_query_dimension_checked(self, rng):
        with pytest.raises(ShapeError):
            cross_attention_block(rng.normal(size=(2, 6)), rng.normal(size=(2, 4)), rng.normal(size=(2, 4)),
                                  AttentionParams.zeros(4))
