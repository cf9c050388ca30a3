import numpy as np
import pytest

from mfsb.core.encoders import GRID_SIZE, ImageEncoder, TextEncoder, encode_image, encode_text, token_grid
from mfsb.core.prompts import ELEMENT_ORDER
from mfsb.core.tensor import Tensor
from mfsb.utils.errors import ConfigError, ShapeError


class TestTextEncoder:
    def test_shapes(self, rng):
        enc = TextEncoder(8, rng)
        tokens, pooled = encode_text(rng.normal(size=(5, 3, 8)), enc)
        assert tokens.shape == (5, 3, 8)
        assert pooled.shape == (5, 8)

    def test_single_token_pool(self, rng):
        enc = TextEncoder(8, rng)
        tokens, pooled = encode_text(rng.normal(size=(1, 8)), enc)
        np.testing.assert_allclose(pooled.data, tokens.data[0] @ enc.projection.data, atol=1e-12)

    def test_frozen(self, rng):
        enc = TextEncoder(8, rng)
        assert not any(t.requires_grad for t in enc.frozen().values())

    def test_empty_sequence(self, rng):
        with pytest.raises(ShapeError):
            encode_text(np.zeros((0, 8)), TextEncoder(8, rng))


class TestImageEncoder:
    def test_dimension_must_fit_grid(self, rng):
        with pytest.raises(ConfigError):
            ImageEncoder(16, 10, rng)

    def test_zero_input(self, rng):
        enc = ImageEncoder(16, 8, rng)
        sequences, pooled, grid = encode_image(np.zeros((2, 16)), enc)
        assert grid.shape == (2, GRID_SIZE, 8)
        assert not grid.data.any()
        for e in ELEMENT_ORDER:
            assert not sequences[e].data.any()
            assert not pooled[e].data.any()
            assert pooled[e].shape == (2, 8)

    def test_distinct_inputs_distinct_grids(self, rng):
        enc = ImageEncoder(16, 8, rng)
        x = rng.normal(size=(100, 2, 16))
        for a, b in x:
            assert not np.allclose(token_grid(a, enc).data, token_grid(b, enc).data)

    def test_trainable_heads_only(self, rng):
        enc = ImageEncoder(16, 8, rng)
        assert all(head.requires_grad for head in enc.heads.values())
        assert not any(t.requires_grad for t in enc.frozen().values())

    def test_input_length_checked(self, rng):
        with pytest.raises(ShapeError):
            token_grid(Tensor(np.zeros(12)), ImageEncoder(16, 8, rng))
