"""
Encoders
Frozen random text/image encoders and the trainable per-element visual heads
"""

from typing import Dict, Tuple, Union

import numpy as np

from mfsb.core.prompts import ELEMENT_ORDER, Element
from mfsb.core.tensor import Tensor, as_tensor, matmul, mean, reshape, tanh
from mfsb.utils.errors import ConfigError, ShapeError

GRID_SIZE = 4
HEAD_INIT_STD = 0.02


class TextEncoder:
    """E_t: token mixing followed by a mean-pool projection"""

    def __init__(self, d: int, rng: np.random.Generator):
        scale = 1.0 / np.sqrt(d)
        self.mixing = Tensor(rng.normal(0.0, scale, size=(d, d)))
        self.projection = Tensor(rng.normal(0.0, scale, size=(d, d)))

    @property
    def d(self) -> int:
        return self.mixing.shape[0]

    def frozen(self) -> Dict[str, Tensor]:
        return {"text.mixing": self.mixing, "text.projection": self.projection}


def encode_text(prompt_seq: Union[Tensor, np.ndarray], enc: TextEncoder) -> Tuple[Tensor, Tensor]:
    """
    Token features and pooled text vector of one or more prompts

    Args:
        prompt_seq: [..., L, d] prompt embeddings
        enc: Text encoder

    Returns:
        (tokens [..., L, d], pooled [..., d])
    """
    prompt_seq = as_tensor(prompt_seq)
    if prompt_seq.ndim < 2 or prompt_seq.shape[-2] < 1:
        raise ShapeError("encode_text needs at least one token", [prompt_seq.shape])
    tokens = tanh(matmul(prompt_seq, enc.mixing))
    return tokens, pool_text(tokens, enc)


def pool_text(tokens: Tensor, enc: TextEncoder) -> Tensor:
    """mean over tokens, then the frozen projection"""
    pooled = mean(tokens, axis=-2, keepdims=True)
    return reshape(matmul(pooled, enc.projection), tokens.shape[:-2] + (tokens.shape[-1],))


class ImageEncoder:
    """E_v: frozen backbone and token regrid, plus one trainable head per element"""

    def __init__(self, d_in: int, d: int, rng: np.random.Generator, head_std: float = HEAD_INIT_STD):
        if d % GRID_SIZE != 0:
            raise ConfigError(f"d={d} must be divisible by {GRID_SIZE}", key="d")
        self.d_in = d_in
        self.d = d
        self.backbone = Tensor(rng.normal(0.0, 1.0 / np.sqrt(d_in), size=(d_in, d)))
        self.regrid = Tensor(rng.normal(0.0, 1.0 / np.sqrt(d // GRID_SIZE), size=(d // GRID_SIZE, d)))
        self.heads: Dict[Element, Tensor] = {
            element: Tensor(np.eye(d) + rng.normal(0.0, head_std, size=(d, d)), requires_grad=True)
            for element in ELEMENT_ORDER
        }

    def frozen(self) -> Dict[str, Tensor]:
        return {"image.backbone": self.backbone, "image.regrid": self.regrid}


def token_grid(x: Union[Tensor, np.ndarray], enc: ImageEncoder) -> Tensor:
    """Shared visual token grid [..., G, d]"""
    x = as_tensor(x)
    if x.shape[-1] != enc.d_in:
        raise ShapeError(f"Image feature length {x.shape[-1]} != d_in {enc.d_in}", [x.shape])
    hidden = tanh(matmul(reshape(x, x.shape[:-1] + (1, enc.d_in)), enc.backbone))
    tokens = reshape(hidden, x.shape[:-1] + (GRID_SIZE, enc.d // GRID_SIZE))
    return matmul(tokens, enc.regrid)


def encode_image(
    x: Union[Tensor, np.ndarray],
    enc: ImageEncoder,
) -> Tuple[Dict[Element, Tensor], Dict[Element, Tensor], Tensor]:
    """
    Decompose image features into pair, attribute and object views

    Args:
        x: [..., d_in] raw features
        enc: Image encoder

    Returns:
        (per-element sequences [..., G, d], per-element pooled [..., d], grid [..., G, d])
    """
    grid = token_grid(x, enc)
    sequences = {element: matmul(grid, head) for element, head in enc.heads.items()}
    pooled = {element: pool_visual(seq) for element, seq in sequences.items()}
    return sequences, pooled, grid


def pool_visual(sequence: Tensor) -> Tensor:
    return mean(sequence, axis=-2)
