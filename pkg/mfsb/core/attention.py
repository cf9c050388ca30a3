"""
Cross-Attention
Multi-head scaled dot-product attention and the residual cross-attention block
"""

from dataclasses import dataclass
from typing import Dict, Tuple, Union

import numpy as np

from mfsb.core.tensor import (
    Tensor,
    as_tensor,
    concat,
    matmul,
    softmax_last_dim,
    transpose,
)
from mfsb.utils.errors import ConfigError, EmptyContextError, ShapeError


@dataclass
class AttentionParams:
    """Projection weights of one cross-attention arrow"""
    w_q: Tensor
    w_k: Tensor
    w_v: Tensor
    w_o: Tensor
    n_heads: int = 1

    def __post_init__(self):
        shapes = {w.shape for w in self.matrices().values()}
        if len(shapes) != 1:
            raise ShapeError("Attention projections must share one shape", sorted(shapes))
        shape = shapes.pop()
        if len(shape) != 2 or shape[0] != shape[1]:
            raise ShapeError(f"Attention projections must be square, got {shape}", [shape])
        if self.n_heads < 1 or shape[0] % self.n_heads != 0:
            raise ConfigError(
                f"n_heads={self.n_heads} must divide model dimension {shape[0]}",
                key="n_heads"
            )

    @property
    def d(self) -> int:
        return self.w_q.shape[0]

    def matrices(self) -> Dict[str, Tensor]:
        return {"w_q": self.w_q, "w_k": self.w_k, "w_v": self.w_v, "w_o": self.w_o}

    @classmethod
    def create(
        cls,
        d: int,
        n_heads: int,
        rng: np.random.Generator,
        std: float = 0.02,
        zero_output: bool = True,
    ) -> "AttentionParams":
        """
        Random projections; W_o starts at zero so the block is an identity map

        Args:
            d: Model dimension
            n_heads: Number of heads (must divide d)
            rng: Initialization stream
            std: Gaussian scale of the random projections
            zero_output: Start W_o at zero (residual identity at init)
        """
        w_q, w_k, w_v, w_o = (rng.normal(0.0, std, size=(d, d)) for _ in range(4))
        if zero_output:
            w_o = np.zeros((d, d))
        return cls(
            w_q=Tensor(w_q, requires_grad=True),
            w_k=Tensor(w_k, requires_grad=True),
            w_v=Tensor(w_v, requires_grad=True),
            w_o=Tensor(w_o, requires_grad=True),
            n_heads=n_heads,
        )

    @classmethod
    def zeros(cls, d: int, n_heads: int = 1) -> "AttentionParams":
        return cls(*(Tensor(np.zeros((d, d)), requires_grad=True) for _ in range(4)), n_heads=n_heads)


def scaled_dot_attention(
    q: Union[Tensor, np.ndarray],
    k: Union[Tensor, np.ndarray],
    v: Union[Tensor, np.ndarray],
    n_heads: int = 1,
    return_weights: bool = False,
) -> Union[Tensor, Tuple[Tensor, Tensor]]:
    """
    softmax(q k^T / sqrt(d_head)) v per head, heads merged by concatenation.

    Inputs are [Lq, d], [Lk, d], [Lk, d] or carry matching leading batch axes.

    Returns:
        Attended values [..., Lq, d]; with ``return_weights`` also the weights
        [..., n_heads, Lq, Lk]

    Raises:
        EmptyContextError: Lk == 0
        ShapeError: k/v lengths or model dimensions differ
    """
    q, k, v = as_tensor(q), as_tensor(k), as_tensor(v)
    if q.ndim < 2 or k.ndim < 2 or v.ndim < 2:
        raise ShapeError("Attention inputs must be [L, d] matrices", [q.shape, k.shape, v.shape])
    if k.shape[-2] == 0:
        raise EmptyContextError()
    if k.shape[-2] != v.shape[-2]:
        raise ShapeError(
            f"Keys {k.shape} and values {v.shape} differ in length", [k.shape, v.shape]
        )
    d = q.shape[-1]
    if k.shape[-1] != d or v.shape[-1] != d:
        raise ShapeError(
            f"Model dimensions differ: q {q.shape}, k {k.shape}, v {v.shape}",
            [q.shape, k.shape, v.shape],
        )
    if n_heads < 1 or d % n_heads != 0:
        raise ConfigError(f"n_heads={n_heads} must divide model dimension {d}", key="n_heads")

    d_head = d // n_heads
    scale = 1.0 / np.sqrt(d_head)
    outputs, weights = [], []
    for h in range(n_heads):
        cols = (Ellipsis, slice(h * d_head, (h + 1) * d_head))
        q_h, k_h, v_h = (q, k, v) if n_heads == 1 else (q[cols], k[cols], v[cols])
        attn = softmax_last_dim(matmul(q_h, transpose(k_h)) * scale)
        outputs.append(matmul(attn, v_h))
        weights.append(attn)

    out = outputs[0] if n_heads == 1 else concat(outputs, axis=-1)
    if return_weights:
        w = Tensor(np.stack([a.data for a in weights], axis=-3))
        return out, w
    return out


def cross_attention_block(
    q: Union[Tensor, np.ndarray],
    k: Union[Tensor, np.ndarray],
    v: Union[Tensor, np.ndarray],
    params: AttentionParams,
) -> Tensor:
    """Residual cross-attention: q + Attn(q W_q, k W_k, v W_v) W_o"""
    q = as_tensor(q)
    if q.shape[-1] != params.d:
        raise ShapeError(
            f"Query dimension {q.shape[-1]} does not match projections {params.d}",
            [q.shape, params.w_q.shape],
        )
    attended = scaled_dot_attention(
        matmul(q, params.w_q),
        matmul(as_tensor(k), params.w_k),
        matmul(as_tensor(v), params.w_v),
        n_heads=params.n_heads,
    )
    return q + matmul(attended, params.w_o)
