"""
Adam
Bias-corrected Adam over named tensors
"""

from dataclasses import dataclass, field
from typing import Dict, Mapping

import numpy as np

from mfsb.core.tensor import Tensor
from mfsb.utils.errors import ContractError


@dataclass
class AdamState:
    lr: float = 5e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(
    params: Mapping[str, Tensor],
    grads: Mapping[str, np.ndarray],
    state: AdamState,
) -> AdamState:
    """
    One Adam update, in place on every trainable tensor of ``params``

    Tensors with ``requires_grad=False`` are left untouched.

    Raises:
        ContractError: a trainable parameter has no gradient
    """
    trainable = {name: p for name, p in params.items() if p.requires_grad}
    missing = sorted(name for name in trainable if name not in grads)
    if missing:
        raise ContractError("Missing gradient for trainable parameters", details={"params": missing})

    state.step += 1
    t = state.step
    correction1 = 1.0 - state.beta1 ** t
    correction2 = 1.0 - state.beta2 ** t

    for name, param in trainable.items():
        g = np.asarray(grads[name], dtype=np.float64)
        if g.shape != param.shape:
            raise ContractError(f"Gradient shape {g.shape} != parameter shape {param.shape} for {name}")
        m = state.m.get(name)
        v = state.v.get(name)
        if m is None:
            m = np.zeros_like(param.data)
            v = np.zeros_like(param.data)
        m = state.beta1 * m + (1.0 - state.beta1) * g
        v = state.beta2 * v + (1.0 - state.beta2) * g * g
        state.m[name], state.v[name] = m, v

        m_hat = m / correction1
        v_hat = v / correction2
        param.data -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)

    return state
