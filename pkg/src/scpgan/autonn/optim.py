from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import LengthMismatch
from .nets import ParamSet


@dataclass
class AdamState:
    size: int
    lr: float = 5e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: np.ndarray = field(default=None, repr=False)
    v: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.m is None:
            self.m = np.zeros(self.size)
        if self.v is None:
            self.v = np.zeros(self.size)
        if self.m.shape != (self.size,) or self.v.shape != (self.size,):
            raise LengthMismatch("moment arrays must match the parameter count")


def adam_step(params: ParamSet, direction: np.ndarray, st: AdamState) -> np.ndarray:
    """Apply one Adam update along ``direction`` (a descent gradient, possibly corrected).

    Returns the parameter delta that was applied.
    """
    direction = np.asarray(direction, dtype=np.float64)
    if direction.shape != (params.size,) or st.size != params.size:
        raise LengthMismatch(f"direction length {direction.shape} != parameter count {params.size}")
    st.step += 1
    st.m *= st.beta1
    st.m += (1.0 - st.beta1) * direction
    st.v *= st.beta2
    st.v += (1.0 - st.beta2) * direction * direction
    m_hat = st.m / (1.0 - st.beta1 ** st.step)
    v_hat = st.v / (1.0 - st.beta2 ** st.step)
    delta = -st.lr * m_hat / (np.sqrt(v_hat) + st.eps)
    params.assign(params.flatten() + delta)
    return delta
