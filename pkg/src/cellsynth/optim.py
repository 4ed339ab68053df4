"""AdamW with decoupled weight decay, and EMA weight tracking.

Both operate on flat name->array collections and return new
collections; nothing is mutated in place.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class OptState:
    """First/second moment estimates plus the shared step counter."""

    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    step: int = 0


def init_opt_state(params: dict) -> OptState:
    return OptState(m={k: np.zeros_like(p) for k, p in params.items()},
                    v={k: np.zeros_like(p) for k, p in params.items()},
                    step=0)


def adamw_step(params: dict, grads: dict, state: OptState, lr: float,
               beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8,
               weight_decay: float = 0.01) -> tuple[dict, OptState]:
    """One bias-corrected update: theta' = theta - lr*m_hat/(sqrt(v_hat)+eps) - lr*wd*theta."""
    step = state.step + 1
    bc1 = 1.0 - beta1 ** step
    bc2 = 1.0 - beta2 ** step
    new_params, new_m, new_v = {}, {}, {}
    for name, theta in params.items():
        g = grads[name]
        m = beta1 * state.m[name] + (1.0 - beta1) * g
        v = beta2 * state.v[name] + (1.0 - beta2) * (g * g)
        m_hat = m / bc1
        v_hat = v / bc2
        update = lr * (m_hat / (np.sqrt(v_hat) + eps)) + lr * weight_decay * theta
        new_params[name] = (theta - update).astype(theta.dtype, copy=False)
        new_m[name] = m.astype(theta.dtype, copy=False)
        new_v[name] = v.astype(theta.dtype, copy=False)
    return new_params, OptState(m=new_m, v=new_v, step=step)


def init_ema(params: dict) -> dict:
    return {k: p.copy() for k, p in params.items()}


def ema_update(ema: dict, params: dict, decay: float) -> dict:
    """ema' = decay*ema + (1-decay)*params, elementwise."""
    return {k: (decay * ema[k] + (1.0 - decay) * params[k]).astype(ema[k].dtype, copy=False)
            for k in ema}
