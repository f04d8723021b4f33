"""SGD with momentum, weight decay and a step learning-rate schedule.

Update: v <- mu*v - lr*(g + wd*p); p <- p + v.  Every decay_period
iterations the learning rate is multiplied by decay_factor (default 0.2,
i.e. reduced by 80%; the factor is a config key since conventions for
"decay by 0.2" differ).
"""

from dataclasses import dataclass

import numpy as np


class NonFiniteGradientError(RuntimeError):
    pass


@dataclass
class OptimizerState:
    lr: float = 1e-3
    momentum: float = 0.99
    weight_decay: float = 5e-3
    decay_period: int = 2000
    decay_factor: float = 0.2
    iteration: int = 0

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("learning rate must be positive")


def sgd_step(params, state):
    """One momentum-SGD step over Params carrying .grad and .velocity."""
    for p in params:
        g = p.grad
        if g is None:
            g = np.zeros_like(p.data)
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradientError(
                f"non-finite gradient in {getattr(p, 'name', '?')} "
                f"at iteration {state.iteration}")
        v = state.momentum * p.velocity - state.lr * (
            g.astype(p.data.dtype, copy=False) + state.weight_decay * p.data)
        p.velocity = v
        p.data = p.data + v
    state.iteration += 1
    if state.decay_period > 0 and state.iteration % state.decay_period == 0:
        state.lr *= state.decay_factor
    return state
