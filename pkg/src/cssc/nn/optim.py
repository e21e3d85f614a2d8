"""AdaMax (the infinity-norm variant of Adam)."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class AdaMax:
    learning_rate: float = 0.02
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    moment: dict = field(default_factory=dict)
    inf_norm: dict = field(default_factory=dict)

    def step(self, params: dict, grads: dict) -> dict:
        """Return updated copies of ``params``; state is advanced in place."""
        self.step_count += 1
        lr_t = self.learning_rate / (1.0 - self.beta1 ** self.step_count)
        out = {}
        for name, p in params.items():
            g = np.asarray(grads[name], dtype=np.float64)
            if g.shape != np.shape(p):
                raise ValueError(f"gradient for {name} has shape {g.shape}, "
                                 f"parameter has {np.shape(p)}")
            m = self.moment.get(name)
            u = self.inf_norm.get(name)
            if m is None:
                m = np.zeros_like(g)
                u = np.zeros_like(g)
            m = self.beta1 * m + (1.0 - self.beta1) * g
            u = np.maximum(self.beta2 * u, np.abs(g))
            self.moment[name] = m
            self.inf_norm[name] = u
            out[name] = p - lr_t * m / (u + self.eps)
        return out


def adamax_step(state: AdaMax, params: dict, grads: dict) -> dict:
    return state.step(params, grads)
