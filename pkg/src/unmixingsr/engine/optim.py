"""Bias-corrected Adam with post-step nonnegativity projection."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigurationError
from .nn import Parameter


@dataclass
class AdamState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.99
    eps: float = 1e-8
    weight_decay: float = 0.0


class Adam:
    """Adam over a fixed list of named parameters.

    Parameters with ``constraint == "nonnegative"`` are clamped at zero after
    every update. Frozen (non-trainable) parameters are skipped entirely.
    """

    def __init__(self, named_params, beta1: float = 0.9, beta2: float = 0.99,
                 eps: float = 1e-8, weight_decay: float = 0.0):
        self.params: dict[str, Parameter] = {n: p for n, p in named_params if p.trainable}
        self.state = AdamState(beta1=beta1, beta2=beta2, eps=eps, weight_decay=weight_decay)
        for name, p in self.params.items():
            self.state.m[name] = np.zeros_like(p.value)
            self.state.v[name] = np.zeros_like(p.value)

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()

    def step(self, lr: float, grads: dict[str, np.ndarray] | None = None) -> None:
        """Apply one update; ``grads`` defaults to each parameter's accumulated ``.grad``."""
        st = self.state
        st.t += 1
        bc1 = 1.0 - st.beta1 ** st.t
        bc2 = 1.0 - st.beta2 ** st.t
        for name, p in self.params.items():
            g = p.grad if grads is None else grads[name]
            if st.weight_decay:
                g = g + st.weight_decay * p.value
            m, v = st.m[name], st.v[name]
            if m.shape != p.shape:
                raise ConfigurationError(f"moment shape {m.shape} does not match {name} {p.shape}")
            m *= st.beta1
            m += (1.0 - st.beta1) * g
            v *= st.beta2
            v += (1.0 - st.beta2) * (g * g)
            p.value -= lr * (m / bc1) / (np.sqrt(v / bc2) + st.eps)
            p.project()

    def load_state(self, m: dict[str, np.ndarray], v: dict[str, np.ndarray], t: int) -> None:
        for name in self.params:
            if m[name].shape != self.params[name].shape or v[name].shape != self.params[name].shape:
                raise ConfigurationError(f"moment shape mismatch for {name}")
            self.state.m[name] = np.array(m[name], dtype=np.float64)
            self.state.v[name] = np.array(v[name], dtype=np.float64)
        self.state.t = int(t)


def adam_step(params: dict[str, Parameter], grads: dict[str, np.ndarray], state: AdamState,
              lr: float) -> None:
    """Functional form: update ``params`` in place from explicit ``grads`` and ``state``."""
    opt = Adam.__new__(Adam)
    opt.params = params
    opt.state = state
    for name, p in params.items():
        state.m.setdefault(name, np.zeros_like(p.value))
        state.v.setdefault(name, np.zeros_like(p.value))
    opt.step(lr, grads)
