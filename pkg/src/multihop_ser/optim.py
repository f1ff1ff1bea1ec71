"""Adam, global-norm clipping and seeded random streams."""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field

import numpy as np


def derive_rng(seed, *keys):
    """Independent generator for ``(seed, *keys)``.

    String keys are hashed, so a stream depends only on its name and not on
    how many other streams were drawn before it.
    """
    words = [int(seed) & 0xFFFFFFFF]
    for key in keys:
        if isinstance(key, str):
            words.append(zlib.crc32(key.encode("utf-8")))
        else:
            words.append(int(key) & 0xFFFFFFFF)
    return np.random.default_rng(np.random.SeedSequence(words))


@dataclass
class ClipConfig:
    max_norm: float = 1.0

    def __post_init__(self):
        if not self.max_norm > 0:
            raise ValueError(f"max_norm must be positive, got {self.max_norm}")


def global_norm(params):
    total = 0.0
    for p in params:
        if p.grad is not None:
            total += float(np.sum(p.grad * p.grad))
    return float(np.sqrt(total))


def clip_global_norm(params, cfg=None):
    """Rescale all gradients together so their joint L2 norm is at most
    ``cfg.max_norm``.  Returns the norm measured before clipping."""
    cfg = cfg if cfg is not None else ClipConfig()
    if isinstance(cfg, (int, float)):
        cfg = ClipConfig(float(cfg))
    params = list(params)
    norm = global_norm(params)
    if norm > cfg.max_norm:
        scale = cfg.max_norm / norm
        for p in params:
            if p.grad is not None:
                p.grad *= scale
    return norm


@dataclass
class OptimizerState:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step_count: int = 0
    first_moment: dict = field(default_factory=dict)
    second_moment: dict = field(default_factory=dict)


class Adam:
    """Adam with bias correction over a name -> Tensor mapping."""

    def __init__(self, params, learning_rate=1e-3, beta1=0.9, beta2=0.999, epsilon=1e-8):
        if learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        self.params = dict(params)
        self.state = OptimizerState(learning_rate, beta1, beta2, epsilon)
        for name, p in self.params.items():
            self.state.first_moment[name] = np.zeros_like(p.data)
            self.state.second_moment[name] = np.zeros_like(p.data)

    def step(self):
        adam_step(self.params, self.state)

    def zero_grad(self):
        for p in self.params.values():
            p.zero_grad()


def adam_step(params, state, grads=None):
    """One Adam update in place.  ``grads`` defaults to each param's ``.grad``;
    a missing gradient counts as zero."""
    s = state
    s.step_count += 1
    t = s.step_count
    c1 = 1.0 - s.beta1**t
    c2 = 1.0 - s.beta2**t
    for name, p in params.items():
        g = p.grad if grads is None else grads.get(name)
        if g is None:
            g = np.zeros_like(p.data)
        elif g.shape != p.data.shape:
            raise ValueError(f"gradient for {name} has shape {g.shape}, expected {p.shape}")
        m = s.first_moment.setdefault(name, np.zeros_like(p.data))
        v = s.second_moment.setdefault(name, np.zeros_like(p.data))
        m *= s.beta1
        m += (1.0 - s.beta1) * g
        v *= s.beta2
        v += (1.0 - s.beta2) * g * g
        p.data -= s.learning_rate * (m / c1) / (np.sqrt(v / c2) + s.epsilon)
