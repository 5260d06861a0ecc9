"""Adam updates and finite-difference gradient verification."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .errors import ShapeError


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0

    @classmethod
    def zeros_like(cls, params: Sequence[np.ndarray | Tensor]) -> "AdamState":
        shapes = [np.shape(p.data if isinstance(p, Tensor) else p) for p in params]
        return cls([np.zeros(s) for s in shapes], [np.zeros(s) for s in shapes])


@dataclass(frozen=True)
class AdamConfig:
    lr: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    eps: float = 1e-8


def adam_step(params: Sequence[np.ndarray], grads: Sequence[np.ndarray], state: AdamState,
              config: AdamConfig = AdamConfig()) -> list[np.ndarray]:
    """One bias-corrected Adam step; returns new parameter arrays, updates ``state`` in place."""
    if not (len(params) == len(grads) == len(state.m)):
        raise ShapeError("params, grads and moments differ in length")
    state.t += 1
    b1, b2 = config.beta1, config.beta2
    c1 = 1.0 - b1**state.t
    c2 = 1.0 - b2**state.t
    out = []
    for i, (p, g) in enumerate(zip(params, grads)):
        p, g = np.asarray(p, dtype=float), np.asarray(g, dtype=float)
        if p.shape != g.shape or p.shape != state.m[i].shape:
            raise ShapeError(f"shape mismatch at parameter {i}: {p.shape} vs {g.shape}")
        state.m[i] = b1 * state.m[i] + (1 - b1) * g
        state.v[i] = b2 * state.v[i] + (1 - b2) * g * g
        m_hat = state.m[i] / c1
        v_hat = state.v[i] / c2
        out.append(p - config.lr * m_hat / (np.sqrt(v_hat) + config.eps))
    return out


class Adam:
    """Adam bound to a list of leaf tensors."""

    def __init__(self, params: Sequence[Tensor], config: AdamConfig = AdamConfig()):
        self.params = list(params)
        self.config = config
        self.state = AdamState.zeros_like(self.params)

    def step(self, grads: Sequence[Tensor | np.ndarray]) -> None:
        arrays = [g.data if isinstance(g, Tensor) else g for g in grads]
        new = adam_step([p.data for p in self.params], arrays, self.state, self.config)
        for p, value in zip(self.params, new):
            p.data = value


@dataclass
class GradCheckReport:
    max_rel_error: float
    n_checked: int
    worst: tuple[int, tuple[int, ...]] | None = None
    skipped: list[str] = field(default_factory=list)

    def passed(self, tolerance: float) -> bool:
        return self.max_rel_error < tolerance


def grad_check(loss: Callable[[], Tensor], params: Sequence[Tensor], n_entries: int = 30,
               step: float = 1e-6, seed: int = 0, floor: float = 1e-6,
               skipped: Sequence[str] = ()) -> GradCheckReport:
    """Compare reverse-mode gradients with central differences on random entries.

    Relative error per entry is ``|a - n| / max(|a|, |n|, floor)``; ``floor``
    stops vanishing gradients from dominating the ratio.
    """
    value = loss()
    analytic = [g.data for g in ag.grad(value, params)]
    rng = np.random.default_rng(seed)
    sizes = np.array([p.data.size for p in params])
    total = int(sizes.sum())
    picks = rng.choice(total, size=min(n_entries, total), replace=False)
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    worst, worst_at = 0.0, None
    for flat in np.sort(picks):
        k = int(np.searchsorted(offsets, flat, side="right") - 1)
        idx = np.unravel_index(int(flat - offsets[k]), params[k].shape)
        p = params[k]
        orig = p.data[idx]
        p.data[idx] = orig + step
        up = float(loss())
        p.data[idx] = orig - step
        down = float(loss())
        p.data[idx] = orig
        numeric = (up - down) / (2 * step)
        a = float(analytic[k][idx])
        rel = abs(a - numeric) / max(abs(a), abs(numeric), floor)
        if rel > worst:
            worst, worst_at = rel, (k, tuple(int(i) for i in idx))
    return GradCheckReport(worst, len(picks), worst_at, list(skipped))
