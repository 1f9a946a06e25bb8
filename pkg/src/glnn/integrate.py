"""Fixed-step classical Runge-Kutta integration of first-order vector fields."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from glnn.errors import DivergenceError


@dataclass(frozen=True)
class Rollout:
    times: np.ndarray  # (n_steps + 1,)
    states: np.ndarray  # (n_steps + 1, ..., 2N)
    h: float


def rk4_increment(field: Callable, x, h):
    """One RK4 update with no checks; works on NumPy arrays and JAX tracers alike."""
    k1 = field(x)
    k2 = field(x + 0.5 * h * k1)
    k3 = field(x + 0.5 * h * k2)
    k4 = field(x + h * k3)
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _raise_if_diverged(x, step):
    bad = ~np.isfinite(x)
    if bad.any():
        row = None
        if x.ndim > 1:
            row = int(np.argwhere(bad.reshape(-1, x.shape[-1]).any(axis=-1))[0, 0])
        where = f" (trajectory {row})" if row is not None else ""
        raise DivergenceError(f"non-finite state at step {step}{where}", step=step, trajectory=row)


def rk4_step(field: Callable, x, h: float, substeps: int = 1, step_index: int = 0) -> np.ndarray:
    if not h > 0:
        raise ValueError(f"step size must be positive, got {h}")
    x = np.asarray(x, dtype=np.float64)
    dt = h / substeps
    for _ in range(substeps):
        x = np.asarray(rk4_increment(field, x, dt), dtype=np.float64)
    _raise_if_diverged(x, step_index)
    return x


def rollout(field: Callable, x0, h: float, n_steps: int, substeps: int = 1) -> Rollout:
    """Integrate ``n_steps`` output steps of size ``h``, each split into ``substeps``.

    ``x0`` may be a single state or a batch ``(B, 2N)``; the states array then
    has shape ``(n_steps + 1, B, 2N)``.
    """
    if n_steps < 1:
        raise ValueError("n_steps must be at least 1")
    if substeps < 1:
        raise ValueError("substeps must be at least 1")
    x = np.asarray(x0, dtype=np.float64)
    _raise_if_diverged(x, 0)
    states = np.empty((n_steps + 1,) + x.shape)
    states[0] = x
    for i in range(1, n_steps + 1):
        x = rk4_step(field, x, h, substeps, step_index=i)
        states[i] = x
    times = h * np.arange(n_steps + 1, dtype=np.float64)
    return Rollout(times, states, float(h))
