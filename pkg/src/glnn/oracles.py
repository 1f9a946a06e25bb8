"""Ground-truth physics for the damped oscillator and the frictional compound pendulum.

States are stacked arrays ``x = (q_1..q_N, qdot_1..qdot_N)`` with the state on
the last axis, so every function here works on a single state or a batch.
Functions that may be differentiated by JAX dispatch to ``jax.numpy`` when
handed a JAX array.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields
from typing import Callable

import jax
import jax.numpy as jnp
import numpy as np

from glnn.errors import ConfigError, SingularMassMatrixError


def _xp(x):
    return jnp if isinstance(x, (jax.Array, jax.core.Tracer)) else np


@dataclass(frozen=True)
class DampedHarmonicParams:
    a: float = 0.02
    k: float = 1.0
    m: float = 1.0

    def __post_init__(self):
        if not (self.k > 0 and self.a >= 0 and self.m > 0):
            raise ConfigError(f"invalid damped-oscillator parameters {self}")


@dataclass(frozen=True)
class DoublePendulumParams:
    m: float = 1.0
    d: float = 1.0
    c: float = 1.0
    I: float | None = None  # noqa: E741  defaults to m (c/2)^2 / 3
    g: float = 10.0
    gamma1: float = 0.5
    gamma2: float = 0.5

    def __post_init__(self):
        if self.I is None:
            object.__setattr__(self, "I", self.m * (self.c / 2) ** 2 / 3)
        if not (self.m > 0 and self.d > 0 and self.g > 0):
            raise ConfigError("m, d and g must be positive")
        if self.I < 0 or self.gamma1 < 0 or self.gamma2 < 0:
            raise ConfigError("I, gamma1 and gamma2 must be non-negative")


# -- damped harmonic motion: qddot + a qdot + (k^2/m) q = 0 -------------------


def dho_deriv(x, p: DampedHarmonicParams):
    x = np.asarray(x, dtype=np.float64) if _xp(x) is np else x
    xp = _xp(x)
    q, v = x[..., 0], x[..., 1]
    return xp.stack([v, -p.a * v - (p.k**2 / p.m) * q], axis=-1)


def dho_energy(x, p: DampedHarmonicParams):
    q, v = x[..., 0], x[..., 1]
    return 0.5 * p.m * v**2 + 0.5 * p.k**2 * q**2


def dho_analytic(t, x0, p: DampedHarmonicParams) -> np.ndarray:
    """Closed-form underdamped solution; ``t`` may be a scalar or an array."""
    omega0_sq = p.k**2 / p.m
    if p.a**2 >= 4 * omega0_sq:
        raise ValueError("dho_analytic needs an underdamped oscillator (a^2 < 4 k^2 / m)")
    t = np.asarray(t, dtype=np.float64)
    q0, v0 = float(x0[0]), float(x0[1])
    w = math.sqrt(omega0_sq - p.a**2 / 4)
    A = q0
    B = (v0 + 0.5 * p.a * A) / w
    decay = np.exp(-0.5 * p.a * t)
    c, s = np.cos(w * t), np.sin(w * t)
    q = decay * (A * c + B * s)
    v = decay * (-0.5 * p.a * (A * c + B * s) + w * (B * c - A * s))
    return np.stack([q, v], axis=-1)


def dho_lagrangian(x, p: DampedHarmonicParams):
    """Kinetic minus elastic potential energy."""
    return 0.5 * p.m * x[..., 1] ** 2 - 0.5 * p.k**2 * x[..., 0] ** 2


def dho_force(x, p: DampedHarmonicParams):
    """Viscous force closing the generalized Euler-Lagrange residual."""
    return -p.m * p.a * x[..., 1:2]


def dho_lagrangian_force(x, p: DampedHarmonicParams):
    return dho_lagrangian(x, p), dho_force(x, p)


# -- compound double pendulum with axle friction -----------------------------


def dp_mass_matrix(x, p: DoublePendulumParams):
    xp = _xp(x)
    md2 = p.m * p.d**2
    off = md2 * xp.cos(x[..., 0] - x[..., 1])
    m11 = xp.full_like(off, 2 * md2 + p.I)
    m22 = xp.full_like(off, md2 + p.I)
    return xp.stack([xp.stack([m11, off], -1), xp.stack([off, m22], -1)], -2)


def dp_friction(x, p: DoublePendulumParams):
    """Generalized friction torques on the two axles."""
    xp = _xp(x)
    w1, w2 = x[..., 2], x[..., 3]
    rel = w1 - w2
    return xp.stack([-p.gamma1 * w1 - p.gamma2 * rel, p.gamma2 * rel], axis=-1)


def dp_deriv(x, p: DoublePendulumParams):
    x = np.asarray(x, dtype=np.float64) if _xp(x) is np else x
    xp = _xp(x)
    t1, t2, w1, w2 = x[..., 0], x[..., 1], x[..., 2], x[..., 3]
    md2 = p.m * p.d**2
    delta = t1 - t2
    s, c = xp.sin(delta), xp.cos(delta)
    fr = dp_friction(x, p)
    r1 = fr[..., 0] - md2 * w2**2 * s - 2 * p.m * p.g * p.d * xp.sin(t1)
    r2 = fr[..., 1] + md2 * w1**2 * s - p.m * p.g * p.d * xp.sin(t2)
    a11, a22 = 2 * md2 + p.I, md2 + p.I
    a12 = md2 * c
    det = a11 * a22 - a12**2
    if xp is np and np.any(np.abs(det) < 1e-12):
        raise SingularMassMatrixError("pendulum mass matrix is singular")
    acc1 = (a22 * r1 - a12 * r2) / det
    acc2 = (a11 * r2 - a12 * r1) / det
    return xp.stack([w1, w2, acc1, acc2], axis=-1)


def dp_kinetic(x, p: DoublePendulumParams):
    xp = _xp(x)
    t1, t2, w1, w2 = x[..., 0], x[..., 1], x[..., 2], x[..., 3]
    md2 = p.m * p.d**2
    return (
        0.5 * (2 * md2 + p.I) * w1**2
        + 0.5 * (md2 + p.I) * w2**2
        + md2 * w1 * w2 * xp.cos(t1 - t2)
    )


def dp_potential(x, p: DoublePendulumParams):
    xp = _xp(x)
    return -2 * p.m * p.g * p.d * xp.cos(x[..., 0]) - p.m * p.g * p.d * xp.cos(x[..., 1])


def dp_energy(x, p: DoublePendulumParams):
    return dp_kinetic(x, p) + dp_potential(x, p)


def dp_lagrangian(x, p: DoublePendulumParams):
    return dp_kinetic(x, p) - dp_potential(x, p)


def dp_lagrangian_force(x, p: DoublePendulumParams):
    return dp_lagrangian(x, p), dp_friction(x, p)


def dissipation_rate(x, p: DoublePendulumParams):
    """Energy loss rate dE/dt = -gamma1 w1^2 - gamma2 (w1 - w2)^2."""
    w1, w2 = x[..., 2], x[..., 3]
    return -p.gamma1 * w1**2 - p.gamma2 * (w1 - w2) ** 2


# -- registry ----------------------------------------------------------------


@dataclass(frozen=True)
class System:
    name: str
    n_dof: int
    params_type: type
    deriv: Callable
    energy: Callable
    lagrangian: Callable
    force: Callable

    def make_params(self, values: dict | None = None):
        values = dict(values or {})
        known = {f.name for f in fields(self.params_type)}
        unknown = set(values) - known
        if unknown:
            raise ConfigError(f"unknown {self.name} parameters: {sorted(unknown)}")
        try:
            return self.params_type(**values)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    def field(self, p) -> Callable:
        return lambda x: self.deriv(x, p)


SYSTEMS: dict[str, System] = {
    "dho": System("dho", 1, DampedHarmonicParams, dho_deriv, dho_energy, dho_lagrangian, dho_force),
    "dp": System("dp", 2, DoublePendulumParams, dp_deriv, dp_energy, dp_lagrangian, dp_friction),
}


def get_system(name: str) -> System:
    try:
        return SYSTEMS[name]
    except KeyError:
        raise ConfigError(f"unknown system {name!r}; choose from {sorted(SYSTEMS)}") from None


def params_to_dict(p) -> dict:
    return asdict(p)
