"""Adam training under the acceleration and next-state losses, plus rollout evaluation."""

from __future__ import annotations

import dataclasses
import logging
import time
from dataclasses import dataclass, field
from typing import NamedTuple

import jax
import jax.numpy as jnp
import numpy as np

from glnn.datagen import SplitDataset, TrajectoryDataset
from glnn.errors import ConfigError, NumericError
from glnn.integrate import rk4_increment, rollout
from glnn.linalg_ad import DEFAULT_RIDGE, SINGULAR_DET
from glnn.models import GlnnModel
from glnn.oracles import get_system

log = logging.getLogger(__name__)

LOSS_KINDS = ("acceleration", "next_state")


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 1000
    epochs: int = 300
    loss_kind: str = "acceleration"
    ridge: float = DEFAULT_RIDGE
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    next_state_substeps: int = 1

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be positive")
        if self.batch_size < 1 or self.epochs < 1:
            raise ConfigError("batch_size and epochs must be at least 1")
        if self.loss_kind not in LOSS_KINDS:
            raise ConfigError(f"loss_kind must be one of {LOSS_KINDS}")
        if self.ridge < 0:
            raise ConfigError("ridge must be non-negative")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1 and self.eps > 0):
            raise ConfigError("invalid Adam hyperparameters")
        if self.next_state_substeps < 1:
            raise ConfigError("next_state_substeps must be at least 1")


class AdamState(NamedTuple):
    m: object
    v: object
    step: jnp.ndarray


def adam_init(params) -> AdamState:
    zeros = jax.tree_util.tree_map(jnp.zeros_like, params)
    return AdamState(zeros, zeros, jnp.zeros((), dtype=jnp.int64))


def adam_step(params, grads, state: AdamState, lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
    """Bias-corrected Adam update; pure, so it can be jitted."""
    step = state.step + 1
    m = jax.tree_util.tree_map(lambda m, g: beta1 * m + (1 - beta1) * g, state.m, grads)
    v = jax.tree_util.tree_map(lambda v, g: beta2 * v + (1 - beta2) * g * g, state.v, grads)
    c1 = 1 - beta1**step
    c2 = 1 - beta2**step
    params = jax.tree_util.tree_map(
        lambda p, m, v: p - lr * (m / c1) / (jnp.sqrt(v / c2) + eps), params, m, v
    )
    return params, AdamState(m, v, step)


class Batch(NamedTuple):
    x: np.ndarray
    x_next: np.ndarray
    qddot: np.ndarray


def make_batch(ds: TrajectoryDataset, indices=None) -> Batch:
    if indices is None:
        return Batch(ds.x, ds.x_next, ds.qddot)
    return Batch(ds.x[indices], ds.x_next[indices], ds.qddot[indices])


# -- losses ------------------------------------------------------------------


def _sq_norm_mean(diff):
    return jnp.mean(jnp.sum(diff**2, axis=-1))


def _accel_loss(accel_fn, params, x, qddot):
    pred, det = jax.vmap(accel_fn, in_axes=(None, 0))(params, x)
    n_singular = jnp.sum(jnp.abs(det) < SINGULAR_DET)
    return _sq_norm_mean(pred - qddot), n_singular


def _next_state_loss(accel_fn, params, x, x_next, h, substeps, n_dof):
    def field_(z):
        acc, _ = jax.vmap(accel_fn, in_axes=(None, 0))(params, z)
        return jnp.concatenate([z[:, n_dof:], acc], axis=-1)

    dt = h / substeps
    z = x
    for _ in range(substeps):
        z = rk4_increment(field_, z, dt)
    _, det = jax.vmap(accel_fn, in_axes=(None, 0))(params, x)
    return _sq_norm_mean(z - x_next), jnp.sum(jnp.abs(det) < SINGULAR_DET)


def _loss_fn(model, kind: str, h: float, substeps: int = 1):
    """``f(params, batch) -> (loss, n_singular)`` for the chosen objective."""
    accel_fn = model.accel_function(return_det=True)
    if kind == "acceleration":
        return lambda params, b: _accel_loss(accel_fn, params, b.x, b.qddot)
    return lambda params, b: _next_state_loss(accel_fn, params, b.x, b.x_next, h, substeps, model.n_dof)


def make_loss(model, kind: str = "acceleration", h: float = 0.0, substeps: int = 1):
    """Differentiable scalar ``f(params, batch)``; ``batch`` holds JAX arrays."""
    if kind not in LOSS_KINDS:
        raise ConfigError(f"loss kind must be one of {LOSS_KINDS}")
    f = _loss_fn(model, kind, h, substeps)
    return lambda params, batch: f(params, batch)[0]


def loss_accel(model, batch: Batch) -> float:
    """Mean squared acceleration error against the stored labels."""
    if len(batch.x) == 0:
        raise ValueError("empty batch")
    loss, _ = _loss_fn(model, "acceleration", 0.0)(model.params, _as_jax(batch))
    return float(loss)


def loss_next_state(model, batch: Batch, h: float, substeps: int = 1) -> float:
    """Mean squared error of one RK4 step of the model against ``x_next``."""
    if len(batch.x) == 0:
        raise ValueError("empty batch")
    loss, _ = _loss_fn(model, "next_state", h, substeps)(model.params, _as_jax(batch))
    return float(loss)


def _as_jax(batch: Batch) -> Batch:
    return Batch(*(jnp.asarray(a, dtype=jnp.float64) for a in batch))


# -- training ----------------------------------------------------------------


@dataclass
class Metrics:
    model_kind: str
    epochs: int
    train_loss: list[float] = field(default_factory=list)
    test_loss: list[float] = field(default_factory=list)
    final_train_loss: float = float("nan")
    final_test_loss: float = float("nan")
    final_test_accel_mse: float = float("nan")
    optimizer_steps: int = 0
    singular_count: int = 0
    wall_time: float = 0.0
    evaluation: dict | None = None

    def to_dict(self, include_timing: bool = False) -> dict:
        d = dataclasses.asdict(self)
        if not include_timing:
            # wall time varies between identical runs; keep files reproducible
            d.pop("wall_time")
        return d


def _loss_on(loss_eval, params, ds: TrajectoryDataset, indices, chunk: int):
    """Sample-weighted mean loss over ``indices``, evaluated in fixed-size chunks."""
    total, count, n_singular = 0.0, 0, 0
    for start in range(0, len(indices), chunk):
        idx = indices[start : start + chunk]
        loss, ns = loss_eval(params, _as_jax(make_batch(ds, idx)))
        total += float(loss) * len(idx)
        count += len(idx)
        n_singular += int(ns)
    return total / count, n_singular


def train(model, dataset: TrajectoryDataset, split: SplitDataset, config: TrainConfig):
    """Minibatch Adam; returns the trained model and its :class:`Metrics`.

    Minibatch order comes from a generator seeded with ``(config.seed, epoch)``.
    For GLNNs the model's ridge is replaced by ``config.ridge`` so the stored
    model evaluates with the regularizer it was trained under.
    """
    if model.n_dof != dataset.n_dof:
        raise ConfigError(f"model has {model.n_dof} degrees of freedom, dataset has {dataset.n_dof}")
    if len(split.train) == 0:
        raise ConfigError("empty training split")
    if isinstance(model, GlnnModel) and model.ridge != config.ridge:
        model = dataclasses.replace(model, ridge=config.ridge)

    loss = _loss_fn(model, config.loss_kind, dataset.h, config.next_state_substeps)
    accel_loss = _loss_fn(model, "acceleration", dataset.h)
    loss_eval = jax.jit(loss)
    accel_eval = jax.jit(accel_loss)

    @jax.jit
    def step(params, opt, batch):
        (value, n_singular), grads = jax.value_and_grad(loss, has_aux=True)(params, batch)
        finite = jnp.all(jnp.stack([jnp.all(jnp.isfinite(g)) for g in jax.tree_util.tree_leaves(grads)]))
        params, opt = adam_step(
            params, grads, opt, config.learning_rate, config.beta1, config.beta2, config.eps
        )
        return params, opt, value, n_singular, finite

    params = model.params
    opt = adam_init(params)
    metrics = Metrics(model_kind=model.kind, epochs=config.epochs)
    train_idx = np.asarray(split.train)
    test_idx = np.asarray(split.test)
    start = time.perf_counter()
    for epoch in range(config.epochs):
        order = train_idx[np.random.default_rng([config.seed, epoch]).permutation(len(train_idx))]
        total = 0.0
        for b, lo in enumerate(range(0, len(order), config.batch_size)):
            idx = order[lo : lo + config.batch_size]
            params, opt, value, n_singular, finite = step(params, opt, _as_jax(make_batch(dataset, idx)))
            value = float(value)
            if not (np.isfinite(value) and bool(finite)):
                raise NumericError(f"non-finite loss or gradient at epoch {epoch}, batch {b}")
            metrics.singular_count += int(n_singular)
            metrics.optimizer_steps += 1
            total += value * len(idx)
        metrics.train_loss.append(total / len(order))
        if len(test_idx):
            test_loss, _ = _loss_on(loss_eval, params, dataset, test_idx, config.batch_size)
            metrics.test_loss.append(test_loss)
        log.info(
            "epoch %d/%d train %.4e test %s",
            epoch + 1,
            config.epochs,
            metrics.train_loss[-1],
            f"{metrics.test_loss[-1]:.4e}" if metrics.test_loss else "-",
        )
    metrics.wall_time = time.perf_counter() - start
    if metrics.singular_count:
        log.warning("%d near-singular mass matrices during training", metrics.singular_count)

    model = model.with_params(params)
    metrics.final_train_loss, _ = _loss_on(loss_eval, params, dataset, train_idx, config.batch_size)
    if len(test_idx):
        metrics.final_test_loss = metrics.test_loss[-1]
        metrics.final_test_accel_mse, _ = _loss_on(accel_eval, params, dataset, test_idx, config.batch_size)
    return model, metrics


# -- evaluation --------------------------------------------------------------


@dataclass
class EvalResult:
    times: np.ndarray  # (T,)
    truth: np.ndarray  # (T, B, 2N)
    pred: np.ndarray  # (T, B, 2N)
    truth_energy: np.ndarray  # (T, B)
    pred_energy: np.ndarray  # (T, B)

    @property
    def position_mse_curve(self) -> np.ndarray:
        n = self.truth.shape[-1] // 2
        return np.mean((self.pred[..., :n] - self.truth[..., :n]) ** 2, axis=(1, 2))

    @property
    def energy_mse_curve(self) -> np.ndarray:
        return np.mean((self.pred_energy - self.truth_energy) ** 2, axis=1)

    def summary(self) -> dict:
        pos, en = self.position_mse_curve, self.energy_mse_curve
        return {
            "horizon": float(self.times[-1]),
            "n_inits": int(self.truth.shape[1]),
            "position_mse_mean": float(np.mean(pos)),
            "position_mse_final": float(pos[-1]),
            "energy_mse_mean": float(np.mean(en)),
            "energy_mse_final": float(en[-1]),
        }


def evaluate(
    model,
    system: str,
    params,
    inits,
    horizon_T: float = 50.0,
    h: float = 0.05,
    truth_substeps: int = 10,
    model_substeps: int = 1,
) -> EvalResult:
    """Roll out model and ground truth from each initial state and compare.

    Energies of both rollouts are measured with the system's true energy
    function, so a model without an energy of its own can still be scored.
    """
    sysdef = get_system(system)
    if isinstance(params, dict) or params is None:
        params = sysdef.make_params(params)
    if model.n_dof != sysdef.n_dof:
        raise ConfigError(f"model has {model.n_dof} degrees of freedom, system {system} has {sysdef.n_dof}")
    inits = np.atleast_2d(np.asarray(inits, dtype=np.float64))
    if inits.shape[1] != 2 * sysdef.n_dof:
        raise ConfigError(f"initial states must have {2 * sysdef.n_dof} entries")
    n_steps = int(round(horizon_T / h))
    truth = rollout(sysdef.field(params), inits, h, n_steps, truth_substeps)
    pred = rollout(model.field, inits, h, n_steps, model_substeps)
    return EvalResult(
        times=truth.times,
        truth=truth.states,
        pred=pred.states,
        truth_energy=sysdef.energy(truth.states, params),
        pred_energy=sysdef.energy(pred.states, params),
    )
