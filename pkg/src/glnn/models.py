"""Network definitions and the generalized Euler-Lagrange acceleration solve.

A GLNN pairs a scalar Lagrangian network ``L(q, qdot)`` with a force network
``F(q, qdot)``; accelerations come from

    qddot = (d2L/dqdot2 + ridge*I)^-1 [dL/dq - (d2L/dqdot dq) qdot + F].

The baseline regresses ``qddot`` directly with a single network.
"""

from __future__ import annotations

import dataclasses
import functools
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import jax
import jax.numpy as jnp
import numpy as np

from glnn.errors import ConfigError, ModelFormatError, ModelVersionError
from glnn.linalg_ad import DEFAULT_RIDGE, grad_and_hessian_input, regularized_det, solve_spd

FORMAT_VERSION = 1

ACTIVATIONS: dict[str, Callable] = {
    "softplus": jax.nn.softplus,
    "tanh": jnp.tanh,
}


@dataclass(frozen=True)
class MlpConfig:
    input_dim: int
    hidden_size: int
    n_hidden_layers: int
    output_dim: int
    activation: str = "softplus"
    seed: int = 0

    def __post_init__(self):
        for name in ("input_dim", "hidden_size", "n_hidden_layers", "output_dim"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or value < 1:
                raise ConfigError(f"MlpConfig.{name} must be a positive integer, got {value!r}")
        if self.activation not in ACTIVATIONS:
            raise ConfigError(f"unknown activation {self.activation!r}")
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")

    @property
    def layer_sizes(self) -> list[int]:
        return [self.input_dim] + [self.hidden_size] * self.n_hidden_layers + [self.output_dim]


# A network is a list of (W, b) pairs with W of shape (fan_in, fan_out).
MlpParams = list


def init_mlp(config: MlpConfig) -> MlpParams:
    """Glorot-uniform weights and zero biases, fully determined by ``config.seed``."""
    rng = np.random.default_rng(config.seed)
    sizes = config.layer_sizes
    params = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        limit = math.sqrt(6.0 / (fan_in + fan_out))
        w = rng.uniform(-limit, limit, size=(fan_in, fan_out))
        params.append((jnp.asarray(w), jnp.zeros(fan_out)))
    return params


def param_count(params) -> int:
    return sum(int(np.size(leaf)) for leaf in jax.tree_util.tree_leaves(params))


def mlp_apply(params: MlpParams, x, activation: str = "softplus"):
    act = ACTIVATIONS[activation]
    h = x
    for w, b in params[:-1]:
        h = act(h @ w + b)
    w, b = params[-1]
    return h @ w + b


def generalized_accel(
    lagrangian_fn, force_fn, q, qdot, ridge: float = DEFAULT_RIDGE, return_det: bool = False
):
    """Acceleration from a Lagrangian and a non-conservative force.

    ``lagrangian_fn`` maps the stacked state ``(q, qdot)`` to a scalar and
    ``force_fn`` maps it to an ``N``-vector (or is None for F = 0).  With
    ``return_det`` the determinant of the regularized mass matrix is returned
    as well (training counts near-singular samples with it).
    """
    q = jnp.atleast_1d(jnp.asarray(q, dtype=jnp.float64))
    qdot = jnp.atleast_1d(jnp.asarray(qdot, dtype=jnp.float64))
    if q.shape != qdot.shape or q.ndim != 1:
        raise ValueError(f"q and qdot must be equal-length vectors, got {q.shape} and {qdot.shape}")
    n = q.shape[0]
    x = jnp.concatenate([q, qdot])
    grad, hess = grad_and_hessian_input(lagrangian_fn, x)
    mass = hess[n:, n:]
    mixed = hess[n:, :n]  # row i, col j: d2L / dqdot_i dq_j
    rhs = grad[:n] - mixed @ qdot
    if force_fn is not None:
        rhs = rhs + force_fn(x)
    if return_det:
        det = jax.lax.stop_gradient(regularized_det(mass, ridge))
        return solve_spd(mass, rhs, ridge, check=False), det
    return solve_spd(mass, rhs, ridge)


@dataclass(frozen=True)
class GlnnModel:
    lagrangian_config: MlpConfig
    force_config: MlpConfig
    params: dict
    ridge: float = DEFAULT_RIDGE

    kind = "glnn"

    def __post_init__(self):
        if self.lagrangian_config.input_dim != self.force_config.input_dim:
            raise ConfigError("Lagrangian and force networks must share input_dim")
        if self.lagrangian_config.output_dim != 1:
            raise ConfigError("the Lagrangian network must have a scalar output")
        if self.force_config.output_dim * 2 != self.force_config.input_dim:
            raise ConfigError("force network must map R^2N to R^N")

    @classmethod
    def create(
        cls,
        n_dof: int,
        hidden_size: int = 200,
        n_hidden_layers: int = 3,
        seed: int = 0,
        ridge: float = DEFAULT_RIDGE,
        lagrangian_activation: str = "softplus",
        force_activation: str = "tanh",
    ) -> "GlnnModel":
        lag = MlpConfig(2 * n_dof, hidden_size, n_hidden_layers, 1, lagrangian_activation, seed)
        # force net gets its own stream so the two nets do not start identical
        force = MlpConfig(2 * n_dof, hidden_size, n_hidden_layers, n_dof, force_activation, seed + 1)
        params = {"lagrangian": init_mlp(lag), "force": init_mlp(force)}
        return cls(lag, force, params, ridge)

    @property
    def n_dof(self) -> int:
        return self.force_config.output_dim

    @property
    def configs(self) -> dict[str, MlpConfig]:
        return {"lagrangian": self.lagrangian_config, "force": self.force_config}

    def with_params(self, params) -> "GlnnModel":
        return dataclasses.replace(self, params=params)

    def accel_function(self, return_det: bool = False):
        """Pure ``f(params, x) -> qddot`` for a single stacked state ``x``.

        With ``return_det`` it returns ``(qddot, det)`` and skips the eager
        singularity check, so it can run under ``jax.jit``.
        """
        return functools.partial(
            _glnn_accel_pure,
            n=self.n_dof,
            ridge=self.ridge,
            lagrangian_activation=self.lagrangian_config.activation,
            force_activation=self.force_config.activation,
            return_det=return_det,
        )

    def lagrangian(self, x):
        return mlp_apply(self.params["lagrangian"], jnp.asarray(x), self.lagrangian_config.activation)[..., 0]

    def force(self, x):
        return mlp_apply(self.params["force"], jnp.asarray(x), self.force_config.activation)

    def accel(self, x) -> np.ndarray:
        """Batched accelerations for stacked states of shape ``(B, 2N)``."""
        fn = _batched_glnn(
            self.n_dof, self.ridge, self.lagrangian_config.activation, self.force_config.activation
        )
        return np.asarray(fn(self.params, jnp.asarray(x, dtype=jnp.float64)))

    def field(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        return np.concatenate([x[..., self.n_dof:], self.accel(x)], axis=-1)


def _glnn_accel_pure(
    params, x, *, n, ridge, lagrangian_activation, force_activation, return_det=False
):
    def lag(z):
        return mlp_apply(params["lagrangian"], z, lagrangian_activation)[0]

    def force(z):
        return mlp_apply(params["force"], z, force_activation)

    return generalized_accel(lag, force, x[:n], x[n:], ridge, return_det=return_det)


@dataclass(frozen=True)
class BaselineModel:
    config: MlpConfig
    params: dict

    kind = "baseline"

    def __post_init__(self):
        if self.config.output_dim * 2 != self.config.input_dim:
            raise ConfigError("baseline network must map R^2N to R^N")

    @classmethod
    def create(
        cls,
        n_dof: int,
        hidden_size: int = 200,
        n_hidden_layers: int = 3,
        seed: int = 0,
        activation: str = "tanh",
    ) -> "BaselineModel":
        cfg = MlpConfig(2 * n_dof, hidden_size, n_hidden_layers, n_dof, activation, seed)
        return cls(cfg, {"net": init_mlp(cfg)})

    @property
    def n_dof(self) -> int:
        return self.config.output_dim

    @property
    def configs(self) -> dict[str, MlpConfig]:
        return {"net": self.config}

    @property
    def ridge(self) -> None:
        return None

    def with_params(self, params) -> "BaselineModel":
        return dataclasses.replace(self, params=params)

    def accel_function(self, return_det: bool = False):
        fn = functools.partial(_baseline_accel_pure, activation=self.config.activation)
        if return_det:
            return lambda params, x: (fn(params, x), jnp.ones(()))
        return fn

    def accel(self, x) -> np.ndarray:
        fn = _batched_baseline(self.config.activation)
        return np.asarray(fn(self.params, jnp.asarray(x, dtype=jnp.float64)))

    def field(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        return np.concatenate([x[..., self.n_dof:], self.accel(x)], axis=-1)


def _baseline_accel_pure(params, x, *, activation):
    return mlp_apply(params["net"], x, activation)


@functools.lru_cache(maxsize=32)
def _batched_glnn(n, ridge, lagrangian_activation, force_activation):
    fn = functools.partial(
        _glnn_accel_pure,
        n=n,
        ridge=ridge,
        lagrangian_activation=lagrangian_activation,
        force_activation=force_activation,
    )
    return jax.jit(jax.vmap(fn, in_axes=(None, 0)))


@functools.lru_cache(maxsize=32)
def _batched_baseline(activation):
    fn = functools.partial(_baseline_accel_pure, activation=activation)
    return jax.jit(jax.vmap(fn, in_axes=(None, 0)))


def _check_dims(model, q, qdot):
    q = jnp.atleast_1d(jnp.asarray(q, dtype=jnp.float64))
    qdot = jnp.atleast_1d(jnp.asarray(qdot, dtype=jnp.float64))
    if q.shape != (model.n_dof,) or qdot.shape != (model.n_dof,):
        raise ValueError(
            f"model expects {model.n_dof} coordinates, got q{tuple(q.shape)} and qdot{tuple(qdot.shape)}"
        )
    return q, qdot


def glnn_accel(model: GlnnModel, q, qdot, ridge: float | None = None) -> np.ndarray:
    """Single-state GLNN acceleration; raises on a singular mass matrix."""
    q, qdot = _check_dims(model, q, qdot)
    ridge = model.ridge if ridge is None else ridge

    def lag(z):
        return mlp_apply(model.params["lagrangian"], z, model.lagrangian_config.activation)[0]

    def force(z):
        return mlp_apply(model.params["force"], z, model.force_config.activation)

    return np.asarray(generalized_accel(lag, force, q, qdot, ridge))


def baseline_accel(model: BaselineModel, q, qdot) -> np.ndarray:
    q, qdot = _check_dims(model, q, qdot)
    return np.asarray(mlp_apply(model.params["net"], jnp.concatenate([q, qdot]), model.config.activation))


# -- persistence -------------------------------------------------------------


def _params_to_json(params: MlpParams) -> list:
    return [{"W": np.asarray(w).tolist(), "b": np.asarray(b).tolist()} for w, b in params]


def _params_from_json(blob, config: MlpConfig, name: str) -> MlpParams:
    sizes = config.layer_sizes
    if not isinstance(blob, list) or len(blob) != len(sizes) - 1:
        raise ModelFormatError(f"network {name!r}: expected {len(sizes) - 1} layers")
    params = []
    for i, (layer, fan_in, fan_out) in enumerate(zip(blob, sizes[:-1], sizes[1:])):
        try:
            w = np.asarray(layer["W"], dtype=np.float64)
            b = np.asarray(layer["b"], dtype=np.float64)
        except (KeyError, TypeError, ValueError) as exc:
            raise ModelFormatError(f"network {name!r} layer {i}: {exc}") from exc
        if w.shape != (fan_in, fan_out) or b.shape != (fan_out,):
            raise ModelFormatError(
                f"network {name!r} layer {i}: shapes {w.shape}/{b.shape} do not match config"
            )
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
            raise ModelFormatError(f"network {name!r} layer {i}: non-finite parameters")
        params.append((jnp.asarray(w), jnp.asarray(b)))
    return params


def model_to_dict(model, extra: dict | None = None) -> dict:
    doc = {
        "format_version": FORMAT_VERSION,
        "model_kind": model.kind,
        "n_dof": model.n_dof,
        "ridge": model.ridge,
        "configs": {k: dataclasses.asdict(c) for k, c in model.configs.items()},
        "params": {k: _params_to_json(model.params[k]) for k in model.configs},
    }
    if extra:
        doc["meta"] = extra
    return doc


def model_from_dict(doc: dict):
    if not isinstance(doc, dict):
        raise ModelFormatError("model document must be a mapping")
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise ModelVersionError(f"unsupported model format_version {version!r}, expected {FORMAT_VERSION}")
    try:
        kind = doc["model_kind"]
        configs = {k: MlpConfig(**v) for k, v in doc["configs"].items()}
        raw_params = doc["params"]
    except (KeyError, TypeError, ConfigError) as exc:
        raise ModelFormatError(f"malformed model document: {exc}") from exc
    if kind == "glnn":
        expected = {"lagrangian", "force"}
    elif kind == "baseline":
        expected = {"net"}
    else:
        raise ModelFormatError(f"unknown model_kind {kind!r}")
    if set(configs) != expected or set(raw_params) != expected:
        raise ModelFormatError(f"{kind} model needs networks {sorted(expected)}")
    params = {k: _params_from_json(raw_params[k], configs[k], k) for k in sorted(expected)}
    try:
        if kind == "glnn":
            ridge = float(doc["ridge"])
            return GlnnModel(configs["lagrangian"], configs["force"], params, ridge)
        return BaselineModel(configs["net"], params)
    except (KeyError, TypeError, ValueError, ConfigError) as exc:
        raise ModelFormatError(f"malformed model document: {exc}") from exc


def model_save(model, path, extra: dict | None = None) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model, extra), indent=1) + "\n")


def model_load(path):
    text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"{path}: not a valid model file ({exc})") from exc
    return model_from_dict(doc)
