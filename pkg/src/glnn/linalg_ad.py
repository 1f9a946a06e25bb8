"""Input/parameter derivatives of small networks and the small SPD solve.

Everything here is a thin, checked layer over JAX transformations.  The
functions are traceable: inside ``jax.jit`` the finiteness and singularity
checks are skipped (values are abstract there) and callers that need them
inspect the outputs afterwards, e.g. via :func:`regularized_det`.
"""

from __future__ import annotations

from typing import Any, Callable

import jax
import jax.numpy as jnp
import numpy as np

from glnn.errors import NumericError, NumericOverflowError, SingularMassMatrixError

DEFAULT_RIDGE = 1e-6
SINGULAR_DET = 1e-12

Array = Any


def _is_concrete(x) -> bool:
    return not isinstance(x, jax.core.Tracer)


def _check_finite(value, what: str) -> None:
    if _is_concrete(value) and not np.all(np.isfinite(np.asarray(value))):
        raise NumericOverflowError(f"non-finite value in {what}")


def grad_input(scalar_fn: Callable[[Array], Array], x: Array) -> Array:
    """Gradient of ``scalar_fn`` with respect to its (vector) input."""
    x = jnp.asarray(x, dtype=jnp.float64)
    value, g = jax.value_and_grad(scalar_fn)(x)
    _check_finite(value, "function value")
    _check_finite(g, "input gradient")
    return g


def hessian_input(scalar_fn: Callable[[Array], Array], x: Array) -> Array:
    """Full input Hessian, forward-over-reverse, symmetrized as (H + H^T)/2."""
    x = jnp.asarray(x, dtype=jnp.float64)
    h = jax.jacfwd(jax.grad(scalar_fn))(x)
    h = 0.5 * (h + h.T)
    _check_finite(h, "input Hessian")
    return h


def grad_and_hessian_input(scalar_fn, x):
    """Gradient and symmetrized Hessian from one forward-over-reverse pass."""
    x = jnp.asarray(x, dtype=jnp.float64)

    def g_aux(z):
        g = jax.grad(scalar_fn)(z)
        return g, g

    h, g = jax.jacfwd(g_aux, has_aux=True)(x)
    h = 0.5 * (h + h.T)
    _check_finite(g, "input gradient")
    _check_finite(h, "input Hessian")
    return g, h


def param_grad(loss_fn: Callable[..., Array], params, *args, **kwargs):
    """Gradient of a scalar loss with respect to a parameter pytree.

    ``loss_fn(params, *args, **kwargs)`` may itself contain input gradients,
    Hessians and linear solves; the result then holds third-order derivatives
    of the underlying networks.  Raises :class:`NumericError` naming the first
    parameter block with a non-finite entry.
    """
    grads = jax.grad(loss_fn)(params, *args, **kwargs)
    leaves, _ = jax.tree_util.tree_flatten_with_path(grads)
    for path, leaf in leaves:
        if _is_concrete(leaf) and not np.all(np.isfinite(np.asarray(leaf))):
            raise NumericError(
                f"non-finite gradient in parameter block {jax.tree_util.keystr(path)}"
            )
    return grads


def regularized_det(m: Array, ridge: float = DEFAULT_RIDGE) -> Array:
    n = m.shape[-1]
    return jnp.linalg.det(m + ridge * jnp.eye(n, dtype=m.dtype))


def solve_spd(m: Array, b: Array, ridge: float = DEFAULT_RIDGE, check: bool = True) -> Array:
    """Solve ``(m + ridge*I) x = b`` for a small square ``m``.

    Dimensions 1 and 2 use closed forms (cheap to differentiate three times);
    larger systems go through LU with partial pivoting.  ``check=False``
    skips the singularity test on concrete inputs.
    """
    m = jnp.asarray(m, dtype=jnp.float64)
    b = jnp.asarray(b, dtype=jnp.float64)
    n = m.shape[0]
    if m.shape != (n, n) or b.shape != (n,):
        raise ValueError(f"shape mismatch: matrix {m.shape}, rhs {b.shape}")
    a = m + ridge * jnp.eye(n, dtype=m.dtype)
    if n == 1:
        det = a[0, 0]
    elif n == 2:
        det = a[0, 0] * a[1, 1] - a[0, 1] * a[1, 0]
    else:
        det = jnp.linalg.det(a)
    if check and _is_concrete(det) and not abs(float(det)) >= SINGULAR_DET:
        raise SingularMassMatrixError(
            f"|det(M + ridge*I)| = {abs(float(det)):.3e} is below {SINGULAR_DET:g}"
        )
    if n == 1:
        return b / det
    if n == 2:
        return jnp.stack(
            [a[1, 1] * b[0] - a[0, 1] * b[1], a[0, 0] * b[1] - a[1, 0] * b[0]]
        ) / det
    return jnp.linalg.solve(a, b)
