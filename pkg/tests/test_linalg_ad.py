import jax
from jax.flatten_util import ravel_pytree
import jax.numpy as jnp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import fd_grad, fd_hessian, rel_err
from glnn.errors import NumericError, NumericOverflowError, SingularMassMatrixError
from glnn.linalg_ad import grad_and_hessian_input, grad_input, hessian_input, param_grad, solve_spd
from glnn.models import MlpConfig, init_mlp, mlp_apply


def test_grad_quadratic():
    g = grad_input(lambda x: x[0] ** 2 + x[1] ** 2, jnp.array([1.0, 2.0]))
    np.testing.assert_allclose(g, [2.0, 4.0])


def test_grad_softplus_at_zero():
    g = grad_input(lambda x: jax.nn.softplus(x[0]), jnp.array([0.0]))
    np.testing.assert_allclose(g, [0.5])


def test_hessian_examples():
    np.testing.assert_allclose(hessian_input(lambda x: 0.5 * x[0] ** 2, jnp.array([3.0])), [[1.0]])
    np.testing.assert_allclose(
        hessian_input(lambda x: x[0] * x[1], jnp.array([1.0, 1.0])), [[0.0, 1.0], [1.0, 0.0]]
    )


def _random_net(seed, input_dim=4, hidden=16, layers=3):
    cfg = MlpConfig(input_dim, hidden, layers, 1, "softplus", seed)
    params = init_mlp(cfg)
    # non-zero biases so the check does not sit on a special point
    r = np.random.default_rng(seed + 100)
    params = [(w, jnp.asarray(r.normal(0, 0.3, b.shape))) for w, b in params]
    return lambda x: mlp_apply(params, x)[0]


@pytest.mark.parametrize("seed", range(5))
def test_grad_matches_finite_differences(seed):
    f = _random_net(seed)
    x = np.random.default_rng(seed).uniform(-1, 1, 4)
    assert rel_err(grad_input(f, x), fd_grad(f, x, 1e-5)) < 1e-6


@pytest.mark.parametrize("seed", range(5))
def test_hessian_matches_finite_differences(seed):
    f = _random_net(seed)
    x = np.random.default_rng(seed).uniform(-1, 1, 4)
    h = np.asarray(hessian_input(f, x))
    assert rel_err(h, fd_hessian(f, x, 1e-4)) < 1e-4
    assert np.array_equal(h, h.T)


def test_grad_and_hessian_agree_with_separate_calls():
    f = _random_net(7)
    x = np.linspace(-0.5, 0.5, 4)
    g, h = grad_and_hessian_input(f, x)
    np.testing.assert_allclose(g, grad_input(f, x), rtol=1e-14)
    np.testing.assert_allclose(h, hessian_input(f, x), rtol=1e-12)


def test_grad_non_finite_raises():
    with pytest.raises(NumericOverflowError):
        grad_input(lambda x: jnp.exp(x[0]) ** 2, jnp.array([500.0]))


def test_param_grad_output_bias_with_zero_weights():
    cfg = MlpConfig(2, 3, 1, 2, "tanh", 0)
    params = [(jnp.zeros_like(w), jnp.zeros_like(b)) for w, b in init_mlp(cfg)]
    params[-1] = (params[-1][0], jnp.array([0.3, -1.2]))
    x = jnp.array([0.4, -0.7])

    def loss(p):
        return jnp.sum(mlp_apply(p, x, "tanh") ** 2)

    g = param_grad(loss, params)
    np.testing.assert_allclose(g[-1][1], 2 * params[-1][1])


def test_param_grad_through_hessian_matches_fd():
    # toy net whose input Hessian is quadratic in the parameters
    r = np.random.default_rng(3)
    params = {"a": jnp.asarray(r.normal(size=(2, 3))), "c": jnp.asarray(r.normal(size=3))}
    x = jnp.asarray([0.3, -0.2])

    def net(p, z):
        return jnp.sum(p["c"] * (z @ p["a"]) ** 2)

    def loss(p):
        h = hessian_input(lambda z: net(p, z), x)
        return jnp.sum(solve_spd(h + 5 * jnp.eye(2), jnp.array([1.0, 2.0]), 0.0) ** 2)

    ad = param_grad(loss, params)
    flat, unravel = ravel_pytree(params)
    fd = fd_grad(lambda v: loss(unravel(jnp.asarray(v))), np.asarray(flat), 1e-6)
    assert rel_err(ravel_pytree(ad)[0], fd) < 1e-5


def test_param_grad_names_offending_block():
    params = {"good": jnp.ones(2), "bad": jnp.ones(2)}

    def loss(p):
        return jnp.sum(p["good"]) + jnp.sum(jnp.sqrt(p["bad"] - 1.0))

    with pytest.raises(NumericError, match="bad"):
        param_grad(loss, params)


def test_solve_examples():
    np.testing.assert_allclose(solve_spd(jnp.array([[2.0]]), jnp.array([4.0]), 0.0), [2.0])
    np.testing.assert_allclose(solve_spd(jnp.eye(2), jnp.array([1.0, -1.0]), 0.0), [1.0, -1.0])
    np.testing.assert_allclose(
        solve_spd(jnp.array([[2.0, 1.0], [1.0, 2.0]]), jnp.array([1.0, 0.0]), 0.0),
        [2 / 3, -1 / 3],
        rtol=1e-14,
    )


def test_solve_ridge_and_general_branch():
    m = np.diag([1.0, 2.0, 3.0])
    np.testing.assert_allclose(solve_spd(m, np.ones(3), 1.0), [1 / 2, 1 / 3, 1 / 4], rtol=1e-14)


@pytest.mark.parametrize("m", [[[0.0]], [[1.0, 1.0], [1.0, 1.0]], np.zeros((3, 3))])
def test_solve_singular_raises(m):
    m = np.asarray(m)
    with pytest.raises(SingularMassMatrixError):
        solve_spd(m, np.ones(m.shape[0]), 0.0)


def test_solve_unchecked_skips_guard():
    out = solve_spd(jnp.zeros((1, 1)), jnp.ones(1), 0.0, check=False)
    assert not np.isfinite(out).all()


@settings(max_examples=60, deadline=None)
@given(
    n=st.integers(1, 4),
    seed=st.integers(0, 2**31 - 1),
)
def test_solve_recovers_x(n, seed):
    r = np.random.default_rng(seed)
    a = r.normal(size=(n, n))
    m = a @ a.T + n * np.eye(n)  # well conditioned SPD
    x = r.normal(size=n)
    np.testing.assert_allclose(solve_spd(m, m @ x, 0.0), x, atol=1e-10)
