import numpy as np
import pytest

import glnn  # noqa: F401  enables 64-bit JAX before any test builds arrays


def fd_grad(f, x, step=1e-5):
    """Central differences of a scalar function."""
    x = np.asarray(x, dtype=np.float64)
    g = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = step
        g[i] = (float(f(x + e)) - float(f(x - e))) / (2 * step)
    return g


def fd_hessian(f, x, step=1e-4):
    """Second-order central differences using function values only."""
    x = np.asarray(x, dtype=np.float64)
    n = x.size
    h = np.empty((n, n))
    for i in range(n):
        for j in range(n):
            ei = np.zeros(n)
            ej = np.zeros(n)
            ei[i] = step
            ej[j] = step
            h[i, j] = (
                float(f(x + ei + ej)) - float(f(x + ei - ej)) - float(f(x - ei + ej)) + float(f(x - ei - ej))
            ) / (4 * step * step)
    return h


def rel_err(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
