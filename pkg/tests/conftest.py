import numpy as np
import pytest

from affrev.body_core import make_ellipsoid, make_perturbed_body, make_revolution_body, random_harmonics


def conditioned(rng, n, spread=0.3, max_cond=10.0):
    while True:
        a = np.eye(n) + spread * rng.standard_normal((n, n))
        if np.linalg.cond(a) <= max_cond:
            return a


def fd_check(fun, x, h=1e-4):
    """Central differences of ``fun`` at ``x`` along each coordinate; last axis is the derivative index."""
    cols = []
    for i in range(len(x)):
        e = np.zeros_like(x)
        e[i] = h
        cols.append((fun(x + e) - fun(x - e)) / (2 * h))
    return np.stack(cols, axis=-1)


@pytest.fixture(scope="session")
def ball4():
    return make_ellipsoid(np.eye(4))


@pytest.fixture(scope="session")
def ellipsoid4():
    return make_ellipsoid(np.diag([1.0, 4.0, 9.0, 16.0]))


@pytest.fixture(scope="session")
def revolution4():
    return make_revolution_body([1.0, 0.2], 3, np.eye(4))


@pytest.fixture(scope="session")
def sheared_revolution4():
    rng = np.random.default_rng(11)
    return make_revolution_body([1.0, 0.2, -0.1], 3, conditioned(rng, 4, 0.35))


@pytest.fixture(scope="session")
def perturbed4(ball4):
    return make_perturbed_body(ball4, 0.05, random_harmonics(4, 7))


@pytest.fixture(scope="session")
def corpus():
    """Default-option reports for seeds 0..9 of each family in R^4, with wall times."""
    import time

    from affrev.verifier import generate_spec, run_verify

    out = {}
    for family in ("ellipsoid", "revolution", "perturbed"):
        rows = []
        for seed in range(10):
            spec = generate_spec(family, 4, seed)
            t0 = time.perf_counter()
            rep = run_verify(spec)
            rows.append((spec, rep, time.perf_counter() - t0))
        out[family] = rows
    return out
