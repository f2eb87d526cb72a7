"""Point sets and quadrature rules on the unit sphere S^{m-1}.

Two kinds of node sets live here:

* quasi-uniform *nets* (Fibonacci spiral on S^2, a Kronecker lattice pushed
  through the Gaussian inverse CDF elsewhere) used for multi-start searches
  and for sampling residuals;
* a product Gauss rule (Gauss-Jacobi in the polar angles, trapezoid in the
  last azimuth) used wherever an integral has to be accurate to many digits,
  e.g. the second-moment matrix of a star body.

All rules return weights that sum to one, so ``weights @ f(nodes)`` is the
mean of ``f`` over the sphere.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np
from scipy.special import ndtri, roots_jacobi

GOLDEN = (1.0 + 5.0 ** 0.5) / 2.0

# Gauss levels: ~4k nodes on S^2, more in higher dimension to keep moments near 1e-12.
_DEFAULT_LEVEL = {2: 2048, 3: 45, 4: 18, 5: 14, 6: 10}


def fibonacci_sphere(npoints: int) -> np.ndarray:
    """Quasi-uniform points on S^2 (spherical Fibonacci spiral), shape (npoints, 3)."""
    k = np.arange(npoints, dtype=float) + 0.5
    z = 1.0 - 2.0 * k / npoints
    phi = 2.0 * np.pi * k / GOLDEN
    s = np.sqrt(np.clip(1.0 - z * z, 0.0, None))
    return np.column_stack((s * np.cos(phi), s * np.sin(phi), z))


def _kronecker_unit_cube(npoints: int, dim: int) -> np.ndarray:
    # R_d low-discrepancy sequence; phi_d is the root of x^(d+1) = x + 1.
    phi = 2.0
    for _ in range(64):
        phi = (1.0 + phi) ** (1.0 / (dim + 1))
    alpha = phi ** -(np.arange(1, dim + 1, dtype=float))
    k = np.arange(1, npoints + 1, dtype=float)[:, None]
    return np.mod(0.5 + k * alpha[None, :], 1.0)


def sphere_net(dim: int, npoints: int) -> np.ndarray:
    """Deterministic quasi-uniform directions on S^{dim-1}."""
    if dim < 2:
        raise ValueError("sphere_net needs dim >= 2")
    if dim == 2:
        ang = 2.0 * np.pi * (np.arange(npoints) + 0.5) / npoints
        return np.column_stack((np.cos(ang), np.sin(ang)))
    if dim == 3:
        return fibonacci_sphere(npoints)
    u = _kronecker_unit_cube(npoints, dim)
    g = ndtri(np.clip(u, 1e-12, 1 - 1e-12))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def projective_net(dim: int, npoints: int) -> np.ndarray:
    """``npoints`` directions covering real projective space (one of each +-v pair)."""
    total = 2 * npoints
    while True:
        pts = sphere_net(dim, total)
        upper = pts[pts[:, -1] > 0.0]
        if len(upper) >= npoints:
            return upper[:npoints]
        total += npoints // 4 + 1


def canonical_sign(v: np.ndarray, eps: float = 1e-12) -> np.ndarray:
    """Flip ``v`` so that its first non-negligible coordinate is positive."""
    v = np.asarray(v, dtype=float)
    for x in v:
        if abs(x) > eps:
            return v if x > 0 else -v
    return v


@lru_cache(maxsize=None)
def _gauss_product(dim: int, level: int) -> tuple[np.ndarray, np.ndarray]:
    if dim == 2:
        n = 2 * level if level > 0 else 64
        ang = 2.0 * np.pi * np.arange(n) / n
        nodes = np.column_stack((np.cos(ang), np.sin(ang)))
        return nodes, np.full(n, 1.0 / n)
    a = (dim - 3) / 2.0
    t, w = roots_jacobi(level, a, a)
    w = w / w.sum()
    sub_nodes, sub_w = _gauss_product(dim - 1, level)
    s = np.sqrt(1.0 - t * t)
    nodes = np.concatenate(
        [np.column_stack((np.full(len(sub_nodes), ti), si * sub_nodes)) for ti, si in zip(t, s)]
    )
    weights = np.concatenate([wi * sub_w for wi in w])
    return nodes, weights


def sphere_quadrature(dim: int, level: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Product Gauss rule on S^{dim-1}.

    Exact for polynomials up to degree ``2*level - 1`` and spectrally
    accurate for analytic integrands.

    Returns
    -------
    nodes : ndarray, shape (N, dim)
    weights : ndarray, shape (N,)
        Non-negative, summing to one.
    """
    if level is None:
        level = _DEFAULT_LEVEL.get(dim, 6)
    nodes, weights = _gauss_product(dim, level)
    return nodes.copy(), weights.copy()
