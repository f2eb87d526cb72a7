"""Equiaffine (Blaschke) structure of graph hypersurfaces and the quadric test.

A graph oracle is any object with ``derivatives(x) -> (f, grad, hess, third)``
for the function ``f`` whose graph ``t = f(x)`` is the hypersurface.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .body_core import SmoothBody, boundary_points, canonical_jet
from .form_algebra import symmetrize3
from .quadrature import sphere_net

SYSTEM_TOL = 1e-8
FD_STEP = 1e-3


class BlaschkeError(ValueError):
    pass


class InconsistentEvidence(BlaschkeError):
    """Small cubic form but no quadric through the samples, or the reverse."""


class Underdetermined(BlaschkeError):
    pass


# ---------------------------------------------------------------------------
# graph oracles


class SphereGraph:
    """Lower cap of the unit sphere centered at ``(0, 1)``: ``f = 1 - sqrt(1 - |x|^2)``."""

    def __init__(self, dim: int):
        self.dim = dim

    def derivatives(self, x):
        x = np.asarray(x, dtype=float)
        m = len(x)
        w = np.sqrt(1.0 - x @ x)
        f = 1.0 - w
        g = x / w
        h = np.eye(m) / w + np.outer(x, x) / w ** 3
        eye = np.eye(m)
        t = (np.einsum("ij,k->ijk", eye, x) + np.einsum("ik,j->ijk", eye, x)
             + np.einsum("jk,i->ijk", eye, x)) / w ** 3 + 3.0 * np.einsum("i,j,k->ijk", x, x, x) / w ** 5
        return f, g, h, t


class PolynomialGraph:
    """``f(x) = 1/2 x^T A x + sum c_ijk x_i x_j x_k + sum d_ijkl x_i x_j x_k x_l``."""

    def __init__(self, quadratic, cubic=None, quartic=None, linear=None):
        self.a = np.asarray(quadratic, dtype=float)
        m = self.a.shape[0]
        self.dim = m
        self.c = symmetrize3(np.zeros((m,) * 3) if cubic is None else np.asarray(cubic, dtype=float))
        d = np.zeros((m,) * 4) if quartic is None else np.asarray(quartic, dtype=float)
        perms = [(0, 1, 2, 3), (0, 1, 3, 2), (0, 2, 1, 3), (0, 2, 3, 1), (0, 3, 1, 2), (0, 3, 2, 1)]
        d = sum(d.transpose(p) for p in perms) / 6.0
        d = (d + d.transpose(1, 0, 2, 3) + d.transpose(2, 1, 0, 3) + d.transpose(3, 1, 2, 0)) / 4.0
        self.d = d
        self.b = np.zeros(m) if linear is None else np.asarray(linear, dtype=float)

    def derivatives(self, x):
        x = np.asarray(x, dtype=float)
        a, c, d = self.a, self.c, self.d
        dx = d @ x
        dxx = dx @ x
        dxxx = dxx @ x
        cx = c @ x
        cxx = cx @ x
        f = 0.5 * x @ a @ x + cxx @ x + dxxx @ x + self.b @ x
        g = a @ x + 3.0 * cxx + 4.0 * dxxx + self.b
        h = a + 6.0 * cx + 12.0 * dxx
        t = 6.0 * c + 24.0 * dx
        return f, g, h, t


class JetGraph:
    """The canonical-chart graph of a body at a boundary point."""

    def __init__(self, jet):
        self.jet = jet
        self.dim = jet.frame.shape[1]

    def derivatives(self, x):
        return self.jet.graph_derivatives(np.asarray(x, dtype=float))


# ---------------------------------------------------------------------------
# Blaschke structure


@dataclass(frozen=True, eq=False)
class BlaschkeData:
    point: np.ndarray
    h: np.ndarray
    xi: np.ndarray
    gamma: np.ndarray
    S: np.ndarray | None
    C: np.ndarray
    h_recomputed: np.ndarray
    system_residual: float
    orientation: float

    def apolarity(self) -> np.ndarray:
        return np.einsum("ij,ijk->k", np.linalg.inv(self.h), self.C)

    def c_h_norm(self) -> float:
        """Norm of ``C`` measured with the affine metric (equiaffine invariant)."""
        hi = np.linalg.inv(self.h)
        return float(np.sqrt(max(0.0, np.einsum("ia,jb,kc,ijk,abc->", hi, hi, hi, self.C, self.C))))


def _metric_parts(hess, third):
    m = hess.shape[0]
    det = np.linalg.det(hess)
    if not np.isfinite(det) or abs(det) <= 1e-14 * max(1.0, np.abs(hess).max()) ** m:
        raise BlaschkeError("graph Hessian is degenerate")
    omega = abs(det) ** (-1.0 / (m + 2))
    hinv = np.linalg.inv(hess)
    dlog = np.einsum("ab,abk->k", hinv, third)
    domega = -omega / (m + 2) * dlog
    h = omega * hess
    dh = omega * third + np.einsum("ij,k->ijk", hess, domega)
    return h, dh, float(np.sign(det)), det


def affine_normal(hess, grad, third) -> np.ndarray:
    """``xi = (1/m) Delta_h phi`` with the Levi-Civita connection of ``h``."""
    m = hess.shape[0]
    h, dh, _, _ = _metric_parts(hess, third)
    hinv = np.linalg.inv(h)
    # lc[k, i, j] = Levi-Civita Christoffel symbols of h
    tmp = dh.transpose(0, 2, 1) + dh.transpose(2, 0, 1) - dh
    lc = 0.5 * np.einsum("kl,ijl->kij", hinv, tmp.transpose(0, 1, 2))
    tr = np.einsum("ij,kij->k", hinv, lc)
    xi = np.empty(m + 1)
    xi[:m] = -tr / m
    xi[m] = (np.einsum("ij,ij->", hinv, hess) - tr @ grad) / m
    return xi


def affine_normal_closed_form(hess, grad, third) -> np.ndarray:
    """Independent formula for the graph affine normal, used as an oracle."""
    m = hess.shape[0]
    det = abs(np.linalg.det(hess))
    hinv = np.linalg.inv(hess)
    dlog = np.einsum("ab,abk->k", hinv, third)
    xp = -(det ** (1.0 / (m + 2))) / (m + 2) * hinv @ dlog
    return np.append(xp, det ** (1.0 / (m + 2)) + xp @ grad)


def _xi_at(graph, x):
    _, g, hs, t = graph.derivatives(x)
    return affine_normal(hs, g, t)


def blaschke_at(graph, x, with_shape: bool = True, step: float = FD_STEP) -> BlaschkeData:
    """Blaschke structure of the graph of ``f`` at chart point ``x``.

    ``h = |det Hess f|^(-1/(m+2)) Hess f``; ``xi`` from the Laplacian of the
    position vector; the induced connection and a recomputed ``h`` from the
    Gauss equation ``phi_ij = Gamma^k_ij phi_k + h_ij xi``; the cubic form
    ``C_ijk = d_k h_ij - Gamma^l_ki h_lj - Gamma^l_kj h_il``.  The shape operator
    needs one more derivative than the data provides and is obtained from
    five-point central differences of ``xi``.
    """
    x = np.asarray(x, dtype=float)
    _, grad, hess, third = graph.derivatives(x)
    m = hess.shape[0]
    h, dh, orient, _ = _metric_parts(hess, third)
    xi = affine_normal(hess, grad, third)

    frame = np.zeros((m + 1, m + 1))
    frame[:m, :m] = np.eye(m)
    frame[m, :m] = grad
    frame[:, m] = xi
    rhs = np.zeros((m + 1, m * m))
    rhs[m] = hess.reshape(-1)
    sol = np.linalg.solve(frame, rhs)
    resid = float(np.abs(frame @ sol - rhs).max() / max(1.0, np.abs(rhs).max()))
    gamma = sol[:m].reshape(m, m, m)  # gamma[k, i, j]
    h_rec = sol[m].reshape(m, m)
    if resid > SYSTEM_TOL or np.abs(h_rec - h).max() > SYSTEM_TOL * max(1.0, np.abs(h).max()):
        raise BlaschkeError(f"structure equations inconsistent (residual {resid:.3e})")

    c = (dh.transpose(0, 1, 2)
         - np.einsum("lki,lj->ijk", gamma, h)
         - np.einsum("lkj,il->ijk", gamma, h))
    c = symmetrize3(c)

    s_op = None
    if with_shape:
        dxi = np.zeros((m + 1, m))
        for k in range(m):
            e = np.zeros(m)
            e[k] = step
            dxi[:, k] = (-_xi_at(graph, x + 2 * e) + 8 * _xi_at(graph, x + e)
                         - 8 * _xi_at(graph, x - e) + _xi_at(graph, x - 2 * e)) / (12.0 * step)
        coef = np.linalg.solve(frame, dxi)
        s_op = -coef[:m]
    return BlaschkeData(point=x, h=h, xi=xi, gamma=gamma, S=s_op, C=c, h_recomputed=h_rec,
                        system_residual=resid, orientation=orient)


# ---------------------------------------------------------------------------
# body-level checks


class CProfile(NamedTuple):
    max: float
    rms: float
    values: np.ndarray


def sample_boundary(body: SmoothBody, count: int, offset: int = 0) -> list:
    """Deterministic boundary points with positive definite second fundamental form."""
    dirs = sphere_net(body.dim, count + offset)[offset:]
    return [p for p in boundary_points(body, dirs) if p.sff_pd]


def cubic_C_profile(body: SmoothBody, sample) -> CProfile:
    vals = []
    for p in sample:
        if not p.sff_pd:
            raise BlaschkeError("sample point without positive definite second fundamental form")
        data = blaschke_at(JetGraph(canonical_jet(body, p)), np.zeros(body.dim - 1), with_shape=False)
        vals.append(np.linalg.norm(data.C))
    vals = np.asarray(vals)
    if len(vals) == 0:
        raise BlaschkeError("empty sample")
    return CProfile(float(vals.max()), float(np.sqrt(np.mean(vals ** 2))), vals)


@dataclass(frozen=True, eq=False)
class QuadricFit:
    coeffs: np.ndarray
    residual: float
    singular_values: np.ndarray


def fit_quadric(samples) -> QuadricFit:
    """Homogeneous least-squares quadric ``xt^T Q xt = 0`` with ``xt = (x, 1)`` and ``|Q|_F = 1``."""
    x = np.atleast_2d(np.asarray(samples, dtype=float))
    n = x.shape[1] + 1
    xt = np.column_stack((x, np.ones(len(x))))
    iu = np.triu_indices(n)
    ncoef = len(iu[0])
    if len(x) < ncoef:
        raise Underdetermined(f"need at least {ncoef} samples, got {len(x)}")
    w = np.where(iu[0] == iu[1], 1.0, np.sqrt(2.0))
    design = xt[:, iu[0]] * xt[:, iu[1]] * w
    _, s, vt = np.linalg.svd(design, full_matrices=False)
    if s[-2] <= 1e-9 * s[0]:
        raise Underdetermined("samples lie on more than one quadric")
    coef = vt[-1]
    q = np.zeros((n, n))
    q[iu] = coef / w
    q = q + np.triu(q, 1).T
    flat = q.reshape(-1)
    lead = flat[np.argmax(np.abs(flat) > 1e-12)]
    q = q * np.sign(lead) / np.linalg.norm(q)
    resid = float(np.sqrt(np.mean(np.einsum("ni,ij,nj->n", xt, q, xt) ** 2)))
    return QuadricFit(coeffs=q, residual=resid, singular_values=s)


def fit_body_quadric(body: SmoothBody, count: int = 200) -> QuadricFit:
    pts = np.array([p.point for p in boundary_points(body, sphere_net(body.dim, count))])
    return fit_quadric(pts)


class MPBResult(NamedTuple):
    kind: str
    fit: QuadricFit | None
    c_max: float


def mpb_classify(body: SmoothBody, tol: float = 1e-6, n_points: int = 50) -> MPBResult:
    """Quadric test: vanishing cubic form on a sample, confirmed by a quadric fit."""
    prof = cubic_C_profile(body, sample_boundary(body, n_points))
    if prof.max > tol:
        return MPBResult("NotQuadric", None, prof.max)
    fit = fit_body_quadric(body)
    if fit.residual > tol:
        raise InconsistentEvidence(
            f"cubic form below {tol:g} (max {prof.max:.3e}) but quadric fit residual {fit.residual:.3e}")
    return MPBResult("Quadric", fit, prof.max)
