"""Smooth origin-symmetric star bodies, their central sections, and boundary jets.

A body is the sublevel set ``{F <= 0}`` of a polynomial-type field ``F`` with
exact derivative oracles up to order three.  Every oracle accepts a single
point of shape ``(n,)`` or a batch of shape ``(N, n)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from numpy.polynomial import Polynomial

from .form_algebra import CubicForm, householder_complement
from .quadrature import canonical_sign, sphere_net

F_TOL = 1e-12


class BodyError(ValueError):
    """Raised for invalid body parameters or failed geometric preconditions."""


class NotStarShaped(BodyError):
    pass


class DegeneratePoint(BodyError):
    pass


class ChartUndefined(BodyError):
    pass


# ---------------------------------------------------------------------------
# bodies


class SmoothBody:
    """Base class; subclasses implement :meth:`_derivs` on a batch ``(N, n)``."""

    dim: int
    symmetric: bool = True
    ground_truth: dict

    def _derivs(self, x: np.ndarray, order: int) -> list:
        raise NotImplementedError

    @property
    def radius_bound(self) -> float:
        raise NotImplementedError

    @property
    def center(self) -> np.ndarray:
        return np.zeros(self.dim)

    def derivatives(self, x, order: int = 3) -> list:
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        out = self._derivs(np.atleast_2d(x), order)
        return [d[0] for d in out] if single else out

    def value(self, x):
        return self.derivatives(x, 0)[0]

    def grad(self, x):
        return self.derivatives(x, 1)[1]

    def hess(self, x):
        return self.derivatives(x, 2)[2]

    def third(self, x):
        return self.derivatives(x, 3)[3]


def _check_square(mat, name):
    mat = np.asarray(mat, dtype=float)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise BodyError(f"{name} must be a square matrix")
    return mat


class QuadricBody(SmoothBody):
    """Ellipsoid ``x^T Q x <= 1``."""

    def __init__(self, q):
        q = _check_square(q, "Q")
        if not np.allclose(q, q.T, atol=1e-14 * max(1.0, np.abs(q).max())):
            raise BodyError("Q must be symmetric")
        q = 0.5 * (q + q.T)
        w = np.linalg.eigvalsh(q)
        if w[0] <= 0:
            raise BodyError("Q must be positive definite")
        self.q = q
        self.dim = q.shape[0]
        self.ground_truth = {"family": "ellipsoid"}
        self._bound = 1.0 / np.sqrt(w[0])

    @property
    def radius_bound(self):
        return 1.05 * self._bound

    def _derivs(self, x, order):
        qx = x @ self.q
        out = [np.einsum("ni,ni->n", qx, x) - 1.0]
        if order >= 1:
            out.append(2.0 * qx)
        if order >= 2:
            out.append(np.broadcast_to(2.0 * self.q, (len(x),) + self.q.shape))
        if order >= 3:
            out.append(np.zeros((len(x),) + (self.dim,) * 3))
        return out


class AxialProfileBody(SmoothBody):
    """``|x_perp|^2 <= r(x_a)^2 (1 - x_a^2)``: orthogonal revolution body about axis ``a``.

    ``profile`` holds the coefficients of ``r`` in even powers, ``r(t) = sum_k p_k t^(2k)``.
    """

    def __init__(self, dim: int, profile, axis_index: int):
        if dim < 2:
            raise BodyError("dimension must be at least 2")
        if not 0 <= axis_index < dim:
            raise BodyError(f"axis_index {axis_index} out of range for dim {dim}")
        coeffs = np.zeros(2 * len(profile) - 1) if len(profile) else np.zeros(1)
        coeffs[::2] = np.asarray(profile, dtype=float)
        r = Polynomial(coeffs)
        grid = np.linspace(-1.0, 1.0, 2001)
        if np.min(r(grid)) <= 0.0:
            raise BodyError("profile r(t) must stay positive on [-1, 1]")
        self.profile = np.asarray(profile, dtype=float)
        self.r = r
        self.phi = r * r * Polynomial([1.0, 0.0, -1.0])
        self.dphi = [self.phi.deriv(k) for k in (1, 2, 3)]
        self.dim = dim
        self.axis_index = axis_index
        self.ground_truth = {"family": "revolution", "axis": np.eye(dim)[axis_index]}
        self._bound = float(np.sqrt(np.max(self.phi(grid) + grid ** 2)))

    @property
    def radius_bound(self):
        return 1.05 * self._bound

    def _derivs(self, x, order):
        a = self.axis_index
        s = x[:, a]
        out = [np.einsum("ni,ni->n", x, x) - s * s - self.phi(s)]
        if order >= 1:
            g = 2.0 * x
            g[:, a] = -self.dphi[0](s)
            out.append(g)
        if order >= 2:
            h = np.zeros((len(x), self.dim, self.dim))
            idx = np.arange(self.dim)
            h[:, idx, idx] = 2.0
            h[:, a, a] = -self.dphi[1](s)
            out.append(h)
        if order >= 3:
            t = np.zeros((len(x),) + (self.dim,) * 3)
            t[:, a, a, a] = -self.dphi[2](s)
            out.append(t)
        return out


class PullbackBody(SmoothBody):
    """``F(y) = F_base(M y)`` for a linear map ``M`` (R^k -> R^n)."""

    def __init__(self, base: SmoothBody, mat, bound_scale: float):
        mat = np.asarray(mat, dtype=float)
        # Collapse chains of pullbacks into one matrix so oracles cost one level.
        self._eval_base, self._eval_mat = base, mat
        if isinstance(base, PullbackBody):
            self._eval_base, self._eval_mat = base._eval_base, base._eval_mat @ mat
        self.base = base
        self.mat = mat
        self.dim = self.mat.shape[1]
        self.symmetric = base.symmetric
        self._bound_scale = bound_scale
        self.ground_truth = {}

    @property
    def radius_bound(self):
        return self._bound_scale * self.base.radius_bound

    def _derivs(self, y, order):
        m = self._eval_mat
        d = self._eval_base._derivs(y @ m.T, order)
        out = [d[0]]
        if order >= 1:
            out.append(d[1] @ m)
        if order >= 2:
            out.append(np.einsum("nab,ai,bj->nij", d[2], m, m))
        if order >= 3:
            out.append(np.einsum("nabc,ai,bj,ck->nijk", d[3], m, m, m, optimize=True))
        return out


class LinearImage(PullbackBody):
    """The body ``A K`` for invertible ``A``."""

    def __init__(self, base: SmoothBody, a):
        a = _check_square(a, "conjugator")
        if a.shape[0] != base.dim:
            raise BodyError("conjugator dimension mismatch")
        s = np.linalg.svd(a, compute_uv=False)
        if s[-1] <= 1e-12 * s[0]:
            raise BodyError("conjugator is singular")
        super().__init__(base, np.linalg.inv(a), bound_scale=float(s[0]))
        self.transform = a
        self.ground_truth = dict(base.ground_truth)
        if "axis" in base.ground_truth:
            ax = a @ base.ground_truth["axis"]
            self.ground_truth["axis"] = canonical_sign(ax / np.linalg.norm(ax))


@dataclass(frozen=True, eq=False)
class Hyperplane:
    """Linear hyperplane ``normal^perp``; the normal is stored unit length with canonical sign."""

    normal: np.ndarray

    def __post_init__(self):
        n = np.asarray(self.normal, dtype=float)
        norm = np.linalg.norm(n)
        if not np.isfinite(norm) or norm == 0.0:
            raise BodyError("hyperplane normal must be nonzero")
        n = canonical_sign(n / norm)
        n.setflags(write=False)
        object.__setattr__(self, "normal", n)

    @property
    def ambient_dim(self) -> int:
        return len(self.normal)

    def basis(self) -> np.ndarray:
        return householder_complement(self.normal)


class SectionBody(PullbackBody):
    """Central section ``K cap H`` in the coordinates of an orthonormal basis of ``H``."""

    def __init__(self, parent: SmoothBody, hyperplane: Hyperplane, embed=None):
        if hyperplane.ambient_dim != parent.dim:
            raise BodyError(f"hyperplane in R^{hyperplane.ambient_dim} vs body in R^{parent.dim}")
        e = hyperplane.basis() if embed is None else np.asarray(embed, dtype=float)
        super().__init__(parent, e, bound_scale=1.0)
        self.parent = parent
        self.hyperplane = hyperplane
        self.embed = e

    def lift(self, y):
        return np.asarray(y, dtype=float) @ self.embed.T

    def project(self, x):
        return np.asarray(x, dtype=float) @ self.embed


def _even_poly_tensors(dim, terms):
    const, quad, quart = 0.0, np.zeros((dim, dim)), np.zeros((dim,) * 4)
    import itertools

    for expo, coeff in terms:
        expo = tuple(int(k) for k in expo)
        if len(expo) != dim or min(expo) < 0:
            raise BodyError(f"bad exponent vector {expo}")
        deg = sum(expo)
        idx = [i for i, k in enumerate(expo) for _ in range(k)]
        if deg == 0:
            const += coeff
        elif deg == 2:
            for p in itertools.permutations(idx):
                quad[p] += coeff / 2.0
        elif deg == 4:
            for p in itertools.permutations(idx):
                quart[p] += coeff / 24.0
        else:
            raise BodyError(f"perturbation terms must have degree 0, 2 or 4, got {deg}")
    return const, quad, quart


class PerturbedBody(SmoothBody):
    """``F = F_base + amplitude * P`` with ``P`` an even polynomial of degree <= 4."""

    def __init__(self, base: SmoothBody, amplitude: float, terms):
        self.base = base
        self.amplitude = float(amplitude)
        self.terms = [(tuple(int(k) for k in e), float(c)) for e, c in terms]
        self.dim = base.dim
        self.c0, self.b, self.d = _even_poly_tensors(self.dim, self.terms)
        self.ground_truth = {"family": "perturbed"}

    @property
    def radius_bound(self):
        return 1.5 * self.base.radius_bound

    def _derivs(self, x, order):
        base = self.base._derivs(x, order)
        a = self.amplitude
        if a == 0.0:
            return base
        m = self.dim
        xx = (x[:, :, None] * x[:, None, :]).reshape(-1, m * m)
        dxx = (xx @ self.d.reshape(m * m, m * m)).reshape(-1, m, m)
        dxxx = np.einsum("nij,nj->ni", dxx, x)
        bx = x @ self.b
        out = [base[0] + a * (self.c0 + np.einsum("ni,ni->n", bx, x) + np.einsum("ni,ni->n", dxxx, x))]
        if order >= 1:
            out.append(base[1] + a * (2.0 * bx + 4.0 * dxxx))
        if order >= 2:
            out.append(base[2] + a * (2.0 * self.b + 12.0 * dxx))
        if order >= 3:
            out.append(base[3] + a * 24.0 * np.einsum("ijkl,nl->nijk", self.d, x))
        return out


# ---------------------------------------------------------------------------
# radial root finding


def _f_and_slope(body, dirs, t):
    d = body._derivs(t[:, None] * dirs, 1)
    return d[0], np.einsum("ni,ni->n", d[1], dirs)


def _scan_brackets(body, dirs, t_max, nscan):
    ts = t_max * np.arange(1, nscan + 1) / nscan
    pts = ts[None, :, None] * dirs[:, None, :]
    vals = body._derivs(pts.reshape(-1, body.dim), 0)[0].reshape(len(dirs), nscan)
    pos = vals > 0
    has = pos.any(axis=1)
    k = np.argmax(pos, axis=1)
    hi = ts[k]
    lo = np.where(k > 0, ts[np.maximum(k - 1, 0)], 0.0)
    changes = np.count_nonzero(np.diff(np.concatenate([np.zeros((len(dirs), 1), bool), pos], axis=1)
                                       .astype(np.int8), axis=1), axis=1)
    return lo, hi, has, changes


def _newton_bracketed(body, dirs, lo, hi, max_iter=100):
    t = 0.5 * (lo + hi)
    f, df = _f_and_slope(body, dirs, t)
    active = np.ones(len(t), dtype=bool)
    for _ in range(max_iter):
        idx = np.flatnonzero(active)
        if len(idx) == 0:
            break
        fi, dfi, ti = f[idx], df[idx], t[idx]
        hi[idx] = np.where(fi > 0, ti, hi[idx])
        lo[idx] = np.where(fi <= 0, ti, lo[idx])
        with np.errstate(divide="ignore", invalid="ignore"):
            tn = ti - fi / dfi
        bad = ~np.isfinite(tn) | (tn <= lo[idx]) | (tn >= hi[idx])
        tn = np.where(bad, 0.5 * (lo[idx] + hi[idx]), tn)
        step = np.abs(tn - ti)
        t[idx] = tn
        f[idx], df[idx] = _f_and_slope(body, dirs[idx], tn)
        done = (step <= 4e-16 * tn) | ((hi[idx] - lo[idx]) <= 4e-16 * tn)
        active[idx[done]] = False
    return t, f


def _newton_warm(body, dirs, t0, iters=12):
    t = t0.copy()
    f, df = _f_and_slope(body, dirs, t)
    for _ in range(iters):
        with np.errstate(divide="ignore", invalid="ignore"):
            step = f / df
        t = t - step
        f, df = _f_and_slope(body, dirs, t)
        if np.all(np.abs(step) <= 1e-15 * np.abs(t)):
            break
    ok = np.isfinite(t) & (np.abs(f) <= F_TOL) & (t > 0.5 * t0) & (t < 2.0 * t0)
    return t, ok


def radial_function(body: SmoothBody, dirs, hint=None, nscan: int = 48, check_unique: bool = False):
    """Boundary radius ``rho(theta)`` along each direction (rows of ``dirs``, normalized here).

    The first sign change of ``F(t theta)`` on ``(0, radius_bound]`` is bracketed
    by a coarse scan and polished by safeguarded Newton.  With ``hint`` the
    scan is skipped for directions where Newton from the hint converges.
    """
    dirs = np.atleast_2d(np.asarray(dirs, dtype=float))
    dirs = dirs / np.linalg.norm(dirs, axis=1, keepdims=True)
    t = np.empty(len(dirs))
    todo = np.ones(len(dirs), dtype=bool)
    if hint is not None:
        tw, ok = _newton_warm(body, dirs, np.broadcast_to(np.asarray(hint, dtype=float), (len(dirs),)).copy())
        t[ok] = tw[ok]
        todo = ~ok
    if todo.any():
        idx = np.flatnonzero(todo)
        lo, hi, has, changes = _scan_brackets(body, dirs[idx], body.radius_bound, nscan)
        if not has.all():
            bad = dirs[idx[~has][0]]
            raise NotStarShaped(f"no boundary crossing along direction {bad.tolist()} within radius bound")
        if check_unique and (changes > 1).any():
            bad = dirs[idx[changes > 1][0]]
            raise NotStarShaped(f"multiple boundary crossings along direction {bad.tolist()}")
        tb, fb = _newton_bracketed(body, dirs[idx], lo, hi)
        t[idx] = tb
    return t


@dataclass(frozen=True, eq=False)
class BoundaryPoint:
    point: np.ndarray
    direction: np.ndarray
    radius: float
    sff_pd: bool


class SecondFundamentalForm(NamedTuple):
    matrix: np.ndarray
    curvatures: np.ndarray
    basis: np.ndarray


def second_fundamental_form(body: SmoothBody, p) -> SecondFundamentalForm:
    """Shape matrix ``U^T Hess F U / |grad F|`` in an orthonormal tangent basis ``U``."""
    p = np.asarray(getattr(p, "point", p), dtype=float)
    _, g, h = body.derivatives(p, 2)
    gn = np.linalg.norm(g)
    if gn == 0.0 or not np.isfinite(gn):
        raise DegeneratePoint("gradient vanishes; boundary is not a regular level set here")
    u = householder_complement(g / gn)
    s = u.T @ h @ u / gn
    s = 0.5 * (s + s.T)
    return SecondFundamentalForm(s, np.sort(np.linalg.eigvalsh(s)), u)


def boundary_project(body: SmoothBody, direction) -> BoundaryPoint:
    d = np.asarray(direction, dtype=float)
    nd = np.linalg.norm(d)
    if nd == 0.0:
        raise BodyError("direction must be nonzero")
    d = d / nd
    t = float(radial_function(body, d[None, :], check_unique=True)[0])
    x = t * d
    if abs(float(body.value(x))) > F_TOL:
        raise NotStarShaped(f"root finder did not reach |F| <= {F_TOL} along {d.tolist()}")
    curv = second_fundamental_form(body, x).curvatures
    return BoundaryPoint(point=x, direction=d, radius=t, sff_pd=bool(curv[0] > 0))


def boundary_points(body: SmoothBody, dirs) -> list:
    """Batched :func:`boundary_project` over the rows of ``dirs``."""
    dirs = np.atleast_2d(np.asarray(dirs, dtype=float))
    dirs = dirs / np.linalg.norm(dirs, axis=1, keepdims=True)
    rho = radial_function(body, dirs, check_unique=True)
    out = []
    for d, t in zip(dirs, rho):
        x = t * d
        curv = second_fundamental_form(body, x).curvatures
        out.append(BoundaryPoint(point=x, direction=d, radius=float(t), sff_pd=bool(curv[0] > 0)))
    return out


def check_star_shaped(body: SmoothBody, ndirs: int = 1000) -> None:
    """Sampled check that every ray from the origin crosses the boundary exactly once."""
    dirs = sphere_net(body.dim, ndirs)
    radial_function(body, dirs, nscan=96, check_unique=True)


def section(body: SmoothBody, hp: Hyperplane) -> SectionBody:
    return SectionBody(body, hp)


# ---------------------------------------------------------------------------
# canonical jets


@dataclass(frozen=True, eq=False)
class Jet3:
    """Canonical third-order chart at a boundary point.

    Chart coordinates ``(x, t)`` describe the ambient point
    ``origin + frame @ x + t * transversal`` with ``transversal = O - p``; the
    boundary is the graph ``t = f(x)`` with ``f = |x|^2 / 2 + cubic(x) + O(|x|^4)``.
    """

    body: SmoothBody
    base: BoundaryPoint
    frame: np.ndarray
    transversal: np.ndarray
    cubic: CubicForm

    @property
    def origin(self) -> np.ndarray:
        return self.base.point

    @property
    def chart_matrix(self) -> np.ndarray:
        return np.column_stack((self.frame, self.transversal))

    def to_chart(self, x):
        z = np.linalg.solve(self.chart_matrix, (np.asarray(x, dtype=float) - self.origin).T).T
        return z

    def from_chart(self, x, t):
        x = np.asarray(x, dtype=float)
        return self.origin + x @ self.frame.T + np.asarray(t, dtype=float)[..., None] * self.transversal

    def tangent_to_chart(self, v):
        """Chart coordinates of ambient tangent directions (columns of ``v``)."""
        coef, *_ = np.linalg.lstsq(self.frame, np.asarray(v, dtype=float), rcond=None)
        return coef

    def graph(self, x):
        """``f(x)`` by Newton along the transversal direction."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        base = self.origin + x @ self.frame.T
        d = self.transversal
        t = 0.5 * np.einsum("ni,ni->n", x, x)
        for _ in range(60):
            vals, g = self.body._derivs(base + t[:, None] * d, 1)
            step = vals / (g @ d)
            t = t - step
            if np.all(np.abs(step) <= 1e-16 * np.maximum(1.0, np.abs(t))):
                break
        return t

    def graph_derivatives(self, x):
        """``(f, grad f, Hess f, third f)`` at one chart point by implicit differentiation."""
        x = np.asarray(x, dtype=float)
        fval = float(self.graph(x[None, :])[0])
        pt = self.from_chart(x, fval)
        _, g, h, t3 = self.body.derivatives(pt, 3)
        d, w = self.transversal, self.frame
        gd = g @ d
        f1 = -(g @ w) / gd
        v = w + np.outer(d, f1)
        f2 = -(v.T @ h @ v) / gd
        hdv = d @ h @ v
        f3 = np.einsum("abc,ai,bj,ck->ijk", t3, v, v, v)
        f3 = f3 + np.einsum("ij,k->ijk", f2, hdv) + np.einsum("ik,j->ijk", f2, hdv) + np.einsum("jk,i->ijk", f2, hdv)
        f3 = -f3 / gd
        return fval, f1, f2, f3


def canonical_jet(body: SmoothBody, p: BoundaryPoint, tangent_basis=None) -> Jet3:
    """Canonical parametrization at ``p`` up to order three.

    With ``G(x, t) = F(p + W x + t d)`` and ``d = O - p`` the graph derivatives
    at the chart origin are ``f_ij = -G_ij / G_t`` and
    ``f_ijk = -(G_ijk + G_it f_jk + G_jt f_ik + G_kt f_ij) / G_t``; ``W`` is an
    orthonormal tangent basis times ``(Hess f)^(-1/2)`` so the Hessian is the identity.
    """
    if not p.sff_pd:
        raise DegeneratePoint("second fundamental form is not positive definite at this point")
    x = p.point
    _, g, h, t3 = body.derivatives(x, 3)
    d = body.center - x
    gn, dn = np.linalg.norm(g), np.linalg.norm(d)
    gd = float(g @ d)
    if abs(gd) <= 1e-9 * gn * dn:
        raise ChartUndefined("tangent hyperplane passes through the center")
    if tangent_basis is None:
        u = householder_complement(g / gn)
    else:
        u = np.asarray(tangent_basis, dtype=float)
        if np.abs(u.T @ g).max() > 1e-10 * gn or not np.allclose(u.T @ u, np.eye(body.dim - 1), atol=1e-12):
            raise BodyError("tangent_basis must be an orthonormal basis of the tangent space")
    hf0 = -(u.T @ h @ u) / gd
    w_eig, v_eig = np.linalg.eigh(0.5 * (hf0 + hf0.T))
    if w_eig[0] <= 0:
        raise DegeneratePoint("graph Hessian is not positive definite")
    l = v_eig @ np.diag(w_eig ** -0.5) @ v_eig.T
    w = u @ l
    f2 = -(w.T @ h @ w) / gd
    hdw = d @ h @ w
    f3 = np.einsum("abc,ai,bj,ck->ijk", t3, w, w, w)
    f3 = f3 + np.einsum("ij,k->ijk", f2, hdw) + np.einsum("ik,j->ijk", f2, hdw) + np.einsum("jk,i->ijk", f2, hdw)
    f3 = -f3 / gd
    return Jet3(body=body, base=p, frame=w, transversal=d, cubic=CubicForm(f3 / 6.0))


# ---------------------------------------------------------------------------
# family constructors


def make_ellipsoid(q) -> QuadricBody:
    return QuadricBody(q)


def make_revolution_body(profile, axis_index: int, conjugator) -> SmoothBody:
    conjugator = _check_square(conjugator, "conjugator")
    base = AxialProfileBody(conjugator.shape[0], profile, axis_index)
    body = LinearImage(base, conjugator)
    check_star_shaped(body)
    return body


def make_perturbed_body(base: SmoothBody, amplitude: float, harmonics) -> SmoothBody:
    body = PerturbedBody(base, amplitude, harmonics)
    if amplitude != 0.0:
        check_star_shaped(body)
        if body.value(np.zeros(body.dim)) >= 0:
            raise NotStarShaped("perturbation moved the origin out of the body")
    return body


def random_harmonics(dim: int, seed: int) -> list:
    """Seeded harmonic quartic with unit RMS on the sphere, as monomial terms.

    Components of lower spherical degree are projected out: on the sphere they
    act as quadratic changes of the radial function, which an affine map
    largely undoes, so only the harmonic part keeps a perturbed ball away
    from every body of revolution.
    """
    import itertools

    from .quadrature import sphere_quadrature

    rng = np.random.default_rng(seed)
    monos = []
    for combo in itertools.combinations_with_replacement(range(dim), 4):
        expo = [0] * dim
        for i in combo:
            expo[i] += 1
        monos.append(tuple(expo))
    coef = rng.standard_normal(len(monos))
    nodes, weights = sphere_quadrature(dim, 8)
    ex = np.array(monos)
    vals = np.prod(nodes[:, None, :] ** ex[None, :, :], axis=2)
    p = vals @ coef
    iu = np.triu_indices(dim)
    low = nodes[:, iu[0]] * nodes[:, iu[1]]
    sw = np.sqrt(weights)
    b, *_ = np.linalg.lstsq(low * sw[:, None], p * sw, rcond=None)
    # subtract |x|^2 * sum_{j<=k} b_jk x_j x_k, expanded into quartic monomials
    index = {e: n for n, e in enumerate(monos)}
    for bjk, j, k in zip(b, *iu):
        for i in range(dim):
            expo = [0] * dim
            expo[i] += 2
            expo[j] += 1
            expo[k] += 1
            coef[index[tuple(expo)]] -= bjk
    rms = float(np.sqrt(weights @ (vals @ coef) ** 2))
    return [(e, float(c / rms)) for e, c in zip(monos, coef)]
