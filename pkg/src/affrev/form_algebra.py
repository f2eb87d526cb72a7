"""Homogeneous quadratic and cubic forms.

Storage convention: a cubic form is a fully symmetric ``m x m x m`` array with
``c(x) = sum_ijk c_ijk x_i x_j x_k`` over all ``m**3`` index triples, and a
quadratic form is a symmetric matrix with ``q(x) = x^T M x``.  So the monomial
``xyz`` is stored as six entries of 1/6 and ``x^3`` as a single entry 1.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .quadrature import canonical_sign, sphere_net

DEFAULT_TOL = 1e-7
ZERO_FLOOR = 1e-8
MERGE_COS = 1.0 - 1e-8


def symmetrize3(t: np.ndarray) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    return sum(t.transpose(p) for p in itertools.permutations(range(3))) / 6.0


def householder_complement(normal) -> np.ndarray:
    """Orthonormal basis (columns) of ``normal^perp`` from a Householder reflector.

    Deterministic in ``normal``: the reflector sends ``normal`` to a multiple of
    the first basis vector and its remaining columns span the complement.
    """
    n = np.asarray(normal, dtype=float)
    n = n / np.linalg.norm(n)
    v = n.copy()
    v[0] += 1.0 if n[0] >= 0 else -1.0
    h = np.eye(len(n)) - 2.0 * np.outer(v, v) / (v @ v)
    return h[:, 1:]


def _normal_of(hp) -> np.ndarray:
    return np.asarray(getattr(hp, "normal", hp), dtype=float)


@dataclass(frozen=True, eq=False)
class QuadraticForm:
    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        m = 0.5 * (m + m.T)
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return np.einsum("...i,ij,...j->...", x, self.matrix, x)

    def norm(self) -> float:
        return float(np.linalg.norm(self.matrix))


@dataclass(frozen=True, eq=False)
class CubicForm:
    tensor: np.ndarray

    def __post_init__(self):
        t = symmetrize3(self.tensor)
        if t.ndim != 3 or len(set(t.shape)) != 1:
            raise ValueError(f"cubic tensor must be m x m x m, got {t.shape}")
        if not np.all(np.isfinite(t)):
            raise ValueError("cubic tensor has non-finite entries")
        t.setflags(write=False)
        object.__setattr__(self, "tensor", t)

    @property
    def dim(self) -> int:
        return self.tensor.shape[0]

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return np.einsum("ijk,...i,...j,...k->...", self.tensor, x, x, x)

    def norm(self) -> float:
        return float(np.linalg.norm(self.tensor))

    def pullback(self, basis) -> "CubicForm":
        """The form ``y -> c(E y)`` for a matrix ``E`` with columns in R^m."""
        e = np.asarray(basis, dtype=float)
        return CubicForm(np.einsum("abc,ai,bj,ck->ijk", self.tensor, e, e, e))

    @classmethod
    def zero(cls, m: int) -> "CubicForm":
        return cls(np.zeros((m, m, m)))

    @classmethod
    def from_monomials(cls, m: int, terms) -> "CubicForm":
        """Build from ``[(exponents, coeff), ...]`` with total degree 3."""
        t = np.zeros((m, m, m))
        for expo, coeff in terms:
            idx = [i for i, k in enumerate(expo) for _ in range(k)]
            if len(idx) != 3:
                raise ValueError(f"monomial {expo} is not cubic")
            for perm in itertools.permutations(idx):
                t[perm] += coeff / 6.0
        return cls(t)

    @classmethod
    def product(cls, u, q) -> "CubicForm":
        """Tensor of ``<u, x> * q(x)`` for a vector ``u`` and symmetric matrix ``q``."""
        u = np.asarray(u, dtype=float)
        q = np.asarray(getattr(q, "matrix", q), dtype=float)
        return cls(np.einsum("i,jk->ijk", u, q))

    @classmethod
    def linear_product(cls, a, b, c) -> "CubicForm":
        return cls(np.einsum("i,j,k->ijk", *(np.asarray(v, dtype=float) for v in (a, b, c))))


@dataclass(frozen=True)
class Factor:
    normal: np.ndarray
    cofactor: QuadraticForm
    residual: float
    restriction_residual: float


@dataclass(frozen=True)
class LinearFactorization:
    factors: list = field(default_factory=list)
    is_zero: bool = False
    exhausted: bool = False

    @property
    def normals(self) -> list:
        return [f.normal for f in self.factors]


def restrict(c: CubicForm, hp) -> CubicForm:
    """Restrict ``c`` to the hyperplane ``hp`` (a Hyperplane or its normal)."""
    normal = _normal_of(hp)
    if normal.shape[0] != c.dim:
        raise ValueError(f"hyperplane in R^{normal.shape[0]} vs cubic in {c.dim} variables")
    return c.pullback(householder_complement(normal))


def restriction_norm_sq(c: CubicForm, u) -> np.ndarray:
    """``||c restricted to u^perp||_F^2`` for one or many unit vectors ``u`` (basis free)."""
    u = np.asarray(u, dtype=float)
    m = c.dim
    p = np.eye(m) - u[..., :, None] * u[..., None, :]
    cp = np.einsum("ijk,...ia,...jb,...kc->...abc", c.tensor, p, p, p)
    return np.einsum("...abc,...abc->...", cp, cp)


def _restriction_gradient(t: np.ndarray, u: np.ndarray):
    # With P = I - uu^T the basis-free restriction norm expands to
    # R(u) = |c|^2 - 3|c.u|^2 + 3|c.u.u|^2 - c(u)^2.
    m = t.shape[0]
    a = (t.reshape(m * m, m) @ u.T).T.reshape(-1, m, m)
    b = np.einsum("sij,sj->si", a, u)
    s = np.einsum("si,si->s", b, u)
    r = np.sum(t * t) - 3.0 * np.einsum("sij,sij->s", a, a) + 3.0 * np.einsum("si,si->s", b, b) - s * s
    ca = (a.reshape(-1, m * m) @ t.reshape(m * m, m))
    g = -6.0 * ca + 12.0 * np.einsum("sij,sj->si", a, b) - 6.0 * s[:, None] * b
    return r, g


def _sphere_descent(t: np.ndarray, starts: np.ndarray, max_iter: int = 5000, step_tol: float = 1e-12):
    """Projected gradient descent of R(u) on the unit sphere with Armijo backtracking.

    All starts advance together; the trial step is the Barzilai-Borwein length
    of the previous iteration.  A start stops once its accepted step is below
    ``step_tol``.
    """
    u = starts / np.linalg.norm(starts, axis=1, keepdims=True)
    r, g = _restriction_gradient(t, u)
    rg = g - np.sum(g * u, axis=1, keepdims=True) * u
    step = np.full(len(u), 0.1)
    active = np.ones(len(u), dtype=bool)
    for _ in range(max_iter):
        idx = np.flatnonzero(active)
        if len(idx) == 0:
            break
        ui, ri, rgi, si = u[idx], r[idx], rg[idx], step[idx].copy()
        gn2 = np.sum(rgi * rgi, axis=1)
        accepted = gn2 == 0.0
        new_u, new_r, new_g = ui.copy(), ri.copy(), g[idx].copy()
        for _ in range(60):
            todo = np.flatnonzero(~accepted)
            if len(todo) == 0:
                break
            cand = ui[todo] - si[todo, None] * rgi[todo]
            cand /= np.linalg.norm(cand, axis=1, keepdims=True)
            rc, gc = _restriction_gradient(t, cand)
            ok = rc <= ri[todo] - 1e-4 * si[todo] * gn2[todo]
            sel = todo[ok]
            new_u[sel], new_r[sel], new_g[sel] = cand[ok], rc[ok], gc[ok]
            accepted[sel] = True
            si[todo[~ok]] *= 0.5
        new_rg = new_g - np.sum(new_g * new_u, axis=1, keepdims=True) * new_u
        du = new_u - ui
        moved = np.linalg.norm(du, axis=1)
        dg = new_rg - rgi
        denom = np.sum(du * dg, axis=1)
        bb = np.where(denom > 0, np.sum(du * du, axis=1) / np.where(denom > 0, denom, 1.0), si * 2.0)
        u[idx], r[idx], g[idx], rg[idx] = new_u, new_r, new_g, new_rg
        step[idx] = np.clip(bb, 1e-8, 10.0)
        done = (moved < step_tol) | (~accepted)
        active[idx[done]] = False
    return u, r, ~active


def divide_by_linear(c: CubicForm, u) -> tuple[QuadraticForm, float]:
    """Least-squares ``q`` with ``c(x) ~ <u, x> q(x)``; returns ``(q, relative residual)``."""
    u = np.asarray(u, dtype=float)
    m = c.dim
    pairs = [(a, b) for a in range(m) for b in range(a, m)]
    cols = []
    for a, b in pairs:
        e = np.zeros((m, m))
        e[a, b] = e[b, a] = 1.0
        cols.append(symmetrize3(np.einsum("i,jk->ijk", u, e)).ravel())
    design = np.stack(cols, axis=1)
    coef, *_ = np.linalg.lstsq(design, c.tensor.ravel(), rcond=None)
    q = np.zeros((m, m))
    for (a, b), v in zip(pairs, coef):
        q[a, b] = q[b, a] = v
    cn = c.norm()
    rem = c.tensor.ravel() - design @ coef
    res = float(np.linalg.norm(rem) / cn) if cn > 0 else 0.0
    return QuadraticForm(q), res


def quadratic_factor_split(q: QuadraticForm, rel_tol: float = 1e-10) -> list:
    """Normals of the real hyperplanes making up ``{q = 0}``, when ``q`` splits into linear forms."""
    mat = np.asarray(getattr(q, "matrix", q), dtype=float)
    scale = np.linalg.norm(mat)
    if scale == 0.0:
        return []
    w, v = np.linalg.eigh(mat)
    nz = np.flatnonzero(np.abs(w) > rel_tol * scale)
    if len(nz) == 1:
        return [canonical_sign(v[:, nz[0]])]
    if len(nz) == 2 and w[nz[0]] * w[nz[1]] < 0:
        neg, pos = (nz[0], nz[1]) if w[nz[0]] < 0 else (nz[1], nz[0])
        a = np.sqrt(w[pos]) * v[:, pos]
        b = np.sqrt(-w[neg]) * v[:, neg]
        out = []
        for cand in (a + b, a - b):
            out.append(canonical_sign(cand / np.linalg.norm(cand)))
        return out
    return []


def rotational_fit(q: QuadraticForm, axis) -> tuple[float, float, float]:
    """Fit ``q ~ a I + b axis axis^T`` in Frobenius norm; returns ``(a, b, relative residual)``."""
    mat = np.asarray(getattr(q, "matrix", q), dtype=float)
    axis = np.asarray(axis, dtype=float)
    m = mat.shape[0]
    basis = np.stack([np.eye(m).ravel(), np.outer(axis, axis).ravel()], axis=1)
    (a, b), *_ = np.linalg.lstsq(basis, mat.ravel(), rcond=None)
    qn = np.linalg.norm(mat)
    if qn == 0.0:
        return 0.0, 0.0, 0.0
    res = np.linalg.norm(mat.ravel() - basis @ np.array([a, b])) / qn
    return float(a), float(b), float(res)


def orthogonal_invariants(c: CubicForm) -> np.ndarray:
    """``(||c||_F, ||c_jjk||, sorted eig(c_ijk c_ljk))`` -- unchanged by ``c -> c o Q``, Q orthogonal."""
    t = c.tensor
    trace_vec = np.einsum("jjk->k", t)
    contraction = np.einsum("ijk,ljk->il", t, t)
    eig = np.sort(np.linalg.eigvalsh(contraction))
    return np.concatenate(([np.linalg.norm(t), np.linalg.norm(trace_vec)], eig))


def _make_factor(c: CubicForm, u) -> Factor:
    u = canonical_sign(np.asarray(u, dtype=float) / np.linalg.norm(u))
    q, res = divide_by_linear(c, u)
    rres = float(np.sqrt(max(restriction_norm_sq(c, u), 0.0)) / c.norm())
    return Factor(normal=u, cofactor=q, residual=res, restriction_residual=rres)


def _polish(c: CubicForm, u: np.ndarray) -> np.ndarray:
    # Gauss-Newton on the division residual: converges to machine precision
    # from the descent output when an exact factor exists.
    from scipy.optimize import least_squares

    basis = householder_complement(u)

    def resid(w):
        v = u + basis @ w
        v = v / np.linalg.norm(v)
        q, _ = divide_by_linear(c, v)
        return (c.tensor - symmetrize3(np.einsum("i,jk->ijk", v, q.matrix))).ravel()

    sol = least_squares(resid, np.zeros(c.dim - 1), method="lm", xtol=1e-15, ftol=1e-15, gtol=1e-15)
    v = u + basis @ sol.x
    return v / np.linalg.norm(v)


def linear_factors(c: CubicForm, tol: float = DEFAULT_TOL, n_starts: int = 64, seed: int = 0,
                   zero_floor: float = ZERO_FLOOR) -> LinearFactorization:
    """Real linear factors of a cubic form.

    Multi-start projected-gradient descent of ``||c|_{u^perp}||_F^2`` over the
    unit sphere; each accepted normal deflates ``c`` to a quadratic cofactor
    which is then split by :func:`quadratic_factor_split`.  At most three
    factors are returned, sorted by non-increasing residual.
    """
    cn = c.norm()
    if cn <= zero_floor:
        return LinearFactorization(factors=[], is_zero=True)
    m = c.dim
    rng = np.random.default_rng(seed)
    starts = np.concatenate([sphere_net(m, n_starts // 2) if m >= 2 else np.ones((1, 1)),
                             rng.standard_normal((n_starts - n_starts // 2, m))])
    t = c.tensor / cn
    u, r, converged = _sphere_descent(t, starts)
    order = np.argsort(r, kind="stable")

    candidates = []
    for i in order:
        if np.sqrt(max(r[i], 0.0)) > 10 * tol:
            break
        if any(abs(float(u[i] @ w)) > 1.0 - 1e-6 for w in candidates):
            continue
        candidates.append(_polish(c, u[i]))

    found: list[Factor] = []

    def add(v):
        v = v / np.linalg.norm(v)
        if any(abs(float(v @ f.normal)) > MERGE_COS for f in found):
            return
        f = _make_factor(c, v)
        if max(f.residual, f.restriction_residual) <= tol:
            found.append(f)

    for v in candidates:
        add(v)
    for f in list(found):
        for v in quadratic_factor_split(f.cofactor):
            add(_polish(c, v))
    exhausted = not converged.any() and not found
    if len(found) > 3:
        found = sorted(found, key=lambda f: f.residual)[:3]
    found.sort(key=lambda f: -f.residual)
    return LinearFactorization(factors=found, is_zero=False, exhausted=exhausted)
