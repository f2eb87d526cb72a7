"""Affine-revolution detection, reflection/rotation operators and Lie-algebra closures."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.linalg import null_space

from .body_core import LinearImage, SmoothBody
from .quadrature import canonical_sign, projective_net, sphere_net, sphere_quadrature
from .body_core import radial_function

REVOLUTION_TOL = 1e-4
RANK_TOL = 1e-9
MERGE_ANGLE = 1e-4
AXIS_POINT_TOL = 1e-6
# A whitened body this close to a ball has every axis; and an accepted axis must
# beat the body's own deviation from roundness by this factor.
ROUND_TOL = 1e-8
ROUNDNESS_RATIO = 1e-2


class SymmetryError(ValueError):
    pass


# ---------------------------------------------------------------------------
# reflections and rotations


def _check_orthonormal(w, what):
    w = np.asarray(w, dtype=float)
    if w.ndim == 1:
        w = w[:, None]
    if not np.allclose(w.T @ w, np.eye(w.shape[1]), atol=1e-10):
        raise SymmetryError(f"{what} must be orthonormal")
    return w


def reflect_across(subspace, a):
    """Orthogonal reflection of ``a`` across ``span(subspace)``: ``2 P a - a``.

    ``subspace`` holds an orthonormal basis in its columns; ``a`` may be a batch of rows.
    """
    w = _check_orthonormal(subspace, "subspace basis")
    a = np.asarray(a, dtype=float)
    return 2.0 * (a @ w) @ w.T - a


def rotate_in_plane(plane, angle: float, a):
    """Rotate the ``(u, v)`` component of ``a`` by ``angle`` (u toward v), fixing the complement."""
    u, v = (np.asarray(x, dtype=float) for x in plane)
    _check_orthonormal(np.column_stack((u, v)), "rotation plane")
    a = np.asarray(a, dtype=float)
    au, av = a @ u, a @ v
    au_, av_ = np.asarray(au)[..., None], np.asarray(av)[..., None]
    c, s = np.cos(angle), np.sin(angle)
    return a + (c - 1.0) * (au_ * u + av_ * v) + s * (au_ * v - av_ * u)


def reflection_composition_check(l1, l2, w, a):
    """Both sides of ``Ref_<l2,w> Ref_<l1,w> a = Rot_<l1,l2>^(2 angle(l1,l2)) a``.

    Each reflection fixes the listed vectors together with the orthogonal
    complement of ``span(l1, l2, w)``, so it acts as a line reflection in the
    ``(l1, l2)`` plane.
    """
    l1, l2, w = (np.asarray(x, dtype=float) for x in (l1, l2, w))
    l1, l2 = l1 / np.linalg.norm(l1), l2 / np.linalg.norm(l2)
    cos = float(np.clip(l1 @ l2, -1.0, 1.0))
    e2 = l2 - cos * l1
    if np.linalg.norm(e2) <= 1e-12:
        raise SymmetryError("l1 and l2 must not be collinear")
    if abs(w @ l1) > 1e-10 or abs(w @ l2) > 1e-10:
        raise SymmetryError("w must be orthogonal to l1 and l2")
    w = w / np.linalg.norm(w)
    n = len(l1)
    e2 /= np.linalg.norm(e2)
    rest = null_space(np.column_stack((l1, e2)).T)
    lhs = reflect_across(np.column_stack((l2, rest)), reflect_across(np.column_stack((l1, rest)), a))
    angle = float(np.arctan2(l2 @ e2, cos))
    rhs = rotate_in_plane((l1, e2), 2.0 * angle, a)
    assert rest.shape[1] == n - 2
    return lhs, rhs


# ---------------------------------------------------------------------------
# isotropic position


@dataclass(frozen=True, eq=False)
class IsotropicFrame:
    """``transform`` maps the body to a position with scalar second-moment matrix.

    The scale is fixed so that the whitened body has mean radius one.
    """

    transform: np.ndarray
    moment: np.ndarray
    body: SmoothBody

    @property
    def inverse(self) -> np.ndarray:
        return np.linalg.inv(self.transform)

    def whitened(self) -> SmoothBody:
        return LinearImage(self.body, self.transform)


def _round_hint(body):
    # typical radius of a nearly round body, used to warm-start Newton
    return float(np.mean(radial_function(body, sphere_net(body.dim, 64))))


def moment_matrix(body: SmoothBody, level: int | None = None, hint=None) -> np.ndarray:
    """``mean_theta rho(theta)^(m+2) theta theta^T`` by product Gauss quadrature."""
    nodes, weights = sphere_quadrature(body.dim, level)
    rho = radial_function(body, nodes, hint=hint)
    if not np.all(np.isfinite(rho)):
        raise SymmetryError("radial function failed on quadrature nodes")
    wr = weights * rho ** (body.dim + 2)
    m = (nodes * wr[:, None]).T @ nodes
    return 0.5 * (m + m.T)


def _inv_sqrt(m):
    w, v = np.linalg.eigh(m)
    return v @ np.diag(w ** -0.5) @ v.T


def isotropic_normalize(body: SmoothBody, level: int | None = None, passes: int = 2) -> IsotropicFrame:
    """Whitening ``T = M^(-1/2)``, corrected by re-measuring the moments of ``T K``.

    The radial function of a nearly round body is far smoother than that of an
    elongated one, so each correction pass gains several digits of accuracy.
    """
    m = moment_matrix(body, level)
    t = _inv_sqrt(m)
    for _ in range(passes - 1):
        wb = LinearImage(body, t)
        m1 = moment_matrix(wb, level, hint=_round_hint(wb))
        t = _inv_sqrt(m1 / np.trace(m1) * len(m1)) @ t
    nodes, weights = sphere_quadrature(body.dim, level)
    wb = LinearImage(body, t)
    mean_r = float(weights @ radial_function(wb, nodes, hint=_round_hint(wb)))
    return IsotropicFrame(transform=t / mean_r, moment=m, body=body)


# ---------------------------------------------------------------------------
# revolution detection


@dataclass(frozen=True, eq=False)
class RevolutionStructure:
    """Detected affine symmetry with a ``k``-dimensional fixed space (``k = 1``: axis)."""

    axis_dim: int
    fixed_space: np.ndarray
    conjugator: np.ndarray
    residual: float
    whitened_axis: np.ndarray | None = None

    @property
    def axis(self) -> np.ndarray:
        return self.fixed_space[:, 0]

    @property
    def conjugator_cond(self) -> float:
        return float(np.linalg.cond(self.conjugator))


@dataclass(frozen=True, eq=False)
class RevolutionDetection:
    structures: list
    all_axes: bool
    best_residual: float
    frame: IsotropicFrame
    net_residuals: np.ndarray = field(repr=False)


class OrbitSampler:
    """Fixed sample of directions ``theta`` and rotation parameters for ``E(v)``.

    For ``m = 3`` the rotation fixing ``v`` moves ``theta`` in the plane spanned
    by its component orthogonal to ``v`` and ``v x theta``.  For ``m >= 4`` each
    ``(theta, angle)`` pair carries a fixed random vector that selects the
    second direction of the rotation plane, so the sample covers
    ``SO(m-1)``-orbits rather than a single circle.
    """

    def __init__(self, dim: int, n_dirs: int, n_angles: int, seed: int = 0):
        self.dim = dim
        self.theta = sphere_net(dim, n_dirs)
        self.angles = 2.0 * np.pi * (np.arange(n_angles) + 0.5) / n_angles
        rng = np.random.default_rng(seed)
        self.g = rng.standard_normal((n_dirs, n_angles, dim)) if dim >= 4 else None

    def orbit_points(self, v: np.ndarray) -> np.ndarray:
        """Rotated directions for axes ``v`` of shape (K, m); returns (K, N, A, m)."""
        th = self.theta[None, :, :]
        proj = np.einsum("kj,nj->kn", v, self.theta)[..., None]
        par = proj * v[:, None, :]
        perp = th - par
        pn = np.linalg.norm(perp, axis=-1, keepdims=True)
        if self.dim == 3:
            s = np.cross(np.broadcast_to(v[:, None, :], perp.shape), th)
            s = s[:, :, None, :]
        else:
            e = perp / np.where(pn > 1e-300, pn, 1.0)
            g = self.g[None]
            g = g - np.einsum("kj,knaj->kna", v, np.broadcast_to(g, (len(v),) + g.shape[1:]))[..., None] * v[:, None, None, :]
            g = g - np.einsum("knj,knaj->kna", e, g)[..., None] * e[:, :, None, :]
            s = g / np.linalg.norm(g, axis=-1, keepdims=True) * pn[:, :, None, :]
        c = np.cos(self.angles)[None, None, :, None]
        sn = np.sin(self.angles)[None, None, :, None]
        return par[:, :, None, :] + c * perp[:, :, None, :] + sn * s

    def residuals(self, body: SmoothBody, rho0: np.ndarray, v: np.ndarray) -> np.ndarray:
        """``rho(R theta) - rho(theta)`` for every sample pair; shape (K, N*A)."""
        v = np.atleast_2d(v)
        v = v / np.linalg.norm(v, axis=1, keepdims=True)
        pts = self.orbit_points(v)
        k, n, a, m = pts.shape
        hint = np.broadcast_to(rho0[None, :, None], (k, n, a)).reshape(-1)
        rho = radial_function(body, pts.reshape(-1, m), hint=hint)
        return (rho.reshape(k, n, a) - rho0[None, :, None]).reshape(k, n * a)


def _tangent_basis(v):
    return null_space(v[None, :])


def _net_local_minima(net, e, n_neighbors=8):
    sim = np.abs(net @ net.T)
    np.fill_diagonal(sim, -1.0)
    nb = np.argsort(-sim, axis=1)[:, :n_neighbors]
    is_min = np.all(e[:, None] <= e[nb], axis=1)
    idx = np.flatnonzero(is_min)
    return idx[np.argsort(e[idx], kind="stable")]


def _tangent_frames(v):
    # rows of v are unit axes; returns (K, m-1, m) orthonormal tangent bases
    return np.stack([null_space(x[None, :]).T for x in v])


def refine_axes(body, sampler, rho0, v0, max_iter: int = 25, fd_step: float = 1e-7, min_rel: float = 1e-3):
    """Batched Levenberg-Marquardt refinement of candidate axes (rows of ``v0``).

    All candidates share one radial-function call per Jacobian and one per
    trial step.  Each accepted step re-centres the tangent chart at the new axis.
    """
    v = np.array(v0, dtype=float)
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    k, m = v.shape
    scale = 1.0 / np.sqrt(rho0.size * len(sampler.angles))
    lam = np.full(k, 1e-3)
    active = np.ones(k, dtype=bool)
    r = scale * sampler.residuals(body, rho0, v)
    cost = np.sum(r * r, axis=1)
    for _ in range(max_iter):
        idx = np.flatnonzero(active)
        if len(idx) == 0:
            break
        frames = _tangent_frames(v[idx])
        probes = v[idx][:, None, :] + fd_step * frames
        rp = scale * sampler.residuals(body, rho0, probes.reshape(-1, m)).reshape(len(idx), m - 1, -1)
        jac = (rp - r[idx][:, None, :]) / fd_step
        jtj = np.einsum("kas,kbs->kab", jac, jac)
        g = np.einsum("kas,ks->ka", jac, r[idx])
        damp = lam[idx][:, None, None] * (jtj * np.eye(m - 1)) + 1e-30 * np.eye(m - 1)
        step = -np.linalg.solve(jtj + damp, g[..., None])[..., 0]
        trial = v[idx] + np.einsum("ka,kam->km", step, frames)
        trial /= np.linalg.norm(trial, axis=1, keepdims=True)
        rt = scale * sampler.residuals(body, rho0, trial)
        ct = np.sum(rt * rt, axis=1)
        better = ct < cost[idx]
        for n, kk in enumerate(idx):
            size = float(np.linalg.norm(step[n]))
            if better[n]:
                rel = (cost[kk] - ct[n]) / max(cost[kk], 1e-300)
                v[kk], r[kk], cost[kk] = trial[n], rt[n], ct[n]
                lam[kk] = max(lam[kk] / 3.0, 1e-12)
                if size < 1e-11 or rel < min_rel or ct[n] < 1e-28:
                    active[kk] = False
            else:
                lam[kk] *= 4.0
                if size < 1e-11 or lam[kk] > 1e8:
                    active[kk] = False
    return v


def detect_revolution(body: SmoothBody, tol: float = REVOLUTION_TOL, frame: IsotropicFrame | None = None,
                      n_net: int = 256, max_candidates: int = 4, seed: int = 0) -> RevolutionDetection:
    """Search for axes of affine revolution of ``body``.

    In isotropic position every such symmetry is orthogonal, so candidate axes
    ``v`` are scored by ``E(v)``, the mean squared change of the radial
    function under rotations fixing ``v``.  A projective net screens axes with
    a coarse orbit sample; the best local minima are refined by least squares
    and rescored on the full sample (512 directions x 8 angles).  An axis is
    accepted when its residual is below ``tol`` and below one percent of the
    spread of the whitened radial function.
    """
    m = body.dim
    if m < 3:
        raise SymmetryError("revolution detection needs dim >= 3")
    if frame is None:
        frame = isotropic_normalize(body)
    wb = frame.whitened()
    t_inv = frame.inverse

    coarse = OrbitSampler(m, 64, 4, seed=seed + 1)
    mid = OrbitSampler(m, 192, 6, seed=seed + 2)
    full = OrbitSampler(m, 512, 8, seed=seed + 3)
    hint = _round_hint(wb)
    rho_c = radial_function(wb, coarse.theta, hint=hint)
    rho_m = radial_function(wb, mid.theta, hint=hint)
    rho_f = radial_function(wb, full.theta, hint=hint)

    net = projective_net(m, n_net)
    e_net = np.mean(coarse.residuals(wb, rho_c, net) ** 2, axis=1)
    if np.sqrt(e_net.max()) < min(tol, ROUND_TOL):
        return RevolutionDetection([], True, float(np.sqrt(e_net.max())), frame, e_net)
    # Nearly round bodies have spurious minima of E far below tol; compare with the roundness scale.
    accept = min(tol, ROUNDNESS_RATIO * float(np.std(rho_f)))

    cands = _net_local_minima(net, e_net)[:max_candidates]
    refined = refine_axes(wb, mid, rho_m, net[cands])
    final = np.sqrt(np.mean(full.residuals(wb, rho_f, refined) ** 2, axis=1))
    best = float(final.min())
    found = [(float(res), canonical_sign(v)) for res, v in zip(final, refined) if res < accept]
    merged = []
    for res, v in sorted(found, key=lambda rv: rv[0]):
        if all(np.arccos(min(1.0, abs(float(v @ u)))) >= MERGE_ANGLE for _, u in merged):
            merged.append((res, v))
    structures = []
    for res, v in merged:
        ax = t_inv @ v
        ax = canonical_sign(ax / np.linalg.norm(ax))
        structures.append(RevolutionStructure(1, ax[:, None], frame.transform, res, whitened_axis=v))
    return RevolutionDetection(structures, False, float(best), frame, e_net)


class SymmetryClass(NamedTuple):
    kind: str
    axis: np.ndarray | None
    quadric_residual: float | None


def classify_symmetry(detection: RevolutionDetection, body: SmoothBody, quadric_tol: float = 1e-6) -> SymmetryClass:
    """``NotRevolution``, ``Revolution`` (one axis) or ``Quadric`` (two or more axes, or all axes).

    Two or more axes imply an ellipsoid, which an independent quadric fit must
    confirm; otherwise the evidence is reported as ``Inconsistent``.
    """
    from .blaschke import fit_body_quadric

    n = len(detection.structures)
    if n == 0 and not detection.all_axes:
        return SymmetryClass("NotRevolution", None, None)
    if n == 1 and not detection.all_axes:
        return SymmetryClass("Revolution", detection.structures[0].axis, None)
    fit = fit_body_quadric(body)
    if fit.residual <= quadric_tol:
        return SymmetryClass("Quadric", None, fit.residual)
    return SymmetryClass("Inconsistent", None, fit.residual)


# ---------------------------------------------------------------------------
# isotropy of a section at a boundary point


def revolution_hyperplane_at(structure: RevolutionStructure, point) -> np.ndarray:
    """Ambient basis of the tangent directions moved by the isotropy group at ``point``.

    In whitened coordinates these are the vectors orthogonal to the axis and to
    the point; the group fixing both acts on them as the full orthogonal group.
    At a point on the axis every direction orthogonal to the axis is moved.
    """
    t = structure.conjugator
    v = structure.whitened_axis
    q = t @ np.asarray(point, dtype=float)
    q = q / np.linalg.norm(q)
    if np.linalg.norm(q - (q @ v) * v) < AXIS_POINT_TOL:
        # a point on the axis is fixed by every rotation about it
        comp = null_space(v[None, :])
    else:
        comp = null_space(np.column_stack((v, q)).T)
    w = np.linalg.solve(t, comp)
    return w


def isotropy_chart_maps(jet, structure: RevolutionStructure, count: int = 8, seed: int = 0) -> list:
    """Chart-coordinate linear maps ``B`` induced by isotropy elements ``A = T^-1 R T``.

    ``R`` runs over seeded rotations fixing the whitened axis and the whitened
    base point.  Each ``B`` is orthogonal and preserves the canonical graph.
    """
    t = structure.conjugator
    t_inv = np.linalg.inv(t)
    moved = t @ revolution_hyperplane_at(structure, jet.origin)
    moved, _ = np.linalg.qr(moved)
    rng = np.random.default_rng(seed)
    w_pinv = np.linalg.pinv(jet.frame)
    out = []
    k = moved.shape[1]
    for _ in range(count):
        g = rng.standard_normal((k, k))
        q, r = np.linalg.qr(g)
        q = q * np.sign(np.diag(r))
        rot = np.eye(t.shape[0]) + moved @ (q - np.eye(k)) @ moved.T
        a = t_inv @ rot @ t
        out.append(w_pinv @ a @ jet.frame)
    return out


# ---------------------------------------------------------------------------
# Lie algebras


def _antisym_check(x):
    x = np.asarray(x, dtype=float)
    if np.abs(x + x.T).max() > 1e-12 * max(1.0, np.abs(x).max()):
        raise SymmetryError("generators must be antisymmetric")
    return x


def embedded_so_generators(fixed_space) -> list:
    """Generators ``e_a e_b^T - e_b e_a^T`` of rotations of ``fixed_space^perp``."""
    w = _check_orthonormal(fixed_space, "fixed_space")
    comp = null_space(w.T)
    k = comp.shape[1]
    return [np.outer(comp[:, a], comp[:, b]) - np.outer(comp[:, b], comp[:, a])
            for a in range(k) for b in range(a + 1, k)]


@dataclass(frozen=True, eq=False)
class LieAlgebraSpan:
    ambient_dim: int
    basis: list
    rounds: int = 0

    @property
    def dim(self) -> int:
        return len(self.basis)

    def fixed_space(self) -> np.ndarray:
        """Orthonormal basis of the common kernel of the algebra."""
        m = self.ambient_dim
        if not self.basis:
            return np.eye(m)
        stack = np.vstack(self.basis)
        return null_space(stack, rcond=RANK_TOL)

    def orbit_dimension(self, p) -> int:
        return orbit_dimension(self, p)


def _extend(basis_rows, candidates, scale):
    """Gram-Schmidt extension of an orthonormal row basis by candidate vectors."""
    rows = list(basis_rows)
    for c in candidates:
        r = c.copy()
        for _ in range(2):
            for b in rows:
                r -= (b @ r) * b
        nr = np.linalg.norm(r)
        if nr > RANK_TOL * scale:
            rows.append(r / nr)
    return rows


def lie_bracket_closure(generators, max_rounds: int | None = None) -> LieAlgebraSpan:
    gens = [_antisym_check(g) for g in generators]
    if not gens:
        raise SymmetryError("need at least one generator")
    m = gens[0].shape[0]
    max_rounds = m * m if max_rounds is None else max_rounds
    scale = max(np.linalg.norm(g) for g in gens)
    rows = _extend([], [g.reshape(-1) / scale for g in gens], 1.0)
    rounds = 0
    while rounds < max_rounds:
        rounds += 1
        mats = [r.reshape(m, m) for r in rows]
        brackets = [(a @ b - b @ a).reshape(-1) for i, a in enumerate(mats) for b in mats[i + 1:]]
        new = _extend(rows, brackets, 1.0)
        if len(new) == len(rows):
            break
        rows = new
    basis = []
    for r in rows:
        x = r.reshape(m, m)
        basis.append(0.5 * (x - x.T))
    return LieAlgebraSpan(m, basis, rounds)


def orbit_dimension(algebra: LieAlgebraSpan, p) -> int:
    """``dim {X p : X in algebra}``."""
    p = np.asarray(p, dtype=float)
    if not algebra.basis:
        return 0
    vecs = np.column_stack([x @ p for x in algebra.basis])
    s = np.linalg.svd(vecs, compute_uv=False)
    return int(np.sum(s > RANK_TOL * max(1.0, np.linalg.norm(p))))


class Lemma7Result(NamedTuple):
    verdict: str
    closure_dim: int
    pair: tuple | None
    fixed_line: np.ndarray | None
    pair_dims: dict


def lemma7_check(structures) -> Lemma7Result:
    """Combine three codimension-2 revolution structures in common orthogonal position.

    The union of their rotation algebras closes to ``so(m)`` (verdict ``full
    orthogonal group``) or some pair closes to an algebra of dimension at least
    ``(m-1)(m-2)/2`` with a one-dimensional common fixed space (verdict
    ``codim-1 revolution`` with that fixed line).
    """
    structures = list(structures)
    if len(structures) != 3:
        raise SymmetryError("lemma7_check needs exactly three structures")
    m = structures[0].fixed_space.shape[0]
    conj = structures[0].conjugator
    for s in structures:
        if s.axis_dim != 2 or s.fixed_space.shape != (m, 2):
            raise SymmetryError("structures must have two-dimensional fixed spaces")
        if not np.allclose(s.conjugator, conj, atol=1e-12):
            raise SymmetryError("structures are not in a common orthogonal position")
    # Fixed spaces are mapped by the conjugator into the orthogonal position.
    fixed = []
    for s in structures:
        q, _ = np.linalg.qr(conj @ s.fixed_space)
        fixed.append(q)
    gens = [embedded_so_generators(f) for f in fixed]
    total = lie_bracket_closure([g for gs in gens for g in gs])
    pair_dims = {}
    full = m * (m - 1) // 2
    best = None
    for i in range(3):
        for j in range(i + 1, 3):
            alg = lie_bracket_closure(gens[i] + gens[j])
            pair_dims[(i, j)] = alg.dim
            fs = alg.fixed_space()
            if alg.dim >= (m - 1) * (m - 2) // 2 and fs.shape[1] == 1 and best is None:
                line = np.linalg.solve(conj, fs[:, 0])
                best = ((i, j), canonical_sign(line / np.linalg.norm(line)))
    if total.dim == full:
        return Lemma7Result("full orthogonal group", total.dim, None, None, pair_dims)
    if best is not None:
        return Lemma7Result("codim-1 revolution", total.dim, best[0], best[1], pair_dims)
    return Lemma7Result("undetermined", total.dim, None, None, pair_dims)
