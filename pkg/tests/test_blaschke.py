import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from affrev import blaschke
from affrev.blaschke import (BlaschkeError, InconsistentEvidence, JetGraph, PolynomialGraph, QuadricFit,
                             SphereGraph, Underdetermined, _metric_parts, affine_normal,
                             affine_normal_closed_form, blaschke_at, cubic_C_profile, fit_body_quadric,
                             fit_quadric, mpb_classify, sample_boundary)
from affrev.body_core import (LinearImage, PerturbedBody, boundary_project, canonical_jet, make_ellipsoid,
                              make_perturbed_body, random_harmonics)
from conftest import conditioned

seeds = st.integers(0, 2**31 - 1)


def cubic_tensor(m, entries):
    c = np.zeros((m,) * 3)
    for idx, v in entries.items():
        for perm in set(itertools.permutations(idx)):
            c[perm] = v
    return c


def apolar_part(t):
    m = t.shape[0]
    v = np.einsum("iik->k", t)
    eye = np.eye(m)
    sym = (np.einsum("ij,k->ijk", eye, v) + np.einsum("ik,j->ijk", eye, v) + np.einsum("jk,i->ijk", eye, v)) / 3
    return t - 3.0 / (m + 2) * sym


def quartic_monomials(m_mat):
    """Monomial terms of ``(x^T M x)^2``."""
    m = len(m_mat)
    coeffs = {}
    for i, j, k, l in itertools.product(range(m), repeat=4):
        e = [0] * m
        for a in (i, j, k, l):
            e[a] += 1
        coeffs[tuple(e)] = coeffs.get(tuple(e), 0.0) + m_mat[i, j] * m_mat[k, l]
    return [(e, c) for e, c in sorted(coeffs.items()) if c != 0.0]


def origin_data(body, d):
    jet = canonical_jet(body, boundary_project(body, d))
    return jet, blaschke_at(JetGraph(jet), np.zeros(body.dim - 1))


# -- closed forms ---------------------------------------------------------------------

@pytest.mark.parametrize("m", [2, 3, 4])
def test_sphere(m):
    data = blaschke_at(SphereGraph(m), np.zeros(m))
    assert np.allclose(data.h, np.eye(m), atol=1e-14)
    assert np.allclose(data.xi, np.append(np.zeros(m), 1.0), atol=1e-14)
    assert np.abs(data.S - np.eye(m)).max() <= 1e-8
    assert np.abs(data.C).max() <= 1e-14


def test_sphere_off_center():
    x = np.array([0.2, -0.1, 0.3])
    data = blaschke_at(SphereGraph(3), x)
    assert np.abs(data.C).max() <= 1e-12
    assert np.abs(data.S - np.eye(3)).max() <= 1e-8
    # the affine normal of the unit sphere is the vector to the center
    f = SphereGraph(3).derivatives(x)[0]
    assert np.allclose(data.xi, np.array([0, 0, 0, 1.0]) - np.append(x, f), atol=1e-12)


def test_paraboloid():
    g = PolynomialGraph(np.eye(3))
    for x in (np.zeros(3), np.array([0.5, -1.0, 2.0])):
        data = blaschke_at(g, x)
        assert np.allclose(data.h, np.eye(3), atol=1e-14)
        assert np.abs(data.C).max() <= 1e-14
        assert np.abs(data.S).max() <= 1e-8
        assert np.allclose(data.xi, [0, 0, 0, 1.0])


@pytest.mark.parametrize("m", [2, 3, 4])
def test_single_cubic_term_closed_form(m):
    for eps in (1e-3, 0.1):
        c = cubic_tensor(m, {(0, 0, 0): eps})
        data = blaschke_at(PolynomialGraph(np.eye(m), cubic=c), np.zeros(m), with_shape=False)
        assert data.C[0, 0, 0] == pytest.approx(6 * eps * (m - 1) / (m + 2), rel=1e-12)
        assert np.allclose(data.C, apolar_part(6 * c), atol=1e-14)


def test_cubic_scales_linearly():
    c = cubic_tensor(3, {(0, 1, 2): 1.0, (0, 0, 1): 0.3})
    vals = [blaschke_at(PolynomialGraph(np.eye(3), cubic=e * c), np.zeros(3), with_shape=False).C for e in (1e-4, 2e-4)]
    assert np.allclose(vals[1], 2 * vals[0], rtol=1e-10, atol=1e-18)


@settings(max_examples=25, deadline=None)
@given(seeds)
def test_affine_normal_matches_closed_form(seed):
    rng = np.random.default_rng(seed)
    a = conditioned(rng, 3)
    g = PolynomialGraph(a @ a.T, cubic=rng.standard_normal((3, 3, 3)) * 0.3,
                        quartic=rng.standard_normal((3,) * 4) * 0.1, linear=rng.standard_normal(3))
    x = rng.uniform(-0.2, 0.2, 3)
    _, grad, hess, third = g.derivatives(x)
    if np.linalg.eigvalsh(hess)[0] <= 0.05:
        return
    assert np.allclose(affine_normal(hess, grad, third), affine_normal_closed_form(hess, grad, third),
                       rtol=1e-10, atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(seeds)
def test_structure_identities(seed):
    rng = np.random.default_rng(seed)
    a = conditioned(rng, 3)
    g = PolynomialGraph(a @ a.T, cubic=rng.standard_normal((3, 3, 3)) * 0.3,
                        quartic=rng.standard_normal((3,) * 4) * 0.1)
    x = rng.uniform(-0.1, 0.1, 3)
    if np.linalg.eigvalsh(g.derivatives(x)[2])[0] <= 0.05:
        return
    data = blaschke_at(g, x, with_shape=False)
    assert np.abs(data.apolarity()).max() <= 1e-6
    assert np.allclose(data.h, data.h.T)
    assert np.all(np.linalg.eigvalsh(data.h) > 0)
    for p in itertools.permutations(range(3)):
        assert np.allclose(data.C, data.C.transpose(p), atol=1e-14)
    assert np.abs(data.h_recomputed - data.h).max() <= 1e-8
    # connection is torsion free
    assert np.allclose(data.gamma, data.gamma.transpose(0, 2, 1), atol=1e-12)


def test_dh_matches_finite_differences():
    rng = np.random.default_rng(1)
    g = PolynomialGraph(np.diag([1.0, 2.0, 3.0]), cubic=rng.standard_normal((3, 3, 3)) * 0.3,
                        quartic=rng.standard_normal((3,) * 4) * 0.1)
    x = np.array([0.05, -0.02, 0.03])
    _, _, hess, third = g.derivatives(x)
    _, dh, _, _ = _metric_parts(hess, third)

    def h_exact(y):
        hs = g.derivatives(y)[2]
        return abs(np.linalg.det(hs)) ** (-1 / 5) * hs

    step = 1e-3
    for k in range(3):
        e = np.zeros(3)
        e[k] = step
        fd = (-h_exact(x + 2 * e) + 8 * h_exact(x + e) - 8 * h_exact(x - e) + h_exact(x - 2 * e)) / (12 * step)
        assert np.abs(fd - dh[:, :, k]).max() <= 1e-6


def test_degenerate_hessian_rejected():
    with pytest.raises(BlaschkeError):
        blaschke_at(PolynomialGraph(np.diag([1.0, 0.0, 1.0])), np.zeros(3))


def test_indefinite_orientation_recorded():
    data = blaschke_at(PolynomialGraph(np.diag([1.0, -1.0, 1.0])), np.zeros(3), with_shape=False)
    assert data.orientation == -1.0


# -- bodies ---------------------------------------------------------------------------

def test_ellipsoid_profile(ellipsoid4):
    prof = cubic_C_profile(ellipsoid4, sample_boundary(ellipsoid4, 50))
    assert len(prof.values) == 50
    assert prof.max <= 1e-7


def test_revolution_profile_pinned(revolution4):
    prof = cubic_C_profile(revolution4, sample_boundary(revolution4, 50))
    assert prof.max > 1e-2
    assert prof.max == pytest.approx(1.1296127206773294, rel=1e-6)
    assert prof.rms == pytest.approx(0.804, abs=1e-3)


@pytest.mark.parametrize("which", ["ellipsoid", "sheared", "perturbed"])
def test_apolarity_on_bodies(which, ellipsoid4, sheared_revolution4, perturbed4):
    body = {"ellipsoid": ellipsoid4, "sheared": sheared_revolution4, "perturbed": perturbed4}[which]
    for p in sample_boundary(body, 50):
        data = blaschke_at(JetGraph(canonical_jet(body, p)), np.zeros(3), with_shape=False)
        assert np.abs(data.apolarity()).max() <= 1e-6


def _ambient_c_norm(jet):
    # the chart map scales volume by |det|, which rescales the h-norm of C by |det|^(1/(m+2))
    data = blaschke_at(JetGraph(jet), np.zeros(jet.frame.shape[1]), with_shape=False)
    m = jet.frame.shape[1]
    return abs(np.linalg.det(jet.chart_matrix)) ** (1.0 / (m + 2)) * data.c_h_norm()


@pytest.mark.parametrize("which", ["ellipsoid", "sheared"])
def test_equiaffine_invariance(which, ellipsoid4, sheared_revolution4):
    body = {"ellipsoid": ellipsoid4, "sheared": sheared_revolution4}[which]
    rng = np.random.default_rng(2)
    a = conditioned(rng, 4, 0.3, 5.0)
    a = a / abs(np.linalg.det(a)) ** 0.25
    moved = LinearImage(body, a)
    for d in rng.standard_normal((5, 4)):
        p = boundary_project(body, d)
        q = boundary_project(moved, a @ p.point)
        assert np.allclose(q.point, a @ p.point, atol=1e-12)
        n1 = _ambient_c_norm(canonical_jet(body, p))
        n2 = _ambient_c_norm(canonical_jet(moved, q))
        assert abs(n1 - n2) <= 1e-6 * max(1.0, n1)


def test_jet_dependence(revolution4):
    # (x^T M x)^2 with M p = 0 vanishes to fourth order at p, so both bodies share the 3-jet there
    p = boundary_project(revolution4, [0.4, -0.3, 0.2, 0.7])
    mm = (p.point @ p.point) * np.eye(4) - np.outer(p.point, p.point)
    other = make_perturbed_body(revolution4, 0.3, quartic_monomials(mm))
    q = boundary_project(other, p.direction)
    assert q.radius == pytest.approx(p.radius, abs=1e-13)
    c1 = origin_data(revolution4, p.direction)[1].C
    c2 = origin_data(other, p.direction)[1].C
    assert np.linalg.norm(c1) > 1e-2
    assert np.linalg.norm(c1 - c2) <= 1e-8
    # away from p the two bodies differ
    d = np.array([0.1, 0.6, -0.5, 0.2])
    assert np.linalg.norm(origin_data(revolution4, d)[1].C - origin_data(other, d)[1].C) > 1e-3


def test_osculating_sphere_point(ball4):
    p = np.array([1.0, 0, 0, 0])
    mm = np.eye(4) - np.outer(p, p)
    body = make_perturbed_body(ball4, 0.3, quartic_monomials(mm))
    jet, data = origin_data(body, p)
    assert jet.cubic.norm() <= 1e-12
    assert np.linalg.norm(data.C) <= 1e-7
    assert np.linalg.norm(origin_data(body, [0.5, 0.5, 0.5, 0.5])[1].C) > 1e-2


# -- quadric fitting -----------------------------------------------------------------

def test_fit_axis_ellipsoid(ellipsoid4):
    fit = fit_body_quadric(ellipsoid4)
    assert fit.residual <= 1e-10
    expect = np.diag([1.0, 4.0, 9.0, 16.0, -1.0])
    expect /= np.linalg.norm(expect)
    assert np.allclose(fit.coeffs, expect, atol=1e-10)
    assert np.linalg.norm(fit.coeffs) == pytest.approx(1.0)


def test_fit_revolution_pinned(revolution4):
    fit = fit_body_quadric(revolution4)
    assert fit.residual >= 1e-3
    assert fit.residual == pytest.approx(0.011896780405598275, rel=1e-6)


def test_fit_noisy_ellipsoid():
    rng = np.random.default_rng(3)
    a = conditioned(rng, 4)
    body = make_ellipsoid(a @ a.T)
    pts = np.array([boundary_project(body, d).point for d in rng.standard_normal((200, 4))])
    fit = fit_quadric(pts + 1e-8 * rng.standard_normal(pts.shape))
    assert fit.residual <= 1e-7


def test_fit_underdetermined():
    rng = np.random.default_rng(4)
    with pytest.raises(Underdetermined):
        fit_quadric(rng.standard_normal((10, 4)))
    # points on a great 2-sphere satisfy both |x|^2 = 1 and x_4^2 = 0
    pts = rng.standard_normal((200, 4))
    pts[:, 3] = 0.0
    pts /= np.linalg.norm(pts, axis=1, keepdims=True)
    with pytest.raises(Underdetermined):
        fit_quadric(pts)


# -- classification -----------------------------------------------------------------

def test_mpb_examples(ellipsoid4, revolution4):
    res = mpb_classify(ellipsoid4)
    assert res.kind == "Quadric" and isinstance(res.fit, QuadricFit)
    assert mpb_classify(revolution4).kind == "NotQuadric"


def test_mpb_below_resolution(ball4):
    body = make_perturbed_body(ball4, 1e-9, random_harmonics(4, 7))
    assert mpb_classify(body, tol=1e-6).kind == "Quadric"


def test_mpb_inconsistent(ball4, monkeypatch):
    fake = QuadricFit(np.eye(5) / np.sqrt(5), 0.5, np.ones(15))
    monkeypatch.setattr(blaschke, "fit_body_quadric", lambda body, count=200: fake)
    with pytest.raises(InconsistentEvidence):
        mpb_classify(ball4)


def test_profile_rejects_non_pd(ball4):
    body = PerturbedBody(ball4, 1.0, [((2, 2, 0, 0), 10.0)])
    p = boundary_project(body, [1, 1, 0, 0])
    with pytest.raises(BlaschkeError):
        cubic_C_profile(body, [p])
