"""Acceptance criteria, one test each; every test prints a PASS/FAIL line."""

import contextlib
import io
import time

import numpy as np
import pytest
from scipy.optimize import minimize

from affrev import cli
from affrev.blaschke import (JetGraph, PolynomialGraph, SphereGraph, _metric_parts, blaschke_at, cubic_C_profile,
                             sample_boundary)
from affrev.body_core import (PerturbedBody, boundary_project, canonical_jet, make_perturbed_body,
                              make_revolution_body)
from affrev.form_algebra import CubicForm, linear_factors, symmetrize3
from affrev.quadrature import projective_net
from affrev.symmetry import RevolutionStructure, lemma7_check, reflection_composition_check, rotate_in_plane
from affrev.verifier import build_body, generate_spec, save_spec
from conftest import conditioned, fd_check


@pytest.fixture
def report_line(capsys):
    state = {"detail": ""}

    @contextlib.contextmanager
    def run(n, title):
        ok = False
        try:
            yield state
            ok = True
        finally:
            with capsys.disabled():
                print(f"\ncriterion {n} ({title}): {'PASS' if ok else 'FAIL'} {state['detail']}")
    return run


def angle(a, b):
    a, b = np.asarray(a, float), np.asarray(b, float)
    return float(np.arccos(min(1.0, abs(a @ b) / (np.linalg.norm(a) * np.linalg.norm(b)))))


# -- 1 ---------------------------------------------------------------------------------------

@pytest.mark.slow
def test_criterion_1_quadric_null(corpus, report_line):
    with report_line(1, "quadric null test") as st:
        t0 = time.perf_counter()
        worst_cubic = worst_c = 0.0
        for spec, _, _ in corpus["ellipsoid"]:
            body = build_body(spec)
            for p in sample_boundary(body, 20):
                worst_cubic = max(worst_cubic, canonical_jet(body, p).cubic.norm())
            worst_c = max(worst_c, cubic_C_profile(body, sample_boundary(body, 50)).max)
        elapsed = time.perf_counter() - t0 + sum(t for _, _, t in corpus["ellipsoid"])
        kinds = {rep["verdict"]["kind"] for _, rep, _ in corpus["ellipsoid"]}
        st["detail"] = f"max |c_f| {worst_cubic:.1e}, max |C| {worst_c:.1e}, verdicts {sorted(kinds)}, {elapsed:.1f} s"
        assert worst_cubic <= 1e-10
        assert worst_c <= 1e-7
        assert kinds == {"Quadric"}
        assert elapsed <= 60.0


# -- 2 ---------------------------------------------------------------------------------------

@pytest.mark.slow
def test_criterion_2_revolution_recovery(corpus, report_line):
    with report_line(2, "revolution recovery") as st:
        worst_axis = worst_claim = 0.0
        kinds = set()
        for spec, rep, _ in corpus["revolution"]:
            assert len(spec.params["profile"]) <= 3
            assert np.linalg.cond(np.array(spec.params["conjugator"])) <= 10
            kinds.add(rep["verdict"]["kind"])
            if rep["verdict"]["axis"] is not None:
                truth = build_body(spec).ground_truth["axis"]
                worst_axis = max(worst_axis, angle(rep["verdict"]["axis"], truth))
            claims = [ev["claim3_3_residual"] for ev in rep["section_evidence"]]
            assert all(c is not None for c in claims)
            worst_claim = max(worst_claim, max(claims))
        st["detail"] = f"verdicts {sorted(kinds)}, max axis error {worst_axis:.1e} rad, max claim residual {worst_claim:.1e}"
        assert kinds == {"Revolution"}
        assert worst_axis <= 1e-4
        assert worst_claim <= 1e-6


# -- 3 ---------------------------------------------------------------------------------------

@pytest.mark.slow
def test_criterion_3_negative_controls(corpus, report_line):
    with report_line(3, "negative controls") as st:
        kinds = set()
        lowest = np.inf
        for spec, rep, _ in corpus["perturbed"]:
            assert spec.params["amplitude"] == 0.05
            kinds.add(rep["verdict"]["kind"])
            res = [ev["best_residual"] for ev in rep["section_evidence"]]
            assert all(r is not None for r in res)
            lowest = min(lowest, min(res))
        gap = lowest / rep["tolerances"]["revolution"]
        st["detail"] = f"verdicts {sorted(kinds)}, min section residual {lowest:.2e}, gap {gap:.0f}x"
        assert kinds == {"NotRevolution"}
        assert lowest >= 1e-3
        assert gap >= 10


# -- 4 ---------------------------------------------------------------------------------------

def _division_residuals(c, us):
    """Relative residual of the best ``c ~ sym(u q)`` for each row of ``us``."""
    m = c.shape[0]
    iu = np.triu_indices(m)
    basis = np.zeros((len(iu[0]), m, m))
    for k, (i, j) in enumerate(zip(*iu)):
        basis[k, i, j] = basis[k, j, i] = 1.0
    cols = np.einsum("ni,kjl->nkijl", us, basis)
    cols = (cols + cols.transpose(0, 1, 3, 2, 4) + cols.transpose(0, 1, 4, 3, 2)) / 3.0
    a = cols.reshape(len(us), len(basis), -1)
    ata = np.einsum("nkx,nlx->nkl", a, a)
    atb = np.einsum("nkx,x->nk", a, c.reshape(-1))
    coef = np.linalg.solve(ata, atb[..., None])[..., 0]
    resid = np.einsum("nk,nkx->nx", coef, a) - c.reshape(-1)
    return np.linalg.norm(resid, axis=1) / np.linalg.norm(c)


def _min_division_residual(c):
    m = c.shape[0]
    net = projective_net(m, 4000)
    r = _division_residuals(c, net)
    best = np.inf
    for i in np.argsort(r)[:5]:
        res = minimize(lambda u: _division_residuals(c, (u / np.linalg.norm(u))[None])[0], net[i],
                       method="Nelder-Mead", options={"xatol": 1e-10, "fatol": 1e-14, "maxiter": 4000})
        best = min(best, res.fun, r[i])
    return best


def test_criterion_4_factor_oracle(report_line):
    with report_line(4, "cubic factorization oracle") as st:
        rng = np.random.default_rng(2024)
        worst_cos = 1.0
        for n in range(100):
            m = 3 + n % 2
            if n % 4 < 2:
                u = rng.standard_normal(m)
                q = rng.standard_normal((m, m))
                truth = [u / np.linalg.norm(u)]
                c = CubicForm.product(u, q + q.T)
            else:
                while True:
                    ls = rng.standard_normal((3, m))
                    ls /= np.linalg.norm(ls, axis=1, keepdims=True)
                    if (np.abs(ls @ ls.T) - np.eye(3)).max() < 0.95:
                        break
                truth = list(ls)
                c = CubicForm.linear_product(*ls)
            normals = linear_factors(c).normals
            for t in truth:
                cos = max(abs(t @ v) for v in normals)
                worst_cos = min(worst_cos, cos)
        false_pos = 0
        oracle_min = np.inf
        for n in range(100):
            m = 3 + n % 2
            t = symmetrize3(rng.standard_normal((m, m, m)))
            oracle = _min_division_residual(t)
            # the oracle must certify that no real linear factor exists
            assert oracle > 1e-3
            oracle_min = min(oracle_min, oracle)
            false_pos += len(linear_factors(CubicForm(t)).factors)
        st["detail"] = (f"min recovery cosine 1-{1 - worst_cos:.1e}, spurious factors {false_pos}, "
                        f"min oracle division residual {oracle_min:.2e}")
        assert worst_cos >= 1 - 1e-6
        assert false_pos == 0


# -- 5 ---------------------------------------------------------------------------------------

def test_criterion_5_reflection_rotation(report_line):
    with report_line(5, "reflection-rotation identity") as st:
        rng = np.random.default_rng(5)
        worst = 0.0
        count = 0
        for n in (3, 4):
            for _ in range(1000):
                l1, l2 = rng.standard_normal((2, n))
                l1 /= np.linalg.norm(l1)
                l2 /= np.linalg.norm(l2)
                w = rng.standard_normal(n)
                basis = np.linalg.qr(np.column_stack((l1, l2)))[0]
                w -= basis @ (basis.T @ w)
                w /= np.linalg.norm(w)
                a = rng.standard_normal(n)
                lhs, rhs = reflection_composition_check(l1, l2, w, a)
                worst = max(worst, float(np.linalg.norm(lhs - rhs)))
                count += 1
        st["detail"] = f"{count} configurations, max |lhs - rhs| {worst:.1e}"
        assert worst <= 1e-12


# -- 6 ---------------------------------------------------------------------------------------

def test_criterion_6_lie_closure(report_line):
    with report_line(6, "Lie-closure lemmas") as st:
        parts = []
        for m in (5, 4):
            for preset, verdict, dim in (("shared-line", "codim-1 revolution", (m - 1) * (m - 2) // 2),
                                         ("transversal", "full orthogonal group", m * (m - 1) // 2)):
                t0 = time.perf_counter()
                structs = [RevolutionStructure(2, p, np.eye(m), 0.0) for p in cli.lemma7_preset(preset, m)]
                res = lemma7_check(structs)
                dt = time.perf_counter() - t0
                parts.append(f"R^{m} {preset}: dim {res.closure_dim} in {dt * 1e3:.0f} ms")
                assert res.verdict == verdict
                assert res.closure_dim == dim
                assert dt <= 1.0
        st["detail"] = "; ".join(parts)


# -- 7 ---------------------------------------------------------------------------------------

def _quartic_terms(mm):
    m = len(mm)
    out = {}
    for i in range(m):
        for j in range(m):
            for k in range(m):
                for l in range(m):
                    e = [0] * m
                    for a in (i, j, k, l):
                        e[a] += 1
                    out[tuple(e)] = out.get(tuple(e), 0.0) + mm[i, j] * mm[k, l]
    return sorted(out.items())


def test_criterion_7_blaschke_identities(ellipsoid4, revolution4, sheared_revolution4, perturbed4, report_line):
    with report_line(7, "Blaschke identities") as st:
        worst_apol = 0.0
        for body in (ellipsoid4, revolution4, sheared_revolution4, perturbed4):
            for p in sample_boundary(body, 50):
                data = blaschke_at(JetGraph(canonical_jet(body, p)), np.zeros(3), with_shape=False)
                worst_apol = max(worst_apol, float(np.abs(data.apolarity()).max()))
        quad_c = cubic_C_profile(ellipsoid4, sample_boundary(ellipsoid4, 50)).max
        s_err = max(float(np.abs(blaschke_at(SphereGraph(m), np.zeros(m)).S - np.eye(m)).max()) for m in (2, 3, 4))
        p = boundary_project(revolution4, [0.4, -0.3, 0.2, 0.7])
        mm = (p.point @ p.point) * np.eye(4) - np.outer(p.point, p.point)
        twin = make_perturbed_body(revolution4, 0.3, _quartic_terms(mm))
        c1 = blaschke_at(JetGraph(canonical_jet(revolution4, p)), np.zeros(3)).C
        c2 = blaschke_at(JetGraph(canonical_jet(twin, boundary_project(twin, p.direction))), np.zeros(3)).C
        jet_gap = float(np.linalg.norm(c1 - c2))
        st["detail"] = (f"apolarity {worst_apol:.1e}, quadric |C| {quad_c:.1e}, sphere |S - I| {s_err:.1e}, "
                        f"jet twins |C1 - C2| {jet_gap:.1e} (|C1| {np.linalg.norm(c1):.2f})")
        assert worst_apol <= 1e-6
        assert quad_c <= 1e-7
        assert s_err <= 1e-8
        assert np.linalg.norm(c1) > 1e-2
        assert jet_gap <= 1e-8


# -- 8 ---------------------------------------------------------------------------------------

def test_criterion_8_numerical_hygiene(ball4, ellipsoid4, sheared_revolution4, perturbed4, tmp_path, report_line):
    with report_line(8, "numerical hygiene") as st:
        rng = np.random.default_rng(8)
        worst = 0.0
        for body in (ball4, ellipsoid4, sheared_revolution4, perturbed4):
            for x in rng.uniform(-1, 1, (100, 4)):
                _, g, h, t = body.derivatives(x, 3)
                for exact, fd in ((g, fd_check(body.value, x)), (h, fd_check(body.grad, x)),
                                  (t, fd_check(body.hess, x))):
                    worst = max(worst, float(np.abs(exact - fd).max() / max(1.0, np.abs(exact).max())))
        # graph jet and metric derivative against finite differences
        jet = canonical_jet(sheared_revolution4, boundary_project(sheared_revolution4, [0.2, 0.5, -0.4, 0.6]))
        step = 1e-2
        for k in range(3):
            e = np.zeros(3)
            e[k] = step
            hs = [jet.graph_derivatives(s * e)[2] for s in (-2, -1, 1, 2)]
            fd3 = (hs[0] - 8 * hs[1] + 8 * hs[2] - hs[3]) / (12 * step)
            worst = max(worst, float(np.abs(fd3 - 6 * jet.cubic.tensor[:, :, k]).max()
                                     / max(1.0, 6 * jet.cubic.norm())))
        g = PolynomialGraph(np.diag([1.0, 2.0, 3.0]), cubic=rng.standard_normal((3, 3, 3)) * 0.3)
        x0 = np.array([0.05, -0.02, 0.03])
        _, _, hess, third = g.derivatives(x0)
        dh = _metric_parts(hess, third)[1]
        fd_h = fd_check(lambda y: abs(np.linalg.det(g.derivatives(y)[2])) ** (-0.2) * g.derivatives(y)[2], x0, 1e-5)
        worst = max(worst, float(np.abs(fd_h - dh).max() / max(1.0, np.abs(dh).max())))

        spec = generate_spec("revolution", 4, 3)
        path = tmp_path / "spec.json"
        save_spec(spec, path)
        texts = []
        for threads in ("1", "1", "3"):
            out = tmp_path / f"r{len(texts)}.json"
            with contextlib.redirect_stdout(io.StringIO()):
                code = cli.main(["verify", str(path), "--sections", "8", "--threads", threads, "--report", str(out)])
            assert code == 0
            texts.append(out.read_bytes())
        identical = texts[0] == texts[1] == texts[2]
        st["detail"] = f"max relative oracle/FD gap {worst:.1e}, reports byte-identical: {identical}"
        assert worst <= 1e-5
        assert identical
