import cmath
import io
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from spinorlab import spinor_bvp as bv
from spinorlab.errors import InvalidSite, SourceCorner
from spinorlab.exact_ising import enumerate_correlation, exact_correlation
from spinorlab.experiments import domain_suite, oracle_rows
from spinorlab.lattice import MarkedConfig, build_domain, corner_face, corner_tau, corner_vertex, make_standard_domain
from spinorlab.spinor_comb import observable_enum, observable_fast

from conftest import A, B_EDGE

SUITE5 = domain_suite(5)


def test_single_face(single):
    f = bv.solve_observable(single, MarkedConfig(A))
    assert f.residual <= 1e-10
    assert f.value((5, 0)) == pytest.approx(3 / (2 * math.sqrt(2)), abs=1e-10)
    assert f.value((5, 0)) == pytest.approx(observable_enum(single, MarkedConfig(A), (5, 0)), abs=1e-10)


def test_domino_branch_value(domino):
    cfg = MarkedConfig(A, (B_EDGE,))
    f = bv.solve_observable(domino, cfg)
    z = (B_EDGE[0] + 1, B_EDGE[1])
    assert f.value(z) == pytest.approx(observable_enum(domino, cfg, z), abs=1e-10)
    r = bv.observable_ratios(f)
    free = enumerate_correlation(domino, "free_vertices", [(4, 0), (6, 2)]).value
    plus = enumerate_correlation(domino, "plus_faces", [A, B_EDGE]).value
    assert abs(r.branch_value) == pytest.approx(free / plus, abs=1e-10)


def test_symmetric_domain():
    dom = build_domain([(2, 0), (4, 2), (6, 0)])
    r = bv.observable_ratios(bv.solve_observable(dom, MarkedConfig(A)))
    assert r.horizontal == pytest.approx(1.0, abs=1e-10)


def test_block_matches_transfer_matrix():
    dom = make_standard_domain("rectangle(6,6)")
    faces = sorted(dom.faces)
    a = min(faces, key=lambda f: abs(f[0] - 12) + abs(f[1]))  # a central face
    right = (a[0] + 4, a[1])
    assert right in dom.faces
    r = bv.observable_ratios(bv.solve_observable(dom, MarkedConfig(a)))
    tm = exact_correlation(dom, "plus_faces", [right]).value / exact_correlation(dom, "plus_faces", [a]).value
    assert r.horizontal == pytest.approx(tm, abs=1e-9)


def test_value_errors(domino):
    f = bv.solve_observable(domino, MarkedConfig(A))
    with pytest.raises(SourceCorner):
        f.value((3, 0))
    with pytest.raises(InvalidSite):
        f.value((2, 0))
    with pytest.raises(InvalidSite):
        f.value((101, 1))


@pytest.mark.parametrize("dom", SUITE5[::7], ids=lambda d: str(len(d.faces)))
def test_oracle_equivalence_and_local_relations(dom):
    for r in oracle_rows(dom, 2, 1e-9, 1e-12):
        assert r.passed, r


@given(st.sampled_from(SUITE5), st.data())
def test_solver_field_relations(dom, data):
    faces = sorted(dom.faces)
    a = data.draw(st.sampled_from(faces))
    others = [g for g in faces if g != a]
    cfg = MarkedConfig(a, tuple(data.draw(st.lists(st.sampled_from(others), max_size=2, unique=True))) if others else ())
    f = bv.solve_observable(dom, cfg)
    assert f.residual <= 1e-10
    assert f.consistency_residual() <= 1e-10
    for z in dom.bdry_midedges:
        nu = dom.outer_normal(z).direction
        assert abs((f.midedge_value(z) * cmath.sqrt(nu)).imag) <= 1e-10
    # other sheet is the negative; corner values lie on their lines
    for c in sorted(dom.corners - {cfg.source_corner})[:8]:
        assert f.value(c, sheet=-1) == pytest.approx(-f.value(c), abs=1e-14)
        assert abs((f.value(c) * corner_tau(c).conjugate()).imag) <= 1e-12
        assert f.value(c) == pytest.approx(observable_fast(dom, cfg, c), abs=1e-9)


def test_well_posedness_under_perturbation():
    dom = make_standard_domain("rectangle(4,3)")
    cfg = MarkedConfig(sorted(dom.faces)[5], (sorted(dom.faces)[0],))
    system = bv.assemble(dom, cfg)
    x0 = bv._lstsq(system.A, system.b)
    rng = np.random.default_rng(3)
    db = 1e-8 * rng.standard_normal(system.b.shape)
    x1 = bv._lstsq(system.A, system.b + db)
    assert np.max(np.abs(x1 - x0)) / np.max(np.abs(x0)) <= 1e-5
    rep = bv.rank_report(system)
    assert rep["unknowns"] == system.A.shape[1]
    assert rep["rank"] is not None and rep["nullity"] >= 0


def test_system_dump(single):
    system = bv.assemble(single, MarkedConfig(A))
    buf = io.StringIO()
    system.dump(buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == f"# rows={system.A.shape[0]} cols={system.A.shape[1]}"
    assert sum(ln.startswith("rhs ") for ln in lines) == int(np.count_nonzero(system.b))


def test_primitive_single_face(single):
    f = bv.solve_observable(single, MarkedConfig(A))
    h = bv.integrate_H(f)
    assert all(h.faces[g] == 0.0 for g in single.bdry_faces)
    assert h.closure_residual < 1e-10
    # H(a) - H(v) = 2 delta |F(c)|^2 for each corner c between a and a vertex v
    for c in [(3, 0), (1, 0), (2, 1), (2, -1)]:
        v = (2 * c[0] - A[0], 2 * c[1] - A[1])
        mod2 = 1.0 if c == (3, 0) else abs(f.value(c)) ** 2
        assert h.faces[A] - h.vertices[v] == pytest.approx(2 * mod2, abs=1e-12)
    assert bv.laplacian_report(h, f.cfg, single).ok


@pytest.mark.parametrize("shape", ["rectangle(6,6)", "disc(1)"])
def test_primitive_signs(shape):
    dom = make_standard_domain(shape, Fraction(1, 4))
    a = sorted(dom.faces)[len(dom.faces) // 2]
    f = bv.solve_observable(dom, MarkedConfig(a))
    h = bv.integrate_H(f)
    assert h.closure_residual < 1e-10
    assert all(abs(h.faces[g]) == 0 for g in dom.bdry_faces)
    for c in dom.corners:
        w, v = corner_face(c), corner_vertex(c)
        assert h.faces[w] >= h.vertices[v] - 1e-12
    rep = bv.laplacian_report(h, f.cfg, dom)
    assert rep.ok, rep


def test_exact_magnetization_matches_transfer_matrix():
    dom = make_standard_domain("rectangle(4,4)")
    for a in sorted(dom.faces)[::3]:
        assert bv.exact_magnetization(dom, a) == pytest.approx(exact_correlation(dom, "plus_faces", [a]).value, abs=1e-10)


def test_diagonal_ratios_approach_one():
    errs = []
    for n in (8, 16, 32):
        dom = make_standard_domain("disc(1)", Fraction(1, n))
        r = bv.observable_ratios(bv.solve_observable(dom, MarkedConfig((2, 0))))
        errs.append(max(abs(r.diagonal_plus - 1), abs(r.diagonal_minus - 1)))
    assert errs[0] > errs[1] > errs[2]
