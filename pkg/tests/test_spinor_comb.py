import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from spinorlab.errors import NotADefectConfig, SourceCorner
from spinorlab.exact_ising import ContourConfig, enumerate_correlation
from spinorlab.experiments import domain_suite, ratio_identity_rows
from spinorlab.lattice import MarkedConfig, build_domain, corner_tau, face_midedges, make_standard_domain
from spinorlab.spinor_comb import (
    decompose_noncrossing,
    defect_configurations,
    observable_enum,
    observable_fast,
    observable_table,
    path_phase,
)

from conftest import A, B_EDGE

SUITE4 = domain_suite(4)
SRC = (3, 0)
TIP = (5, 0)
STRAIGHT = ContourConfig(frozenset(), ((SRC, (4, 0)), ((4, 0), TIP)))


def test_straight_path():
    d = decompose_noncrossing(STRAIGHT, SRC, TIP)
    assert d.path == (SRC, (4, 0), TIP)
    assert d.wind == 0 and d.loops == ()
    ph = path_phase(d, MarkedConfig(A))
    assert ph.value == pytest.approx(1.0)


def test_path_circling_single_face():
    gamma = ContourConfig(frozenset(face_midedges(A)), STRAIGHT.half_edges)
    d = decompose_noncrossing(gamma, SRC, TIP)
    assert d.loops == ()
    assert abs(d.wind) == 8  # 2 pi in units of pi/4
    ph = path_phase(d, MarkedConfig(A))
    assert ph.wind_factor == pytest.approx(-1.0)
    assert ph.sheet == -1 and ph.loop_sign == 1
    assert ph.value == pytest.approx(1.0)


def test_phase_is_product_of_factors(block3):
    a = sorted(block3.faces)[4]
    cfg = MarkedConfig(a, (sorted(block3.faces)[0],))
    for _, gamma in list(defect_configurations(block3, a, (a[0] + 3, a[1])))[:64]:
        ph = path_phase(decompose_noncrossing(gamma, cfg.source_corner, (a[0] + 3, a[1])), cfg)
        assert ph.value == pytest.approx(ph.wind_factor * ph.loop_sign * ph.sheet)


def test_unmarked_loop_leaves_phase_unchanged():
    dom = make_standard_domain("rectangle(3,3)")
    a = (2, 0)
    far = (10, 0)  # shares no vertex with the straight path
    assert far in dom.faces
    gamma = ContourConfig(frozenset(face_midedges(far)), STRAIGHT.half_edges)
    d = decompose_noncrossing(gamma, SRC, TIP)
    assert len(d.loops) == 1
    assert path_phase(d, MarkedConfig(a)).value == pytest.approx(1.0)
    # the same loop around a marked face flips the sign
    assert path_phase(d, MarkedConfig(a, (far,))).value == pytest.approx(-1.0)


def test_not_a_defect_config():
    with pytest.raises(NotADefectConfig):
        decompose_noncrossing(STRAIGHT, SRC, (5, 2))
    odd = ContourConfig(frozenset([(5, 1)]), STRAIGHT.half_edges)
    with pytest.raises(NotADefectConfig):
        decompose_noncrossing(odd, SRC, TIP)


@pytest.mark.parametrize("dom", [build_domain([A]), build_domain([A, B_EDGE]), make_standard_domain("rectangle(2,2)")], ids=["1x1", "2x1", "2x2"])
def test_decomposition_rule_does_not_change_phase(dom):
    faces = sorted(dom.faces)
    for a in faces:
        cfgs = [MarkedConfig(a)] + [MarkedConfig(a, (b,)) for b in faces if b != a]
        targets = sorted((dom.corners | dom.midedges) - {(a[0] + 1, a[1])})
        for z in targets:
            for _, gamma in defect_configurations(dom, a, z):
                d0 = decompose_noncrossing(gamma, (a[0] + 1, a[1]), z, rule=0)
                d1 = decompose_noncrossing(gamma, (a[0] + 1, a[1]), z, rule=1)
                for cfg in cfgs:
                    assert path_phase(d0, cfg).value == pytest.approx(path_phase(d1, cfg).value, abs=1e-14)


def test_single_face_value(single):
    f = observable_enum(single, MarkedConfig(A), TIP)
    assert f == pytest.approx(3 / (2 * math.sqrt(2)), abs=1e-14)
    assert f.real == pytest.approx(1 / enumerate_correlation(single, "plus_faces", [A]).value, abs=1e-14)


def test_symmetric_domain_gives_one():
    dom = build_domain([(2, 0), (4, 2), (6, 0)])  # mirror symmetric about the line through a + delta
    assert observable_enum(dom, MarkedConfig(A), TIP) == pytest.approx(1.0, abs=1e-14)


def test_domino_branch_identity(domino):
    f = observable_enum(domino, MarkedConfig(A, (B_EDGE,)), TIP)
    num = enumerate_correlation(domino, "plus_faces", [B_EDGE]).value  # a + 2 delta is outside: frozen +
    den = enumerate_correlation(domino, "plus_faces", [A, B_EDGE]).value
    assert f == pytest.approx(num / den, abs=1e-13)


def test_source_corner_excluded(single):
    with pytest.raises(SourceCorner):
        observable_enum(single, MarkedConfig(A), SRC)
    with pytest.raises(SourceCorner):
        observable_table(single, A, SRC)


@given(st.sampled_from(SUITE4), st.data())
def test_sheet_antisymmetry_and_corner_lines(dom, data):
    faces = sorted(dom.faces)
    a = data.draw(st.sampled_from(faces))
    others = [f for f in faces if f != a]
    branches = tuple(data.draw(st.lists(st.sampled_from(others), max_size=2, unique=True))) if others else ()
    cfg = MarkedConfig(a, branches)
    corners = sorted(dom.corners - {cfg.source_corner})
    z = data.draw(st.sampled_from(corners))
    up = observable_enum(dom, cfg, z)
    assert observable_enum(dom, cfg, z, sheet=-1) == pytest.approx(-up, abs=1e-14)
    tau = corner_tau(z)
    assert abs((up * tau.conjugate()).imag) < 1e-13


@given(st.sampled_from(SUITE4), st.data())
def test_batched_table_matches_literal_sum(dom, data):
    faces = sorted(dom.faces)
    a = data.draw(st.sampled_from(faces))
    others = [f for f in faces if f != a]
    branches = tuple(data.draw(st.lists(st.sampled_from(others), max_size=2, unique=True))) if others else ()
    cfg = MarkedConfig(a, branches)
    z = data.draw(st.sampled_from(sorted((dom.corners | dom.midedges) - {cfg.source_corner})))
    assert observable_fast(dom, cfg, z) == pytest.approx(observable_enum(dom, cfg, z), abs=1e-13)


@pytest.mark.parametrize("dom", SUITE4, ids=lambda d: ";".join(f"{x},{y}" for x, y in sorted(d.faces)))
def test_exact_ratio_identities(dom):
    rows = ratio_identity_rows(dom, 2, 1e-12)
    assert {r.quantity for r in rows} >= {"horizontal", "diagonal+", "diagonal-"}
    for r in rows:
        assert r.abs_err <= 1e-12, r


def test_ratio_identities_on_a_long_strip():
    # 26 vertices: the free pair values come from frontier elimination instead of subset sums
    strip = build_domain([(2 + 2 * i, 2 * i) for i in range(12)])
    for r in ratio_identity_rows(strip, 1, 1e-12):
        assert r.abs_err <= 1e-12, r
