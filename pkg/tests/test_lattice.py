import cmath
import math
from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from spinorlab.errors import (
    Disconnected,
    EmptyDomain,
    FiordViolation,
    InvalidSite,
    NonAdjacentStep,
    NotSimplyConnected,
)
from spinorlab.lattice import (
    LAMBDA,
    LAMBDA_BAR,
    Kind,
    MarkedConfig,
    build_domain,
    classify_point,
    corner_face,
    corner_midedges,
    corner_vertex,
    crossing_parity,
    edge_endpoints,
    edge_faces,
    face_neighbors,
    is_face,
    make_standard_domain,
    outer_normal,
    parse_domain_text,
    rectangle_faces,
    vertex_neighbors,
)

coords = st.integers(-40, 40)


def test_classify_examples():
    assert classify_point((0, 0)).kind is Kind.VERTEX
    assert classify_point((2, 0)).kind is Kind.FACE
    c = classify_point((5, 0))
    assert c.kind is Kind.CORNER and c.tau == 1
    assert corner_vertex((5, 0)) == (4, 0)
    assert classify_point((1, 1)).kind is Kind.MIDEDGE


def test_corner_types_follow_vertex_direction():
    # vertex (4,0): left of (5,0), right of (3,0), above (4,-1), below (4,1)
    assert classify_point((5, 0)).tau == 1
    assert classify_point((3, 0)).tau == 1j
    assert classify_point((4, -1)).tau == LAMBDA
    assert classify_point((4, 1)).tau == LAMBDA_BAR


@given(coords, coords)
def test_classification_is_a_partition(x, y):
    kind = classify_point((x, y)).kind
    if x % 2 == 0 and y % 2 == 0:
        assert kind is (Kind.VERTEX if ((x + y) // 2) % 2 == 0 else Kind.FACE)
    elif x % 2 and y % 2:
        assert kind is Kind.MIDEDGE
    else:
        assert kind is Kind.CORNER


@given(coords, coords, st.integers(-5, 5), st.integers(-5, 5))
def test_classification_invariant_under_vertex_translations(x, y, m, n):
    dx, dy = 2 * m + 2 * n, 2 * m - 2 * n
    assert classify_point((x, y)) == classify_point((x + dx, y + dy))


@given(coords, coords)
def test_corner_geometry(x, y):
    if (x + y) % 2 == 0:
        return
    c = (x, y)
    v = corner_vertex(c)
    f = corner_face(c)
    assert classify_point(v).kind is Kind.VERTEX
    assert classify_point(f).kind is Kind.FACE
    assert abs(v[0] - c[0]) + abs(v[1] - c[1]) == 1
    for m in corner_midedges(c):
        assert classify_point(m).kind is Kind.MIDEDGE
        assert abs(m[0] - c[0]) + abs(m[1] - c[1]) == 1
        assert v in edge_endpoints(m) and f in edge_faces(m)


@given(coords, coords)
def test_adjacency_tables_are_symmetric(x, y):
    p = (x, y)
    if classify_point(p).kind is Kind.FACE:
        assert all(p in face_neighbors(g) for g in face_neighbors(p))
    if classify_point(p).kind is Kind.VERTEX:
        assert all(p in vertex_neighbors(u) for u in vertex_neighbors(p))


def test_single_face_counts(single):
    assert len(single.faces) == 1
    assert len(single.vertices) == 4
    assert len(single.int_midedges) == 4
    assert len(single.bdry_midedges) == 8
    assert len(single.bdry_faces) == 4


def test_domino_counts(domino):
    assert len(domino.faces) == 2
    assert len(domino.vertices) == 6
    assert len(domino.int_midedges) == 7
    assert len(domino.bdry_midedges) == 10


def test_domain_errors():
    with pytest.raises(EmptyDomain):
        build_domain([])
    with pytest.raises(Disconnected):
        build_domain([(2, 0), (6, 0)])
    with pytest.raises(InvalidSite):
        build_domain([(0, 0)])
    with pytest.raises(FiordViolation):
        build_domain([(2, 0), (4, -2), (4, 2), (6, -4), (8, -2)])


def test_hole_is_rejected_without_fiord():
    faces = rectangle_faces(3, 3)
    centre = sorted(faces)[4]
    ring = faces - {centre}
    with pytest.raises(NotSimplyConnected):
        build_domain(ring)


def test_no_fiord_in_blocks(block3):
    for m in block3.int_midedges:
        assert any(f in block3.faces for f in edge_faces(m))


def test_single_face_normals(single):
    dirs = {z: outer_normal(single, z).direction for z in single.bdry_midedges}
    assert dirs[(5, 1)] == pytest.approx(cmath.exp(1j * math.pi / 4))
    assert dirs[(5, -1)] == pytest.approx(cmath.exp(-1j * math.pi / 4))
    allowed = [cmath.exp(1j * k * math.pi / 4) for k in (1, 3, 5, 7)]
    for z, d in dirs.items():
        assert abs(d) == pytest.approx(1.0)
        assert min(abs(d - u) for u in allowed) < 1e-12


@pytest.mark.parametrize("shape", ["rectangle(3,2)", "disc(1)"])
def test_normals_point_outward(shape):
    dom = make_standard_domain(shape, Fraction(1, 4))
    for z in dom.bdry_midedges:
        d = outer_normal(dom, z).direction
        tip = (round(z[0] + d.real * math.sqrt(2)), round(z[1] + d.imag * math.sqrt(2)))
        assert tip not in dom.vertices


def test_normals_along_straight_run():
    dom = make_standard_domain("rectangle(4,1)")
    # the lower-right side of the strip is a straight run of edges
    side = sorted(z for z in dom.bdry_midedges if outer_normal(dom, z).direction.imag < 0 and outer_normal(dom, z).direction.real > 0)
    assert len(side) >= 4


def test_outer_normal_rejects_interior(domino):
    with pytest.raises(InvalidSite):
        outer_normal(domino, next(iter(domino.int_midedges)))


def test_crossing_parity_examples():
    a = (2, 0)
    cfg = MarkedConfig(a)
    right = [(8, 0), (10, 2), (12, 0)]
    assert crossing_parity(right, cfg) == 1
    loop = [(4, 0), (2, 2), (0, 0), (2, -2), (4, 0)]
    assert crossing_parity(loop, cfg) == -1
    assert crossing_parity(loop + loop[1:], cfg) == 1
    with pytest.raises(NonAdjacentStep):
        crossing_parity([(0, 0), (4, 0)], cfg)


steps = st.sampled_from([(2, 2), (2, -2), (-2, 2), (-2, -2)])


def _walk(start, moves):
    pts = [start]
    for dx, dy in moves:
        pts.append((pts[-1][0] + dx, pts[-1][1] + dy))
    return pts


@given(st.lists(steps, min_size=1, max_size=12), st.lists(steps, min_size=1, max_size=12))
def test_crossing_parity_is_multiplicative(m1, m2):
    cfg = MarkedConfig((2, 0), ((6, 4), (-2, -4)))
    p = _walk((0, 0), m1)
    q = _walk(p[-1], m2)
    assert crossing_parity(p + q[1:], cfg) == crossing_parity(p, cfg) * crossing_parity(q, cfg)


@given(st.integers(-6, 6), st.integers(-6, 6))
def test_loop_around_unmarked_face_is_trivial(m, n):
    f = (2 + 2 * m + 2 * n, 2 * m - 2 * n)
    assert is_face(f)
    if f == (2, 0):
        return
    loop = [(f[0] + 2, f[1]), (f[0], f[1] + 2), (f[0] - 2, f[1]), (f[0], f[1] - 2), (f[0] + 2, f[1])]
    assert crossing_parity(loop, MarkedConfig((2, 0))) == 1


def test_marked_config_validation(domino):
    with pytest.raises(InvalidSite):
        MarkedConfig((2, 0), ((2, 0),)).validate(domino)
    with pytest.raises(InvalidSite):
        MarkedConfig((2, 0), ((6, 0),)).validate(domino)


def test_standard_shapes(single, domino):
    assert make_standard_domain("rectangle(1,1)").faces == single.faces
    assert make_standard_domain("rectangle(2,1)").faces == domino.faces
    disc = make_standard_domain("disc(1)", Fraction(1, 8))
    expected = math.pi / (2 * (1 / 8) ** 2)
    assert abs(len(disc.faces) - expected) <= 0.05 * expected
    with pytest.raises(EmptyDomain):
        make_standard_domain("rectangle(0,3)")


def test_domain_text_round_trip(block3):
    dom = make_standard_domain("disc(1)", Fraction(1, 4))
    back = parse_domain_text(dom.to_text())
    assert back.faces == dom.faces and back.delta == dom.delta
    assert parse_domain_text(block3.to_text()).faces == block3.faces
    with pytest.raises(ValueError):
        parse_domain_text("2 0\n")
