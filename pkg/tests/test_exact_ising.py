import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from spinorlab.errors import BadBoundary, InvalidSite, TooLarge
from spinorlab.exact_ising import (
    ALPHA_C,
    BETA_C,
    ContourConfig,
    Estimate,
    IsingWeights,
    build_model,
    contours_to_spins,
    enumerate_correlation,
    exact_correlation,
    signed_partition_sum,
    spin_weight_correlation,
    spins_to_contours,
    subset_sums,
    transfer_matrix_correlation,
)
from spinorlab.experiments import domain_suite
from spinorlab.lattice import face_midedges, make_standard_domain

from conftest import A, B_EDGE

SMALL = domain_suite(5)
ALPHA4 = ALPHA_C**4
ALPHA6 = ALPHA_C**6
SINGLE_PLUS = 2 * math.sqrt(2) / 3
DOMINO_PAIR = (1 + ALPHA6 - 2 * ALPHA4) / (1 + ALPHA6 + 2 * ALPHA4)


def test_critical_weight():
    assert math.exp(-2 * BETA_C) == pytest.approx(ALPHA_C, abs=1e-16)
    with pytest.raises(ValueError):
        IsingWeights.at_beta(0.3)
    assert IsingWeights.at_beta(0.3, override=True).alpha == pytest.approx(math.exp(-0.6))


def test_estimate_rejects_negative_stderr():
    with pytest.raises(ValueError):
        Estimate(0.5, -1e-3)


def test_single_face(single):
    e = enumerate_correlation(single, "plus_faces", [A]).value
    assert e == pytest.approx(SINGLE_PLUS, abs=1e-15)
    assert e == pytest.approx((1 - ALPHA4) / (1 + ALPHA4), abs=1e-15)
    assert signed_partition_sum(single, [A]) == pytest.approx(1 - ALPHA4, abs=1e-15)
    assert signed_partition_sum(single, []) == pytest.approx(1 + ALPHA4, abs=1e-15)


def test_domino(domino):
    e = enumerate_correlation(domino, "plus_faces", [A, B_EDGE]).value
    assert e == pytest.approx(DOMINO_PAIR, abs=1e-15)
    assert e == pytest.approx(0.8893, abs=5e-5)
    z = signed_partition_sum(domino, [])
    assert signed_partition_sum(domino, [A, B_EDGE]) == pytest.approx(e * z, abs=1e-14)


@pytest.mark.parametrize("dom", SMALL[:20], ids=lambda d: str(len(d.faces)))
def test_empty_product_is_one(dom):
    for bc in ("plus_faces", "free_faces", "free_vertices"):
        assert enumerate_correlation(dom, bc, []).value == 1.0
    assert signed_partition_sum(dom, []) > 0


def test_invalid_sites(domino):
    with pytest.raises(InvalidSite):
        enumerate_correlation(domino, "plus_faces", [(6, 0)])
    with pytest.raises(ValueError):
        build_model(domino, "minus")


def test_enumeration_cap():
    dom = make_standard_domain("rectangle(5,5)")
    with pytest.raises(TooLarge):
        enumerate_correlation(dom, "plus_faces", [sorted(dom.faces)[0]], cap=24)


def test_contour_examples(single, block3):
    assert spins_to_contours(block3, {f: 1 for f in block3.faces}).edges == frozenset()
    f = sorted(block3.faces)[4]
    spins = {g: 1 for g in block3.faces}
    spins[f] = -1
    assert spins_to_contours(block3, spins).edges == frozenset(face_midedges(f))
    with pytest.raises(BadBoundary):
        spins_to_contours(single, {(6, 0): -1})
    with pytest.raises(BadBoundary):
        contours_to_spins(single, ContourConfig(frozenset([(3, 1)])))


def test_contour_round_trip_random_block():
    dom = make_standard_domain("rectangle(4,4)")
    faces = sorted(dom.faces)
    rng = np.random.default_rng(7)
    for row in rng.choice([-1, 1], size=(10_000, len(faces))):
        spins = dict(zip(faces, (int(s) for s in row)))
        contour = spins_to_contours(dom, spins)
        assert contour.is_closed()
        assert contours_to_spins(dom, contour) == spins


def test_transfer_matrix_examples():
    assert transfer_matrix_correlation(1, 1, "plus_faces", [A]).value == pytest.approx(SINGLE_PLUS, abs=1e-14)
    assert transfer_matrix_correlation(2, 1, "plus_faces", [A, B_EDGE]).value == pytest.approx(DOMINO_PAIR, abs=1e-14)
    dom = make_standard_domain("rectangle(4,4)")
    centre = sorted(dom.faces)[len(dom.faces) // 2]
    tm = transfer_matrix_correlation(4, 4, "plus_faces", [centre]).value
    assert tm == pytest.approx(enumerate_correlation(dom, "plus_faces", [centre]).value, abs=1e-12)


@given(st.sampled_from(SMALL), st.sampled_from(["plus_faces", "free_faces", "free_vertices"]), st.data())
def test_engines_agree(dom, bc, data):
    sites = build_model(dom, bc).sites
    marked = data.draw(st.lists(st.sampled_from(sites), max_size=4))
    e = enumerate_correlation(dom, bc, marked).value
    assert exact_correlation(dom, bc, marked).value == pytest.approx(e, abs=1e-12)
    # the same sum in spin-weight parameterization
    assert spin_weight_correlation(dom, bc, marked) == pytest.approx(e, abs=1e-12)


@given(st.sampled_from(SMALL), st.data())
def test_subset_sums_match_enumeration(dom, data):
    model = build_model(dom, "plus_faces")
    zs = subset_sums(model)
    marked = data.draw(st.lists(st.sampled_from(model.sites), max_size=4, unique=True))
    mask = sum(1 << model.index[s] for s in marked)
    assert zs[mask] / zs[0] == pytest.approx(enumerate_correlation(dom, "plus_faces", marked).value, abs=1e-13)


@given(st.sampled_from(SMALL), st.data())
def test_contour_sign_sum_matches_spins(dom, data):
    faces = sorted(dom.faces)
    marked = data.draw(st.lists(st.sampled_from(faces), max_size=3, unique=True))
    z0 = signed_partition_sum(dom, [])
    e = enumerate_correlation(dom, "plus_faces", marked).value
    assert signed_partition_sum(dom, marked) / z0 == pytest.approx(e, abs=1e-13)


def test_fkg_free_below_plus():
    suite = domain_suite(5) + [make_standard_domain("rectangle(3,3)")]
    for dom in suite:
        faces = sorted(dom.faces)
        for a, b in itertools.combinations(faces, 2):
            free = enumerate_correlation(dom, "free_faces", [a, b]).value
            plus = enumerate_correlation(dom, "plus_faces", [a, b]).value
            assert free <= plus + 1e-14
