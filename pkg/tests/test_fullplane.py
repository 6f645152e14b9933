import math

import pytest

from spinorlab.fullplane import (
    beurling_exponent,
    build_fullplane_F,
    build_fullplane_G,
    harmonic_conjugate,
    near_slit_ratio,
    vartheta,
    window_errors,
)


@pytest.fixture(scope="module")
def spinors():
    out = {}
    for n in (8, 16, 32):
        spn = build_fullplane_F(1 / n)
        harmonic_conjugate(spn)
        build_fullplane_G(spn)
        out[n] = spn
    return out


def test_box_precondition():
    with pytest.raises(ValueError):
        build_fullplane_F(1 / 8, N=10)


def test_normalizations(spinors):
    for n, spn in spinors.items():
        N = spn.box.N
        assert spn.at(0, 0) == 1.0
        assert spn.G[N, N] == pytest.approx(1 / n, abs=1e-14)
        slit = [(u, 0) for u in range(-N, -1) if (u % 2) == 0]
        assert all(spn.at(u, w) == 0.0 for u, w in slit)
        assert all(spn.G[u + N, N] == 0.0 for u, _ in slit)
        assert vartheta(spn) > 0


def test_f1_is_discrete_harmonic_off_the_slit(spinors):
    spn = spinors[16]
    N = spn.box.N
    F = spn.F1
    for u, w in [(3, 1), (-5, 3), (10, -4), (-20, 2), (40, 40)]:
        lap = sum(F[u + du + N, w + dw + N] for du in (1, -1) for dw in (1, -1)) - 4 * F[u + N, w + N]
        assert abs(lap) < 1e-12


def test_conjugate_vanishes_on_right_ray_and_closes(spinors):
    for spn in spinors.values():
        N = spn.box.N
        assert all(spn.Fi[u + N, N] == 0.0 for u in range(2, N + 1, 2))
        assert spn.conjugation_residual < 1e-10


def test_vartheta_scaling(spinors):
    ratios = [vartheta(spn) / math.sqrt(spn.delta) for spn in spinors.values()]
    assert (max(ratios) - min(ratios)) / min(ratios) <= 0.15


def test_nu_over_vartheta_tends_to_one(spinors):
    errs = [abs(spn.nu / vartheta(spn) - 1) for spn in spinors.values()]
    assert errs[0] > errs[1] > errs[2]


def test_window_errors_decrease(spinors):
    errs = [window_errors(spn) for spn in spinors.values()]
    assert errs[0]["F1"] > errs[1]["F1"] > errs[2]["F1"]
    assert errs[-1]["F1"] < 0.1 and errs[-1]["G"] < 0.1 and errs[-1]["Fi"] < 0.1


def test_box_size_insensitivity():
    small = build_fullplane_F(1 / 16)
    big = build_fullplane_F(1 / 16, N=2 * small.box.N)
    for u, w in [(8, 0), (0, 8), (-10, 6), (14, -2)]:
        a = small.at(u, w) / vartheta(small)
        b = big.at(u, w) / vartheta(big)
        assert abs(a - b) <= 0.01 * abs(b)


def test_beurling_and_near_slit(spinors):
    fine = build_fullplane_F(1 / 64)
    assert 0.45 <= beurling_exponent(fine) <= 0.55
    assert abs(near_slit_ratio(fine) / 2 - 1) <= 0.1
    # both drift toward their continuum values as the mesh refines
    coarse = [spinors[16], spinors[32], fine]
    exps = [beurling_exponent(s) - 0.5 for s in coarse]
    assert exps[0] > exps[1] > exps[2] > 0
    near = [near_slit_ratio(s) - 2 for s in coarse]
    assert near[0] > near[1] > near[2] > 0
