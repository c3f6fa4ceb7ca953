import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helmpoisson.thresholds import (NoPositiveThreshold, k_star_annular, k_star_cavity, khat,
                                    sufficiency_margin, threshold_report, waveguide_feasibility)


def test_k_star_cavity():
    assert k_star_cavity([1.0]) == 1.0
    assert k_star_cavity([0.25], p=1.0) == pytest.approx(math.sqrt(3))
    with pytest.raises(NoPositiveThreshold):
        k_star_cavity([0.25], p=4.0)
    with pytest.raises(ValueError):
        k_star_cavity([0.25], p=-1.0)


@pytest.mark.parametrize("E, L, k", [(0.03, 0.46, 1.93), (0.15, 0.91, 0.95), (0.20, 1.24, 0.72)])
def test_k_star_annular_constants(E, L, k):
    ks, _ = k_star_annular(np.full(4, E), np.full(4, L))
    assert ks == pytest.approx(k, abs=0.01)


@settings(max_examples=100)
@given(st.floats(1e-6, 10.0), st.floats(0.0, 10.0))
def test_khat_root(E, L):
    k = float(khat(E, L))
    assert k > 0
    assert k * k * E + k * L == pytest.approx(1.0, rel=1e-12)


@settings(max_examples=50)
@given(st.floats(1e-3, 1.0), st.floats(0.0, 5.0), st.floats(0.0, 3.0))
def test_cavity_threshold_decreases_with_damping(E, p1, dp):
    try:
        k2 = k_star_cavity([E], p1 + dp)
    except NoPositiveThreshold:
        return
    assert k_star_cavity([E], p1) >= k2


def test_k_star_annular_masks_zero_nodes():
    ks, kh = k_star_annular(np.array([0.0, 0.1, 0.2]), np.array([0.0, 0.5, 0.1]))
    assert np.isinf(kh[0])
    assert ks == pytest.approx(min(khat(0.1, 0.5), khat(0.2, 0.1)))


def test_sufficiency_margin(shape1_coarse):
    assert sufficiency_margin([0.1], [0.2], 0.0, 0.0) == 0.0
    rep = threshold_report(shape1_coarse)
    m = sufficiency_margin(rep.E_field, rep.L_field, rep.k_star)
    assert m == pytest.approx(1.0, rel=1e-12)
    assert sufficiency_margin(rep.E_field, rep.L_field, 2.9) > 1
    with pytest.raises(ValueError):
        sufficiency_margin([0.1], [0.2], 1.0, 0.5)


def test_waveguide_certificates():
    c1 = waveguide_feasibility(0.5, 1)
    assert c1.feasible is None and c1.product_bound == pytest.approx(math.pi ** 2 / 16)
    for m in range(2, 9):
        c = waveguide_feasibility(0.5, m)
        assert c.feasible is False
        assert c.product_bound_over_pi2 == Fraction(m * m, 16)
        # pi > 3 so m^2 pi^2 / 16 > 9 m^2 / 16 >= 36/16 > 1 without floating point
        assert Fraction(9) * c.product_bound_over_pi2 > 1
    assert waveguide_feasibility(0.5, 2).product_bound == pytest.approx(2.4674, abs=1e-4)
    with pytest.raises(ValueError):
        waveguide_feasibility(1.5, 1)
    with pytest.raises(ValueError):
        waveguide_feasibility(0.5, 0)


def test_report_json(shape1_coarse):
    import json
    d = json.loads(threshold_report(shape1_coarse).to_json())
    assert {"sup_E", "sup_L", "k_star"} <= set(d)
