import math
import warnings
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from microgrip.oracles import (BimorphLayer, BimorphParams, FinParams, OracleDomainError, bimorph_tip_deflection,
                               fin_max_temperature, fin_residual, fin_temperature, layered_beam_deflection,
                               rod_resistance)
from microgrip.verification import bimorph_case, fin_case


def test_insulated_fin_classic_profile():
    p = FinParams(200.0, 100.0, 40.0, 2e5, 20.0, base_temperature=400.0, tip="insulated")
    x = np.linspace(0, 200, 7)
    m = p.m
    expected = p.ambient + (400.0 - p.ambient) * np.cosh(m * (200 - x)) / math.cosh(m * 200)
    assert np.allclose(fin_temperature(p, x), expected, rtol=1e-13)


def test_convective_tip_condition():
    p = fin_case(length=100.0, h=500.0)
    L, s = p.length, 1e-4
    slope = (fin_temperature(p, L) - fin_temperature(p, L - s)) / s
    flux_out = -p.conductivity * slope
    assert flux_out == pytest.approx(p.convection * (fin_temperature(p, L) - p.ambient), rel=1e-3)


def test_base_condition_and_plateau():
    p = fin_case(length=4000.0, h=1000.0)
    assert fin_temperature(p, 0.0) == pytest.approx(p.ambient, abs=1e-9)
    assert fin_temperature(p, 2000.0) - p.ambient == pytest.approx(p.plateau, rel=1e-9)


def test_fin_reference_value():
    # maximum of the acceptance rod, frozen from the closed form
    x, t = fin_max_temperature(fin_case())
    assert t == pytest.approx(403.80284574420136, rel=1e-10)
    assert 0 < x < 400


@settings(max_examples=40)
@given(length=st.floats(50, 1000), side=st.floats(2, 30), h=st.floats(20, 1000), q=st.floats(0, 1e4),
       frac=st.floats(0.05, 0.95), tip=st.sampled_from(["convective", "insulated"]))
def test_fin_satisfies_its_equation(length, side, h, q, frac, tip):
    p = FinParams(length, side * side, 4 * side, 2e5, h, heat_density=q, base_temperature=350.0, tip=tip)
    assert fin_residual(p, frac * length) < 1e-5


def test_fin_domain_errors():
    with pytest.raises(OracleDomainError, match="convection"):
        fin_temperature(FinParams(1, 1, 1, 1, -1), 0.5)
    with pytest.raises(OracleDomainError):
        fin_temperature(fin_case(), 401.0)


def _pair(e1=57e3, e2=57e3, a1=2e-5, a2=1e-5, t1=1.0, t2=1.0):
    return BimorphParams(BimorphLayer(e1, a1, t1), BimorphLayer(e2, a2, t2), 10.0, 100.0, 50.0)


def test_equal_layers_curvature():
    p = _pair()
    kappa, tip = bimorph_tip_deflection(p)
    assert kappa == pytest.approx(3 * (2e-5 - 1e-5) * 50.0 / (2 * 2.0), rel=1e-14)
    assert tip == pytest.approx(kappa * 100.0 ** 2 / 2, rel=1e-14)


def test_swapping_layers_flips_sign():
    p = bimorph_case()
    swapped = replace(p, bottom=p.top, top=p.bottom)
    assert bimorph_tip_deflection(swapped)[1] == pytest.approx(-bimorph_tip_deflection(p)[1], rel=1e-14)


def test_no_mismatch_no_bending():
    assert bimorph_tip_deflection(_pair(a1=1e-5, a2=1e-5)) == (0.0, 0.0)


def test_bimorph_reference_values():
    # SU-8 20 um under 0.3 um gold, 400 um long, 100 K; frozen from the closed form
    p = bimorph_case()
    assert bimorph_tip_deflection(p)[1] == pytest.approx(11.471390523291431, rel=1e-12)
    assert bimorph_tip_deflection(replace(p, plane_strain=False))[1] == pytest.approx(9.344184724363458, rel=1e-12)


@settings(max_examples=30, deadline=None)
@given(e1=st.floats(1e3, 1e5), e2=st.floats(1e3, 1e5), a1=st.floats(0, 1e-4), a2=st.floats(0, 1e-4),
       t1=st.floats(0.1, 20), t2=st.floats(0.1, 20), ps=st.booleans())
def test_closed_form_equals_section_balance(e1, e2, a1, a2, t1, t2, ps):
    p = BimorphParams(BimorphLayer(e1, a1, t1, 0.3), BimorphLayer(e2, a2, t2, 0.2), 5.0, 1000.0, 80.0, ps)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        k1, w1 = bimorph_tip_deflection(p)
        k2, w2 = layered_beam_deflection(p)
    assert k1 == pytest.approx(k2, rel=1e-9, abs=1e-18)
    assert w1 == pytest.approx(w2, rel=1e-9, abs=1e-12)


def test_stubby_beam_warns():
    with pytest.warns(UserWarning, match="slenderness"):
        bimorph_tip_deflection(replace(_pair(), length=5.0))


def test_bimorph_domain_errors():
    with pytest.raises(OracleDomainError):
        bimorph_tip_deflection(_pair(t1=0.0))


def test_rod_resistance():
    assert rod_resistance(100.0, 3.0, 41.0) == pytest.approx(100.0 / 123.0)
    with pytest.raises(OracleDomainError):
        rod_resistance(100.0, 0.0, 41.0)
