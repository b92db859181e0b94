import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from microgrip.design import (DesignError, PlanParams, Rect, brick_layout, build_design, build_model1,
                              build_model2, build_stack_design, validate_design, with_arm_plan)
from microgrip.materials import builtin_library


def test_model1_stack_metal_on_both_faces():
    d = build_model1()
    assert [(l.material, l.thickness, l.role) for l in d.stack] == [
        ("SiO2", 2.0, "substrate_oxide"), ("Gold", 0.3, "conductor"),
        ("SU-8", 20.0, "structural_polymer"), ("Gold", 0.3, "conductor")]
    assert d.free_arm_thickness == pytest.approx(20.6)
    assert d.metal_placement == "both_faces"


def test_model2_stack_metal_at_midplane():
    d = build_model2()
    assert [(l.material, l.thickness) for l in d.stack] == [
        ("SiO2", 2.0), ("SU-8", 10.0), ("Gold", 0.3), ("SU-8", 10.0)]
    assert d.free_arm_thickness == pytest.approx(20.3)
    assert d.placement_offset == 0.0


def test_plan_dimensions():
    d = build_model1()
    assert d.footprint_length == 460.0
    assert d.footprint_width == 200.0
    assert d.free_arm_length == 400.0
    assert d.tip_gap_open == pytest.approx(20.0)


@pytest.mark.parametrize("builder", [build_model1, build_model2])
def test_builtins_validate(builder):
    assert validate_design(builder(), builtin_library()) == []


def test_arms_fit_the_footprint_exactly():
    pp = PlanParams()
    outer = pp.tip_gap_open / 2 + pp.arm_width + pp.underarm_spacing + pp.hot_arm_width
    assert outer == pytest.approx(pp.footprint_width / 2)


def test_each_arm_has_two_pads_with_both_polarities():
    pads = build_model1().terminal_pads
    for arm in ("left", "right"):
        assert sorted(p.polarity for p in pads if p.arm == arm) == ["high", "low"]


def test_tips_face_each_other():
    tips = {t.arm: t for t in build_model1().arm_plan.tips}
    assert tips["left"].normal == -1 and tips["right"].normal == 1
    assert tips["left"].y - tips["right"].y == pytest.approx(20.0)


def test_broken_trace_reported():
    d = build_model1()
    trace = tuple(t for i, t in enumerate(d.arm_plan.trace) if not (t.arm == "left" and i == 2))
    report = validate_design(with_arm_plan(d, trace=trace), builtin_library())
    assert any("not connected" in r for r in report)


def test_asymmetric_arms_reported():
    d = build_model1()
    parts = list(d.arm_plan.parts)
    i = next(i for i, p in enumerate(parts) if p.arm == "left" and p.label == "arm")
    r = parts[i].rect
    parts[i] = type(parts[i])("arm", "left", Rect(r.x0, r.x1, r.y0, r.y1 + 1.0))
    report = validate_design(with_arm_plan(d, parts=tuple(parts)), builtin_library())
    assert "arms not mirror-symmetric" in report


def test_conductor_without_conductivity_reported():
    lib = builtin_library()
    lib["Gold"] = lib["Gold"].with_overrides(electrical_conductivity=None)
    report = validate_design(build_model1(), lib)
    assert any("electrical conductivity" in r for r in report)


def test_unknown_override_rejected():
    with pytest.raises(DesignError, match="colour"):
        build_model1({"colour": 1.0})


def test_overrides_change_plan():
    d = build_model1({"arm_width": 18.0})
    assert d.plan_params.arm_width == 18.0


def test_too_wide_arms_rejected():
    with pytest.raises(DesignError, match="footprint_width"):
        build_model1({"hot_arm_width": 60.0})


def test_model2_refuses_offset():
    with pytest.raises(DesignError):
        build_model2({"polymer_split_fraction": 0.3})


def test_build_design_dispatch():
    assert build_design("model1").name == "model1"
    assert build_design("model2").name == "model2"
    assert build_design("stack", {"polymer_split_fraction": 0.25}).stack_params.polymer_split_fraction == 0.25
    with pytest.raises(DesignError):
        build_design("model3")


def test_parameters_are_plain_data():
    p = build_model2().parameters()
    assert p["name"] == "model2"
    assert p["plan"]["trace_width"] == 2.5
    assert len(p["stack"]) == 4


@given(st.floats(0.05, 0.95))
def test_placement_offset_from_split(f):
    d = build_stack_design(f)
    lower, upper = f * 20.0, (1 - f) * 20.0
    assert d.placement_offset == pytest.approx((lower - upper) / 2)
    assert d.free_arm_thickness == pytest.approx(20.3)


@settings(max_examples=25, deadline=None)
@given(arm=st.floats(10, 30), spacing=st.floats(20, 60), hot=st.floats(16, 40))
def test_validity_matches_fit_rule(arm, spacing, hot):
    fits = 10 + arm + spacing + hot <= 100
    if fits:
        d = build_model1({"arm_width": arm, "underarm_spacing": spacing, "hot_arm_width": hot})
        assert validate_design(d) == []
    else:
        with pytest.raises(DesignError, match="footprint_width"):
            build_model1({"arm_width": arm, "underarm_spacing": spacing, "hot_arm_width": hot})


def test_brick_layout_fixed_faces():
    lay = brick_layout(10, 5, [("SU-8", 2, "structural_polymer")], fixed="x0")
    assert lay.fixed.axis == 0
    assert brick_layout(10, 5, [("SU-8", 2, "structural_polymer")], fixed=None).fixed is None
    with pytest.raises(ValueError):
        brick_layout(10, 5, [("SU-8", 2, "structural_polymer")], fixed="top")
