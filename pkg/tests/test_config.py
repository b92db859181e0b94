import pytest
import yaml
from hypothesis import given, settings
from hypothesis import strategies as st

from microgrip.config import (ConfigError, default_config, from_dict, load_calibration, parse_config)
from microgrip.materials import builtin_material
from microgrip.studies import DEFAULT_H_GRID, DEFAULT_VOLTAGES

MINIMAL = "design: model1\nstudy: simulate\nvoltage: 0.25\n"


def test_minimal_config_defaults():
    c = parse_config(MINIMAL)
    assert c.design == {"model": "model1", "overrides": {}}
    assert c.study["kind"] == "simulate" and c.study["voltage"] == 0.25
    assert c.mesh == {"resolution": 10.0, "order": 2}
    assert c.environment == {"ambient_temperature": 300.15, "convection_coefficient": 20.0}
    assert c.study["voltages"] == list(DEFAULT_VOLTAGES)
    assert c.study["h_values"] == list(DEFAULT_H_GRID)
    assert c.study["closure_targets"] == [5.0, 10.0, 15.0]
    assert c.study["object_diameter"] is None
    assert c.output == {"directory": "out", "formats": ["csv"]}
    assert (c.seed, c.threads) == (0, 1)


def test_flow_style_minimal_config():
    assert parse_config("{design: model1, study: simulate, voltage: 0.25}") == parse_config(MINIMAL)


def test_calibrated_heater_by_default():
    cal = load_calibration()
    assert cal["design"] == "model1" and cal["voltage"] == 0.25 and cal["target_closure"] == 16.0
    c = default_config()
    sigma = c.material_library()["Gold"].electrical_conductivity
    assert sigma == cal["electrical_conductivity"]
    assert sigma < builtin_material("Gold").electrical_conductivity


def test_material_override_wins():
    c = parse_config("materials:\n  Gold:\n    electrical_conductivity: 41.0\n")
    assert c.material_library()["Gold"].electrical_conductivity == 41.0


@pytest.mark.parametrize("text, key", [
    ("colour: red", "'colour'"),
    ("study:\n  colour: 1", "'study.colour'"),
    ("study:\n  optimize:\n    colour: 1", "'study.optimize.colour'"),
    ("materials:\n  Gold:\n    colour: 1", "'materials.Gold.colour'"),
])
def test_unknown_keys_named(text, key):
    with pytest.raises(ConfigError, match=key):
        parse_config(text)


def test_syntax_error_position():
    with pytest.raises(ConfigError, match="line 2, column 13"):
        parse_config("design: model1\nvoltage: 0.1: 2\nseed: 1\n")


@pytest.mark.parametrize("text, fragment", [
    ("voltage: 2.0", "outside"),
    ("study: {voltages: [0.2, 0.1]}", "sorted"),
    ("study: {h_values: [5]}", "h_values"),
    ("mesh: {order: 3}", "order"),
    ("mesh: {resolution: fast}", "number"),
    ("design: model7", "model7"),
    ("design: {model: model1, overrides: {arm_width: -1}}", "arm_width"),
    ("materials: {SU-8: {poisson_ratio: 0.5}}", "poisson_ratio"),
    ("threads: 0", "threads"),
    ("voltage: 0.1\nstudy: {voltage: 0.2}", "both"),
    ("- a\n- b", "mapping"),
])
def test_invalid_values(text, fragment):
    with pytest.raises(ConfigError, match=fragment):
        parse_config(text)


def test_round_trip_default():
    c = parse_config(MINIMAL)
    assert parse_config(c.dump()) == c
    assert parse_config(c.dump()).dump() == c.dump()


@settings(max_examples=30, deadline=None)
@given(res=st.floats(2, 40), order=st.sampled_from([1, 2]), h=st.floats(20, 5000), v=st.floats(0, 1),
       sigma=st.floats(1, 100), kind=st.sampled_from(["simulate", "sweep", "grip", "compare"]),
       seed=st.integers(0, 2 ** 31), d=st.one_of(st.none(), st.floats(0.5, 15)))
def test_round_trip_property(res, order, h, v, sigma, kind, seed, d):
    c = from_dict({"design": "model2", "mesh": {"resolution": res, "order": order},
                   "environment": {"convection_coefficient": h}, "study": {"kind": kind, "voltage": v,
                                                                          "object_diameter": d},
                   "materials": {"Gold": {"electrical_conductivity": sigma}}, "seed": seed})
    again = parse_config(c.dump())
    assert again == c
    assert yaml.safe_load(again.dump()) == yaml.safe_load(c.dump())


def test_with_changes_revalidates():
    c = default_config()
    assert c.with_changes(threads=4).threads == 4
    with pytest.raises(ConfigError):
        c.with_changes(threads=0)


def test_design_resolves():
    c = parse_config("design: {model: stack, overrides: {polymer_split_fraction: 0.3}}")
    assert c.build_design().stack_params.polymer_split_fraction == 0.3
