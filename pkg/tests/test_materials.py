import math

import pytest
import yaml
from hypothesis import given
from hypothesis import strategies as st

from microgrip.materials import (AIR_CONVECTION, AMBIENT_TEMPERATURE, BUILTIN_NAMES, GOLD_CONDUCTIVITY,
                                 Environment, MaterialError, MaterialProps, builtin_library, builtin_material,
                                 validate_material)


def test_builtin_values_in_micro_units():
    su8 = builtin_material("SU-8")
    assert su8.youngs_modulus == 4.95e3
    assert su8.poisson_ratio == 0.22
    assert su8.tce == 5.2e-5
    assert su8.thermal_conductivity == 2e5
    assert su8.density == 1.2e-15
    gold = builtin_material("Gold")
    assert gold.youngs_modulus == 57e3
    assert gold.tce == 1.41e-5
    assert gold.thermal_conductivity == 2970e5
    assert gold.electrical_conductivity == pytest.approx(41.0)
    oxide = builtin_material("SiO2")
    assert oxide.youngs_modulus == 70e3
    assert oxide.electrical_conductivity is None


def test_bulk_gold_conductivity_per_micrometre():
    assert GOLD_CONDUCTIVITY == pytest.approx(4.10e7 * 1e-6)


def test_ambient_defaults():
    env = Environment()
    assert env.ambient_temperature == pytest.approx(300.15)
    assert env.convection_coefficient == AIR_CONVECTION == 20.0
    assert env.validate() == []
    assert AMBIENT_TEMPERATURE == pytest.approx(300.15)


def test_environment_rejects_bad_values():
    assert Environment(convection_coefficient=-1).validate() == ["convection_coefficient must be >= 0"]
    assert len(Environment(ambient_temperature=0).validate()) == 1


def test_unknown_material():
    with pytest.raises(MaterialError, match="Copper"):
        builtin_material("Copper")


def test_builtin_is_pure():
    assert builtin_material("Gold") == builtin_material("Gold")
    assert builtin_library() == builtin_library()


@pytest.mark.parametrize("name", BUILTIN_NAMES)
def test_builtins_validate(name):
    assert validate_material(builtin_material(name)) == []


def test_poisson_boundary():
    bad = builtin_material("SU-8").with_overrides(poisson_ratio=0.5)
    assert validate_material(bad) == ["poisson_ratio must be < 0.5"]


def test_negative_density_reported():
    report = validate_material(builtin_material("SU-8").with_overrides(density=-1))
    assert len(report) == 1 and "density" in report[0]


def test_conductivity_must_be_positive_when_present():
    report = validate_material(builtin_material("Gold").with_overrides(electrical_conductivity=0.0))
    assert len(report) == 1 and "electrical_conductivity" in report[0]


def test_lame_parameters():
    lam, mu = builtin_material("SU-8").lame()
    e, nu = 4.95e3, 0.22
    assert mu == pytest.approx(e / (2 * (1 + nu)))
    assert lam == pytest.approx(e * nu / ((1 + nu) * (1 - 2 * nu)))


def test_from_dict_rejects_unknown_field():
    data = builtin_material("SU-8").to_dict()
    data["colour"] = "red"
    with pytest.raises(ValueError, match="colour"):
        MaterialProps.from_dict(data)


finite = st.floats(min_value=1e-30, max_value=1e30, allow_nan=False, allow_infinity=False)


@given(density=finite, modulus=finite, nu=st.floats(0, 0.499), tce=st.floats(0, 1e-3), k=finite,
       c=finite, sigma=st.one_of(st.none(), finite))
def test_yaml_round_trip(density, modulus, nu, tce, k, c, sigma):
    props = MaterialProps("X", density, modulus, nu, tce, k, c, sigma)
    text = yaml.safe_dump(props.to_dict())
    assert MaterialProps.from_dict(yaml.safe_load(text)) == props


@given(nu=st.floats(allow_nan=True, allow_infinity=True))
def test_poisson_invariant(nu):
    report = validate_material(builtin_material("SU-8").with_overrides(poisson_ratio=nu))
    ok = math.isfinite(nu) and 0 <= nu < 0.5
    assert (report == []) == ok
