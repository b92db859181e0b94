import math

import pytest

from microgrip.design import build_model1
from microgrip.grip import (FORCE_TOL, ContactError, contact_threshold_voltage, estimate_grip,
                            first_touch_voltage)
from microgrip.materials import Environment
from microgrip.physics import CoupledModel, MeshSettings


@pytest.fixture(scope="module")
def model(calibrated):
    return CoupledModel(build_model1(), Environment(), MeshSettings(20.0, 2), calibrated)


@pytest.fixture(scope="module")
def held(model):
    return estimate_grip(model, 0.25, 5.0)


def test_open_gripper_has_no_contact(model):
    r = estimate_grip(model, 0.05, 5.0)
    assert not r.contact
    assert r.total_normal_force == 0.0 and r.max_contact_pressure == 0.0


def test_held_object(held):
    assert held.contact
    assert held.total_normal_force > 0
    assert held.contact_area > 0
    assert 0 < held.mean_contact_pressure <= held.max_contact_pressure + 1e-12
    assert held.force_balance_error < 1e-6
    assert set(held.tip_force) == {"left", "right"}


def test_penalty_converged(held):
    (_, f1), (_, f2) = held.history[-2:]
    assert abs(f2 - f1) <= FORCE_TOL * f2


def test_force_grows_with_voltage_and_size(model, held):
    assert estimate_grip(model, 0.27, 5.0).total_normal_force > held.total_normal_force
    assert estimate_grip(model, 0.25, 6.0).total_normal_force > held.total_normal_force


def test_threshold_matches_quadratic_response(model):
    v = contact_threshold_voltage(model, 5.0)
    assert model.run(v).closure == pytest.approx(model.tip_gap_open - 5.0, rel=1e-9)


def test_force_vanishes_at_first_touch(model, held):
    v = first_touch_voltage(model, 5.0)
    assert math.isfinite(v) and 0 < v < 0.25
    r = estimate_grip(model, v * (1 + 1e-6), 5.0, contact_rule="nodal")
    assert r.total_normal_force < 1e-3 * held.total_normal_force


def test_argument_checks(model):
    with pytest.raises(ValueError):
        estimate_grip(model, 0.25, 25.0)
    with pytest.raises(ValueError):
        estimate_grip(model, 0.25, 5.0, contact_rule="sticky")


def test_too_coarse_mesh_reported(coarse1):
    with pytest.raises(ContactError, match="refine"):
        estimate_grip(coarse1, 0.3, 2.0)
