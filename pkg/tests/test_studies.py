import math

import numpy as np
import pytest

from microgrip.design import build_model1
from microgrip.materials import Environment
from microgrip.physics import CoupledModel, run_coupled
from microgrip.studies import (CSV_HEADER, DesignSpace, InfeasibleError, SweepError, SweepRecord,
                               calibrate_conductivity, compare_models, environment_sweep, optimize_design,
                               placement_space, required_voltage, required_voltage_table, voltage_sweep)

from conftest import COARSE

H = (20.0, 100.0, 1000.0)


@pytest.fixture(scope="module")
def env_records(coarse1):
    return environment_sweep(coarse1, [0.0, 0.1, 0.2], H)


def test_zero_voltage_record(coarse1):
    (r,) = voltage_sweep(coarse1, [0.0])
    assert r.tip_gap == pytest.approx(20.0)
    assert r.max_temperature == pytest.approx(coarse1.env.ambient_temperature)
    assert r.joule_power_total == 0.0
    assert r.csv_row().startswith("model1,0,20,20,300.15,300.15,")
    assert r.csv_row().endswith(",0,,")


def test_voltage_checks(coarse1):
    with pytest.raises(ValueError, match="sorted"):
        voltage_sweep(coarse1, [0.2, 0.1])
    with pytest.raises(ValueError):
        voltage_sweep(coarse1, [0.0, 1.5])


def test_sweep_failure_names_voltage(calibrated):
    broken = dict(calibrated)
    broken["Gold"] = broken["Gold"].with_overrides(electrical_conductivity=None)
    model = CoupledModel(build_model1(), None, COARSE, broken)
    with pytest.raises(SweepError) as info:
        voltage_sweep(model, [0.1, 0.2])
    assert info.value.voltage == 0.1


def test_monotone_closure(coarse1):
    recs = voltage_sweep(coarse1, [0.0, 0.1, 0.2, 0.3])
    gaps = [r.tip_gap for r in recs]
    assert all(b <= a for a, b in zip(gaps, gaps[1:]))


def test_env_sweep_layout(env_records, coarse1):
    assert len(env_records) == 9
    assert [r.convection_coefficient for r in env_records] == [h for h in H for _ in range(3)]
    plain = voltage_sweep(coarse1, [0.0, 0.1, 0.2])
    assert env_records[:3] == plain


def test_env_sweep_cooler_in_liquid(env_records):
    at = {(r.convection_coefficient, r.applied_voltage): r.max_temperature for r in env_records}
    for v in (0.1, 0.2):
        temps = [at[(h, v)] for h in H]
        assert all(b <= a for a, b in zip(temps, temps[1:]))


def test_env_sweep_parallel_equals_serial(coarse1, env_records):
    assert environment_sweep(coarse1, [0.0, 0.1, 0.2], H, threads=3) == env_records


def test_env_sweep_rejects_sub_air_h(coarse1):
    with pytest.raises(ValueError):
        environment_sweep(coarse1, [0.1], [10.0])


def test_required_voltage_hits_target(coarse1):
    v = required_voltage(coarse1, 8.0)
    assert coarse1.run(v).closure == pytest.approx(8.0, rel=1e-7)
    assert required_voltage(coarse1, 0.0) == 0.0
    assert required_voltage(coarse1, 1e4) == math.inf


def test_required_voltage_table_monotone(coarse1):
    table = required_voltage_table(coarse1, [5.0, 10.0], H)
    assert [(h, t) for _, h, t, _ in table] == [(h, t) for h in H for t in (5.0, 10.0)]
    for target in (5.0, 10.0):
        volts = [v for _, _, t, v in table if t == target]
        assert all(b >= a for a, b in zip(volts, volts[1:]))


def test_calibration_reaches_target(calibrated):
    sigma = calibrate_conductivity(build_model1(), 0.2, 12.0, mesh_settings=COARSE,
                                   materials={"Gold": {"electrical_conductivity": 41.0}})
    sol = run_coupled(build_model1(), 0.2, mesh_settings=COARSE,
                      materials={**calibrated, "Gold": calibrated["Gold"].with_overrides(electrical_conductivity=sigma)})
    assert sol.closure == pytest.approx(12.0, rel=1e-9)


def test_compare_at_zero_volts():
    c = compare_models([0.0], mesh_settings=COARSE)
    assert all(c.verdicts.values())
    assert len(c.records()) == 2
    assert all(r.tip_gap == pytest.approx(20.0) and r.joule_power_total == 0 for r in c.records())


def _quadratic(center):
    return lambda p: (sum((x - c) ** 2 for x, c in zip(p, center)), 20.0)


def test_grid_argmin_of_precomputed_objective():
    space = DesignSpace(variables={"metal_thickness": (0.1, 0.5)})
    table = {0.1: 3.0, 0.3: 1.0, 0.5: 2.0}
    res = optimize_design(space, "grid", 3, evaluate=lambda p: (table[round(p[0], 6)], 20.0))
    assert res.best_point == (0.3,)
    assert res.best_objective == 1.0
    assert [e.point for e in res.trace] == [(0.1,), (0.3,), (0.5,)]


def test_infeasible_points_excluded():
    space = DesignSpace(variables={"metal_thickness": (0.1, 0.5)})
    res = optimize_design(space, "grid", 3, evaluate=lambda p: (p[0], 20.0 if p[0] > 0.2 else 1.0))
    assert res.best_point == (0.3,)
    with pytest.raises(InfeasibleError) as info:
        optimize_design(space, "grid", 3, evaluate=lambda p: (p[0], 5.0 * p[0]))
    assert info.value.closest.point == (0.5,)
    assert len(info.value.trace) == 3


def test_golden_section_finds_minimum():
    space = DesignSpace(variables={"polymer_split_fraction": (0.1, 0.9)})
    res = optimize_design(space, "golden-section", 30, evaluate=_quadratic([0.42]))
    assert res.best_point[0] == pytest.approx(0.42, abs=1e-4)


def test_nelder_mead_two_variables_and_seed():
    space = DesignSpace(variables={"polymer_split_fraction": (0.1, 0.9), "metal_thickness": (0.1, 1.0)})
    a = optimize_design(space, "nelder-mead", 80, seed=3, evaluate=_quadratic([0.6, 0.4]))
    b = optimize_design(space, "nelder-mead", 80, seed=3, evaluate=_quadratic([0.6, 0.4]))
    assert np.allclose(a.best_point, [0.6, 0.4], atol=5e-3)
    assert a.trace == b.trace
    assert len(a.trace) <= 80


def test_space_validation():
    with pytest.raises(ValueError, match="unknown"):
        optimize_design(DesignSpace(variables={"colour": (0, 1)}), budget=3)
    with pytest.raises(ValueError, match="same freedom"):
        DesignSpace(variables={"polymer_split_fraction": (0.2, 0.8), "placement_offset": (-1, 1)}).validate()
    with pytest.raises(ValueError, match="budget"):
        optimize_design(DesignSpace(variables={"metal_thickness": (0.1, 0.5)}), budget=2)
    with pytest.raises(ValueError):
        DesignSpace(variables={"metal_thickness": (0.1, 0.5)}, operating_voltage=0.5, v_max=0.3).validate()


def test_trace_is_reproducible(calibrated):
    space, _ = placement_space(3, 0.3, 0.7, required_closure=1.0)
    res = optimize_design(space, "grid", 3, mesh_settings=COARSE, materials=calibrated)
    assert [round(e.point[0], 9) for e in res.trace] == [0.3, 0.5, 0.7]
    for e in res.trace:
        d = space.design(e.point)
        again = run_coupled(d, space.operating_voltage, Environment(), COARSE, calibrated).out_of_plane_max
        assert again == pytest.approx(e.objective, rel=1e-9)
    assert res.trace_rows()[0] == "index,design_id,point,objective_um,closure_at_vmax_um,feasible"


def test_csv_header():
    assert CSV_HEADER == ("design_id,voltage_V,h_W_per_m2K,tip_gap_um,max_T_K,tip_T_K,out_of_plane_um,"
                          "power_pW,grip_force_uN,grip_pressure_MPa")
    r = SweepRecord("d", 0.1, 20.0, 19.0, 400.0, 350.0, 0.1, 1e9, 2.5, 0.05)
    assert r.csv_row() == "d,0.1,20,19,400,350,0.1,1000000000,2.5,0.05"


def test_stored_calibration_regenerates_from_bulk_gold():
    from microgrip.config import load_calibration
    from microgrip.studies import calibrate_conductivity
    from microgrip.physics import MeshSettings

    cal = load_calibration()
    sigma = calibrate_conductivity(
        build_model1(), cal["voltage"], cal["target_closure"],
        mesh_settings=MeshSettings(cal["resolution"], cal["order"]), materials=None)
    assert sigma == pytest.approx(cal["electrical_conductivity"], rel=1e-8)
