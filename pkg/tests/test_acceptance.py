"""Acceptance gate: twelve criteria, each reported as one PASS/FAIL line.

Everything runs at the default mesh (resolution 10 um, 27-node elements) with
the calibrated heater conductivity shipped in the package data.
"""

import time

import numpy as np
import pytest

from microgrip import io, studies, verification
from microgrip.design import build_model1
from microgrip.grip import estimate_grip

from conftest import DEFAULT

VOLTAGES = studies.DEFAULT_VOLTAGES
TARGETS = (5.0, 10.0, 15.0)
OPERATING_VOLTAGE = 0.25
OBJECT_DIAMETER = 5.0


def report(capsys, number, passed, message):
    with capsys.disabled():
        print(f"\n[criterion {number:2d}] {'PASS' if passed else 'FAIL'}  {message}")
    assert passed, message


def trend_study(calibrated, tmp_dir):
    """The runs behind criteria 6 to 8, written to CSV under ``tmp_dir``."""
    t0 = time.perf_counter()
    comparison = studies.compare_models(VOLTAGES, mesh_settings=DEFAULT, materials=calibrated)
    table = studies.required_voltage_table(build_model1(), TARGETS, studies.DEFAULT_H_GRID,
                                           mesh_settings=DEFAULT, materials=calibrated)
    seconds = time.perf_counter() - t0
    io.export_csv(comparison.records(), tmp_dir / "compare.csv")
    io.write_lines(tmp_dir / "required_voltage.csv", studies.required_voltage_rows(table))
    return comparison, table, seconds


@pytest.fixture(scope="module")
def trends(calibrated, tmp_path_factory):
    d = tmp_path_factory.mktemp("trends_a")
    return (d,) + trend_study(calibrated, d)


@pytest.fixture(scope="module")
def operating(full1):
    return full1.run(OPERATING_VOLTAGE)


def test_criterion_01_fin_oracle(capsys):
    r = verification.check_fin()
    report(capsys, 1, r.passed and r.seconds < 10.0,
           f"fin max T FEM {r.value:.4f} K vs analytic {r.reference:.4f} K, "
           f"rel err {abs(r.value - r.reference) / r.reference:.2e} (<= 1e-2), {r.seconds:.1f} s (< 10 s)")


def test_criterion_02_bimorph_oracle(capsys):
    r = verification.check_bimorph(level=1)
    err = r.detail["relative_error"]
    report(capsys, 2, r.passed and r.seconds < 60.0,
           f"bimorph tip deflection FEM {r.value:.4f} um vs closed form {r.reference:.4f} um, "
           f"rel err {err:.2e} (<= 5e-2), {r.seconds:.1f} s (< 60 s)")


def test_criterion_03_conservation(capsys, full1, full2):
    worst_power = worst_current = 0.0
    for model in (full1, full2):
        for v in VOLTAGES[1:]:
            sol = model.run(v)
            worst_power = max(worst_power, sol.power_balance_error)
            worst_current = max(worst_current, sol.current_imbalance)
    report(capsys, 3, worst_power <= 1e-6 and worst_current <= 1e-10,
           f"worst power balance {worst_power:.2e} (<= 1e-6), worst current imbalance "
           f"{worst_current:.2e} (<= 1e-10) over {2 * (len(VOLTAGES) - 1)} solutions")


def test_criterion_04_scaling_law(capsys, full1):
    t_amb = full1.env.ambient_temperature
    a, b = full1.run(0.1), full1.run(0.2)
    rise_a, rise_b = a.temperature - t_amb, b.temperature - t_amb
    t_err = np.max(np.abs(rise_b - 4 * rise_a)) / np.max(np.abs(rise_b))
    u_err = np.max(np.abs(b.displacement - 4 * a.displacement)) / np.max(np.abs(b.displacement))
    report(capsys, 4, t_err <= 1e-6 and u_err <= 1e-6,
           f"x4 ratio 0.1 V -> 0.2 V: temperature rise {t_err:.2e}, displacement {u_err:.2e} (<= 1e-6)")


def test_criterion_05_patch_and_convergence(capsys):
    patches = [verification.conduction_patch(o) for o in (1, 2)] + \
              [verification.elasticity_patch(o) for o in (1, 2)]
    rates = [verification.check_convergence(o) for o in (1, 2)]
    worst = max(p.value for p in patches)
    ok = all(p.passed for p in patches) and worst <= 1e-10 and all(r.passed for r in rates)
    report(capsys, 5, ok,
           f"worst patch error {worst:.2e} (<= 1e-10); L2 ratios {rates[0].value:.3f} (target 4), "
           f"{rates[1].value:.3f} (target 8), within 15%")


def test_criterion_06_closure_trend(capsys, trends, full1, full2):
    _, comparison, _, seconds = trends
    gaps1 = [r.tip_gap for r in comparison.model1]
    gaps2 = [r.tip_gap for r in comparison.model2]
    monotone = all(b <= a + 1e-9 for a, b in zip(gaps1, gaps1[1:]))
    slower = all(g2 >= g1 - 1e-9 for g1, g2 in zip(gaps1, gaps2))
    elements = max(full1.mesh.n_elements, full2.mesh.n_elements)
    ok = monotone and slower and elements <= 30000 and seconds < 900
    report(capsys, 6, ok,
           f"model1 gap {gaps1[0]:.2f} -> {gaps1[-1]:.2f} um monotone={monotone}; model2 gap "
           f"{gaps2[-1]:.2f} um at {VOLTAGES[-1]} V, never below model1={slower}; "
           f"{elements} elements (<= 30000); {seconds:.0f} s (< 900 s)")


def test_criterion_07_out_of_plane_trend(capsys, trends):
    _, comparison, _, _ = trends
    pairs = [(a.out_of_plane_max, b.out_of_plane_max) for a, b in zip(comparison.model1, comparison.model2)]
    smaller = all(b <= a + 1e-12 for a, b in pairs)
    # logged only: growth of model2's out-of-plane motion from 0.05 V to the top voltage
    growth = pairs[-1][1] - pairs[1][1]
    report(capsys, 7, smaller,
           f"out-of-plane at {VOLTAGES[-1]} V: model1 {pairs[-1][0]:.4f} um, model2 {pairs[-1][1]:.4f} um; "
           f"model2 <= model1 at all {len(pairs)} voltages={smaller}; model2 growth "
           f"{VOLTAGES[1]}-{VOLTAGES[-1]} V {growth:.4f} um (under 1 um: {growth < 1.0}, not asserted)")


def test_criterion_08_required_voltage_vs_h(capsys, trends, full1):
    _, _, table, _ = trends
    ok, parts = True, []
    for target in TARGETS:
        v = [row[3] for row in table if row[2] == target]
        ok &= len(v) == len(studies.DEFAULT_H_GRID) and all(b >= a for a, b in zip(v, v[1:]))
        parts.append(f"{target:g} um: {v[0]:.4f} -> {v[-1]:.4f} V")
    # second route: the free response is quadratic in voltage
    probe = full1.run(0.1).closure
    quadratic = 0.1 * np.sqrt(TARGETS[1] / probe)
    bracketed = next(row[3] for row in table if row[1] == studies.DEFAULT_H_GRID[0] and row[2] == TARGETS[1])
    agree = abs(bracketed - quadratic) <= 1e-6 * quadratic
    report(capsys, 8, ok and agree,
           f"required voltage non-decreasing in h over {list(studies.DEFAULT_H_GRID)}: " + "; ".join(parts)
           + f"; root-find vs quadratic scaling at h=20 agree={agree}")


def test_criterion_09_temperature_anchor(capsys, operating):
    sep = operating.max_temperature - operating.tip_temperature
    grips = operating.tip_gap <= OBJECT_DIAMETER
    report(capsys, 9, sep >= 60.0 and grips,
           f"at {OPERATING_VOLTAGE} V: max T {operating.max_temperature:.1f} K "
           f"({operating.max_temperature_celsius:.0f} C, {operating.max_temperature_location}), tip T "
           f"{operating.tip_temperature:.1f} K ({operating.tip_temperature_celsius:.0f} C), separation "
           f"{sep:.1f} K (>= 60 K); tip gap {operating.tip_gap:.2f} um closes on {OBJECT_DIAMETER:g} um")


def test_criterion_10_grip_pressure(capsys, full1, operating):
    g = estimate_grip(full1, OPERATING_VOLTAGE, OBJECT_DIAMETER, solution=operating)
    band = (0.061 / 3, 0.17 * 3)
    ok = g.contact and 0.02 <= g.max_contact_pressure <= 0.51 and band[0] <= g.mean_contact_pressure <= band[1]
    report(capsys, 10, ok,
           f"contact={g.contact}, force {g.total_normal_force:.3f} uN, max pressure "
           f"{g.max_contact_pressure:.4f} MPa in [0.02, 0.51], mean {g.mean_contact_pressure:.4f} MPa "
           f"in [{band[0]:.4f}, {band[1]:.2f}], tip force imbalance {g.force_balance_error:.1e}")


def test_criterion_11_optimization(capsys, calibrated):
    stacks = studies.optimize_design(studies.model_space(), "grid", budget=3, mesh_settings=DEFAULT,
                                     materials=calibrated)
    space, n = studies.placement_space(5)
    placement = studies.optimize_design(space, "grid", budget=n, mesh_settings=DEFAULT, materials=calibrated)
    argmin = min(placement.trace, key=lambda e: e.objective)
    ok = stacks.best_design.name == "model2" and abs(argmin.point[0] - 0.5) < 1e-12 \
        and placement.best_point == argmin.point
    objectives = ", ".join(f"{e.point[0]:.1f}:{e.objective:.4f}" for e in placement.trace)
    report(capsys, 11, ok,
           f"stack choice {stacks.best_design.name}; placement out-of-plane (fraction:um) {objectives}; "
           f"argmin at {argmin.point[0]:.1f}")


def test_criterion_12_determinism(capsys, trends, calibrated, tmp_path):
    first = trends[0]
    trend_study(calibrated, tmp_path)
    same = {name: (first / name).read_bytes() == (tmp_path / name).read_bytes()
            for name in ("compare.csv", "required_voltage.csv")}
    report(capsys, 12, all(same.values()),
           "repeated criteria 6-8 runs byte-identical: " + ", ".join(f"{k}={v}" for k, v in same.items()))
