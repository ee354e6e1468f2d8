import math

import numpy as np
import pytest

from ldgflow import fields as fl
from ldgflow.diagnostics import (COLUMNS, DiagnosticsRecord, energy_report,
                                 entropy_balance_residual, entropy_production, lambda_bound,
                                 positivity_audit, read_csv, summary, write_csv)
from ldgflow.dynamics import SchemeParams, State, assemble_H, initial_state, run
from ldgflow.errors import InsufficientHistory, NonpositiveTemperature
from ldgflow.potential import LOG_4PI, Coefficient, SqrtU, ThermoFunctions

GRID = fl.Grid(16, 2)


def test_equilibrium_report():
    state = initial_state(GRID)
    rec = energy_report(state, SchemeParams())
    vol = GRID.volume
    assert rec.kinetic == 0.0 and rec.elastic == 0.0
    assert rec.bulk == pytest.approx(-LOG_4PI * vol, rel=1e-14)
    assert rec.heat == pytest.approx(vol, rel=1e-14)
    assert rec.entropy == pytest.approx(vol, rel=1e-14)
    assert rec.entropy_production == 0.0
    parts = rec.kinetic + rec.elastic + rec.bulk + rec.thermal_coupling + rec.heat
    assert rec.total_energy == pytest.approx(parts, abs=1e-12)


def test_total_energy_is_sum_of_parts():
    state = initial_state(GRID, ["taylor-green-velocity", "uniaxial-seed", "hot-spot-theta"],
                          amplitude=0.3)
    rec = energy_report(state, SchemeParams(m=100.0, delta=1e-3))
    parts = rec.kinetic + rec.elastic + rec.bulk + rec.thermal_coupling + rec.heat
    assert abs(rec.total_energy - parts) <= 1e-12 * abs(rec.total_energy)


def test_pure_shear_production():
    state = initial_state(GRID)
    state.u[0] = np.sin(GRID.coords[1])
    params = SchemeParams()
    h = assemble_H(state, params)
    prod = fl.grid_integral(entropy_production(state, h, params), GRID)
    assert prod == pytest.approx(GRID.volume / 2, rel=1e-13)


def test_production_terms_nonnegative():
    state = initial_state(GRID, ["taylor-green-velocity", "uniaxial-seed", "hot-spot-theta"],
                          amplitude=0.3)
    params = SchemeParams(m=50.0, delta=1e-2, xi=0.4,
                          thermo=ThermoFunctions(kappa=Coefficient(0.5, 2.0, 1.2, 0.3)))
    parts = entropy_production(state, assemble_H(state, params), params, terms=True)
    assert len(parts) == 4
    assert all(np.min(p) >= -1e-10 for p in parts)


def test_production_requires_positive_temperature():
    state = initial_state(GRID)
    state.theta[0, 0] = 0.0
    with pytest.raises(NonpositiveTemperature):
        entropy_production(state, GRID.zeros(5), SchemeParams())


def _heat_state(shift=0):
    state = initial_state(GRID)
    x = GRID.coords
    state.theta = 1.0 + 0.5 * np.sin(x[0]) * np.cos(x[1])
    state.theta = np.roll(state.theta, shift, axis=(0, 1))
    return state


def test_entropy_residual_equilibrium():
    _, rec = run(initial_state(GRID), SchemeParams(), 10)
    assert entropy_balance_residual(rec) <= 1e-12


def test_entropy_residual_translation_invariant():
    a = entropy_balance_residual(run(_heat_state(0), SchemeParams(), 20)[1])
    b = entropy_balance_residual(run(_heat_state(5), SchemeParams(), 20)[1])
    assert a == pytest.approx(b, rel=1e-9)


def test_entropy_residual_needs_two_records():
    rec = energy_report(initial_state(GRID), SchemeParams())
    with pytest.raises(InsufficientHistory):
        entropy_balance_residual([rec])


def test_positivity_equilibrium():
    _, rec = run(initial_state(GRID), SchemeParams(), 5)
    res = positivity_audit(rec, lambda_bound(SchemeParams()))
    assert res.lambda_hat == 0.0 and not res.violated


def test_positivity_heat_decay():
    _, rec = run(_heat_state(), SchemeParams(), 30)
    res = positivity_audit(rec, lambda_bound(SchemeParams()))
    assert res.lambda_hat <= 0.0 and not res.violated


def test_positivity_flags_collapse_and_floor():
    rec = energy_report(initial_state(GRID), SchemeParams())
    dead = DiagnosticsRecord(**{**rec.__dict__, "t": 1.0, "theta_min": -1.0})
    assert positivity_audit([rec, dead]).violated
    floored = DiagnosticsRecord(**{**rec.__dict__, "t": 1.0, "floor_hits": 2})
    assert positivity_audit([rec, floored]).violated
    with pytest.raises(InsufficientHistory):
        positivity_audit([])


def test_positivity_flags_fast_decay():
    rec = energy_report(initial_state(GRID), SchemeParams())
    later = DiagnosticsRecord(**{**rec.__dict__, "t": 1.0, "theta_min": math.exp(-2.0)})
    assert positivity_audit([rec, later], lambda_bound=1.0).violated
    assert not positivity_audit([rec, later], lambda_bound=3.0).violated


def test_lambda_bound_structure():
    base = lambda_bound(SchemeParams())
    assert base > 0
    # grows with xi and with the slope of U, and vanishes with U' = 0
    assert lambda_bound(SchemeParams(xi=1.0)) > base
    steep = SchemeParams(thermo=ThermoFunctions(U=SqrtU(5.0, 3.0)))
    assert lambda_bound(steep) == pytest.approx(9 * base, rel=1e-6)


def test_csv_round_trip(tmp_path):
    _, rec = run(_heat_state(), SchemeParams(), 4)
    path = tmp_path / "d.csv"
    write_csv(path, rec)
    assert path.read_text().splitlines()[0] == ",".join(COLUMNS)
    assert read_csv(path) == rec


def test_csv_rejects_foreign_header(tmp_path):
    path = tmp_path / "x.csv"
    path.write_text("a,b\n1,2\n")
    with pytest.raises(ValueError):
        read_csv(path)


def test_summary_text():
    _, rec = run(_heat_state(), SchemeParams(), 4)
    text = summary(rec, lambda_bound(SchemeParams()))
    assert "entropy residual" in text and "positivity violated: False" in text
