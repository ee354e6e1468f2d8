import math
import warnings

import numpy as np
import pytest

from ldgflow import fields as fl
from ldgflow.dynamics import (SchemeParams, State, assemble_H, assemble_stress, elastic_density,
                              initial_state, potential_field, regularize_initial, run, step)
from ldgflow.errors import CFLViolation, CFLWarning, DomainViolation, TemperatureCollapse
from ldgflow.potential import SqrtU, ThermoFunctions, eval_f_moreau
from ldgflow.tensor_core import q_dot, q_full

GRID = fl.Grid(16, 2)


def smooth_state(rng, grid=GRID, amp_q=0.1, amp_u=0.3):
    state = initial_state(grid, ["taylor-green-velocity", "uniaxial-seed", "hot-spot-theta"],
                          amplitude=0.2)
    low = np.ones(grid.k2.shape, bool)
    for k in grid.wavenumbers:
        low &= np.abs(k) <= 3
    band = lambda lead: grid.ifft(np.where(low, grid.fft(rng.standard_normal(lead + grid.shape)), 0))
    u = state.u + amp_u * band((3,))
    q = state.Q + amp_q * band((5,))
    return regularize_initial(State(grid, u, q, state.theta, grid.zeros()), 0.0)


def free_energy(state, params):
    grid = state.grid
    thermo = params.thermo_delta
    gq = fl.grad(state.Q, grid)
    dens = (elastic_density(gq) + potential_field(state.Q, params).value
            - thermo.U(state.theta) * thermo.G(state.Q))
    return float(fl.grid_integral(dens, grid))


def test_h_vanishes_at_isotropic_state():
    state = initial_state(GRID, "hot-spot-theta")
    np.testing.assert_allclose(assemble_H(state, SchemeParams()), 0.0, atol=1e-15)


def test_h_uniform_q_is_pointwise_gradient():
    q0 = np.array([0.2, -0.05, 0.03, 0.0, 0.01])
    state = initial_state(GRID)
    state.Q = np.broadcast_to(q0[:, None, None], (5,) + GRID.shape).copy()
    params = SchemeParams()
    pot = eval_f_moreau(q0, math.inf)
    expected = -pot.gradient + params.thermo.U(1.0) * params.thermo.G.gradient(q0)
    h = assemble_H(state, params)
    np.testing.assert_allclose(h, np.broadcast_to(expected[:, None, None], h.shape), atol=1e-12)


@pytest.mark.parametrize("m", [50.0, math.inf])
def test_h_is_minus_free_energy_gradient(rng, m):
    params = SchemeParams(m=m)
    state = smooth_state(rng)
    h = assemble_H(state, params)
    low = np.ones(GRID.k2.shape, bool)
    for k in GRID.wavenumbers:
        low &= np.abs(k) <= 2
    v = GRID.ifft(np.where(low, GRID.fft(rng.standard_normal((5,) + GRID.shape)), 0))
    eps = 1e-5
    plus, minus = state.copy(), state.copy()
    plus.Q = state.Q + eps * v
    minus.Q = state.Q - eps * v
    fd = (free_energy(plus, params) - free_energy(minus, params)) / (2 * eps)
    exact = -float(fl.grid_integral(q_dot(h, v), GRID))
    assert abs(fd - exact) <= 1e-5 * abs(exact)


def test_h_propagates_domain_violation():
    state = initial_state(GRID)
    state.Q[0] += 0.7
    with pytest.raises(DomainViolation):
        assemble_H(state, SchemeParams())


def test_stress_vanishes_at_rest():
    state = initial_state(GRID)
    state.Q[:] = np.array([0.1, 0.0, 0.0, 0.0, 0.0])[:, None, None]
    sigma = assemble_stress(state, GRID.zeros(5), SchemeParams(xi=0.5))
    np.testing.assert_allclose(sigma, 0.0, atol=1e-15)


def test_stress_antisymmetric_part_is_commutator(rng):
    state = smooth_state(rng)
    params = SchemeParams(m=50.0)
    h = assemble_H(state, params)
    sigma = assemble_stress(state, h, params)
    anti = 0.5 * (sigma - np.swapaxes(sigma, 0, 1))
    qm, hm = q_full(state.Q), q_full(h)
    comm = np.einsum("ik...,kj...->ij...", qm, hm) - np.einsum("ik...,kj...->ij...", hm, qm)
    np.testing.assert_allclose(anti, comm, atol=1e-12)


def test_scheme_params_validation():
    with pytest.raises(ValueError, match="10/3"):
        SchemeParams(delta=1e-3, r=2.5)
    with pytest.raises(ValueError):
        SchemeParams(dt=0.0)
    with pytest.raises(ValueError):
        SchemeParams(m=-1.0)
    SchemeParams(r=2.5)  # r is inert without delta


def test_equilibrium_step_is_exact():
    state = initial_state(GRID, theta0=1.3)
    new = step(state, SchemeParams())
    for a, b in ((new.u, state.u), (new.Q, state.Q), (new.theta, state.theta)):
        assert np.max(np.abs(a - b)) <= 1e-12
    assert new.t == pytest.approx(1e-3) and new.step == 1


def test_heat_mode_decays_at_kappa():
    g = fl.Grid(32, 2)
    state = initial_state(g)
    state.theta = 1.0 + 0.1 * np.sin(g.coords[0])
    final, _ = run(state, SchemeParams(dt=1e-3), 100, diag_every=100)
    s = np.sin(g.coords[0])
    amp = np.sum((final.theta - 1.0) * s) / np.sum(s * s)
    assert amp / 0.1 == pytest.approx(math.exp(-0.1), rel=0.01)


def test_q_relaxation_lowers_free_energy():
    params = SchemeParams(frozen_theta=True, thermo=ThermoFunctions(U=SqrtU(6.0, 1.0)))
    state = initial_state(GRID)
    state.Q = state.Q + np.array([0.05, -0.02, 0.01, 0.0, 0.0])[:, None, None]
    energies = []
    run(state, params, 100, diag_every=10,
        on_step=lambda st: energies.append(free_energy(st, params)) if st.step % 10 == 0 else None)
    assert np.all(np.diff([free_energy(state, params)] + energies) < 0)


def test_run_zero_steps(rng):
    state = smooth_state(rng)
    final, records = run(state, SchemeParams(m=50.0), 0)
    assert final is state and len(records) == 1


def test_run_records_cadence(rng):
    state = smooth_state(rng)
    _, records = run(state, SchemeParams(m=50.0), 7, diag_every=3)
    assert [r.step for r in records] == [0, 3, 6, 7]


def test_structural_invariants_after_steps(rng):
    state = smooth_state(rng)
    params = SchemeParams(m=50.0, xi=0.5, delta=1e-2, r=3.2, epsilon=0.1)
    for _ in range(5):
        state = step(state, params)
        assert np.max(np.abs(fl.div(state.u, GRID))) <= 1e-10
        assert np.mean(state.p) == pytest.approx(0.0, abs=1e-13)


def test_cfl_guard():
    state = initial_state(GRID, "taylor-green-velocity")
    with pytest.raises(CFLViolation):
        step(state, SchemeParams(dt=1.0))
    with pytest.warns(CFLWarning):
        step(state, SchemeParams(dt=0.3, cfl_abort=10.0), )


def test_failed_run_keeps_partial_history():
    state = initial_state(GRID, "taylor-green-velocity")
    with pytest.raises(CFLViolation) as info:
        run(state, SchemeParams(dt=1.0), 5)
    assert len(info.value.records) == 1
    assert info.value.state is state


def test_temperature_collapse():
    # uniform Q with H = -c Q and 0 < c < 2 theta |U'|: the coupling source
    # outweighs Gamma |H|^2 and a huge explicit step overshoots below zero
    state = initial_state(GRID)
    state.Q = state.Q + np.array([0.2, -0.1, 0.0, 0.0, 0.0])[:, None, None]
    params = SchemeParams(dt=1000.0, thermo=ThermoFunctions(U=SqrtU(4.6, 1.0)))
    with pytest.raises(TemperatureCollapse):
        step(state, params)


def test_preset_validation():
    with pytest.raises(ValueError):
        initial_state(GRID, "vortex")
    with pytest.raises(ValueError):
        initial_state(GRID, theta0=0.0)
    s = initial_state(GRID, "isotropic-quench", amplitude=0.05, seed=3)
    assert np.max(np.abs(s.Q)) == pytest.approx(0.05)
    assert np.array_equal(s.Q, initial_state(GRID, "isotropic-quench", amplitude=0.05, seed=3).Q)


def test_pack_round_trip(rng):
    state = smooth_state(rng)
    back = State.unpack(GRID, state.pack(), state.t, state.step, state.floor_hits)
    assert back.pack().tobytes() == state.pack().tobytes()
