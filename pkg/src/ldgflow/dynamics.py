"""Molecular field, stress and the first-order IMEX time step.

One step advances, in order:

* Q:  ``dQ/dt + u.grad Q - S = [Gamma]_eps H`` with ``Gamma_bar Laplace``
  treated implicitly as a stabilising split (``Gamma_bar = max [Gamma]_eps``);
* u:  ``du/dt + ([u]_delta . grad) u + grad p = div sigma + g`` with the
  viscous part ``mu_bar Laplace`` implicit, then Leray projection;
* theta, in the form with the positive capacity
  ``a = 1 + theta U''_delta G``::

      a (dtheta/dt + u.grad theta) = div(kappa grad theta)
          + (mu/2)|grad u + grad u^T|^2 + [Gamma]_eps |H|^2 + delta |grad u|^r
          - theta U'_delta dG/dQ : (S + [Gamma]_eps H)

  with ``max(kappa/a) Laplace`` implicit. Sources use the step-start
  fields, ``a`` uses the updated Q and advection the updated u.

Every nonlinear term is dealiased, and every field is updated by adding
an increment, so a stationary state stays stationary to roundoff.
"""

from dataclasses import dataclass, field, replace
import math
import warnings

import numpy as np

from . import fields as fl
from .errors import (CFLViolation, CFLWarning, NumericalBlowup, TemperatureCollapse)
from .potential import (DEFAULT_MARGIN, DEFAULT_TOL, ThermoFunctions, eval_potential,
                        truncate_U)
from .tensor_core import (identity_like, matmul, odot, q_compact, q_dot, q_full,
                          q_norm2, stretching, transpose)

STATE_COMPONENTS = 10


@dataclass
class State:
    grid: fl.Grid
    u: np.ndarray
    Q: np.ndarray
    theta: np.ndarray
    p: np.ndarray
    t: float = 0.0
    step: int = 0
    floor_hits: int = 0

    def pack(self):
        """``(10, *grid)`` array: u (3), Q (5), theta, p."""
        return np.concatenate([self.u, self.Q, self.theta[None], self.p[None]])

    @classmethod
    def unpack(cls, grid, data, t=0.0, step=0, floor_hits=0):
        data = np.asarray(data, float)
        return cls(grid, data[0:3].copy(), data[3:8].copy(), data[8].copy(),
                   data[9].copy(), float(t), int(step), int(floor_hits))

    def copy(self):
        return State.unpack(self.grid, self.pack(), self.t, self.step, self.floor_hits)


@dataclass(frozen=True)
class SchemeParams:
    """Time step and regularisation knobs.

    ``m = inf`` selects the exact singular potential. ``delta`` is at once
    the r-Laplacian weight, the mollification radius of the convecting
    velocity and initial data, and the truncation level of U. ``epsilon``
    is the spatial mollification radius of Gamma(theta).
    """

    dt: float = 1e-3
    xi: float = 0.0
    m: float = math.inf
    delta: float = 0.0
    epsilon: float = 0.0
    r: float = 3.2
    forcing: np.ndarray = None
    thermo: ThermoFunctions = field(default_factory=ThermoFunctions)
    theta_floor: float = 1e-10
    cfl_warn: float = 0.5
    cfl_abort: float = 2.0
    newton_tol: float = DEFAULT_TOL
    margin: float = DEFAULT_MARGIN
    frozen_theta: bool = False
    quad: object = None

    def __post_init__(self):
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ValueError("dt must be positive and finite")
        if not self.m > 0:
            raise ValueError("m must be positive (use inf for the exact potential)")
        if self.delta < 0 or self.epsilon < 0:
            raise ValueError("delta and epsilon must be nonnegative")
        if self.delta > 0 and not 3.0 < self.r < 10.0 / 3.0:
            raise ValueError("r must lie in (3, 10/3) when delta > 0")
        if not math.isfinite(self.xi):
            raise ValueError("xi must be finite")

    @property
    def exact(self):
        return math.isinf(self.m)

    @property
    def thermo_delta(self):
        """Thermal functions with U replaced by its truncation U_delta."""
        return truncate_U(self.thermo, self.delta)


# ---------------------------------------------------------------------------
# pointwise and field assembly
# ---------------------------------------------------------------------------

def potential_field(Q, params):
    """Potential evaluation (f or f_m) at every grid point."""
    return eval_potential(Q, params.m, params.quad, params.newton_tol,
                          margin=params.margin)


def elastic_density(gq):
    """``|grad Q|^2 / 2`` from a ``(3, 5, *grid)`` gradient."""
    return 0.5 * sum(q_norm2(gq[k]) for k in range(3))


def assemble_H(state, params, pot=None):
    """Molecular field ``H = Laplace Q - dF_m/dQ + U_delta(theta) dG/dQ``.

    The result is projected onto the resolved band. Propagates
    :class:`DomainViolation` when the exact potential is active and Q has
    left the physical domain.
    """
    grid = state.grid
    thermo = params.thermo_delta
    if pot is None:
        pot = potential_field(state.Q, params)
    lap = fl.laplacian(state.Q, grid)
    h = lap - pot.gradient + thermo.U(state.theta) * thermo.G.gradient(state.Q)
    return fl.dealias(h, grid)


def ksi_stress(h5, q5, xi):
    """``-xi (H Qt + Qt H) + 2 xi (Q : H) Qt`` with ``Qt = Q + I/3``."""
    hm, qm = q_full(h5), q_full(q5)
    qt = qm + identity_like(qm) / 3.0
    return xi * (2.0 * q_dot(q5, h5) * qt - matmul(hm, qt) - matmul(qt, hm))


def assemble_stress(state, H, params, gu=None, gq=None):
    """Extra stress without pressure, full ``(3, 3, *grid)``.

    ``mu(theta)(grad u + grad u^T) + delta |grad u|^(r-2) grad u + QH - HQ
    + xi-terms - grad Q . grad Q``.
    """
    grid = state.grid
    if gu is None:
        gu = fl.velocity_gradient(state.u, grid)
    if gq is None:
        gq = fl.grad(state.Q, grid)
    mu = params.thermo.mu(state.theta)
    sigma = mu * (gu + transpose(gu))
    if params.delta > 0:
        norm = np.sqrt(np.einsum("ij...,ij...->...", gu, gu))
        sigma = sigma + params.delta * norm ** (params.r - 2.0) * gu
    qm, hm = q_full(state.Q), q_full(H)
    sigma = sigma + matmul(qm, hm) - matmul(hm, qm)
    if params.xi != 0.0:
        sigma = sigma + ksi_stress(H, state.Q, params.xi)
    return sigma - odot(gq)


def dissipation_terms(state, H, params, gu=None):
    """Pointwise ``(viscous, orientational, r-Laplacian)`` dissipation densities."""
    if gu is None:
        gu = fl.velocity_gradient(state.u, state.grid)
    sym = gu + transpose(gu)
    visc = 0.5 * params.thermo.mu(state.theta) * np.einsum("ij...,ij...->...", sym, sym)
    gam = mollified_gamma(state, params)
    orient = gam * q_norm2(H)
    if params.delta > 0:
        norm2 = np.einsum("ij...,ij...->...", gu, gu)
        rlap = params.delta * norm2 ** (0.5 * params.r)
    else:
        rlap = np.zeros_like(visc)
    return visc, orient, rlap


def mollified_gamma(state, params):
    """``[Gamma(theta)]_eps`` (spatial mollification only)."""
    return fl.mollify(params.thermo.Gamma(state.theta), state.grid, params.epsilon)


def courant_number(state, dt):
    return float(np.max(np.sqrt(np.sum(state.u ** 2, axis=0)))) * dt / state.grid.spacing


def _check_finite(name, a):
    if not np.all(np.isfinite(a)):
        raise NumericalBlowup(f"non-finite values in {name}")


def _implicit(rhs, grid, coeff, dt):
    """Increment ``dt (1 - dt coeff Laplace)^-1 rhs``."""
    return dt * grid.ifft(grid.fft(rhs) / (1.0 + dt * coeff * grid.k2))


def step(state, params, pot=None, H=None):
    """Advance one IMEX step; returns a new :class:`State`."""
    grid = state.grid
    dt = params.dt
    thermo = params.thermo_delta
    u, Q, theta = state.u, state.Q, state.theta

    cfl = courant_number(state, dt)
    if cfl > params.cfl_abort:
        raise CFLViolation(f"Courant number {cfl:.3g} exceeds abort threshold {params.cfl_abort}")
    if cfl > params.cfl_warn:
        warnings.warn(f"Courant number {cfl:.3g} above {params.cfl_warn}", CFLWarning, stacklevel=2)

    if pot is None:
        pot = potential_field(Q, params)
    if H is None:
        H = assemble_H(state, params, pot)
    gu = fl.velocity_gradient(u, grid)
    gq = fl.grad(Q, grid)
    gam = mollified_gamma(state, params)
    gam_bar = float(np.max(gam))
    S = stretching(gu, Q, params.xi)

    # orientation
    adv_q = np.einsum("i...,ic...->c...", u, gq)
    rq = fl.dealias(gam * H + S - adv_q, grid)
    Q_new = Q + _implicit(rq, grid, gam_bar, dt)

    # momentum
    sigma = assemble_stress(state, H, params, gu, gq)
    u_conv = fl.mollify(u, grid, params.delta)
    conv = np.einsum("j...,ij...->i...", u_conv, gu)
    force = fl.div_tensor(sigma, grid) - conv
    if params.forcing is not None:
        force = force + params.forcing
    force = fl.dealias(force, grid)
    mu_bar = float(np.max(params.thermo.mu(theta)))
    mu_now = params.thermo.mu(theta)
    # the viscous term already sits in div sigma; the implicit part only stabilises
    du = _implicit(force, grid, mu_bar, dt)
    u_new, _ = fl.leray_project(u + du, grid)
    p_new = fl.pressure_from_divergence(grid.fft(fl.div(force, grid)), grid)

    # heat
    if params.frozen_theta:
        theta_new = theta.copy()
    else:
        g_new = thermo.G(Q_new)
        cap = 1.0 + theta * thermo.U.d2(theta) * g_new
        kappa = params.thermo.kappa(theta)
        gth = fl.grad(theta, grid)
        diffusion = fl.div(kappa * gth, grid)
        visc = 0.5 * mu_now * np.einsum("ij...,ij...->...", gu + transpose(gu), gu + transpose(gu))
        src = visc + gam * q_norm2(H)
        if params.delta > 0:
            src = src + params.delta * np.einsum("ij...,ij...->...", gu, gu) ** (0.5 * params.r)
        coupling = -theta * thermo.U.d1(theta) * q_dot(thermo.G.gradient(Q), S + gam * H)
        adv_t = np.einsum("i...,i...->...", u_new, gth)
        rt = fl.dealias((diffusion + src + coupling) / cap - adv_t, grid)
        c0 = float(np.max(kappa / cap))
        theta_new = theta + _implicit(rt, grid, c0, dt)

    for name, a in (("Q", Q_new), ("u", u_new), ("theta", theta_new)):
        _check_finite(name, a)
    hits = state.floor_hits
    tmin = float(np.min(theta_new))
    if tmin <= 0.0:
        raise TemperatureCollapse(
            f"min theta = {tmin:.3e} at t = {state.t + dt:.6g}; reduce dt or raise m")
    low = theta_new < params.theta_floor
    if np.any(low):
        hits += int(np.count_nonzero(low))
        theta_new = np.where(low, params.theta_floor, theta_new)
    return State(grid, u_new, Q_new, theta_new, p_new, state.t + dt, state.step + 1, hits)


# ---------------------------------------------------------------------------
# initial data
# ---------------------------------------------------------------------------

PRESETS = ("equilibrium", "isotropic-quench", "uniaxial-seed",
           "taylor-green-velocity", "hot-spot-theta")


def _uniaxial(s, n):
    nn = np.einsum("i...,j...->ij...", n, n)
    return q_compact(s * (nn - identity_like(nn) / 3.0))


def initial_state(grid, presets=("equilibrium",), amplitude=0.1, seed=0, theta0=1.0,
                  velocity=1.0, hot_spot=0.5):
    """Build initial fields from a list of named presets.

    Presets compose: each one sets its own field on top of the quiescent
    isotropic state at uniform ``theta0``.
    """
    if isinstance(presets, str):
        presets = [p.strip() for p in presets.split(",") if p.strip()]
    unknown = [p for p in presets if p not in PRESETS]
    if unknown:
        raise ValueError(f"unknown preset(s) {unknown}; choose from {PRESETS}")
    if not theta0 > 0:
        raise ValueError("theta0 must be positive")
    x = grid.coords
    u = grid.zeros(3)
    Q = grid.zeros(5)
    theta = np.full(grid.shape, float(theta0))
    for name in presets:
        if name == "isotropic-quench":
            rng = np.random.default_rng(seed)
            noise = rng.standard_normal((5,) + grid.shape)
            low = np.ones(grid.k2.shape, bool)
            for k in grid.wavenumbers:
                low &= np.abs(k) <= 4
            noise = grid.ifft(np.where(low, grid.fft(noise), 0.0))
            Q = Q + amplitude * noise / np.max(np.abs(noise))
        elif name == "uniaxial-seed":
            s = amplitude * (1.0 + 0.5 * np.cos(x[0]) * np.cos(x[1]))
            ang = 0.4 * np.sin(x[0] + x[1])
            n = np.array([np.cos(ang), np.sin(ang), np.zeros_like(ang)])
            Q = Q + _uniaxial(s, n)
        elif name == "taylor-green-velocity":
            z = np.cos(x[2]) if grid.dim == 3 else 1.0
            u = u + velocity * np.array([np.sin(x[0]) * np.cos(x[1]) * z,
                                         -np.cos(x[0]) * np.sin(x[1]) * z,
                                         np.zeros(grid.shape)])
        elif name == "hot-spot-theta":
            bump = np.exp(sum(np.cos(xi) - 1.0 for xi in x))
            theta = theta * (1.0 + hot_spot * bump)
    return State(grid, u, Q, theta, grid.zeros())


def regularize_initial(state, delta):
    """Mollify u and Q with radius ``delta``, restrict all fields to the
    resolved band and project u onto divergence-free fields."""
    grid = state.grid
    u = fl.dealias(fl.mollify(state.u, grid, delta), grid)
    u, _ = fl.leray_project(u, grid)
    Q = fl.dealias(fl.mollify(state.Q, grid, delta), grid)
    theta = fl.dealias(state.theta, grid)
    return replace(state, u=u, Q=Q, theta=theta)


# ---------------------------------------------------------------------------
# time loop
# ---------------------------------------------------------------------------

def run(initial, params, n_steps, diag_every=1, on_step=None):
    """Advance ``n_steps`` steps, recording diagnostics every ``diag_every``.

    The initial and final states are always recorded. On a scheme failure
    the exception is re-raised with ``records`` and ``state`` (last good
    state) attached. ``on_step(state)`` is called after every step.
    """
    from .diagnostics import energy_report

    if n_steps < 0 or diag_every < 1:
        raise ValueError("need n_steps >= 0 and diag_every >= 1")
    state = initial
    records = []
    ref = None
    pot = H = None
    try:
        for k in range(n_steps + 1):
            pot = potential_field(state.Q, params)
            H = assemble_H(state, params, pot)
            if k % diag_every == 0 or k == n_steps:
                rec = energy_report(state, params, pot=pot, H=H, reference_energy=ref)
                if ref is None:
                    ref = rec.total_energy
                records.append(rec)
            if k == n_steps:
                break
            state = step(state, params, pot=pot, H=H)
            if on_step is not None:
                on_step(state)
    except Exception as exc:
        exc.records = records
        exc.state = state
        raise
    return state, records
