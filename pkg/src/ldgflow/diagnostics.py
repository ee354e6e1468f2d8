"""Energies, entropy production and positivity audits of a simulated state.

All integrals are grid sums times the cell volume, which is exact for
the band-limited products involved and spectrally accurate otherwise.
"""

from dataclasses import dataclass, fields as dc_fields
import csv
import math

import numpy as np

from . import fields as fl
from .dynamics import (assemble_H, dissipation_terms, elastic_density, potential_field)
from .errors import InsufficientHistory, NonpositiveTemperature

COLUMNS = ("t", "kinetic", "elastic", "bulk", "thermal_coupling", "heat", "total_energy",
           "entropy", "entropy_production", "theta_min", "theta_max", "q_eig_min",
           "q_eig_max", "div_u", "trace_Q", "energy_drift", "production_min", "step",
           "floor_hits")


@dataclass(frozen=True)
class DiagnosticsRecord:
    t: float
    kinetic: float
    elastic: float
    bulk: float
    thermal_coupling: float
    heat: float
    total_energy: float
    entropy: float
    entropy_production: float
    theta_min: float
    theta_max: float
    q_eig_min: float
    q_eig_max: float
    div_u: float
    trace_Q: float
    energy_drift: float
    production_min: float = 0.0
    step: int = 0
    floor_hits: int = 0

    @property
    def residuals(self):
        return {"div_u": self.div_u, "trace_Q": self.trace_Q, "energy_drift": self.energy_drift}

    def as_row(self):
        return [getattr(self, c) for c in COLUMNS]


def entropy_production(state, H, params, terms=False):
    """Pointwise entropy production density.

    ``(1/theta)(mu/2 |grad u + grad u^T|^2 + [Gamma]_eps |H|^2
    + delta |grad u|^r) + kappa |grad theta|^2 / theta^2``. Each term is a
    nonnegative square; with ``terms`` the four parts are returned.
    """
    theta = state.theta
    if np.any(theta <= 0):
        raise NonpositiveTemperature("entropy production needs theta > 0")
    visc, orient, rlap = dissipation_terms(state, H, params)
    gth = fl.grad(theta, state.grid)
    heat = params.thermo.kappa(theta) * np.sum(gth * gth, axis=0) / theta ** 2
    parts = (visc / theta, orient / theta, rlap / theta, heat)
    if terms:
        return parts
    return sum(parts)


def energy_report(state, params, pot=None, H=None, reference_energy=None):
    """Energy budget, entropy and constraint residuals of one state."""
    grid = state.grid
    thermo = params.thermo_delta
    if pot is None:
        pot = potential_field(state.Q, params)
    if H is None:
        H = assemble_H(state, params, pot)
    integ = lambda f: float(fl.grid_integral(f, grid))
    theta = state.theta
    gq = fl.grad(state.Q, grid)
    kinetic = integ(0.5 * np.sum(state.u ** 2, axis=0))
    elastic = integ(elastic_density(gq))
    bulk = integ(pot.value)
    g = thermo.G(state.Q)
    du = thermo.U.d1(theta)
    coupling = integ(-(thermo.U(theta) - theta * du) * g)
    heat = integ(theta)
    total = kinetic + elastic + bulk + coupling + heat
    if np.all(theta > 0):
        entropy = integ(1.0 + np.log(theta) + du * g)
        parts = entropy_production(state, H, params, terms=True)
        production = integ(sum(parts))
        production_min = min(float(np.min(p)) for p in parts)
    else:
        entropy = production = production_min = float("nan")
    q11, q22 = state.Q[0], state.Q[1]
    q33 = -q11 - q22
    trace_q = float(np.max(np.abs(q11 + q22 + q33)))
    return DiagnosticsRecord(
        t=state.t, kinetic=kinetic, elastic=elastic, bulk=bulk, thermal_coupling=coupling,
        heat=heat, total_energy=total, entropy=entropy, entropy_production=production,
        theta_min=float(np.min(theta)), theta_max=float(np.max(theta)),
        q_eig_min=float(np.min(pot.eigenvalues[2])), q_eig_max=float(np.max(pot.eigenvalues[0])),
        div_u=float(np.max(np.abs(fl.div(state.u, grid)))), trace_Q=trace_q,
        energy_drift=0.0 if reference_energy is None else total - reference_energy,
        production_min=production_min,
        step=state.step, floor_hits=state.floor_hits)


def entropy_balance_residual(history, states=None):
    """Largest mismatch ``|d(int s)/dt - int production|`` over consecutive records.

    The difference quotient is paired with the production at the left
    record, so the residual is first order in the record spacing. It is
    normalised by ``max |production| + |int s(0)| / T`` with ``T`` the time
    span, a scale independent of the step size.
    """
    if len(history) < 2:
        raise InsufficientHistory("entropy balance needs at least two records")
    t = np.array([r.t for r in history])
    s = np.array([r.entropy for r in history])
    prod = np.array([r.entropy_production for r in history])
    rate = np.diff(s) / np.diff(t)
    err = np.abs(rate - prod[:-1])
    scale = np.max(np.abs(prod)) + abs(s[0]) / (t[-1] - t[0])
    return float(np.max(err) / scale)


def lambda_bound(params, samples=2001):
    """Rate in ``theta_min(t) >= theta_min(0) exp(-lambda t)`` from coefficient bounds.

    The only source of the heat balance that can be negative is
    ``-theta U' dG/dQ : (S + Gamma H)``. Young's inequality against the
    viscous and orientational dissipation, ``theta U'^2 <= c_U^2`` and
    ``a >= 1`` give ``dtheta/dt >= -lambda theta`` at a minimum of theta,
    with ``lambda = sup_y c_U^2 |dG|^2 (Gamma_hi/4 + xi^2 C(y)^2 / (8 mu_lo))``
    where ``y = |Q|^2`` and ``|S_xi| <= xi C(y) |eps(u)|``.
    """
    from .potential import sqrt_growth_constant

    thermo = params.thermo_delta
    c_u = sqrt_growth_constant(thermo.U)
    gam_hi = thermo.Gamma.bounds[1]
    mu_lo = thermo.mu.bounds[0]
    y = np.linspace(0.0, thermo.G.outer, samples)
    dg = 2.0 * thermo.G.dg(y) * np.sqrt(y)
    c = 2.0 * (np.sqrt(2.0 * y / 3.0) + 1.0 / 3.0) + 2.0 * np.sqrt(y + 1.0 / 3.0) * np.sqrt(y)
    lam = c_u ** 2 * dg ** 2 * (gam_hi / 4.0 + params.xi ** 2 * c ** 2 / (8.0 * mu_lo))
    return float(np.max(lam))


@dataclass(frozen=True)
class PositivityResult:
    lambda_hat: float
    violated: bool
    lambda_bound: float
    worst_margin: float


def positivity_audit(history, lambda_bound=None, tol=1e-6):
    """Check ``theta_min > 0`` and the exponential floor on ``log theta_min``.

    ``lambda_hat`` is the least-squares slope of ``-log theta_min(t)``.
    """
    if not history:
        raise InsufficientHistory("positivity audit needs at least one record")
    t = np.array([r.t for r in history])
    tmin = np.array([r.theta_min for r in history])
    floor_hits = max(r.floor_hits for r in history)
    if np.any(tmin <= 0) or floor_hits > 0:
        return PositivityResult(float("nan"), True, float("nan") if lambda_bound is None
                                else lambda_bound, -math.inf)
    logs = np.log(tmin)
    if len(t) >= 2 and np.ptp(t) > 0:
        lam_hat = float(-np.polyfit(t, logs, 1)[0]) + 0.0
    else:
        lam_hat = 0.0
    if lambda_bound is None:
        return PositivityResult(lam_hat, False, float("nan"), math.inf)
    margin = logs - (logs[0] - lambda_bound * (t - t[0]) - tol)
    worst = float(np.min(margin))
    return PositivityResult(lam_hat, worst < 0, float(lambda_bound), worst)


def write_csv(path, records):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(COLUMNS)
        for r in records:
            w.writerow([repr(float(v)) if isinstance(v, float) else v for v in r.as_row()])


def read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != COLUMNS:
        raise ValueError(f"{path}: unexpected diagnostics header")
    out = []
    types = {f.name: f.type for f in dc_fields(DiagnosticsRecord)}
    for row in rows[1:]:
        kw = {}
        for name, val in zip(COLUMNS, row):
            kw[name] = int(val) if types[name] in (int, "int") else float(val)
        out.append(DiagnosticsRecord(**kw))
    return out


def summary(records, lambda_bound_value=None):
    """Short text summary of a diagnostics history."""
    first, last = records[0], records[-1]
    audit = positivity_audit(records, lambda_bound_value)
    lines = [
        f"records            {len(records)} (t = {first.t:.6g} .. {last.t:.6g})",
        f"total energy       {first.total_energy:.12g} -> {last.total_energy:.12g}",
        f"max |energy drift| {max(abs(r.energy_drift) for r in records):.3e}",
        f"entropy            {first.entropy:.12g} -> {last.entropy:.12g}",
        f"min production     {min(r.entropy_production for r in records):.3e}",
        f"theta range        [{min(r.theta_min for r in records):.6g}, "
        f"{max(r.theta_max for r in records):.6g}]",
        f"Q eigenvalues      [{min(r.q_eig_min for r in records):.6g}, "
        f"{max(r.q_eig_max for r in records):.6g}]",
        f"max div u          {max(r.div_u for r in records):.3e}",
        f"max |tr Q|         {max(r.trace_Q for r in records):.3e}",
        f"theta floor hits   {last.floor_hits}",
        f"lambda_hat         {audit.lambda_hat:.6g}   positivity violated: {audit.violated}",
    ]
    if len(records) >= 2:
        lines.append(f"entropy residual   {entropy_balance_residual(records):.3e}")
    return "\n".join(lines)
