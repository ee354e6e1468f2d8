"""Independent reference computations used by the test suite.

None of these share code with the solver's quadrature or Newton path.
"""

import math
import warnings

import numpy as np
from scipy.optimize import brentq
from scipy.special import dawsn, erf


def _log_i(mu):
    """log of int_0^1 exp(mu x^2) dx, closed form via Dawson / erf."""
    if mu > 0:
        z = math.sqrt(mu)
        return mu + math.log(dawsn(z)) - math.log(z)
    a = -mu
    z = math.sqrt(a)
    return math.log(math.sqrt(math.pi) * erf(z) / (2.0 * z))


def _mean_x2(mu):
    """<x^2> under exp(mu x^2) on [0, 1] (integration by parts)."""
    if mu > 0:
        z = math.sqrt(mu)
        return 1.0 / (2.0 * z * dawsn(z)) - 1.0 / (2.0 * mu)
    a = -mu
    z = math.sqrt(a)
    return 1.0 / (2.0 * a) - math.exp(-a) / (math.sqrt(math.pi * a) * erf(z))


def uniaxial_f(s):
    """Entropy potential at eigenvalues (2s/3, -s/3, -s/3), s in (-1/2, 1).

    The optimal density depends on p only through x = p . n, so the
    problem is one-dimensional: match <x^2> = (2s + 1)/3.
    """
    target = (2.0 * s + 1.0) / 3.0
    lo, hi = -1e7, 1e7
    g = lambda mu: _mean_x2(mu) - target if abs(mu) > 1e-9 else 1.0 / 3.0 - target
    mu = brentq(g, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
    return mu * target - math.log(4.0 * math.pi) - _log_i(mu)


def primal_f(q5, quad):
    """Entropy minimisation over node densities of a product rule (cvxpy).

    Solves min sum_i w_i rho_i log rho_i subject to normalisation and the
    five second-moment constraints, with a conic interior-point solver.
    """
    import cvxpy as cp

    from ldgflow.tensor_core import q_compact

    p = quad.nodes
    w = quad.weights
    moments = q_compact(np.einsum("in,jn->ijn", p, p) - np.eye(3)[:, :, None] / 3.0)
    rho = cp.Variable(w.size)
    cons = [w @ rho == 1, (moments * w) @ rho == np.asarray(q5, float)]
    prob = cp.Problem(cp.Maximize(w @ cp.entr(rho)), cons)
    with warnings.catch_warnings():
        # tolerances near machine precision make the solver flag "inaccurate"
        warnings.simplefilter("ignore", UserWarning)
        prob.solve(solver=cp.CLARABEL, tol_gap_abs=1e-12, tol_gap_rel=1e-12, tol_feas=1e-12)
    if prob.status not in ("optimal", "optimal_inaccurate"):
        raise RuntimeError(f"primal oracle failed: {prob.status}")
    return -prob.value


def trig_product_on_grid(ca, cb, n, keep):
    """Pointwise values of the truncated product of two 2-D trig polynomials.

    ``ca`` and ``cb`` are coefficient arrays indexed by ``k + K`` for
    ``|k_i| <= K``; the product's coefficients come from a direct 2-D
    convolution and are summed explicitly at the grid nodes, keeping only
    modes with ``|k_i| <= keep``.
    """
    from scipy.signal import convolve2d

    kk = (ca.shape[0] - 1) // 2
    prod = convolve2d(ca, cb)
    kp = 2 * kk
    x = -math.pi + 2 * math.pi * np.arange(n) / n
    ks = np.arange(-kp, kp + 1)
    mask = np.abs(ks) <= keep
    e = np.exp(1j * np.outer(ks[mask], x))
    c = prod[np.ix_(mask, mask)]
    return np.real(e.T @ c @ e)


def trig_synthesis(c, n):
    kk = (c.shape[0] - 1) // 2
    x = -math.pi + 2 * math.pi * np.arange(n) / n
    e = np.exp(1j * np.outer(np.arange(-kk, kk + 1), x))
    return np.real(e.T @ c @ e)


def random_real_trig_coeffs(rng, kmax):
    """Hermitian coefficient array so the synthesised field is real."""
    c = rng.standard_normal((2 * kmax + 1, 2 * kmax + 1)) + 1j * rng.standard_normal(
        (2 * kmax + 1, 2 * kmax + 1))
    return 0.5 * (c + np.conj(c[::-1, ::-1]))
