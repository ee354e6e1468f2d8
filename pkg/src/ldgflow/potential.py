"""Singular bulk potential, its Moreau envelopes and the thermal coupling.

The entropy potential

    f(Q) = min { int rho log rho dp : rho a probability density on S^2,
                 int (p x p - I/3) rho dp = Q }

is evaluated through its concave dual. In the eigenframe of Q the optimal
density is ``rho = exp(sum_i mu_i p_i^2) / Z(mu)`` and

    f(Q) = max_mu  sum_i mu_i (lambda_i + 1/3) - log Z(mu),

two unknowns once the gauge ``sum mu = 0`` is fixed. The gradient of f is
the matrix with eigenvalues ``mu`` on the eigenvectors of Q. Since f is a
convex spectral function, its Moreau envelope

    f_m(Q) = min_P f(P) + (m/2) |Q - P|^2

shares the eigenvectors of Q and has the dual
``max_mu mu . lambda - log Z(mu) - |mu|^2 / (2m)``. One damped Newton
iteration therefore covers f (``m = inf``) and every f_m, and f_m is
finite for every symmetric traceless Q.

``f(0) = -log(4 pi)`` is the global minimum, so ``f >= -log(4 pi)``.
"""

from dataclasses import dataclass
import math

import numpy as np

from .errors import DomainViolation, NoConvergence, NonpositiveTemperature
from .quadrature import PolarRule, SphereQuadrature
from .tensor_core import q_compact, q_full, q_norm2, sym3_eigh

LOG_4PI = math.log(4.0 * math.pi)
THIRD = 1.0 / 3.0

DEFAULT_TOL = 1e-12
DEFAULT_MAX_ITER = 50
DEFAULT_MARGIN = 1e-8

_DEFAULT_RULE = PolarRule()


def default_quadrature():
    return _DEFAULT_RULE


@dataclass(frozen=True)
class PotentialEval:
    """Result of a potential evaluation at one or many Q-tensors.

    ``gradient`` is compact ``(5, ...)``; ``dual_exponents`` are the
    centred Boltzmann exponents ordered like the descending eigenvalues.
    """

    value: np.ndarray
    gradient: np.ndarray
    dual_exponents: np.ndarray
    newton_iters: int
    converged: bool
    eigenvalues: np.ndarray


def _reg(mx, my):
    """0.5 |P mu|^2 for mu = (mx, my, 0), P = centring, and its gradient."""
    s = mx + my
    val = 0.5 * (mx * mx + my * my - s * s / 3.0)
    return val, np.array([mx - s / 3.0, my - s / 3.0])


_REG_HESS = np.array([[2.0 / 3.0, -1.0 / 3.0], [-1.0 / 3.0, 2.0 / 3.0]])


def solve_dual(lam, m=math.inf, quad=None, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER):
    """Damped Newton solve of the moment-matching dual, batched.

    ``lam`` holds descending eigenvalues, shape ``(3, N)``. The largest
    eigen-direction is placed on the polar axis of the quadrature.
    Returns ``(value, mu, iters, converged)`` with ``mu`` centred,
    shape ``(3, N)``, in the order of ``lam``.
    """
    quad = _DEFAULT_RULE if quad is None else quad
    lam = np.asarray(lam, float).reshape(3, -1)
    n = lam.shape[1]
    inv_m = 0.0 if math.isinf(m) else 1.0 / float(m)
    tx = lam[1] + THIRD
    ty = lam[2] + THIRD
    targets = np.array([tx, ty])

    # density of the optimum is ~Gaussian in any direction with a small moment
    clip_t = np.clip(targets, 1e-12, None)
    tz = np.clip(lam[0] + THIRD, 1e-12, None)
    mu = np.array([-0.5 / clip_t[0] + 0.5 / tz, -0.5 / clip_t[1] + 0.5 / tz])
    if inv_m > 0.0:
        cap = float(m) * (np.sqrt(np.sum(lam * lam, axis=0)) + 1.0)
        _, pmu = _reg(mu[0], mu[1])
        size = np.sqrt(np.sum(pmu * pmu, axis=0) + (pmu[0] + pmu[1]) ** 2)
        shrink = np.minimum(1.0, cap / np.maximum(size, 1e-300))
        mu = mu * shrink

    if isinstance(quad, PolarRule):
        smallest = np.where(ty > 0, ty, 0.0)
        if inv_m > 0.0:
            floor = 0.25 * inv_m / (1.0 + np.sqrt(np.sum(lam * lam, axis=0)))
            smallest = np.maximum(smallest, floor)
        depth = quad.depth_for(float(np.min(smallest)) if n else 1.0)
    else:
        depth = None

    def objective(mu_, lz):
        reg, _ = _reg(mu_[0], mu_[1])
        return mu_[0] * targets[0][idx] + mu_[1] * targets[1][idx] - lz - inv_m * reg

    idx = np.arange(n)
    lz, mom, cov = quad.moments(mu[0], mu[1], depth)
    iters = np.zeros(n, dtype=int)
    done = np.zeros(n, dtype=bool)
    stalled = np.zeros(n, dtype=bool)
    for it in range(max_iter + 1):
        _, rg = _reg(mu[0], mu[1])
        grad = targets - mom - inv_m * rg
        res = np.max(np.abs(grad), axis=0)
        done = res <= tol
        active = ~done & ~stalled
        if not np.any(active) or it == max_iter:
            break
        a = np.flatnonzero(active)
        iters[a] += 1
        hess = cov[:, :, a] + inv_m * _REG_HESS[:, :, None]
        g = grad[:, a]
        det = hess[0, 0] * hess[1, 1] - hess[0, 1] * hess[1, 0]
        det = np.where(det > 0, det, np.finfo(float).tiny)
        d = np.array([(hess[1, 1] * g[0] - hess[0, 1] * g[1]) / det,
                      (hess[0, 0] * g[1] - hess[1, 0] * g[0]) / det])
        slope = np.sum(g * d, axis=0)
        bad = ~np.isfinite(slope) | (slope <= 0)
        d[:, bad] = g[:, bad]
        slope[bad] = np.sum(g[:, bad] ** 2, axis=0)
        idx = a
        phi0 = objective(mu[:, a], lz[a])
        step = np.ones(a.size)
        pending = np.ones(a.size, dtype=bool)
        for _ in range(60):
            p = np.flatnonzero(pending)
            if p.size == 0:
                break
            idx = a[p]
            trial = mu[:, idx] + step[p] * d[:, p]
            tlz, tmom, tcov = quad.moments(trial[0], trial[1], depth)
            phi = objective(trial, tlz)
            slack = 1e-13 * (1.0 + np.abs(phi0[p]))
            ok = np.isfinite(phi) & (phi >= phi0[p] + 1e-4 * step[p] * slope[p] - slack)
            if np.any(ok):
                acc = idx[ok]
                mu[:, acc] = trial[:, ok]
                lz[acc] = tlz[ok]
                mom[:, acc] = tmom[:, ok]
                cov[:, :, acc] = tcov[:, :, ok]
                pending[p[ok]] = False
            step[p[~ok]] *= 0.5
        stalled[a[pending]] = True

    _, rg = _reg(mu[0], mu[1])
    grad = targets - mom - inv_m * rg
    res = np.max(np.abs(grad), axis=0)
    converged = res <= tol
    idx = np.arange(n)
    value = objective(mu, lz)
    full = np.array([mu[0], mu[1], np.zeros(n)])
    full = full - full.mean(axis=0)
    # back to descending-eigenvalue order (z, x, y) -> (0, 1, 2)
    mu_sorted = np.array([full[2], full[0], full[1]])
    return value, mu_sorted, iters, converged


def _as_batch(q):
    q = np.asarray(q, float)
    if q.shape[:2] == (3, 3):
        q = q_compact(q)
    if q.shape[0] != 5:
        raise ValueError(f"expected compact (5, ...) Q-tensor, got shape {q.shape}")
    return q


def eval_potential(q, m=math.inf, quad=None, tol=DEFAULT_TOL,
                   max_iter=DEFAULT_MAX_ITER, margin=DEFAULT_MARGIN, raise_on_fail=True):
    """Evaluate f (``m = inf``) or the envelope f_m at compact Q-tensors.

    ``q`` has shape ``(5,)`` or ``(5, *batch)``. Raises
    :class:`DomainViolation` for f outside the open eigenvalue interval
    (shrunk by ``margin``) and :class:`NoConvergence` when Newton stalls.
    """
    q = _as_batch(q)
    batch = q.shape[1:]
    flat = q.reshape(5, -1)
    lam, vec = sym3_eigh(q_full(flat))
    if math.isinf(m):
        lo = -THIRD + margin
        hi = 2.0 * THIRD - margin
        bad = (lam[2] <= lo) | (lam[0] >= hi)
        if np.any(bad):
            k = int(np.flatnonzero(bad)[0])
            raise DomainViolation(
                f"eigenvalues {lam[:, k]} outside ({lo:.12g}, {hi:.12g}); f = +inf")
    elif not m > 0:
        raise ValueError("Moreau parameter m must be positive")
    # Q = 0 is solved by the uniform density: f = -log(4 pi), mu = 0
    npts = lam.shape[1]
    live = np.flatnonzero(np.any(flat != 0.0, axis=0))
    value = np.full(npts, -LOG_4PI)
    mu = np.zeros((3, npts))
    iters = np.zeros(npts, dtype=int)
    conv = np.ones(npts, dtype=bool)
    if live.size:
        v, mu_l, it_l, c_l = solve_dual(lam[:, live], m, quad, tol, max_iter)
        value[live], mu[:, live], iters[live], conv[live] = v, mu_l, it_l, c_l
    if raise_on_fail and not np.all(conv):
        k = int(np.flatnonzero(~conv)[0])
        raise NoConvergence(
            f"dual Newton did not reach tol={tol:g} in {max_iter} iterations "
            f"at eigenvalues {lam[:, k]}")
    grad_full = np.einsum("ikn,kn,jkn->ijn", vec, mu, vec)
    grad = q_compact(grad_full)
    shape = lambda a, lead: a.reshape(lead + batch)
    return PotentialEval(
        value=shape(value, ()) if batch else float(value[0]),
        gradient=shape(grad, (5,)),
        dual_exponents=shape(mu, (3,)),
        newton_iters=int(iters.max()) if iters.size else 0,
        converged=bool(np.all(conv)),
        eigenvalues=shape(lam, (3,)),
    )


def eval_f(q, quad=None, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER, margin=DEFAULT_MARGIN):
    """The singular potential f and its traceless gradient."""
    return eval_potential(q, math.inf, quad, tol, max_iter, margin)


def eval_f_moreau(q, m, quad=None, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER):
    """Moreau envelope ``f_m``; gradient ``m (Q - P*)`` is m-Lipschitz."""
    if math.isinf(m):
        return eval_f(q, quad, tol, max_iter)
    return eval_potential(q, m, quad, tol, max_iter)


def moreau_proximal_point(q, m, quad=None, tol=DEFAULT_TOL):
    """Minimiser ``P* = Q - grad f_m(Q) / m`` of the envelope problem."""
    ev = eval_f_moreau(q, m, quad, tol)
    return _as_batch(q) - ev.gradient / m


# ---------------------------------------------------------------------------
# thermal coupling and transport coefficients
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SqrtU:
    """``U(theta) = a - b sqrt(1 + theta)``, ``a > b > 0``.

    U(0) = a - b > 0, U' = -b / (2 sqrt(1+theta)) < 0, U'' > 0,
    |U'| <= (b/2) theta^(-1/2) and U'' theta^(3/2) stays bounded.
    """

    a: float = 2.0
    b: float = 1.0

    def __call__(self, theta):
        return self.a - self.b * np.sqrt(1.0 + np.asarray(theta, float))

    def d1(self, theta):
        return -0.5 * self.b / np.sqrt(1.0 + np.asarray(theta, float))

    def d2(self, theta):
        return 0.25 * self.b / (1.0 + np.asarray(theta, float)) ** 1.5


@dataclass(frozen=True)
class LinearU:
    """``U(theta) = alpha (theta_star - theta)``: changes sign at theta_star.

    Its constant slope violates the ``|U'| <= c theta^(-1/2)`` growth bound,
    so it is only admissible after truncation.
    """

    alpha: float = 1.0
    theta_star: float = 1.0

    def __call__(self, theta):
        return self.alpha * (self.theta_star - np.asarray(theta, float))

    def d1(self, theta):
        return np.full_like(np.asarray(theta, float), -self.alpha)

    def d2(self, theta):
        return np.zeros_like(np.asarray(theta, float))


@dataclass(frozen=True)
class TruncatedU:
    """Bounded truncation ``U_delta`` of a convex nonincreasing U.

    Equal to U on ``[0, 1/delta]``; linear with slope U'(0) for
    ``theta <= 0``; beyond ``theta0 = 1/delta`` an exponential tail
    ``U(theta0) + U'(theta0) tau (1 - exp(-(theta - theta0)/tau))`` that
    matches value, slope and (when U''(theta0) > 0) curvature.
    """

    base: object
    delta: float

    @property
    def theta0(self):
        return 1.0 / self.delta

    @property
    def tau(self):
        t0 = self.theta0
        u2 = float(self.base.d2(t0))
        u1 = float(self.base.d1(t0))
        if u2 > 0 and u1 < 0:
            return -u1 / u2
        return t0

    def _split(self, theta):
        theta = np.asarray(theta, float)
        return theta, theta <= 0.0, theta > self.theta0

    def __call__(self, theta):
        theta, neg, tail = self._split(theta)
        t0, tau = self.theta0, self.tau
        mid = self.base(np.clip(theta, 0.0, t0))
        out = np.where(neg, self.base(0.0) + self.base.d1(0.0) * theta, mid)
        x = np.maximum(theta - t0, 0.0)
        tail_v = self.base(t0) + self.base.d1(t0) * tau * (-np.expm1(-x / tau))
        return np.where(tail, tail_v, out)

    def d1(self, theta):
        theta, neg, tail = self._split(theta)
        t0, tau = self.theta0, self.tau
        mid = self.base.d1(np.clip(theta, 0.0, t0))
        out = np.where(neg, self.base.d1(0.0), mid)
        x = np.maximum(theta - t0, 0.0)
        return np.where(tail, self.base.d1(t0) * np.exp(-x / tau), out)

    def d2(self, theta):
        theta, neg, tail = self._split(theta)
        t0, tau = self.theta0, self.tau
        mid = self.base.d2(np.clip(theta, 0.0, t0))
        out = np.where(neg, 0.0, mid)
        x = np.maximum(theta - t0, 0.0)
        return np.where(tail, -self.base.d1(t0) / tau * np.exp(-x / tau), out)


@dataclass(frozen=True)
class QuadraticG:
    """``G(Q) = g(tr Q^2)`` with ``g(y) = y`` up to ``inner`` and a C^3
    roll-off to the constant ``(inner + outer)/2`` beyond ``outer``.

    Physical Q-tensors have ``tr Q^2 <= 2/3``, so with the default
    ``inner = 1`` the cutoff never touches them.
    """

    inner: float = 1.0
    outer: float = 2.0

    def _t(self, y):
        return np.clip((y - self.inner) / (self.outer - self.inner), 0.0, 1.0)

    def g(self, y):
        y = np.asarray(y, float)
        t = self._t(y)
        width = self.outer - self.inner
        # integral of 1 - smootherstep
        rolled = self.inner + width * (t - (t**6 - 3.0 * t**5 + 2.5 * t**4))
        return np.where(y <= self.inner, y, rolled)

    def dg(self, y):
        t = self._t(np.asarray(y, float))
        return 1.0 - (6.0 * t**5 - 15.0 * t**4 + 10.0 * t**3)

    def __call__(self, q5):
        return self.g(q_norm2(q5))

    def gradient(self, q5):
        """``L[dG/dQ] = 2 g'(tr Q^2) Q`` in compact form."""
        q5 = np.asarray(q5, float)
        return 2.0 * self.dg(q_norm2(q5)) * q5

    def gradient_bound(self):
        """sup |dG/dQ| over all Q (Frobenius norm)."""
        y = np.linspace(0.0, self.outer, 4001)
        return float(np.max(2.0 * self.dg(y) * np.sqrt(y)))


@dataclass(frozen=True)
class Coefficient:
    """Transport coefficient ``lo + (hi - lo)(1 + tanh((theta - theta_c)/width))/2``.

    ``lo == hi`` gives a constant.
    """

    lo: float = 1.0
    hi: float = 1.0
    theta_c: float = 1.0
    width: float = 1.0

    @classmethod
    def constant(cls, value):
        return cls(value, value)

    @property
    def is_constant(self):
        return self.lo == self.hi

    @property
    def bounds(self):
        return (min(self.lo, self.hi), max(self.lo, self.hi))

    def __call__(self, theta):
        theta = np.asarray(theta, float)
        if self.is_constant:
            return np.full_like(theta, self.lo)
        s = 0.5 * (1.0 + np.tanh((theta - self.theta_c) / self.width))
        return self.lo + (self.hi - self.lo) * s


@dataclass(frozen=True)
class ThermoFunctions:
    U: object = SqrtU()
    G: QuadraticG = QuadraticG()
    mu: Coefficient = Coefficient.constant(1.0)
    kappa: Coefficient = Coefficient.constant(1.0)
    Gamma: Coefficient = Coefficient.constant(1.0)


def truncate_U(thermo, delta):
    """Replace U by its bounded truncation ``U_delta`` (no-op for delta == 0)."""
    if delta < 0:
        raise ValueError("delta must be nonnegative")
    if delta == 0:
        return thermo
    base = thermo.U.base if isinstance(thermo.U, TruncatedU) else thermo.U
    return ThermoFunctions(TruncatedU(base, float(delta)), thermo.G,
                           thermo.mu, thermo.kappa, thermo.Gamma)


@dataclass(frozen=True)
class ThermoEval:
    e_density: np.ndarray
    s_density: np.ndarray
    U: np.ndarray
    dU: np.ndarray
    G: np.ndarray


def eval_thermo(theta, q, thermo):
    """Temperature-dependent parts of the energy and entropy densities.

    ``e_bulk = -(U - theta U') G + theta`` (the caller adds f and the
    elastic term) and ``s = 1 + log theta + U' G``.
    """
    theta = np.asarray(theta, float)
    if np.any(theta <= 0):
        raise NonpositiveTemperature("thermodynamic densities need theta > 0")
    u = thermo.U(theta)
    du = thermo.U.d1(theta)
    g = thermo.G(np.asarray(q, float))
    e = -(u - theta * du) * g + theta
    s = 1.0 + np.log(theta) + du * g
    return ThermoEval(e, s, u, du, g)


def sqrt_growth_constant(U, theta_max=1e8, samples=4000):
    """Numerical sup of ``theta^(1/2) |U'(theta)|`` on a log grid."""
    theta = np.logspace(-8, math.log10(theta_max), samples)
    return float(np.max(np.sqrt(theta) * np.abs(U.d1(theta))))


def potential_table(kind="uniaxial", points=40, quad=None):
    """Rows ``(lambda1, lambda2, f, |grad|, iters)`` along a sweep.

    ``uniaxial``: eigenvalues ``(2s/3, -s/3, -s/3)`` for s in (-1/2, 1);
    ``biaxial``: ``(a, -a/2 + b, -a/2 - b)`` across the physical triangle.
    """
    rows = []
    if kind == "uniaxial":
        s = np.concatenate([np.linspace(-0.499, 0.99, points), 1.0 - np.logspace(-2, -6, 5)])
        lams = [(2 * x / 3, -x / 3, -x / 3) for x in s]
    elif kind == "biaxial":
        lams = []
        for a in np.linspace(0.0, 0.6, max(points // 5, 2)):
            # keep lambda2 <= lambda1 and lambda3 > -1/3
            bmax = min(1.5 * a, THIRD - a / 2) * 0.999
            for b in np.linspace(0.0, bmax, 5):
                lams.append((a, -a / 2 + b, -a / 2 - b))
    else:
        raise ValueError(f"unknown sweep kind {kind!r}")
    for l1, l2, l3 in lams:
        q = np.array([l1, l2, 0.0, 0.0, 0.0])
        ev = eval_f(q, quad)
        rows.append((l1, l2, ev.value, math.sqrt(q_norm2(ev.gradient)), ev.newton_iters))
    return rows
