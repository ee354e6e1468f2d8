"""Quadrature on the unit sphere for moments of quadratic-exponential densities.

Two rules live here.

``SphereQuadrature`` is a plain product rule (Gauss-Legendre in the polar
cosine times uniform azimuth). It is what tests and the brute-force primal
oracle use, and it can drive the dual solver too.

``PolarRule`` integrates densities ``exp(a p_x^2 + b p_y^2)`` with the
azimuth done in closed form through scaled modified Bessel functions and a
composite Gauss-Legendre rule in ``t = 1 - cos(theta)``, graded
geometrically towards the pole. It stays accurate when the density
collapses onto a point or a great circle, i.e. arbitrarily close to the
boundary of the physical Q domain.

Both expose :meth:`moments`, returning ``log Z`` and the first and second
moments of ``(p_x^2, p_y^2)`` under ``exp(mu_x p_x^2 + mu_y p_y^2)``.
Only the x/y block is needed: ``p_z^2 = 1 - p_x^2 - p_y^2``.
"""

from functools import lru_cache
import math

import numpy as np
from scipy.special import i0e, i1e, logsumexp

FOUR_PI = 4.0 * np.pi


class SphereQuadrature:
    """Product rule: ``n_theta`` Gauss-Legendre nodes in cos(theta) times
    ``n_phi`` uniform azimuthal nodes.

    Exact for polynomials in ``p`` of degree up to
    ``min(2 n_theta - 1, n_phi - 1)``.
    """

    def __init__(self, n_theta=32, n_phi=64):
        if n_theta < 2 or n_phi < 4:
            raise ValueError("need n_theta >= 2 and n_phi >= 4")
        self.n_theta = int(n_theta)
        self.n_phi = int(n_phi)
        x, wx = np.polynomial.legendre.leggauss(self.n_theta)
        phi = 2.0 * np.pi * np.arange(self.n_phi) / self.n_phi
        s = np.sqrt(1.0 - x**2)
        px = np.outer(s, np.cos(phi)).ravel()
        py = np.outer(s, np.sin(phi)).ravel()
        pz = np.repeat(x, self.n_phi)
        self.nodes = np.array([px, py, pz])
        self.weights = np.repeat(wx, self.n_phi) * (2.0 * np.pi / self.n_phi)
        self._sq = self.nodes**2
        self._logw = np.log(self.weights)

    @property
    def degree(self):
        return min(2 * self.n_theta - 1, self.n_phi - 1)

    def __len__(self):
        return self.weights.size

    def integrate(self, values):
        """Sum ``values`` (last axis over nodes) against the weights."""
        return np.asarray(values) @ self.weights

    def moments(self, mu_x, mu_y, depth=None):
        """Log-partition and moments of ``exp(mu_x p_x^2 + mu_y p_y^2)``.

        Returns ``(log_z, m, cov)`` with ``m`` of shape ``(2, N)`` holding
        ``<p_x^2>, <p_y^2>`` and ``cov`` of shape ``(2, 2, N)``.
        ``depth`` is accepted for interface compatibility and ignored.
        """
        mu_x = np.atleast_1d(np.asarray(mu_x, float))
        mu_y = np.atleast_1d(np.asarray(mu_y, float))
        x2, y2 = self._sq[0], self._sq[1]
        expo = self._logw[None, :] + mu_x[:, None] * x2 + mu_y[:, None] * y2
        log_z = logsumexp(expo, axis=1)
        prob = np.exp(expo - log_z[:, None])
        mx = prob @ x2
        my = prob @ y2
        dx = x2[None, :] - mx[:, None]
        dy = y2[None, :] - my[:, None]
        vxx = np.sum(prob * dx * dx, axis=1)
        vxy = np.sum(prob * dx * dy, axis=1)
        vyy = np.sum(prob * dy * dy, axis=1)
        cov = np.array([[vxx, vxy], [vxy, vyy]])
        return log_z, np.array([mx, my]), cov


# ---------------------------------------------------------------------------
# graded polar rule with closed-form azimuth
# ---------------------------------------------------------------------------

_ASYM_TERMS = 24
_ASYM_SWITCH = 30.0


def _asym_coeffs(nu, terms=_ASYM_TERMS):
    """Coefficients of e^{-c} I_nu(c) sqrt(2 pi c) = sum_k (-1)^k a_k / c^k."""
    out = [1.0]
    mu = 4.0 * nu * nu
    a = 1.0
    for k in range(1, terms):
        a *= (mu - (2 * k - 1) ** 2) / (k * 8.0)
        out.append(a * (-1) ** k)
    return np.array(out)


_A0 = _asym_coeffs(0)
_A1 = _asym_coeffs(1)
_A2 = _asym_coeffs(2)
_D01 = _A0 - _A1
_D4 = 3.0 * _A0 - 4.0 * _A1 + _A2


def _series(coeffs, c):
    inv = 1.0 / c
    acc = np.zeros_like(c)
    for a in coeffs[::-1]:
        acc = acc * inv + a
    return acc / np.sqrt(2.0 * np.pi * c)


def _i2e(c, b0, b1):
    """``exp(-c) I_2(c)`` from the recurrence, with a power series for small c."""
    out = b0 - 2.0 * b1 / np.maximum(c, 0.5)
    flat = out.reshape(-1)
    idx = np.flatnonzero(c.reshape(-1) < 0.5)
    if idx.size:
        cs = c.reshape(-1)[idx]
        h = 0.25 * cs * cs
        term = 0.5 * h
        acc = term.copy()
        for k in range(1, 8):
            term = term * h / (k * (k + 2))
            acc += term
        flat[idx] = acc * np.exp(-cs)
    return out


def azimuthal_factors(c):
    """Azimuthal averages of ``exp(c cos 2 phi)`` times trig weights.

    With ``c >= 0`` and everything scaled by ``exp(-c)``, returns
    ``(f0, fl2, fs2, fl4, fs4, fls)`` = scaled averages of
    ``1, cos^2, sin^2, cos^4, sin^4, cos^2 sin^2``. The cancelling
    combinations use an asymptotic expansion for large ``c`` so they keep
    full relative accuracy.
    """
    c = np.ascontiguousarray(c, dtype=float)
    b0 = i0e(c)
    b1 = i1e(c)
    b2 = _i2e(c, b0, b1)
    d01 = b0 - b1
    d4 = 3.0 * b0 - 4.0 * b1 + b2
    fls = b1 / (4.0 * np.maximum(c, 1e-6))
    cf = c.reshape(-1)
    big = np.flatnonzero(cf > _ASYM_SWITCH)
    if big.size:
        cb = cf[big]
        d01.reshape(-1)[big] = _series(_D01, cb)
        d4.reshape(-1)[big] = _series(_D4, cb)
    tiny = np.flatnonzero(cf < 1e-6)
    if tiny.size:
        fls.reshape(-1)[tiny] = (b0.reshape(-1)[tiny] - b2.reshape(-1)[tiny]) / 8.0
    return (b0, 0.5 * (b0 + b1), 0.5 * d01,
            (3.0 * b0 + 4.0 * b1 + b2) / 8.0, d4 / 8.0, fls)


@lru_cache(maxsize=64)
def _graded_nodes(depth, per_panel):
    """Nodes/weights in ``t = 1 - x`` for ``int_0^1 dx``, graded towards t=0."""
    g, gw = np.polynomial.legendre.leggauss(per_panel)
    edges = [0.0] + [2.0 ** (-k) for k in range(depth, -1, -1)]
    ts, ws = [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        half = 0.5 * (hi - lo)
        ts.append(lo + half * (g + 1.0))
        ws.append(half * gw)
    t = np.concatenate(ts)
    w = np.concatenate(ws)
    t.setflags(write=False)
    w.setflags(write=False)
    return t, w


class PolarRule:
    """Graded polar rule with exact azimuthal integration.

    ``per_panel`` Gauss-Legendre nodes on each of ``depth + 1`` panels
    ``[0, 2^-depth], [2^-depth, 2^(1-depth)], ..., [1/2, 1]`` in
    ``t = 1 - cos(theta)``; the density is even in cos(theta) so only the
    upper hemisphere is sampled. The polar axis is ``z``; callers put the
    largest eigen-direction there.
    """

    def __init__(self, per_panel=10, min_depth=6, max_depth=60):
        self.per_panel = int(per_panel)
        self.min_depth = int(min_depth)
        self.max_depth = int(max_depth)

    def depth_for(self, smallest_moment):
        """Panel depth resolving a polar cap of angular size ~ sqrt(moment)."""
        eps = float(np.clip(smallest_moment, 2.0 ** -self.max_depth, 1.0))
        return int(np.clip(math.ceil(-math.log2(eps)) + 4, self.min_depth, self.max_depth))

    def nodes(self, depth):
        return _graded_nodes(int(depth), self.per_panel)

    def integrate_polynomial(self, fn, depth=None):
        """Integrate ``fn(px, py, pz)`` (vectorised over nodes) over S^2.

        Uses a uniform azimuthal rule on top of the graded polar nodes; for
        testing the polar weights against analytic sphere moments.
        """
        t, w = self.nodes(self.min_depth if depth is None else depth)
        x = 1.0 - t
        s = np.sqrt(t * (2.0 - t))
        nphi = 64
        phi = 2.0 * np.pi * np.arange(nphi) / nphi
        px = np.outer(s, np.cos(phi))
        py = np.outer(s, np.sin(phi))
        total = 0.0
        for sign in (1.0, -1.0):
            pz = np.outer(sign * x, np.ones(nphi))
            total += np.sum(w[:, None] * fn(px, py, pz)) * (2.0 * np.pi / nphi)
        return total

    def moments(self, mu_x, mu_y, depth=None):
        """Same contract as :meth:`SphereQuadrature.moments`."""
        mu_x = np.atleast_1d(np.asarray(mu_x, float))
        mu_y = np.atleast_1d(np.asarray(mu_y, float))
        t, w = self.nodes(self.min_depth if depth is None else depth)
        s2 = (t * (2.0 - t))[None, :]
        big = np.maximum(mu_x, mu_y)[:, None]
        x_is_big = (mu_x >= mu_y)[:, None]
        c = 0.5 * s2 * np.abs(mu_x - mu_y)[:, None]
        f0, fl2, fs2, fl4, fs4, fls = azimuthal_factors(c)
        expo = np.log(w)[None, :] + s2 * big + np.log(f0)
        log_sum = logsumexp(expo, axis=1)
        weight = np.exp(expo - log_sum[:, None]) / f0
        log_z = np.log(FOUR_PI) + log_sum
        ex2 = np.where(x_is_big, fl2, fs2) * s2
        ey2 = np.where(x_is_big, fs2, fl2) * s2
        ex4 = np.where(x_is_big, fl4, fs4) * s2 * s2
        ey4 = np.where(x_is_big, fs4, fl4) * s2 * s2
        exy = fls * s2 * s2
        mx = np.sum(weight * ex2, axis=1)
        my = np.sum(weight * ey2, axis=1)
        vxx = np.sum(weight * ex4, axis=1) - mx * mx
        vyy = np.sum(weight * ey4, axis=1) - my * my
        vxy = np.sum(weight * exy, axis=1) - mx * my
        cov = np.array([[vxx, vxy], [vxy, vyy]])
        return log_z, np.array([mx, my]), cov
