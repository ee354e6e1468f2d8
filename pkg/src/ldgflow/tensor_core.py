"""Algebra of symmetric traceless 3x3 tensors and velocity-gradient kinematics.

Layout conventions (used throughout the package):

* matrices are component-first arrays of shape ``(3, 3, *batch)``;
* vectors are ``(3, *batch)``;
* a Q-tensor is stored as its 5 independent components
  ``(q11, q22, q12, q13, q23)`` with shape ``(5, *batch)``. Symmetry and
  tracelessness are therefore representational: ``q33 = -q11 - q22``.
* the velocity gradient is ``g[i, j] = d u_i / d x_j``.
* the gradient of a Q field is ``gq[k, ...]`` = derivative along ``x_k`` of
  whatever follows (5 components or a full 3x3 block).

The ``::`` contraction of rank-3 objects (e.g. ``grad Q :: grad S``) is the
plain componentwise sum over all three indices; ``A : B`` is
``sum_ij A_ij B_ij``.
"""

import numpy as np

from .errors import LdgError

Q5_INDEX = ((0, 0), (1, 1), (0, 1), (0, 2), (1, 2))
EYE = np.eye(3)


def q_full(q5):
    """Expand ``(5, ...)`` components into a full ``(3, 3, ...)`` matrix."""
    q5 = np.asarray(q5, dtype=float)
    q11, q22, q12, q13, q23 = q5
    q33 = -q11 - q22
    return np.array([[q11, q12, q13], [q12, q22, q23], [q13, q23, q33]])


def q_compact(m):
    """Take the 5 independent entries of a symmetric traceless matrix.

    No projection is applied; call :func:`traceless_project` first if ``m``
    might carry a trace.
    """
    m = np.asarray(m, dtype=float)
    return np.array([m[i, j] for i, j in Q5_INDEX])


def q_norm2(q5):
    """Frobenius norm squared ``Q : Q`` from compact components."""
    q11, q22, q12, q13, q23 = q5
    return q11**2 + q22**2 + (q11 + q22) ** 2 + 2.0 * (q12**2 + q13**2 + q23**2)


def q_dot(a5, b5):
    """Frobenius product ``A : B`` of two compact Q-tensors."""
    a11, a22, a12, a13, a23 = a5
    b11, b22, b12, b13, b23 = b5
    return (a11 * b11 + a22 * b22 + (a11 + a22) * (b11 + b22)
            + 2.0 * (a12 * b12 + a13 * b13 + a23 * b23))


def ddot(a, b):
    """``A : B`` for full matrices with trailing batch axes."""
    return np.einsum("ij...,ij...->...", a, b)


def matmul(a, b):
    return np.einsum("ik...,kj...->ij...", a, b)


def transpose(a):
    return np.swapaxes(a, 0, 1)


def trace(a):
    return np.einsum("ii...->...", a)


def identity_like(a):
    """Identity broadcast to the batch shape of the matrix ``a``."""
    shape = np.shape(a)[2:]
    return EYE.reshape((3, 3) + (1,) * len(shape)) * np.ones(shape)


def is_symmetric(a, atol=0.0):
    a = np.asarray(a, dtype=float)
    scale = max(1.0, float(np.max(np.abs(a)))) if a.size else 1.0
    return bool(np.all(np.abs(a - transpose(a)) <= atol * scale))


def traceless_project(h, atol=1e-12):
    """Return ``h - tr(h)/3 I`` in compact form.

    ``h`` is a full symmetric matrix ``(3, 3, ...)``. Non-symmetric input
    (beyond ``atol`` relative to the largest entry) is rejected.
    """
    h = np.asarray(h, dtype=float)
    if h.shape[:2] != (3, 3):
        raise ValueError(f"expected a (3, 3, ...) array, got shape {h.shape}")
    if not is_symmetric(h, atol):
        raise LdgError("traceless_project requires a symmetric matrix")
    tr3 = trace(h) / 3.0
    return np.array([h[0, 0] - tr3, h[1, 1] - tr3, h[0, 1], h[0, 2], h[1, 2]])


def strain(g):
    """Symmetric part of the velocity gradient."""
    return 0.5 * (g + transpose(g))


def vorticity(g):
    """Antisymmetric part of the velocity gradient."""
    return 0.5 * (g - transpose(g))


def stretching_full(g, q, xi):
    """Unprojected stretching tensor S(grad u, Q) as a full matrix.

    ``q`` may be compact ``(5, ...)`` or full ``(3, 3, ...)``.
    """
    g = np.asarray(g, dtype=float)
    qm = q_full(q) if np.shape(q)[0] == 5 else np.asarray(q, dtype=float)
    a = qm + identity_like(qm) / 3.0
    e = strain(g)
    w = vorticity(g)
    s = matmul(xi * e + w, a) + matmul(a, xi * e - w)
    if xi != 0.0:
        s = s - 2.0 * xi * a * ddot(qm, g)
    return s


def stretching(g, q, xi, return_residual=False):
    """Stretching tensor S in compact form.

    For divergence-free ``g`` the trace of S vanishes identically
    (it equals ``2 xi div(u) / 3``). The result is re-projected onto the
    traceless space; with ``return_residual`` the pre-projection trace is
    returned as well.
    """
    s = stretching_full(g, q, xi)
    out = traceless_project(s, atol=1e-9)
    if return_residual:
        return out, np.abs(trace(s))
    return out


def odot(gq):
    """Elastic stress kernel ``(grad Q . grad Q)_ij = d_i Q_kl d_j Q_kl``.

    ``gq`` is either ``(3, 3, 3, ...)`` (direction, then the full matrix) or
    ``(3, 5, ...)`` (direction, then compact components).
    """
    gq = np.asarray(gq, dtype=float)
    if gq.shape[1] == 5:
        out = np.empty((3, 3) + gq.shape[2:])
        for i in range(3):
            for j in range(i, 3):
                out[i, j] = q_dot(gq[i], gq[j])
                out[j, i] = out[i, j]
        return out
    return np.einsum("ikl...,jkl...->ij...", gq, gq)


def commutator_identity_terms(h, q, g, xi):
    """Both sides of the stress-power identity.

    Returns ``(lhs, rhs)`` where ``lhs = -H : S`` and ``rhs`` is the
    commutator/alignment form. They agree whenever ``tr H = 0``; for a
    general symmetric ``H`` the gap is ``2 xi (tr H / 3)(Q : grad u)``.
    """
    h = np.asarray(h, dtype=float)
    qm = q_full(q) if np.shape(q)[0] == 5 else np.asarray(q, dtype=float)
    a = qm + identity_like(qm) / 3.0
    s = stretching_full(g, qm, xi)
    lhs = -ddot(h, s)
    comm = matmul(qm, h) - matmul(h, qm)
    rhs = (ddot(comm, g) + 2.0 * xi * ddot(h, qm) * ddot(qm, g)
           - xi * ddot(matmul(h, a) + matmul(a, h), g))
    return lhs, rhs


def commutator_identity_check(h, q, g, xi):
    """Absolute residual ``|-H:S - rhs|`` of the stress-power identity."""
    h = np.asarray(h, dtype=float)
    if not is_symmetric(h, 1e-12):
        raise LdgError("commutator_identity_check requires a symmetric H")
    lhs, rhs = commutator_identity_terms(h, q, g, xi)
    return np.abs(lhs - rhs)


def material_derivative(q_t, u, gq, s):
    """Co-rotational material derivative ``dQ/dt + u . grad Q - S``.

    ``q_t`` and ``s`` are compact ``(5, ...)``; ``gq`` is ``(3, 5, ...)``.
    """
    adv = np.einsum("i...,ic...->c...", np.asarray(u, float), np.asarray(gq, float))
    return np.asarray(q_t, float) + adv - np.asarray(s, float)


# ---------------------------------------------------------------------------
# closed-form symmetric 3x3 eigensolver
# ---------------------------------------------------------------------------

def sym3_eigvalsh(a):
    """Eigenvalues of symmetric 3x3 matrices, sorted descending.

    Trigonometric (Cardano) solution. ``a`` has shape ``(3, 3, *batch)``;
    returns ``(3, *batch)``. Near a double root the repeated pair is only
    accurate to about sqrt(eps); :func:`sym3_eigh` refines it.
    """
    a = np.asarray(a, dtype=float)
    batch = a.shape[2:]
    m = a.reshape(3, 3, -1)
    q = trace(m) / 3.0
    b = m - q * EYE[:, :, None]
    p2 = ddot(b, b) / 6.0
    p = np.sqrt(p2)
    safe = np.where(p > 0, p, 1.0)
    bn = b / safe
    half_det = 0.5 * (bn[0, 0] * (bn[1, 1] * bn[2, 2] - bn[1, 2] * bn[2, 1])
                      - bn[0, 1] * (bn[1, 0] * bn[2, 2] - bn[1, 2] * bn[2, 0])
                      + bn[0, 2] * (bn[1, 0] * bn[2, 1] - bn[1, 1] * bn[2, 0]))
    half_det = np.clip(half_det, -1.0, 1.0)
    phi = np.arccos(half_det) / 3.0
    big = 2.0 * np.cos(phi)
    small = 2.0 * np.cos(phi + 2.0 * np.pi / 3.0)
    mid = -(big + small)
    out = q + p * np.array([big, mid, small])
    return out.reshape((3,) + batch)


def _cross(a, b):
    return np.array([a[1] * b[2] - a[2] * b[1],
                     a[2] * b[0] - a[0] * b[2],
                     a[0] * b[1] - a[1] * b[0]])


def _unit_vector_of_kernel(m):
    """Unit vector spanning the (approximate) null space of rank-2 ``m``.

    Picks the largest of the three row cross products.
    """
    r0, r1, r2 = m[0], m[1], m[2]
    c = np.stack([_cross(r0, r1), _cross(r0, r2), _cross(r1, r2)])
    n2 = np.einsum("kin,kin->kn", c, c)
    pick = np.argmax(n2, axis=0)
    cols = np.arange(m.shape[-1])
    v = c[pick, :, cols].T
    nrm = np.sqrt(n2[pick, cols])
    good = nrm > 0
    v = np.where(good, v / np.where(good, nrm, 1.0), np.array([1.0, 0.0, 0.0])[:, None])
    return v


def _orthonormal_complement(w):
    """Two unit vectors (u, v) with (u, v, w) orthonormal."""
    use0 = np.abs(w[0]) > np.abs(w[1])
    inv0 = 1.0 / np.sqrt(np.where(use0, w[0] ** 2 + w[2] ** 2, 1.0))
    inv1 = 1.0 / np.sqrt(np.where(use0, 1.0, w[1] ** 2 + w[2] ** 2))
    zero = np.zeros_like(w[0])
    u = np.where(use0,
                 np.array([-w[2] * inv0, zero, w[0] * inv0]),
                 np.array([zero, w[2] * inv1, -w[1] * inv1]))
    return u, _cross(w, u)


def _plane_eigh(m, w):
    """Diagonalise ``m`` on the plane orthogonal to its eigenvector ``w``.

    Returns ``(hi, lo, v_hi, v_lo)``. The 2x2 Jacobi rotation is well
    conditioned even for (nearly) repeated eigenvalues.
    """
    u, v = _orthonormal_complement(w)
    au = np.einsum("ij...,j...->i...", m, u)
    av = np.einsum("ij...,j...->i...", m, v)
    a = np.einsum("i...,i...->...", u, au)
    b = np.einsum("i...,i...->...", u, av)
    d = np.einsum("i...,i...->...", v, av)
    half = 0.5 * (a - d)
    rad = np.hypot(half, b)
    mean = 0.5 * (a + d)
    t = 0.5 * np.arctan2(b, half)
    c, s = np.cos(t), np.sin(t)
    return mean + rad, mean - rad, c * u + s * v, -s * u + c * v


def sym3_eigh(a):
    """Closed-form eigen-decomposition of symmetric 3x3 matrices.

    Returns ``(evals, evecs)`` with eigenvalues sorted descending,
    ``evals`` of shape ``(3, *batch)`` and ``evecs[:, k]`` the unit
    eigenvector of ``evals[k]`` (shape ``(3, 3, *batch)``). Repeated
    eigenvalues get an arbitrary orthonormal basis of their eigenspace.
    """
    a = np.asarray(a, dtype=float)
    batch = a.shape[2:]
    m = a.reshape(3, 3, -1)
    n = m.shape[-1]
    scale = np.max(np.abs(m.reshape(9, n)), axis=0)
    zero = scale == 0
    scale = np.where(zero, 1.0, scale)
    ms = m / scale
    lam = sym3_eigvalsh(ms)
    # the best-separated extreme eigenvalue is accurate from the trig formula;
    # the remaining pair comes from a 2x2 rotation on the complement plane
    first_is_top = (lam[0] - lam[1]) >= (lam[1] - lam[2])
    lam_first = np.where(first_is_top, lam[0], lam[2])
    w = _unit_vector_of_kernel(ms - lam_first * EYE[:, :, None])
    lam_w = np.einsum("i...,ij...,j...->...", w, ms, w)
    hi, lo, v_hi, v_lo = _plane_eigh(ms, w)
    top = np.where(first_is_top, lam_w, hi)
    mid = np.where(first_is_top, hi, lo)
    bot = np.where(first_is_top, lo, lam_w)
    v_top = np.where(first_is_top, w, v_hi)
    v_mid = np.where(first_is_top, v_hi, v_lo)
    v_bot = np.where(first_is_top, v_lo, w)
    vecs = np.stack([v_top, v_mid, v_bot], axis=1)
    vals = np.array([top, mid, bot])
    vecs = np.where(zero, EYE[:, :, None], vecs)
    vals = vals * scale
    return vals.reshape((3,) + batch), vecs.reshape((3, 3) + batch)


def q_eigenvalues(q5):
    """Descending eigenvalues of compact Q-tensors, shape ``(3, ...)``."""
    return sym3_eigh(q_full(q5))[0]


def random_rotation(rng, size=None):
    """Haar-distributed rotation matrices ``(3, 3)`` or ``(3, 3, size)``."""
    k = 1 if size is None else size
    x = rng.standard_normal((k, 3, 3))
    qm, r = np.linalg.qr(x)
    qm = qm * np.sign(np.diagonal(r, axis1=1, axis2=2))[:, None, :]
    det = np.linalg.det(qm)
    qm[:, :, 0] *= det[:, None]
    out = np.moveaxis(qm, 0, -1)
    return out[..., 0] if size is None else out
