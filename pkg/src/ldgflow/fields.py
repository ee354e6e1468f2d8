"""Periodic grid, spectral calculus and snapshot I/O on the torus [-pi, pi]^d.

Fields are component-first arrays whose trailing ``dim`` axes are the grid:
a scalar is ``(n,)*dim``, a velocity ``(3, *grid)``, a Q field
``(5, *grid)`` and a Q-gradient ``(3, 5, *grid)``. In the 2-D slice mode
vectors keep three components and every x3-derivative is zero.

Odd derivatives drop the Nyquist mode (its derivative is not real), and
the Leray projector uses the same truncated wavenumbers, so the projected
field is divergence-free to roundoff under :func:`div`.
"""

from dataclasses import dataclass
from functools import cached_property
import struct

import numpy as np

from .errors import LdgError


@dataclass(frozen=True)
class Grid:
    n: int
    dim: int = 2

    def __post_init__(self):
        if self.dim not in (2, 3):
            raise ValueError("dim must be 2 or 3")
        if self.n < 8 or self.n & (self.n - 1):
            raise ValueError("n must be a power of two and at least 8")

    @property
    def shape(self):
        return (self.n,) * self.dim

    @property
    def axes(self):
        return tuple(range(-self.dim, 0))

    @property
    def spacing(self):
        return 2.0 * np.pi / self.n

    @property
    def cell_volume(self):
        return self.spacing ** self.dim

    @property
    def volume(self):
        return (2.0 * np.pi) ** self.dim

    @cached_property
    def coords(self):
        """Node coordinates ``x_k = -pi + j h``, each broadcast to the grid."""
        x = -np.pi + self.spacing * np.arange(self.n)
        return np.meshgrid(*([x] * self.dim), indexing="ij")

    @cached_property
    def wavenumbers(self):
        """Integer wavenumbers broadcastable to the rfft spectrum shape."""
        full = np.fft.fftfreq(self.n, 1.0 / self.n)
        half = np.fft.rfftfreq(self.n, 1.0 / self.n)
        ks = [full] * (self.dim - 1) + [half]
        return np.meshgrid(*ks, indexing="ij")

    @cached_property
    def deriv_wavenumbers(self):
        """Wavenumbers for odd derivatives: Nyquist entries set to zero.

        Always three entries; the x3 one is zero in the 2-D slice mode.
        """
        out = []
        for k in self.wavenumbers:
            out.append(np.where(np.abs(k) == self.n // 2, 0.0, k))
        while len(out) < 3:
            out.append(np.zeros_like(out[0]))
        return out

    @cached_property
    def k2(self):
        return sum(k * k for k in self.wavenumbers)

    @cached_property
    def k2_deriv(self):
        return sum(k * k for k in self.deriv_wavenumbers)

    @cached_property
    def dealias_mask(self):
        cut = self.n / 3.0
        keep = np.ones(self.k2.shape, dtype=bool)
        for k in self.wavenumbers:
            keep &= np.abs(k) <= cut
        return keep

    def zeros(self, *lead):
        return np.zeros(tuple(lead) + self.shape)

    def fft(self, f):
        return np.fft.rfftn(f, axes=self.axes)

    def ifft(self, fh):
        return np.fft.irfftn(fh, s=self.shape, axes=self.axes)


def grad(f, grid):
    """Spectral gradient; a leading ``(3,)`` axis is prepended."""
    fh = grid.fft(np.asarray(f, float))
    return np.array([grid.ifft(1j * k * fh) for k in grid.deriv_wavenumbers])


def div(v, grid):
    """Divergence of a vector field ``(3, *grid)``."""
    v = np.asarray(v, float)
    acc = 0.0
    for i, k in enumerate(grid.deriv_wavenumbers[:grid.dim]):
        acc = acc + 1j * k * grid.fft(v[i])
    return grid.ifft(acc)


def div_tensor(sigma, grid):
    """Row divergence ``(div sigma)_i = d_j sigma_ij`` of a ``(3, 3, *grid)`` field."""
    sigma = np.asarray(sigma, float)
    out = []
    for i in range(3):
        acc = 0.0
        for j, k in enumerate(grid.deriv_wavenumbers[:grid.dim]):
            acc = acc + 1j * k * grid.fft(sigma[i, j])
        out.append(grid.ifft(acc))
    return np.array(out)


def laplacian(f, grid):
    return grid.ifft(-grid.k2 * grid.fft(np.asarray(f, float)))


def velocity_gradient(u, grid):
    """``g[i, j] = d u_i / d x_j`` as a ``(3, 3, *grid)`` field."""
    return np.swapaxes(grad(u, grid), 0, 1)


def leray_project(u, grid):
    """Helmholtz-Leray projection of a velocity field.

    Returns ``(P u, u - P u)``; the second part is the gradient complement
    ``grad phi``. The mean flow is kept in ``P u``.
    """
    u = np.asarray(u, float)
    kd = grid.deriv_wavenumbers
    uh = [grid.fft(u[i]) for i in range(3)]
    kk = grid.k2_deriv
    kdotu = sum(kd[i] * uh[i] for i in range(3))
    with np.errstate(divide="ignore", invalid="ignore"):
        phi = np.where(kk > 0, kdotu / np.where(kk > 0, kk, 1.0), 0.0)
    comp = np.array([grid.ifft(kd[i] * phi) for i in range(3)])
    proj = np.array([grid.ifft(uh[i] - kd[i] * phi) for i in range(3)])
    return proj, comp


def pressure_from_divergence(rhs_div_h, grid):
    """Mean-zero ``p`` solving ``-Laplace p = -rhs`` given ``rhs`` in Fourier space."""
    kk = grid.k2
    with np.errstate(divide="ignore", invalid="ignore"):
        ph = np.where(kk > 0, -rhs_div_h / np.where(kk > 0, kk, 1.0), 0.0)
    return grid.ifft(ph)


def mollify(f, grid, radius):
    """Gaussian mollification, spectral multiplier ``exp(-radius^2 |k|^2 / 2)``."""
    if radius < 0:
        raise ValueError("mollification radius must be nonnegative")
    f = np.asarray(f, float)
    if radius == 0:
        return f.copy()
    return grid.ifft(np.exp(-0.5 * radius * radius * grid.k2) * grid.fft(f))


def dealias(f, grid):
    """2/3-rule truncation: zero every mode with some ``|k_i| > n/3``."""
    return grid.ifft(np.where(grid.dealias_mask, grid.fft(np.asarray(f, float)), 0.0))


def grid_integral(f, grid):
    """Trapezoidal (spectrally accurate) integral over the torus."""
    return np.sum(f, axis=grid.axes) * grid.cell_volume


def spectral_energy(f, grid):
    """``sum |f_hat|^2 / N`` over the full spectrum, from the half spectrum."""
    fh = grid.fft(np.asarray(f, float))
    w = np.full(fh.shape[-1], 2.0)
    w[0] = 1.0
    if grid.n % 2 == 0:
        w[-1] = 1.0
    total = np.sum(np.abs(fh) ** 2 * w, axis=grid.axes)
    return total / grid.n ** grid.dim


# ---------------------------------------------------------------------------
# snapshots
# ---------------------------------------------------------------------------

MAGIC = b"LDGSNAP1"
HEADER = struct.Struct("<8sqqqdqq8x")
KINDS = {"scalar": 0, "vector": 1, "qtensor": 2, "gradq": 3, "state": 4}
_LEAD = {0: (), 1: (3,), 2: (5,), 3: (3, 5), 4: (10,)}


def write_snapshot(path, data, grid, kind, time=0.0, step=0, extra=0):
    """Write a 64-byte header and the row-major little-endian float64 payload."""
    code = KINDS[kind] if isinstance(kind, str) else int(kind)
    data = np.ascontiguousarray(data, dtype="<f8")
    expected = _LEAD[code] + grid.shape
    if data.shape != expected:
        raise ValueError(f"snapshot of kind {code} needs shape {expected}, got {data.shape}")
    with open(path, "wb") as fh:
        fh.write(HEADER.pack(MAGIC, grid.dim, grid.n, code, float(time), int(step), int(extra)))
        fh.write(data.tobytes(order="C"))


def read_snapshot(path):
    """Return ``(data, meta)``; ``meta`` has grid, kind, time, step and extra."""
    with open(path, "rb") as fh:
        head = fh.read(HEADER.size)
        if len(head) != HEADER.size:
            raise LdgError(f"{path}: truncated snapshot header")
        magic, dim, n, code, time, step, extra = HEADER.unpack(head)
        if magic != MAGIC:
            raise LdgError(f"{path}: not a snapshot file")
        grid = Grid(int(n), int(dim))
        shape = _LEAD[code] + grid.shape
        payload = np.frombuffer(fh.read(), dtype="<f8")
    if payload.size != int(np.prod(shape)):
        raise LdgError(f"{path}: payload size does not match header")
    meta = {"grid": grid, "kind": int(code), "time": time, "step": int(step), "extra": int(extra)}
    return payload.reshape(shape).astype(float), meta
