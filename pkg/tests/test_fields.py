import numpy as np
import pytest

from ldgflow import fields as fl
from ldgflow.errors import LdgError
from oracles import random_real_trig_coeffs, trig_product_on_grid, trig_synthesis


def test_grid_validation():
    with pytest.raises(ValueError):
        fl.Grid(12, 2)
    with pytest.raises(ValueError):
        fl.Grid(16, 4)
    g = fl.Grid(16, 3)
    assert g.shape == (16, 16, 16)
    assert g.volume == pytest.approx((2 * np.pi) ** 3)
    assert g.coords[0][0, 0, 0] == -np.pi


@pytest.mark.parametrize("dim", [2, 3])
def test_derivatives_of_trig_polynomials(dim):
    g = fl.Grid(16, dim)
    x = g.coords
    f = np.sin(2 * x[0]) * np.cos(3 * x[1])
    df = fl.grad(f, g)
    np.testing.assert_allclose(df[0], 2 * np.cos(2 * x[0]) * np.cos(3 * x[1]), atol=1e-12)
    np.testing.assert_allclose(df[1], -3 * np.sin(2 * x[0]) * np.sin(3 * x[1]), atol=1e-12)
    np.testing.assert_allclose(df[2], 0.0, atol=1e-12)
    np.testing.assert_allclose(fl.laplacian(f, g), -13 * f, atol=1e-11)


def test_fft_round_trip(rng):
    g = fl.Grid(32, 2)
    f = rng.standard_normal(g.shape)
    assert np.max(np.abs(g.ifft(g.fft(f)) - f)) <= 1e-13


def test_velocity_gradient_layout():
    g = fl.Grid(16, 2)
    x = g.coords
    u = np.array([np.sin(x[1]), np.zeros(g.shape), np.zeros(g.shape)])
    gu = fl.velocity_gradient(u, g)
    # g[i, j] = d_j u_i
    np.testing.assert_allclose(gu[0, 1], np.cos(x[1]), atol=1e-13)
    np.testing.assert_allclose(gu[1, 0], 0.0, atol=1e-13)


def test_leray_split(rng):
    g = fl.Grid(16, 3)
    u = rng.standard_normal((3,) + g.shape)
    pu, comp = fl.leray_project(u, g)
    np.testing.assert_allclose(pu + comp, u, atol=1e-12)
    assert np.max(np.abs(fl.div(pu, g))) < 1e-10
    # orthogonality of the two parts
    assert abs(np.sum(pu * comp)) < 1e-9 * np.sum(u * u)


def test_pressure_solves_poisson():
    g = fl.Grid(16, 2)
    x = g.coords
    rhs = np.cos(x[0]) * np.sin(2 * x[1])
    p = fl.pressure_from_divergence(g.fft(rhs), g)
    np.testing.assert_allclose(fl.laplacian(p, g), rhs, atol=1e-12)
    assert abs(np.mean(p)) < 1e-15


def test_mollifier_properties(rng):
    g = fl.Grid(16, 2)
    f = rng.standard_normal(g.shape)
    np.testing.assert_array_equal(fl.mollify(f, g, 0.0), f)
    m = fl.mollify(f, g, 0.3)
    assert np.mean(m) == pytest.approx(np.mean(f), abs=1e-14)
    assert np.sum(m * m) < np.sum(f * f)
    x = g.coords
    np.testing.assert_allclose(fl.mollify(np.sin(x[0]), g, 0.3),
                               np.exp(-0.045) * np.sin(x[0]), atol=1e-14)
    with pytest.raises(ValueError):
        fl.mollify(f, g, -1.0)


def test_dealiased_product_against_direct_convolution():
    n = 32
    g = fl.Grid(n, 2)
    rng = np.random.default_rng(7)
    kmax = n // 3
    ca = random_real_trig_coeffs(rng, kmax)
    cb = random_real_trig_coeffs(rng, kmax)
    a, b = trig_synthesis(ca, n), trig_synthesis(cb, n)
    exact = trig_product_on_grid(ca, cb, n, kmax)
    got = fl.dealias(a * b, g)
    assert np.max(np.abs(got - exact)) <= 1e-12 * np.max(np.abs(exact))


def test_grid_integral_and_parseval(rng):
    g = fl.Grid(16, 2)
    x = g.coords
    assert fl.grid_integral(np.cos(x[0]) ** 2, g) == pytest.approx(2 * np.pi ** 2, rel=1e-14)
    f = rng.standard_normal(g.shape)
    assert fl.spectral_energy(f, g) == pytest.approx(np.sum(f * f), rel=1e-12)


@pytest.mark.parametrize("kind,lead", [("scalar", ()), ("vector", (3,)), ("qtensor", (5,)),
                                       ("gradq", (3, 5)), ("state", (10,))])
def test_snapshot_round_trip(tmp_path, rng, kind, lead):
    g = fl.Grid(8, 3)
    data = rng.standard_normal(lead + g.shape)
    path = tmp_path / "s.bin"
    fl.write_snapshot(path, data, g, kind, time=0.125, step=7, extra=3)
    assert path.stat().st_size == 64 + data.size * 8
    back, meta = fl.read_snapshot(path)
    assert back.tobytes() == data.tobytes()
    assert meta == {"grid": g, "kind": fl.KINDS[kind], "time": 0.125, "step": 7, "extra": 3}


def test_snapshot_rejects_bad_files(tmp_path, rng):
    g = fl.Grid(8, 2)
    with pytest.raises(ValueError):
        fl.write_snapshot(tmp_path / "x.bin", rng.standard_normal(g.shape), g, "vector")
    bad = tmp_path / "bad.bin"
    bad.write_bytes(b"\0" * 80)
    with pytest.raises(LdgError):
        fl.read_snapshot(bad)
    path = tmp_path / "t.bin"
    fl.write_snapshot(path, rng.standard_normal(g.shape), g, "scalar")
    path.write_bytes(path.read_bytes()[:-8])
    with pytest.raises(LdgError):
        fl.read_snapshot(path)
