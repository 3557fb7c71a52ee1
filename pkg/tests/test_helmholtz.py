import numpy as np
import pytest

from helmfno.fdtd import AbsorbingBoundary, SourceSpec
from helmfno.helmholtz import (JO_C, JO_D, JO_E, assemble, cross_validate, greens_2d, relative_l2,
                               solve, wavenumber)
from helmfno.velocity import Grid, VelocityModel, constant_model, synthesize


def test_wavenumber_example():
    assert wavenumber(15.0, 1500.0) == pytest.approx(0.06283, abs=1e-5)


def test_mass_weights_sum_to_one():
    assert JO_C + 4 * JO_D + 4 * JO_E == pytest.approx(1.0, abs=1e-15)


@pytest.mark.parametrize("stencil", ["5pt", "9pt"])
def test_structure_and_row_sums(stencil):
    v = constant_model(Grid(12, 12), 2000.0)
    s = assemble(v, 10.0, AbsorbingBoundary(4), stencil)
    n = 20 * 20
    A = s.matrix.tocsr()
    assert A.shape == (n, n)
    assert np.diff(A.indptr).max() <= (9 if stencil == "9pt" else 5)
    assert np.all(A.diagonal() != 0)
    row = (A @ np.ones(n)).reshape(20, 20)
    k2 = wavenumber(10.0, 2000.0) ** 2
    assert np.allclose(row[6:-6, 6:-6], k2, rtol=1e-9)


def test_bad_inputs():
    v = constant_model(Grid(10, 10), 2000.0)
    with pytest.raises(ValueError):
        assemble(v, 0.0)
    with pytest.raises(ValueError):
        assemble(v, 10.0, stencil="7pt")
    with pytest.raises(ValueError):
        assemble(constant_model(Grid(10, 10, dz=5.0, dx=10.0), 2000.0), 10.0, stencil="9pt")


def _plane_wave_residual(h, stencil):
    n = int(round(400 / h))
    g = Grid(n, n, h, h)
    k = wavenumber(10.0, 2000.0)
    A = assemble(constant_model(g, 2000.0), 10.0, AbsorbingBoundary(0), stencil).matrix
    xx, zz = g.coordinates()
    u = np.exp(1j * k * (0.6 * xx + 0.8 * zz))
    r = (A @ u.ravel()).reshape(g.shape)[2:-2, 2:-2]
    return np.max(np.abs(r)) / k**2


def test_plane_wave_consistency():
    e5 = [_plane_wave_residual(h, "5pt") for h in (20.0, 10.0, 5.0)]
    e9 = [_plane_wave_residual(h, "9pt") for h in (20.0, 10.0, 5.0)]
    assert e5[0] / e5[1] > 3.0 and e5[1] / e5[2] > 3.0
    assert all(b < a for a, b in zip(e9, e9[1:]))
    assert all(b < a for a, b in zip(e5, e9))


@pytest.fixture(scope="module")
def homogeneous15():
    g = Grid()
    v = constant_model(g, 2000.0)
    system = assemble(v, 15.0)
    node = (35, 35)
    return g, system, node, solve(system, node).u


def test_zero_source(homogeneous15):
    g, system, node, _ = homogeneous15
    assert not np.any(solve(system, node, 0.0).u)


def test_residual_and_linearity(homogeneous15):
    g, system, node, u = homogeneous15
    assert system.meta["residual"] <= 1e-8
    a = 2.5 - 1.5j
    ua = solve(system, node, a).u
    assert np.max(np.abs(ua - a * u)) <= 1e-12 * np.max(np.abs(a * u))


def test_radial_decay(homogeneous15):
    g, system, node, u = homogeneous15
    xx, zz = g.coordinates()
    r = np.hypot(xx - 350, zz - 350)
    m = (r >= 100) & (r <= 300)
    slope = np.polyfit(np.log(r[m]), np.log(np.abs(u[m])), 1)[0]
    assert abs(slope + 0.5) <= 0.15


def _oracle(n, h, pad):
    g = Grid(n, n, h, h)
    node = (n // 2, n // 2)
    # same physical pad width and damping profile at every resolution
    u = solve(assemble(constant_model(g, 2000.0), 15.0, AbsorbingBoundary(pad, 0.18 / pad)), node).u
    ref = greens_2d(g, node, wavenumber(15.0, 2000.0))
    xx, zz = g.coordinates()
    r = np.hypot(xx - node[1] * h, zz - node[0] * h)
    return relative_l2(u, ref, r >= 2 * 2000.0 / 15.0)


def test_analytic_oracle_and_refinement():
    coarse, fine = _oracle(35, 20.0, 60), _oracle(70, 10.0, 120)
    assert fine <= 0.10
    assert fine <= 0.5 * coarse


def test_cross_validate_homogeneous_and_deterministic():
    v = constant_model(Grid(), 2000.0)
    a = cross_validate(v, SourceSpec(350, 350), 10.0)
    assert a["misfit"] <= 0.05 and a["residual"] <= 1e-8
    b = cross_validate(v, SourceSpec(350, 350), 10.0)
    assert a["misfit"] == b["misfit"]


def test_cross_validate_flat_a():
    v = synthesize("flat-A", Grid(), 1)
    assert cross_validate(v, SourceSpec(350, 10), 10.0)["misfit"] <= 0.08


def test_cross_validate_needs_integer_bin():
    with pytest.raises(ValueError):
        cross_validate(constant_model(Grid(10, 10), 2000.0), SourceSpec(50, 50), 10.5)


def test_heterogeneous_residual():
    v = VelocityModel(Grid(30, 30), synthesize("style-B", Grid(30, 30), 2).values)
    s = assemble(v, 20.0, AbsorbingBoundary(30))
    solve(s, (1, 15))
    assert s.meta["residual"] <= 1e-8
