import numpy as np
import pytest
from hypothesis import given, strategies as st

from helmfno.velocity import (FAMILIES, V_MAX, V_MIN, FamilySpec, Grid, VelocityModel,
                              constant_model, default_spec, gaussian_smooth,
                              set_first_layer_velocity, synth_fault, synth_flat, synth_style,
                              synthesize, top_layer_mask, total_variation)

seeds = st.integers(min_value=0, max_value=2**31 - 1)


def test_grid_invariants():
    with pytest.raises(ValueError):
        Grid(4, 70)
    with pytest.raises(ValueError):
        Grid(70, 70, dz=0.0)
    g = Grid.parse("70x70")
    assert g.shape == (70, 70) and g.dx == 10.0


def test_grid_coordinates_three_by_three():
    xx, zz = Grid(5, 5, 100.0, 100.0).coordinates()
    assert list(xx[0, :3]) == [0.0, 100.0, 200.0]
    assert list(zz[:3, 0]) == [0.0, 100.0, 200.0]


def test_snap_outside_raises():
    g = Grid()
    assert g.snap(172.5, 10.0) in ((1, 17), (1, 18))
    with pytest.raises(ValueError):
        g.snap(-50.0, 0.0)


def test_model_rejects_bad_values():
    g = Grid(5, 5)
    with pytest.raises(ValueError):
        VelocityModel(g, np.zeros(g.shape))
    with pytest.raises(ValueError):
        VelocityModel(g, np.full((4, 5), 2000.0))


def test_family_spec_validation():
    with pytest.raises(ValueError):
        FamilySpec("flat-C")
    with pytest.raises(ValueError):
        FamilySpec("flat-A", layers=(5, 3))
    spec = default_spec("fault-B")
    assert FamilySpec.from_dict(spec.to_dict()) == spec


@given(seeds)
def test_flat_a_lateral_and_monotone(seed):
    v = synth_flat(default_spec("flat-A"), Grid(), seed).values
    assert np.all(v == v[:, :1])
    assert np.all(np.diff(v[:, 0]) >= 0)


def test_flat_b_seed7_in_bounds():
    v = synth_flat(default_spec("flat-B"), Grid(), 7).values
    assert v.min() >= V_MIN and v.max() <= V_MAX


def test_wrong_kind_errors():
    g = Grid()
    with pytest.raises(ValueError):
        synth_flat(default_spec("fault-A"), g, 0)
    with pytest.raises(ValueError):
        synth_fault(default_spec("flat-A"), g, 0)
    with pytest.raises(ValueError):
        synth_style(default_spec("flat-B"), g, 0)


def test_zero_throw_is_background():
    spec = default_spec("fault-A")
    a = synth_fault(spec, Grid(), 3, throw=0).values
    # the background has no lateral jump larger than interface undulation allows
    b = synth_fault(spec, Grid(), 3, throw=0).values
    assert np.array_equal(a, b)
    assert synth_fault(spec, Grid(), 3, throw=0).meta["throw"] == 0
    # unfaulted: every column reads the same layer sequence (no repeated layers)
    for col in a.T:
        vals = col[np.r_[True, np.diff(col) != 0]]
        assert len(vals) == len(set(vals))


def test_fault_a_seed3_has_lateral_jump():
    v = synth_fault(default_spec("fault-A"), Grid(), 3).values
    bg = synth_fault(default_spec("fault-A"), Grid(), 3, throw=0).values
    jump = np.abs(np.diff(v, axis=1)).max()
    assert jump > 0
    # the faulted model differs from its background only through the offset
    assert not np.array_equal(v, bg)


def test_fault_b_has_at_least_as_many_layers():
    for seed in range(20):
        a = np.unique(synthesize("fault-A", Grid(), seed).values).size
        b = np.unique(synthesize("fault-B", Grid(), seed).values).size
        assert b >= a


def test_style_a_smoother_than_style_b():
    for seed in range(5):
        a = synthesize("style-A", Grid(), seed).values
        b = synthesize("style-B", Grid(), seed).values
        ga = np.abs(np.diff(a, axis=0)).mean() + np.abs(np.diff(a, axis=1)).mean()
        gb = np.abs(np.diff(b, axis=0)).mean() + np.abs(np.diff(b, axis=1)).mean()
        assert ga < gb


def test_style_infinite_smoothness_is_constant():
    v = synth_style(FamilySpec("style-A", smoothness=float("inf")), Grid(), 1)
    assert total_variation(v.values) == 0.0


def test_style_a_seed11_bounds():
    v = synthesize("style-A", Grid(), 11).values
    assert v.min() >= V_MIN and v.max() <= V_MAX


@pytest.mark.parametrize("kind", FAMILIES)
def test_bounds_scan_1000(kind):
    g = Grid()
    lo, hi = np.inf, -np.inf
    for seed in range(1000):
        v = synthesize(kind, g, seed).values
        lo, hi = min(lo, v.min()), max(hi, v.max())
    assert lo >= V_MIN and hi <= V_MAX


@given(seeds, st.sampled_from(FAMILIES))
def test_determinism(seed, kind):
    assert np.array_equal(synthesize(kind, Grid(), seed).values,
                          synthesize(kind, Grid(), seed).values)


def test_smooth_identity_and_constant():
    v = synthesize("fault-A", Grid(), 2)
    assert np.array_equal(gaussian_smooth(v, 0).values, v.values)
    c = constant_model(Grid(), 2500.0)
    assert np.allclose(gaussian_smooth(c, 4.0).values, 2500.0, rtol=0, atol=1e-9)
    with pytest.raises(ValueError):
        gaussian_smooth(v, -1.0)


def test_smooth_reduces_lateral_gradient():
    v = synthesize("fault-A", Grid(), 4)
    s = gaussian_smooth(v, 10.0)
    assert np.abs(np.diff(s.values, axis=1)).max() < np.abs(np.diff(v.values, axis=1)).max()


@given(seeds, st.floats(0.5, 6.0))
def test_smooth_range_and_monotone_tv(seed, sigma):
    v = synthesize("flat-B", Grid(), seed)
    s1 = gaussian_smooth(v, sigma)
    s2 = gaussian_smooth(s1, sigma)
    assert s1.values.min() >= v.values.min() and s1.values.max() <= v.values.max()
    assert total_variation(s2.values) <= total_variation(s1.values) + 1e-6


def test_smooth_mean_preserved_on_interior_model():
    g = Grid()
    xx, zz = g.coordinates()
    bump = 2500.0 + 500.0 * np.exp(-((xx - 345) ** 2 + (zz - 345) ** 2) / (2 * 80.0**2))
    v = VelocityModel(g, bump)
    s = gaussian_smooth(v, 3.0)
    assert abs(s.values.mean() - v.values.mean()) / v.values.mean() < 0.01


def test_first_layer_replacement():
    g = Grid()
    col = np.r_[np.full(12, 1645.0), np.full(30, 2800.0), np.full(28, 3600.0)]
    v = VelocityModel(g, np.repeat(col[:, None], 70, axis=1))
    out = set_first_layer_velocity(v, 2250.0)
    assert np.all(out.values[:12] == 2250.0)
    assert np.array_equal(out.values[12:], v.values[12:])
    assert np.array_equal(set_first_layer_velocity(v, 1645.0).values, v.values)
    assert out.values.min() >= V_MIN and out.values.max() <= V_MAX


def test_first_layer_requires_constant_top():
    v = synthesize("style-B", Grid(), 0)
    with pytest.raises(ValueError):
        top_layer_mask(v)
