import numpy as np
import pytest
from hypothesis import given, strategies as st

from dirac_homog.errors import GridMismatch, NonZeroMean, ValidationError
from dirac_homog.torus import (
    PeriodicField,
    PeriodicGrid,
    divergence,
    invert_laplacian,
    l2_inner,
    l2_norm,
    laplacian,
    read_field_csv,
    sample,
    spectral_gradient,
    trig_interpolate,
    write_field_csv,
)

modes = st.tuples(st.integers(-5, 5), st.integers(-5, 5)).filter(lambda k: k != (0, 0))
amps = st.floats(-3, 3, allow_nan=False).filter(lambda a: abs(a) > 1e-3)


def trig_field(grid, terms):
    y1, y2 = grid.mesh()
    vals = sum(a * np.cos(2 * np.pi * (k1 * y1 + k2 * y2)) for (k1, k2), a in terms)
    return PeriodicField(grid, vals)


def test_grid_rejects_odd_and_small():
    with pytest.raises(ValidationError):
        PeriodicGrid(31)
    with pytest.raises(ValidationError):
        PeriodicGrid(4)


def test_single_mode_inverse():
    g = PeriodicGrid(64)
    f = sample(g, lambda y1, y2: np.cos(2 * np.pi * y1))
    u = invert_laplacian(f)
    exact = -np.cos(2 * np.pi * g.mesh()[0]) / (4 * np.pi**2)
    assert np.abs(u.values - exact).max() < 1e-15


def test_nonzero_mean_rejected():
    g = PeriodicGrid(16)
    with pytest.raises(NonZeroMean):
        invert_laplacian(sample(g, lambda y1, y2: 1 + np.cos(2 * np.pi * y1)))


def test_grid_mismatch():
    with pytest.raises(GridMismatch):
        PeriodicField.zeros(PeriodicGrid(16)) + PeriodicField.zeros(PeriodicGrid(32))


@given(st.lists(st.tuples(modes, amps), min_size=1, max_size=4))
def test_laplacian_roundtrip(terms):
    g = PeriodicGrid(32)
    f = trig_field(g, terms)
    if f.max_abs() < 1e-6:
        return
    u = invert_laplacian(f)
    assert abs(u.mean()) < 1e-14
    assert l2_norm(laplacian(u) - f) <= 1e-12 * max(1.0, l2_norm(f))


@given(st.lists(st.tuples(modes, amps), min_size=1, max_size=4))
def test_divergence_of_gradient_is_laplacian(terms):
    g = PeriodicGrid(32)
    f = trig_field(g, terms)
    d = divergence(*spectral_gradient(f)) - laplacian(f)
    assert d.max_abs() <= 1e-9 * max(1.0, laplacian(f).max_abs())


@given(st.lists(st.tuples(modes, amps), min_size=1, max_size=3))
def test_integration_by_parts(terms):
    g = PeriodicGrid(32)
    f = trig_field(g, terms)
    gx, gy = spectral_gradient(f)
    lhs = l2_inner(laplacian(f), f)
    rhs = -(l2_inner(gx, gx) + l2_inner(gy, gy))
    assert abs(lhs - rhs) <= 1e-10 * max(1.0, abs(rhs))


@given(st.lists(st.tuples(modes, amps), min_size=1, max_size=3),
       st.lists(st.floats(0, 1, allow_nan=False), min_size=1, max_size=5))
def test_trig_interpolation_exact_off_grid(terms, pts):
    g = PeriodicGrid(32)
    f = trig_field(g, terms)
    y1 = np.array(pts)
    y2 = np.array(pts[::-1])
    got = trig_interpolate(f, y1, y2)
    Y1, Y2 = np.meshgrid(y1, y2, indexing="ij")
    want = sum(a * np.cos(2 * np.pi * (k1 * Y1 + k2 * Y2)) for (k1, k2), a in terms)
    assert np.abs(got - want).max() <= 1e-10 * max(1.0, np.abs(want).max())


def test_interpolation_reproduces_nodes(rng):
    g = PeriodicGrid(16)
    f = PeriodicField(g, rng.standard_normal((16, 16)))
    got = trig_interpolate(f, g.nodes, g.nodes)
    assert np.abs(got - f.values).max() < 1e-12


def test_csv_roundtrip(tmp_path, rng):
    g = PeriodicGrid(8)
    f = PeriodicField(g, rng.standard_normal((8, 8)) + 1j * rng.standard_normal((8, 8)))
    write_field_csv(f, tmp_path / "f.csv", "test field")
    back = read_field_csv(tmp_path / "f.csv")
    assert back.grid == g
    assert np.abs(back.values - f.values).max() < 1e-14
