import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from dirac_homog.errors import IncompleteSupport, InsufficientResolution, ValidationError, WallOutOfDomain
from dirac_homog.interface import (
    InterfaceModel,
    SwitchFunction,
    build_wall,
    conductivity_band_integral,
    constant_wall,
    edge_bands,
    hermiticity_error,
    interface_report,
    spectral_flow,
    strip_operator,
    window_eigenpairs,
    write_bands_csv,
)


@given(st.floats(0.01, 2), st.sampled_from(["septic", "quintic"]))
def test_switch_function(m0, shape):
    phi = SwitchFunction(m0, shape)
    e = np.linspace(-1.5 * m0, 1.5 * m0, 601)
    p, d = phi.phi(e), phi.dphi(e)
    assert np.all(np.diff(p) >= -1e-12)
    assert phi.phi(-m0) == 0 and phi.phi(m0) == pytest.approx(1.0)
    assert np.all(d >= 0) and np.all(d[np.abs(e) >= m0] == 0)
    assert np.trapezoid(d, e) == pytest.approx(1.0, abs=1e-4)
    fd = np.gradient(p, e)
    assert np.abs(fd - d).max() <= 1e-2 / m0


def test_switch_validation():
    with pytest.raises(ValidationError):
        SwitchFunction(0.0)
    with pytest.raises(ValidationError):
        SwitchFunction(1.0, "cubic")


@given(st.floats(-5, -0.1), st.floats(0.1, 5), st.sampled_from(["smoothstep_quintic", "tanh_clamped"]))
def test_wall_profile(a, b, shape):
    w = build_wall(a, b, shape)
    x = np.linspace(a - 1, b + 1, 801)
    r = w(x)
    assert np.all((r >= 0) & (r <= 1))
    assert np.all(np.diff(r) <= 1e-15)
    assert np.all(r[x <= a] == 1) and np.all(r[x >= b] == 0)
    up = build_wall(a, b, shape, orientation="upper")
    assert np.allclose(up(x), build_wall(-b, -a, shape)(-x))
    assert np.all(up(x[x >= b]) == 1) and up.region == (a, b)


def test_wall_derivatives():
    w = build_wall(-1.0, 2.0)
    x = np.linspace(-1.5, 2.5, 4001)
    r, d1, d2 = w.derivatives(x)
    assert np.abs(np.gradient(r, x) - d1).max() < 1e-5
    # the third derivative jumps by 360/(b-a)^3 at the ends: the difference quotient is O(h) there
    assert np.abs(np.gradient(d1, x) - d2).max() < 360 / 27 * (x[1] - x[0])


def test_wall_errors():
    with pytest.raises(WallOutOfDomain):
        build_wall(0.5, 1.0)
    with pytest.raises(WallOutOfDomain):
        build_wall(-1.0, 27.0, L=30.0)
    with pytest.raises(ValidationError):
        build_wall(-1.0, 1.0, "cubic")


@given(st.floats(-2, 2), st.floats(-1, 1), st.lists(st.floats(-0.5, 0.5), min_size=4, max_size=4))
def test_strip_hermitian(xi1, m, tau):
    op = strip_operator(xi1, InterfaceModel(m, 1.0, tuple(tau)), build_wall(-1, 1), 10.0, 256)
    assert hermiticity_error(op) < 1e-14


def test_resolution_guard():
    model = InterfaceModel(-0.05, 1.0, (0, 0, 0, 0.2))
    with pytest.raises(InsufficientResolution):
        strip_operator(0.0, model, build_wall(-1, 1), 30.0, 128)
    with pytest.raises(InsufficientResolution):
        strip_operator(20.0, model, build_wall(-1, 1), 30.0, 256)


def test_window_eigenpairs_match_dense():
    op = strip_operator(0.4, InterfaceModel(-0.3, 1.0, (0.0, 0.0, 0.0, 0.6)), build_wall(-1, 1), 10.0, 256)
    w, _ = window_eigenpairs(op.matrix, 1.0)
    ref = np.linalg.eigvalsh(op.dense())
    assert np.allclose(w, ref[np.abs(ref) < 1.0], atol=1e-10)


@pytest.mark.parametrize("xi1", [-1.0, 0.0, 0.7])
def test_trivial_bulk_strip_has_no_gap_states(xi1):
    """rho = 0 with m < 0, beta > 0 is a trivial insulator: nothing inside (-|m|, |m|)."""
    op = strip_operator(xi1, InterfaceModel(-0.3, 1.0, (0, 0, 0, 0.6)), constant_wall(0.0), 30.0, 1024)
    w, _ = window_eigenpairs(op.matrix, 0.29)
    assert len(w) == 0


def test_transition_flow_and_sigma(transition_bands, tmp_path):
    assert spectral_flow(transition_bands) == 1
    sigma = conductivity_band_integral(transition_bands, SwitchFunction(transition_bands.m0))
    assert sigma == pytest.approx(1.0, abs=0.05)
    for level in (-0.02, 0.03):
        assert spectral_flow(transition_bands, level) == 1
    with pytest.raises(ValidationError):
        spectral_flow(transition_bands, 0.2)
    write_bands_csv(transition_bands, tmp_path / "bands.csv")
    rows = np.loadtxt(tmp_path / "bands.csv", delimiter=",", skiprows=1)
    assert rows.shape[1] == 4 and len(rows) > 0
    rep = interface_report(transition_bands, SwitchFunction(transition_bands.m0), "abc")
    assert json.loads(json.dumps(rep))["spectral_flow"] == 1


def test_quintic_switch_agrees(transition_bands):
    sigma = conductivity_band_integral(transition_bands, SwitchFunction(transition_bands.m0, "quintic"))
    assert sigma == pytest.approx(1.0, abs=0.05)


def test_incomplete_support(transition_tensor):
    model = InterfaceModel.from_tensor(transition_tensor)
    bands = edge_bands(model, build_wall(-1, 1), (-0.02, 0.02), steps=5, L=30.0, N=1024, refine=False)
    with pytest.raises(IncompleteSupport):
        conductivity_band_integral(bands, SwitchFunction(bands.m0))


@pytest.mark.parametrize("m_plus, m_minus, flow", [(-0.3, 0.3, 1), (0.3, -0.3, -1), (0.3, 0.6, 0), (-0.3, -0.6, 0)])
def test_sign_patterns(m_plus, m_minus, flow):
    model = InterfaceModel(m_plus, 1.0, (0.0, 0.0, 0.0, m_minus - m_plus))
    bands = edge_bands(model, build_wall(-1, 1), steps=61, L=30.0, N=1024)
    assert model.expected_flow() == flow
    assert spectral_flow(bands) == flow
    assert conductivity_band_integral(bands, SwitchFunction(bands.m0)) == pytest.approx(flow, abs=0.05)


def test_mirrored_wall_reverses_flow(transition_tensor):
    model = InterfaceModel.from_tensor(transition_tensor)
    bands = edge_bands(model, build_wall(-1, 1, orientation="upper"), steps=61, L=30.0, N=1024)
    assert spectral_flow(bands) == -1


@pytest.mark.slow
def test_sign_reversed_small_masses():
    """m+ = 0.05, m- = -0.1526: the interface mode needs a wide strip to separate from the boundary."""
    model = InterfaceModel(0.05, 1.0, (0.0, 0.0, 0.0, -2 / np.pi**2))
    bands = edge_bands(model, build_wall(-1, 1), steps=121, L=90.0, N=3072)
    assert spectral_flow(bands) == -1
    assert conductivity_band_integral(bands, SwitchFunction(bands.m0)) == pytest.approx(-1.0, abs=0.05)
