import numpy as np
import pytest
from hypothesis import given, strategies as st

from dirac_homog.cells import (
    PotentialSet,
    dump_cell_solution,
    load_cell_solution,
    phi_divergence_error,
    random_potentials,
    solve_cells,
    verify_t_decomposition,
)
from dirac_homog.errors import GridMismatch, NonZeroMean, ValidationError, ZeroBeta
from dirac_homog.torus import PeriodicField, PeriodicGrid, l2_norm


def test_single_mode_corrector(grid64):
    p = PotentialSet.from_expressions(grid64, {"V0": "cos(2*pi*y1)"})
    sol = solve_cells(p, 1.0)
    exact = np.cos(2 * np.pi * grid64.mesh()[0]) / (4 * np.pi**2)
    for k in range(2):
        err = sol.T[k][k].values - exact
        assert np.sqrt(np.mean(np.abs(err) ** 2)) / np.sqrt(np.mean(exact**2)) < 1e-10
    assert sol.T[0][1].max_abs() == 0.0


def test_zero_beta(grid64):
    with pytest.raises(ZeroBeta):
        solve_cells(PotentialSet.zeros(grid64), 0.0)


def test_nonzero_mean_potential(grid64):
    with pytest.raises(NonZeroMean):
        PotentialSet.from_expressions(grid64, {"V0": "1 + cos(2*pi*y1)"})


def test_complex_potential_rejected(grid64):
    z = PeriodicField.zeros(grid64)
    with pytest.raises(ValidationError):
        PotentialSet(PeriodicField(grid64, 1j * np.cos(2 * np.pi * grid64.mesh()[0])), z, z, z)


def test_mixed_grids():
    a, b = PeriodicGrid(16), PeriodicGrid(32)
    with pytest.raises(GridMismatch):
        PotentialSet(PeriodicField.zeros(a), PeriodicField.zeros(b), PeriodicField.zeros(a), PeriodicField.zeros(a))


def test_zero_potentials_give_zero_correctors(grid64):
    sol = solve_cells(PotentialSet.zeros(grid64), 1.0)
    assert all(sol.T[k][l].max_abs() == 0 for k in range(2) for l in range(2))


@given(st.integers(0, 10_000), st.sampled_from([-2.0, -0.5, 0.5, 1.0, 3.0]))
def test_residuals_and_structure(seed, beta):
    g = PeriodicGrid(32)
    p = random_potentials(g, np.random.default_rng(seed))
    sol = solve_cells(p, beta)
    assert max(sol.residuals.values()) < 1e-10
    assert verify_t_decomposition(sol) < 1e-12
    assert phi_divergence_error(sol) < 1e-10
    for k in range(2):
        for l in range(2):
            assert abs(sol.T[k][l].mean()) < 1e-14
    # Hermitian structure carries over: T_21 = conj(T_12), diagonal real
    assert np.abs(sol.T[1][0].values - np.conj(sol.T[0][1].values)).max() < 1e-12
    assert np.abs(sol.T[0][0].values.imag).max() < 1e-12


@given(st.integers(0, 10_000), st.floats(-3, 3).filter(lambda c: abs(c) > 0.1))
def test_linearity(seed, c):
    g = PeriodicGrid(16)
    p = random_potentials(g, np.random.default_rng(seed), kmax=2)
    a = solve_cells(p, 1.0)
    b = solve_cells(p.scaled(c), 1.0)
    for k in range(2):
        for l in range(2):
            assert l2_norm(b.T[k][l] - a.T[k][l] * c) <= 1e-12 * max(1.0, l2_norm(b.T[k][l]))


def test_dump_roundtrip(tmp_path, rng):
    p = random_potentials(PeriodicGrid(16), rng, kmax=2)
    sol = solve_cells(p, 0.7)
    dump_cell_solution(sol, tmp_path / "cell")
    back = load_cell_solution(tmp_path / "cell")
    assert back.beta == sol.beta
    for k in range(2):
        for l in range(2):
            assert np.abs(back.T[k][l].values - sol.T[k][l].values).max() < 1e-15
            assert np.abs(back.W[k][l].values - sol.W[k][l].values).max() < 1e-15
