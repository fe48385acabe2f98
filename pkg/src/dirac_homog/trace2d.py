"""Direct evaluation of ``Tr 2 pi i [H, P] phi'(H)`` on a small Dirichlet box.

This is a loose cross-check of the band integral: the Hamiltonian is
discretised on ``(-L1, L1) x (-L2, L2)`` with second-order differences, ``P``
is a smoothed step in ``x1`` and the trace is restricted (through ``Q``, an
indicator in ``x2``) to a neighbourhood of the wall so that states living on
the outer Dirichlet boundaries are not counted.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .cells import PotentialSet, assemble_W
from .errors import BoxTooSmall, ValidationError
from .interface import DomainWallProfile, InterfaceModel, SwitchFunction, _quintic, window_eigenpairs
from .torus import trig_interpolate

DENSE_LIMIT = 2000

_S0 = sp.identity(2, format="csr")
_S1 = sp.csr_matrix(np.array([[0, 1], [1, 0]], dtype=complex))
_S2 = sp.csr_matrix(np.array([[0, -1j], [1j, 0]]))
_S3 = sp.csr_matrix(np.array([[1, 0], [0, -1]], dtype=complex))


@dataclass(frozen=True)
class Box:
    L1: float
    L2: float
    N1: int
    N2: int

    def __post_init__(self):
        if min(self.N1, self.N2) < 8 or min(self.L1, self.L2) <= 0:
            raise ValidationError("box needs positive half-widths and at least 8 points per axis")

    @classmethod
    def from_spacing(cls, L1: float, L2: float, h: float) -> "Box":
        return cls(L1, L2, int(round(2 * L1 / h)) - 1, int(round(2 * L2 / h)) - 1)

    def axes(self):
        x1 = np.linspace(-self.L1, self.L1, self.N1 + 2)[1:-1]
        x2 = np.linspace(-self.L2, self.L2, self.N2 + 2)[1:-1]
        return x1, x2

    def scaled(self, c: float) -> "Box":
        return Box(self.L1 * c, self.L2 * c, int(round((self.N1 + 1) * c)) - 1, int(round((self.N2 + 1) * c)) - 1)

    @property
    def dim(self) -> int:
        return 2 * self.N1 * self.N2


def _ops1d(n: int, h: float):
    e = np.ones(n - 1)
    D = sp.diags([-e, e], [-1, 1]) / (2 * h)
    D2 = sp.diags([e, -2 * np.ones(n), e], [-1, 0, 1]) / h**2
    return D.tocsr(), D2.tocsr()


@dataclass(frozen=True)
class OscillatoryPotential:
    """``(1/eps) rho(x2) W(x/eps)`` with ``W`` taken from a cell potential set."""

    potentials: PotentialSet
    epsilon: float


def box_hamiltonian(model: InterfaceModel, wall: DomainWallProfile, box: Box,
                    oscillatory: OscillatoryPotential | None = None) -> sp.csr_matrix:
    """Sparse Hermitian matrix; index ``s * N1 N2 + i1 * N2 + i2``.

    Without ``oscillatory`` the homogenized term ``beta rho^2 tau`` is used;
    with it, the rapidly oscillating potential replaces that term.
    """
    x1, x2 = box.axes()
    h1, h2 = x1[1] - x1[0], x2[1] - x2[0]
    D1, D11 = _ops1d(box.N1, h1)
    D2, D22 = _ops1d(box.N2, h2)
    I1, I2 = sp.identity(box.N1), sp.identity(box.N2)
    Dx, Dy = sp.kron(D1, I2), sp.kron(I1, D2)
    lap = sp.kron(D11, I2) + sp.kron(I1, D22)
    n = box.N1 * box.N2
    b = model.beta
    H = sp.kron(_S1, -1j * Dx) + sp.kron(_S2, -1j * Dy) + sp.kron(_S3, model.m * sp.identity(n) + b * lap)
    rho = np.tile(wall(x2), box.N1)
    if oscillatory is None:
        r2 = b * rho**2
        t0, t1, t2, t3 = model.tau
        for s, t in ((_S0, t0), (_S1, t1), (_S2, t2), (_S3, t3)):
            if t != 0:
                H = H + sp.kron(s, sp.diags(r2 * t))
    else:
        eps = oscillatory.epsilon
        W = assemble_W(oscillatory.potentials)
        y1 = np.mod(x1 / eps, 1.0)
        y2 = np.mod(x2 / eps, 1.0)
        blocks = [[None, None], [None, None]]
        for k in range(2):
            for l in range(2):
                vals = trig_interpolate(W[k][l], y1, y2).ravel() * rho / eps
                blocks[k][l] = sp.diags(vals)
        H = H + sp.bmat(blocks)
    H = H.tocsr()
    return (0.5 * (H + H.conj().T)).tocsr()


def switch_step(x: np.ndarray, x0: float, delta: float) -> np.ndarray:
    """0 for ``x <= x0 - delta``, 1 for ``x >= x0 + delta``, quintic in between."""
    return _quintic(np.clip((x - x0 + delta) / (2 * delta), 0.0, 1.0))


def _spectrum(H: sp.csr_matrix, m0: float):
    n = H.shape[0]
    if n <= DENSE_LIMIT:
        w, v = np.linalg.eigh(H.toarray())
        sel = np.abs(w) < m0
        return w[sel], v[:, sel]
    return window_eigenpairs(H, m0, k0=16)


def direct_trace_sigma(model: InterfaceModel, wall: DomainWallProfile, phi: SwitchFunction, box: Box,
                       x0: float = 0.0, oscillatory: OscillatoryPotential | None = None,
                       check: bool = False, drift_tol: float = 0.2) -> float:
    """``sum_n phi'(E_n) Re <v_n, Q 2 pi i [H, P] v_n>`` over eigenpairs with ``|E_n| < m0``."""
    H = box_hamiltonian(model, wall, box, oscillatory)
    x1, x2 = box.axes()
    delta = box.L1 / 8
    if not (-box.L1 < x0 - delta and x0 + delta < box.L1):
        raise ValidationError("switch region of P must lie inside the box")
    P = np.tile(np.repeat(switch_step(x1, x0, delta), box.N2), 2)
    lo, hi = wall.region
    X2 = np.tile(np.tile(x2, box.N1), 2)
    Q = ((X2 >= lo - box.L2 / 2) & (X2 <= hi + box.L2 / 2)).astype(float)
    C = H @ sp.diags(P) - sp.diags(P) @ H
    w, v = _spectrum(H, phi.m0)
    vals = np.real(np.einsum("ij,ij->j", v.conj(), Q[:, None] * (2j * np.pi * (C @ v))))
    sigma = float(np.sum(phi.dphi(w) * vals))
    if check:
        other = direct_trace_sigma(model, wall, phi, box.scaled(1.25), x0, oscillatory, check=False)
        if abs(other - sigma) > drift_tol:
            raise BoxTooSmall(f"trace drifts from {sigma:.4f} to {other:.4f} when the box grows by 25%")
    return sigma
