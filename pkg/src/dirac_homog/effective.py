"""Effective 2x2 tensor from the cell correctors, its Pauli components and the two masses."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np

from .cells import CellSolution
from .errors import DegenerateMass
from .torus import spectral_gradient

log = logging.getLogger(__name__)

DEGENERACY_TOL = 1e-8
_SIGN = (1.0, -1.0)  # diagonal of sigma_3


def _cell_mean(a: np.ndarray) -> complex:
    return complex(a.mean())


def tau_from_WT(sol: CellSolution) -> np.ndarray:
    """``tau_km = (1/beta) <W_kn s_n T_nm>`` with ``s = diag(sigma_3)``; products taken as written, unconjugated."""
    tau = np.zeros((2, 2), dtype=complex)
    for k in range(2):
        for m in range(2):
            acc = 0.0
            for n in range(2):
                acc += _SIGN[n] * _cell_mean(sol.W[k][n].values * sol.T[n][m].values)
            tau[k, m] = acc / sol.beta
    return tau


def _gradients(sol: CellSolution):
    return [[spectral_gradient(sol.T[k][l]) for l in range(2)] for k in range(2)]


def _dot(ga, gb) -> complex:
    """Cell mean of ``grad a . grad b`` without conjugation."""
    return _cell_mean(ga[0].values * gb[0].values + ga[1].values * gb[1].values)


def tau_gradient_form(sol: CellSolution) -> np.ndarray:
    """Same tensor assembled from products of corrector gradients."""
    g = _gradients(sol)
    tau = np.zeros((2, 2), dtype=complex)
    for k in range(2):
        for m in range(2):
            tau[k, m] = sum(_SIGN[n] * _dot(g[k][n], g[n][m]) for n in range(2))
    return tau


def pauli_components(tau: np.ndarray) -> tuple[complex, complex, complex, complex]:
    """Coefficients of ``tau = t0 s0 + t1 s1 + t2 s2 + t3 s3``."""
    tau = np.asarray(tau, dtype=complex)
    t0 = 0.5 * (tau[0, 0] + tau[1, 1])
    t3 = 0.5 * (tau[0, 0] - tau[1, 1])
    t1 = 0.5 * (tau[0, 1] + tau[1, 0])
    t2 = 0.5j * (tau[0, 1] - tau[1, 0])
    return complex(t0), complex(t1), complex(t2), complex(t3)


def pauli_gradient_form(sol: CellSolution) -> tuple[complex, complex, complex, complex]:
    """Pauli components straight from gradient integrals, independent of the full matrix."""
    g = _gradients(sol)
    g11, g12, g21, g22 = g[0][0], g[0][1], g[1][0], g[1][1]
    a11 = _dot(g11, g11)
    a22 = _dot(g22, g22)
    x = _dot(g11, g12)
    y = _dot(g11, g21)
    u = _dot(g12, g22)
    v = _dot(g21, g22)
    t0 = 0.5 * (a11 - a22)
    t1 = 0.5 * (x + y - u - v)
    t2 = (-x + y + u - v) / 2j
    t3 = 0.5 * (a11 + a22 - 2 * _dot(g12, g21))
    return complex(t0), complex(t1), complex(t2), complex(t3)


def reconstruct(t0, t1, t2, t3) -> np.ndarray:
    return np.array([[t0 + t3, t1 - 1j * t2], [t1 + 1j * t2, t0 - t3]], dtype=complex)


@dataclass(frozen=True)
class MassPair:
    m_plus: float
    m_minus: float

    @property
    def transition(self) -> bool:
        return bool(np.sign(self.m_plus) != np.sign(self.m_minus))


def effective_masses(m: float, beta: float, tau3: float, tol: float = DEGENERACY_TOL) -> MassPair:
    """Masses above (unperturbed) and below (perturbed) the wall."""
    mp = float(m)
    mm = float(m + beta * np.real(tau3))
    for name, val in (("m_plus", mp), ("m_minus", mm)):
        if abs(val) < tol:
            raise DegenerateMass(f"{name} = {val:.3e} is below {tol:g}; the gap closes")
    return MassPair(mp, mm)


@dataclass(frozen=True, eq=False)
class EffectiveTensor:
    tau: np.ndarray = field(repr=False)
    tau0: complex
    tau1: complex
    tau2: complex
    tau3: complex
    m: float
    beta: float
    m_plus: float
    m_minus: float
    residuals: dict = field(default_factory=dict)

    @property
    def transition(self) -> bool:
        return bool(np.sign(self.m_plus) != np.sign(self.m_minus))

    @property
    def real_components(self) -> tuple[float, float, float, float]:
        return tuple(float(np.real(c)) for c in (self.tau0, self.tau1, self.tau2, self.tau3))

    @classmethod
    def from_matrix(cls, tau, m: float, beta: float, residuals: dict | None = None,
                    check_mass: bool = True) -> "EffectiveTensor":
        tau = np.asarray(tau, dtype=complex)
        comps = pauli_components(tau)
        imag = max(abs(np.imag(c)) for c in comps)
        if imag > 0:
            log.debug("imaginary residue of Pauli components: %.3e", imag)
        if check_mass:
            pair = effective_masses(m, beta, np.real(comps[3]))
            mp, mm = pair.m_plus, pair.m_minus
        else:
            mp, mm = float(m), float(m + beta * np.real(comps[3]))
        res = dict(residuals or {})
        res.setdefault("hermiticity", float(np.abs(tau - tau.conj().T).max()))
        res.setdefault("pauli_imag", float(imag))
        return cls(tau, *comps, m=float(m), beta=float(beta), m_plus=mp, m_minus=mm, residuals=res)

    @classmethod
    def zero(cls, m: float, beta: float) -> "EffectiveTensor":
        return cls.from_matrix(np.zeros((2, 2)), m, beta)

    def to_json(self) -> dict:
        t0, t1, t2, t3 = self.real_components
        return {
            "tau": [[float(v.real), float(v.imag)] for v in self.tau.ravel()],
            "tau0": t0,
            "tau1": t1,
            "tau2": t2,
            "tau3": t3,
            "m": self.m,
            "beta": self.beta,
            "m_plus": self.m_plus,
            "m_minus": self.m_minus,
            "transition": self.transition,
            "residuals": self.residuals,
        }

    @classmethod
    def from_json(cls, d: dict) -> "EffectiveTensor":
        tau = np.array([complex(re, im) for re, im in d["tau"]]).reshape(2, 2)
        return cls.from_matrix(tau, d["m"], d["beta"], residuals=d.get("residuals"), check_mass=False)


def effective_tensor(sol: CellSolution, m: float, beta: float | None = None,
                     check_mass: bool = True) -> EffectiveTensor:
    """Full tensor report with both quadrature routes cross-checked in ``residuals``."""
    beta = sol.beta if beta is None else beta
    tau = tau_from_WT(sol)
    tau_g = tau_gradient_form(sol)
    direct = np.array(pauli_gradient_form(sol))
    scale = 1.0 + np.abs(tau).max()
    residuals = {
        "dual_form": float(np.abs(tau - tau_g).max() / scale),
        "pauli_direct": float(np.abs(direct - np.array(pauli_components(tau))).max() / scale),
        "hermiticity": float(np.abs(tau - tau.conj().T).max() / scale),
    }
    return EffectiveTensor.from_matrix(tau, m, beta, residuals=residuals, check_mass=check_mass)


def dumps(t: EffectiveTensor) -> str:
    return json.dumps(t.to_json(), indent=2, sort_keys=True) + "\n"
