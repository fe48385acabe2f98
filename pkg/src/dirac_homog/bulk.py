"""Constant-coefficient two-band symbols: bands, gaps and Chern numbers.

The traceless part of the symbol is ``h(xi) = (xi1 + c1, xi2 + c2, M - beta |xi|^2)``
with ``c = beta (tau1, tau2)`` and ``M = m + beta tau3``; ``beta tau0`` shifts both bands.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import minimize_scalar

from .effective import EffectiveTensor
from .errors import NoCommonGap, NoGap, NotQuantized, ZeroBeta

GAP_TOL = 1e-10
QUANT_TOL = 1e-3


@dataclass(frozen=True)
class BulkModel:
    m: float
    beta: float
    tau0: float = 0.0
    tau1: float = 0.0
    tau2: float = 0.0
    tau3: float = 0.0
    label: str = "unperturbed"

    def __post_init__(self):
        if self.beta == 0 or not np.isfinite(self.beta):
            raise ZeroBeta("beta must be nonzero and finite")

    @classmethod
    def unperturbed(cls, m: float, beta: float) -> "BulkModel":
        return cls(float(m), float(beta))

    @classmethod
    def homogenized(cls, t: EffectiveTensor) -> "BulkModel":
        t0, t1, t2, t3 = t.real_components
        return cls(t.m, t.beta, t0, t1, t2, t3, label="homogenized_bulk")

    @property
    def m_eff(self) -> float:
        return self.m + self.beta * self.tau3

    @property
    def shift(self) -> np.ndarray:
        return self.beta * np.array([self.tau1, self.tau2])

    @property
    def energy_shift(self) -> float:
        return self.beta * self.tau0

    @property
    def tau_matrix(self) -> np.ndarray:
        t0, t1, t2, t3 = self.tau0, self.tau1, self.tau2, self.tau3
        return np.array([[t0 + t3, t1 - 1j * t2], [t1 + 1j * t2, t0 - t3]])

    def h_vector(self, xi) -> np.ndarray:
        xi = np.asarray(xi, dtype=float)
        c = self.shift
        r2 = xi[..., 0] ** 2 + xi[..., 1] ** 2
        return np.stack([xi[..., 0] + c[0], xi[..., 1] + c[1], self.m_eff - self.beta * r2], axis=-1)

    def symbol(self, xi) -> np.ndarray:
        """2x2 Hermitian symbol (only for a single momentum)."""
        hx, hy, hz = self.h_vector(xi)
        e0 = self.energy_shift
        return np.array([[e0 + hz, hx - 1j * hy], [hx + 1j * hy, e0 - hz]])

    def to_json(self) -> dict:
        return {"label": self.label, "m": self.m, "beta": self.beta, "m_eff": self.m_eff,
                "tau": [self.tau0, self.tau1, self.tau2, self.tau3]}


def symbol_eigenvalues(model: BulkModel, xi) -> tuple[np.ndarray, np.ndarray]:
    """Lower and upper band energies; ``xi`` has trailing dimension 2."""
    h = model.h_vector(xi)
    r = np.sqrt((h**2).sum(axis=-1))
    e0 = model.energy_shift
    return e0 - r, e0 + r


def characteristic_polynomial(model: BulkModel, s, xi) -> np.ndarray:
    """``det(s - symbol(xi))`` written out in the entries of the tau matrix."""
    xi = np.asarray(xi, dtype=float)
    b = model.beta
    tau = model.tau_matrix
    t11, t22, t12 = tau[0, 0].real, tau[1, 1].real, tau[0, 1]
    a = model.m - b * (xi[..., 0] ** 2 + xi[..., 1] ** 2)
    off = np.abs(xi[..., 0] - 1j * xi[..., 1] + b * t12) ** 2
    return s**2 - b * (t11 + t22) * s - (a**2 + b * a * (t11 - t22) - b**2 * t11 * t22) - off


def _radial_profile(model: BulkModel):
    c = np.hypot(*model.shift)
    M, b = model.m_eff, model.beta

    def f(r):
        return (r - c) ** 2 + (M - b * r * r) ** 2

    return f, c


def min_gap_halfwidth(model: BulkModel) -> float:
    """``min_xi |h(xi)|``: after optimising the direction only ``|xi|`` remains."""
    f, c = _radial_profile(model)
    M, b = model.m_eff, model.beta
    rmax = 2.0 * (c + np.sqrt(abs(M / b)) + 1.0 / abs(b) + 1.0)
    r = np.linspace(0.0, rmax, 4001)
    i = int(np.argmin(f(r)))
    lo, hi = r[max(i - 1, 0)], r[min(i + 1, len(r) - 1)]
    best = float(f(r[i]))
    if hi > lo:
        res = minimize_scalar(f, bounds=(lo, hi), method="bounded", options={"xatol": 1e-13})
        best = min(best, float(res.fun))
    return float(np.sqrt(max(best, 0.0)))


@dataclass(frozen=True)
class Gap:
    lower: float
    upper: float
    halfwidth: float


def find_gap(model: BulkModel, tol: float = GAP_TOL) -> Gap:
    """``(sup E_-, inf E_+)`` of a bulk model; NoGap when the bands touch."""
    g = min_gap_halfwidth(model)
    if 2 * g <= tol:
        raise NoGap(f"{model.label}: bands touch (min |h| = {g:.3e})")
    e0 = model.energy_shift
    return Gap(e0 - g, e0 + g, g)


@dataclass(frozen=True)
class GapReport:
    gap_lower: float
    gap_upper: float
    m0: float
    per_model: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"gap": [self.gap_lower, self.gap_upper], "m0": self.m0, "per_model": self.per_model}


def common_gap(a: BulkModel, b: BulkModel) -> GapReport:
    per = {}
    gaps = []
    for key, model in (("A", a), ("B", b)):
        try:
            g = find_gap(model)
        except NoGap as exc:
            raise NoCommonGap(str(exc)) from exc
        gaps.append(g)
        per[key] = {"label": model.label, "sup_E_minus": g.lower, "inf_E_plus": g.upper}
    lo = max(g.lower for g in gaps)
    hi = min(g.upper for g in gaps)
    if not (lo < 0.0 < hi):
        raise NoCommonGap(f"intersection ({lo:.6g}, {hi:.6g}) does not contain 0")
    return GapReport(lo, hi, min(-lo, hi), per)


# ---------------------------------------------------------------- Chern number

def _gauss_panels(edges: np.ndarray, order: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(order)
    a, b = edges[:-1, None], edges[1:, None]
    nodes = 0.5 * (b - a) * x + 0.5 * (b + a)
    weights = 0.5 * (b - a) * w
    return nodes.ravel(), weights.ravel()


def _radial_edges(model: BulkModel, R: float, refine: int) -> np.ndarray:
    M, b = model.m_eff, model.beta
    g = max(min_gap_halfwidth(model), 1e-12)
    c = np.hypot(*model.shift)
    scales = [g, abs(M), np.sqrt(abs(M / b)), 1.0 / abs(b)]
    if c > 0:
        scales.append(c)
    s = 0.02 * min(scales)
    ratio = 2.0 ** (1.0 / refine)
    edges = [0.0, s]
    while edges[-1] * ratio < R:
        edges.append(edges[-1] * ratio)
    edges.append(R)
    # resolve the ring M = beta |xi|^2 and the shifted centre with finer panels
    marks = [np.sqrt(M / b) if M / b > 0 else None]
    marks += [c + np.sqrt(M / b) if M / b > 0 else None, c]
    extra = []
    for r0 in marks:
        if r0 and 0 < r0 < R:
            extra.extend(r0 + g * np.linspace(-2.0, 2.0, 9))
    edges = np.unique(np.clip(np.concatenate([edges, extra]), 0.0, R))
    return edges


@dataclass(frozen=True)
class ChernResult:
    raw: float
    value: int
    interior: float
    tail: float
    R: float

    def to_json(self) -> dict:
        return {"raw": self.raw, "value": self.value, "interior": self.interior, "tail": self.tail, "R": self.R}


def chern_integrand(model: BulkModel, xi) -> np.ndarray:
    """Berry curvature density ``h.(d1 h x d2 h) / (4 pi |h|^3)``."""
    xi = np.asarray(xi, dtype=float)
    h = model.h_vector(xi)
    b = model.beta
    c = model.shift
    num = model.m_eff + b * (xi[..., 0] ** 2 + xi[..., 1] ** 2) + 2 * b * (c[0] * xi[..., 0] + c[1] * xi[..., 1])
    return num / (4 * np.pi * np.sqrt((h**2).sum(axis=-1)) ** 3)


def chern_raw(model: BulkModel, R: float | None = None, n_angle: int = 256, order: int = 16,
              refine: int = 1) -> ChernResult:
    """Raw Chern integral of the lower band.

    Polar quadrature on the disc ``|xi + c| <= R`` (centred where the in-plane
    part of ``h`` vanishes) with graded Gauss-Legendre panels in radius and the
    trapezoid rule in angle; the exterior is added exactly as a boundary
    integral, since there ``h`` only sweeps a polar cap of the sphere.
    """
    M, b = model.m_eff, model.beta
    c = model.shift
    cn = float(np.hypot(*c))
    if R is None:
        R = cn + np.sqrt(11.0 * abs(M / b)) + 4.0 / abs(b) + 1.0
    rad, wr = _gauss_panels(_radial_edges(model, R, refine), order)
    phi = 2 * np.pi * np.arange(n_angle) / n_angle
    eta = np.stack([np.outer(rad, np.cos(phi)), np.outer(rad, np.sin(phi))], axis=-1)
    xi = eta - c
    dens = chern_integrand(model, xi)
    interior = float(((dens * rad[:, None]).sum(axis=1) * wr).sum() * (2 * np.pi / n_angle))
    # exterior: h_x + i h_y = R e^{i phi} on the circle, so the azimuth of h advances uniformly
    edge = np.stack([R * np.cos(phi), R * np.sin(phi)], axis=-1) - c
    h = model.h_vector(edge)
    hz = h[:, 2] / np.sqrt((h**2).sum(axis=1))
    sb = np.sign(b)
    tail = float(sb * (1.0 + sb * hz).mean() / 2.0)
    raw = interior + tail
    return ChernResult(raw=raw, value=int(np.rint(raw)), interior=interior, tail=tail, R=float(R))


def chern_number(model: BulkModel, tol: float = QUANT_TOL, **kw) -> ChernResult:
    find_gap(model)
    res = chern_raw(model, **kw)
    if abs(res.raw - res.value) > tol:
        raise NotQuantized(res.raw)
    return res


def sign_formula(m_eff: float, beta: float) -> int:
    return int(round(0.5 * (np.sign(m_eff) + np.sign(beta))))


@dataclass(frozen=True)
class IndexPair:
    index_inf: int
    index_0B: int
    chern_inf: ChernResult
    chern_0B: ChernResult

    @property
    def differ(self) -> bool:
        return self.index_inf != self.index_0B

    @property
    def agree(self) -> bool:
        return self.chern_inf.value == self.index_inf and self.chern_0B.value == self.index_0B

    def to_json(self) -> dict:
        return {"index_inf": self.index_inf, "index_0B": self.index_0B, "differ": self.differ,
                "agree": self.agree, "chern_inf": self.chern_inf.to_json(), "chern_0B": self.chern_0B.to_json()}


def bulk_index_pair(unperturbed: BulkModel, homogenized: BulkModel) -> IndexPair:
    ia = sign_formula(unperturbed.m_eff, unperturbed.beta)
    ib = sign_formula(homogenized.m_eff, homogenized.beta)
    return IndexPair(ia, ib, chern_number(unperturbed), chern_number(homogenized))


def bulk_report(model: BulkModel) -> dict:
    g = find_gap(model)
    ch = chern_raw(model)
    sf = sign_formula(model.m_eff, model.beta)
    quant = abs(ch.raw - ch.value) <= QUANT_TOL
    return {"model": model.to_json(), "gap": [g.lower, g.upper], "m0": g.halfwidth,
            "chern_raw": ch.raw, "chern": ch.value if quant else None, "quantized": bool(quant),
            "sign_formula": sf, "agree": bool(quant and ch.value == sf)}


def write_band_csv(model: BulkModel, path: str | Path, kmax: float = 3.0, n: int = 61) -> None:
    k = np.linspace(-kmax, kmax, n)
    K1, K2 = np.meshgrid(k, k, indexing="ij")
    xi = np.stack([K1, K2], axis=-1)
    em, ep = symbol_eigenvalues(model, xi)
    table = np.column_stack([K1.ravel(), K2.ravel(), em.ravel(), ep.ravel()])
    np.savetxt(path, table, delimiter=",", header="xi1,xi2,E_minus,E_plus", comments="", fmt="%.12g")


def dumps(d: dict) -> str:
    return json.dumps(d, indent=2, sort_keys=True) + "\n"
