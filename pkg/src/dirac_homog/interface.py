"""Domain-wall Hamiltonian on a strip: edge bands, spectral flow and the band-integral conductivity.

The wall depends on ``x2`` only, so after a Fourier transform in ``x1`` the
problem is a family of 1D Hermitian operators indexed by the momentum
``xi1``.  Each one is discretised on ``(-L, L)`` with fourth-order central
differences and homogeneous Dirichlet data; spinor components are interleaved
(row ``2j + s``), which keeps the matrix banded with half-bandwidth 5.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as sla
from scipy.special import expit

from .bulk import BulkModel, common_gap
from .effective import EffectiveTensor
from .errors import (
    IncompleteSupport,
    InsufficientResolution,
    NumericalCheckError,
    UnresolvedCrossing,
    ValidationError,
    WallOutOfDomain,
    ZeroBeta,
)

log = logging.getLogger(__name__)

LOCALIZATION_THRESHOLD = 0.5
WALL_SHAPES = ("smoothstep_quintic", "tanh_clamped")


# ---------------------------------------------------------------- model + wall

@dataclass(frozen=True)
class InterfaceModel:
    """Homogenized interface Hamiltonian data: bare mass, curvature and the effective tensor."""

    m: float
    beta: float
    tau: tuple = (0.0, 0.0, 0.0, 0.0)

    def __post_init__(self):
        if self.beta == 0:
            raise ZeroBeta("beta must be nonzero")
        object.__setattr__(self, "tau", tuple(float(t) for t in self.tau))

    @classmethod
    def from_tensor(cls, t: EffectiveTensor) -> "InterfaceModel":
        return cls(t.m, t.beta, t.real_components)

    @property
    def m_plus(self) -> float:
        return self.m

    @property
    def m_minus(self) -> float:
        return self.m + self.beta * self.tau[3]

    def bulk_models(self) -> tuple[BulkModel, BulkModel]:
        return (BulkModel.unperturbed(self.m, self.beta),
                BulkModel(self.m, self.beta, *self.tau, label="homogenized_bulk"))

    def common_gap_halfwidth(self) -> float:
        return common_gap(*self.bulk_models()).m0

    def expected_flow(self) -> int:
        return int(round(0.5 * (np.sign(self.m_minus) - np.sign(self.m_plus))))


def _quintic(t):
    return t**3 * (10 - 15 * t + 6 * t * t)


def _tanh_clamped(t):
    out = np.where(t >= 1, 1.0, 0.0)
    inner = (t > 0) & (t < 1)
    ti = np.where(inner, t, 0.5)
    # 0.5 (1 + tanh(s)) = expit(2 s); expit saturates cleanly near the ends
    out = np.where(inner, expit(2 * (ti - 0.5) / (ti * (1 - ti))), out)
    return out


@dataclass(frozen=True)
class DomainWallProfile:
    """``rho(x2)``: 1 on the perturbed side, 0 on the other, smooth in between.

    ``orientation="lower"`` puts the perturbed half-plane at ``x2 <= a``;
    ``"upper"`` reverses it (perturbation for ``x2 >= b``). Either way the
    profile changes only on ``[a, b]``.
    ``shape="constant"`` gives the translation-invariant limits rho = 0 or 1.
    """

    a: float
    b: float
    shape: str = "smoothstep_quintic"
    orientation: str = "lower"
    constant: float | None = None

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.constant is not None:
            return np.full_like(x, self.constant)
        if self.orientation == "upper":
            x = -x
            a, b = -self.b, -self.a
        else:
            a, b = self.a, self.b
        t = np.clip((b - x) / (b - a), 0.0, 1.0)
        if self.shape == "smoothstep_quintic":
            return _quintic(t)
        return _tanh_clamped(t)

    def derivatives(self, x) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """``rho, rho', rho''`` in closed form (quintic shape only)."""
        if self.shape != "smoothstep_quintic" or self.constant is not None or self.orientation != "lower":
            raise ValidationError("closed-form derivatives only for the lower quintic wall")
        x = np.asarray(x, dtype=float)
        t = np.clip((self.b - x) / (self.b - self.a), 0.0, 1.0)
        inside = (t > 0) & (t < 1)
        dt = -1.0 / (self.b - self.a)
        d1 = np.where(inside, 30 * t**2 * (1 - t) ** 2 * dt, 0.0)
        d2 = np.where(inside, 60 * t * (1 - t) * (1 - 2 * t) * dt**2, 0.0)
        return _quintic(t), d1, d2

    @property
    def region(self) -> tuple[float, float]:
        return self.a, self.b

    def scaled(self, c: float) -> "DomainWallProfile":
        return DomainWallProfile(self.a * c, self.b * c, self.shape, self.orientation, self.constant)

    def to_json(self) -> dict:
        return {"a": self.a, "b": self.b, "shape": self.shape, "orientation": self.orientation,
                "constant": self.constant}


def build_wall(a: float, b: float, shape: str = "smoothstep_quintic", L: float | None = None,
               orientation: str = "lower") -> DomainWallProfile:
    if shape not in WALL_SHAPES:
        raise ValidationError(f"unknown wall shape {shape!r}; choose from {WALL_SHAPES}")
    if orientation not in ("lower", "upper"):
        raise ValidationError(f"orientation must be 'lower' or 'upper', got {orientation!r}")
    if not (a < 0 < b):
        raise WallOutOfDomain(f"need a < 0 < b, got a={a}, b={b}")
    if L is not None and (a < -0.8 * L or b > 0.8 * L):
        raise WallOutOfDomain(f"wall [{a}, {b}] leaves less than 0.2 L margin inside (-{L}, {L})")
    return DomainWallProfile(float(a), float(b), shape, orientation)


def constant_wall(value: float) -> DomainWallProfile:
    return DomainWallProfile(-1.0, 1.0, "constant", "lower", float(value))


# ---------------------------------------------------------------- switch function

@dataclass(frozen=True)
class SwitchFunction:
    """Smooth non-decreasing step from 0 at ``-m0`` to 1 at ``m0``.

    ``septic``: derivative ``140 t^3 (1-t)^3`` (a C2 bump), the default;
    ``quintic``: derivative ``30 t^2 (1-t)^2``.
    """

    m0: float
    shape: str = "septic"

    def __post_init__(self):
        if self.m0 <= 0:
            raise ValidationError("switch half-width m0 must be positive")
        if self.shape not in ("septic", "quintic"):
            raise ValidationError(f"unknown switch shape {self.shape!r}")

    def _t(self, h):
        return np.clip((np.asarray(h, dtype=float) + self.m0) / (2 * self.m0), 0.0, 1.0)

    def phi(self, h):
        t = self._t(h)
        if self.shape == "quintic":
            return _quintic(t)
        return t**4 * (35 - 84 * t + 70 * t**2 - 20 * t**3)

    def dphi(self, h):
        t = self._t(h)
        if self.shape == "quintic":
            return 30 * t**2 * (1 - t) ** 2 / (2 * self.m0)
        return 140 * t**3 * (1 - t) ** 3 / (2 * self.m0)


# ---------------------------------------------------------------- strip operator

_D1 = {1: 8.0 / 12.0, 2: -1.0 / 12.0}
_D2 = {0: -30.0 / 12.0, 1: 16.0 / 12.0, 2: -1.0 / 12.0}


def strip_grid(L: float, N: int) -> tuple[np.ndarray, float]:
    x = np.linspace(-L, L, N + 2)[1:-1]
    return x, 2.0 * L / (N + 1)


@dataclass(frozen=True, eq=False)
class StripOperator:
    xi1: float
    L: float
    N: int
    x: np.ndarray = field(repr=False)
    h: float
    matrix: sp.csr_matrix = field(repr=False)
    model: InterfaceModel
    rho: np.ndarray = field(repr=False)

    def dense(self) -> np.ndarray:
        return self.matrix.toarray()

    def velocity_operator(self) -> sp.csr_matrix:
        """``dH/dxi1 = sigma_1 - 2 beta xi1 sigma_3`` on every site."""
        b = self.model.beta
        blk = np.array([[-2 * b * self.xi1, 1.0], [1.0, 2 * b * self.xi1]])
        return sp.kron(sp.identity(self.N, format="csr"), sp.csr_matrix(blk), format="csr")


def _check_resolution(model: InterfaceModel, xi1: float, h: float, N: int):
    if N < 256:
        raise InsufficientResolution(f"N = {N} < 256")
    b = abs(model.beta)
    coeff = abs(xi1) + b * xi1**2 + abs(model.m) + b * max(abs(t) for t in model.tau)
    if b / h**2 < 10 * coeff:
        raise InsufficientResolution(
            f"beta/h^2 = {b / h ** 2:.3g} < 10 x max coefficient {coeff:.3g} at xi1 = {xi1:g}")


def strip_operator(xi1: float, model: InterfaceModel, wall: DomainWallProfile, L: float, N: int) -> StripOperator:
    x, h = strip_grid(L, N)
    _check_resolution(model, xi1, h, N)
    b = model.beta
    t0, t1, t2, t3 = model.tau
    r2 = wall(x) ** 2
    mass = model.m - b * xi1**2 + b * r2 * t3 + b * _D2[0] / h**2
    shift = b * r2 * t0
    j = np.arange(N)
    rows, cols, vals = [], [], []

    def add(r, c, v):
        rows.append(r)
        cols.append(c)
        vals.append(np.broadcast_to(v, r.shape).astype(complex))

    add(2 * j, 2 * j, mass + shift)
    add(2 * j + 1, 2 * j + 1, -mass + shift)
    off = xi1 + b * r2 * t1 - 1j * b * r2 * t2
    add(2 * j, 2 * j + 1, off)
    add(2 * j + 1, 2 * j, np.conj(off))
    for d in (1, 2):
        jj = j[:-d]
        kk = jj + d
        c2 = b * _D2[d] / h**2
        c1 = _D1[d] / h
        for (p, q) in ((jj, kk), (kk, jj)):
            add(2 * p, 2 * q, c2)
            add(2 * p + 1, 2 * q + 1, -c2)
        # D2 sigma_2 with D2 = -i d/dx: entries -c1 / +c1 above the diagonal, conjugate-transposed below
        add(2 * jj, 2 * kk + 1, -c1)
        add(2 * jj + 1, 2 * kk, c1)
        add(2 * kk + 1, 2 * jj, -c1)
        add(2 * kk, 2 * jj + 1, c1)
    H = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(2 * N, 2 * N))
    return StripOperator(float(xi1), float(L), int(N), x, h, H, model, np.sqrt(r2))


def hermiticity_error(op: StripOperator) -> float:
    H = op.matrix
    return float(abs(H - H.conj().T).max() / max(abs(H).max(), 1e-300))


def window_eigenpairs(H: sp.spmatrix, window: float, k0: int = 8, seed: int = 0):
    """All eigenpairs with ``|E| < window`` via shift-invert Lanczos, growing ``k`` until the window is covered."""
    n = H.shape[0]
    sigma = 1e-3 * window * (np.sqrt(2.0) - 1.0)
    lu = sla.splu((H - sigma * sp.identity(n, format="csc")).tocsc())
    opinv = sla.LinearOperator((n, n), matvec=lu.solve, dtype=complex)
    rng = np.random.default_rng(seed)
    v0 = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    k = min(k0, n - 2)
    while True:
        w, v = sla.eigsh(H, k=k, sigma=sigma, OPinv=opinv, v0=v0, which="LM")
        if np.abs(w - sigma).max() > window + abs(sigma) or k >= n - 2:
            break
        k = min(2 * k, n - 2)
    keep = np.abs(w) < window
    order = np.argsort(w[keep])
    return w[keep][order], v[:, keep][:, order]


# ---------------------------------------------------------------- edge bands

@dataclass
class XiSample:
    xi1: float
    energies: np.ndarray
    velocities: np.ndarray
    scores: np.ndarray
    vectors: np.ndarray = field(repr=False)


@dataclass
class EdgeBands:
    xi1_grid: np.ndarray
    energies: list
    velocities: list
    scores: list
    band_ids: list
    window: float
    m0: float
    model: InterfaceModel
    wall: DomainWallProfile
    L: float
    N: int
    refined: int = 0

    def interface_mask(self, i: int) -> np.ndarray:
        return self.scores[i] >= LOCALIZATION_THRESHOLD

    def to_rows(self):
        for i, xi in enumerate(self.xi1_grid):
            for e, bid, s in zip(self.energies[i], self.band_ids[i], self.scores[i]):
                yield xi, int(bid), float(e), float(s)


def _localization_weights(x: np.ndarray, wall: DomainWallProfile, L: float) -> np.ndarray:
    lo, hi = wall.region
    w = 0.5 * L
    mask = ((x >= lo - w) & (x <= hi + w)).astype(float)
    return np.repeat(mask, 2)


def _diabatize(E, V, H, Q, dH, delta):
    """Rotate near-degenerate clusters onto eigenvectors of the localization projector."""
    n = len(E)
    if n == 0:
        return E, np.zeros(0), V
    V = V.copy()
    start = 0
    for i in range(1, n + 1):
        if i == n or E[i] - E[i - 1] >= delta:
            if i - start > 1:
                Vc = V[:, start:i]
                q = Vc.conj().T @ (Q[:, None] * Vc)
                _, U = np.linalg.eigh(0.5 * (q + q.conj().T))
                V[:, start:i] = Vc @ U
            start = i
    HV = H @ V
    energies = np.real(np.einsum("ij,ij->j", V.conj(), HV))
    vel = np.real(np.einsum("ij,ij->j", V.conj(), dH @ V))
    order = np.argsort(energies)
    return energies[order], vel[order], V[:, order]


def _solve_xi(xi1, model, wall, L, N, window, delta, Q):
    op = strip_operator(xi1, model, wall, L, N)
    w, v = window_eigenpairs(op.matrix, window)
    E, vel, V = _diabatize(w, v, op.matrix, Q, op.velocity_operator(), delta)
    dens = np.abs(V) ** 2
    scores = (Q[:, None] * dens).sum(axis=0) / dens.sum(axis=0)
    return XiSample(float(xi1), E, vel, scores, V)


def _track(samples: list[XiSample]) -> list[np.ndarray]:
    """Greedy overlap continuation; unmatched states open new band ids."""
    next_id = 0
    ids = []
    prev = None
    for s in samples:
        cur = -np.ones(len(s.energies), dtype=int)
        if prev is not None and len(prev.energies) and len(s.energies):
            ov = np.abs(prev.vectors.conj().T @ s.vectors)
            dE = np.abs(prev.energies[:, None] - s.energies[None, :])
            pairs = sorted(((-round(ov[i, j], 6), dE[i, j], i, j)
                            for i in range(ov.shape[0]) for j in range(ov.shape[1])))
            used_p, used_c = set(), set()
            for negov, _, i, j in pairs:
                if -negov < 0.5:
                    break
                if i in used_p or j in used_c:
                    continue
                cur[j] = ids[-1][i]
                used_p.add(i)
                used_c.add(j)
        for j in range(len(cur)):
            if cur[j] < 0:
                cur[j] = next_id
                next_id += 1
        ids.append(cur)
        prev = s
    return ids


def default_xi1_range(model: InterfaceModel) -> tuple[float, float]:
    r = 3.0 * max(1.0, np.sqrt(abs(model.m_plus / model.beta)), np.sqrt(abs(model.m_minus / model.beta)))
    return -r, r


def edge_bands(model: InterfaceModel, wall: DomainWallProfile, xi1_range=None, steps: int = 121,
               L: float = 30.0, N: int = 1024, m0: float | None = None, window: float | None = None,
               refine: bool = True, max_refine: int = 12, threads: int = 1) -> EdgeBands:
    """Eigenpairs in ``(-window, window)`` over a ``xi1`` sweep, tracked into bands.

    Intervals where an interface state inside the switch support moves by more
    than ``m0/10`` are bisected until resolved (or ``max_refine`` rounds).
    """
    if m0 is None:
        m0 = model.common_gap_halfwidth()
    if window is None:
        window = 2.0 * m0
    if xi1_range is None:
        xi1_range = default_xi1_range(model)
    lo, hi = float(xi1_range[0]), float(xi1_range[1])
    if not lo < hi or steps < 2:
        raise ValidationError("xi1_range must be increasing with at least two steps")
    x, _ = strip_grid(L, N)
    Q = _localization_weights(x, wall, L)
    delta = 0.2 * m0

    def run(xis):
        if threads > 1 and len(xis) > 1:
            with ThreadPoolExecutor(max_workers=threads) as ex:
                return list(ex.map(lambda xi: _solve_xi(xi, model, wall, L, N, window, delta, Q), xis))
        return [_solve_xi(xi, model, wall, L, N, window, delta, Q) for xi in xis]

    samples = run(list(np.linspace(lo, hi, steps)))
    n_refined = 0
    for _ in range(max_refine if refine else 0):
        new = []
        for s0, s1 in zip(samples[:-1], samples[1:]):
            dxi = s1.xi1 - s0.xi1
            need = False
            for s in (s0, s1):
                sel = (s.scores >= LOCALIZATION_THRESHOLD) & (np.abs(s.energies) < m0)
                if np.any(np.abs(s.velocities[sel]) * dxi > m0 / 10):
                    need = True
            if need:
                new.append(0.5 * (s0.xi1 + s1.xi1))
        if not new:
            break
        n_refined += len(new)
        samples = sorted(samples + run(new), key=lambda s: s.xi1)
    ids = _track(samples)
    return EdgeBands(
        xi1_grid=np.array([s.xi1 for s in samples]),
        energies=[s.energies for s in samples],
        velocities=[s.velocities for s in samples],
        scores=[s.scores for s in samples],
        band_ids=ids,
        window=window,
        m0=m0,
        model=model,
        wall=wall,
        L=L,
        N=N,
        refined=n_refined,
    )


def _band_series(bands: EdgeBands):
    series: dict[int, list] = {}
    for i in range(len(bands.xi1_grid)):
        for e, v, s, bid in zip(bands.energies[i], bands.velocities[i], bands.scores[i], bands.band_ids[i]):
            series.setdefault(int(bid), []).append((i, e, v, s))
    return series


def spectral_flow(bands: EdgeBands, level: float = 0.0) -> int:
    """Signed number of interface-band crossings of ``level`` (sign of the slope)."""
    if abs(level) >= bands.m0:
        raise ValidationError(f"level {level} is outside the common gap (-{bands.m0}, {bands.m0})")
    flow = 0
    for pts in _band_series(bands).values():
        for (i0, e0, v0, s0), (i1, e1, v1, s1) in zip(pts[:-1], pts[1:]):
            if i1 != i0 + 1:
                continue
            if (e0 - level) * (e1 - level) > 0 or e0 == e1:
                continue
            if e0 == level and i0 > 0:
                continue  # counted on the previous interval
            if 0.5 * (s0 + s1) < LOCALIZATION_THRESHOLD:
                continue
            jump = abs(e1 - e0)
            if jump >= bands.m0 / 10 or v0 * v1 < 0:
                raise UnresolvedCrossing(
                    f"band jump {jump:.3g} across level {level} between xi1 = "
                    f"{bands.xi1_grid[i0]:.6g} and {bands.xi1_grid[i1]:.6g}")
            flow += int(np.sign(e1 - e0))
    return flow


def conductivity_band_integral(bands: EdgeBands, phi: SwitchFunction) -> float:
    """``sum_n int phi'(E_n) E_n' dxi1`` over interface states; one crossing contributes one."""
    integrand = np.zeros(len(bands.xi1_grid))
    for i in range(len(bands.xi1_grid)):
        sel = bands.interface_mask(i)
        integrand[i] = np.sum(phi.dphi(bands.energies[i][sel]) * bands.velocities[i][sel])
        if i in (0, len(bands.xi1_grid) - 1) and np.any(phi.dphi(bands.energies[i][sel]) > 0):
            raise IncompleteSupport(
                f"interface states inside the switch support at the sweep end xi1 = {bands.xi1_grid[i]:.4g}")
    return float(np.trapezoid(integrand, bands.xi1_grid))


def write_bands_csv(bands: EdgeBands, path: str | Path) -> None:
    rows = list(bands.to_rows())
    table = np.array(rows, dtype=float).reshape(-1, 4)
    np.savetxt(path, table, delimiter=",", header="xi1,band_id,energy,localization", comments="",
               fmt=["%.12g", "%d", "%.12g", "%.6f"])


def interface_report(bands: EdgeBands, phi: SwitchFunction, scenario_hash: str = "",
                     sigma_direct: float | None = None) -> dict:
    report = {"scenario_hash": scenario_hash, "m0": bands.m0, "n_xi1": int(len(bands.xi1_grid)),
              "refined": bands.refined, "expected_flow": bands.model.expected_flow(),
              "sigma_direct": sigma_direct}
    try:
        report["spectral_flow"] = spectral_flow(bands)
    except NumericalCheckError as exc:
        report["spectral_flow"] = None
        report["spectral_flow_error"] = str(exc)
    try:
        report["sigma_band_integral"] = conductivity_band_integral(bands, phi)
    except NumericalCheckError as exc:
        report["sigma_band_integral"] = None
        report["sigma_band_integral_error"] = str(exc)
    return report


def dumps(d: dict) -> str:
    return json.dumps(d, indent=2, sort_keys=True) + "\n"
