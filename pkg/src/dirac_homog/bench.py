"""Resolvent convergence of the oscillatory operator towards the homogenized one on a periodic box.

Operators are applied matrix-free: the constant-coefficient Dirac part in
Fourier space, the zeroth-order potential pointwise.  Resolvent systems are
solved with GMRES, right-preconditioned by the exact Fourier inverse of the
constant-coefficient part, inside a defect-correction loop on the true residual.
"""

from __future__ import annotations

import hashlib
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse.linalg as sla

from .cells import CellSolution, PotentialSet, assemble_W, solve_cells
from .effective import EffectiveTensor, effective_tensor
from .errors import IncommensurateEpsilon, NoConvergence, SlopeBelowThreshold, ValidationError
from .interface import DomainWallProfile, constant_wall
from .torus import trig_interpolate

log = logging.getLogger(__name__)

@dataclass(frozen=True)
class PeriodicBox:
    L: float = 1.0
    N: int = 256

    def __post_init__(self):
        if self.N < 8 or self.N % 2 or self.L <= 0:
            raise ValidationError("box needs L > 0 and an even N >= 8")

    @property
    def h(self) -> float:
        return self.L / self.N

    @property
    def x(self) -> np.ndarray:
        return np.arange(self.N) * self.h

    def mesh(self):
        return np.meshgrid(self.x, self.x, indexing="ij")

    def frequencies(self):
        """Angular wavenumbers ``(xi1, xi2)`` and the Nyquist-free derivative symbols."""
        k = 2 * np.pi * np.fft.fftfreq(self.N, d=self.h)
        K1, K2 = np.meshgrid(k, k, indexing="ij")
        D1, D2 = K1.copy(), K2.copy()
        D1[self.N // 2, :] = 0.0
        D2[:, self.N // 2] = 0.0
        return K1, K2, D1, D2


def l2_norm(box: PeriodicBox, u: np.ndarray) -> float:
    return float(np.sqrt(np.sum(np.abs(u) ** 2)) * box.h)


def h1_norm(box: PeriodicBox, u: np.ndarray) -> float:
    K1, K2, _, _ = box.frequencies()
    U = np.fft.fft2(u, axes=(-2, -1))
    return float(np.sqrt(np.sum((1 + K1**2 + K2**2) * np.abs(U) ** 2)) * box.h / box.N)


def inner(box: PeriodicBox, u: np.ndarray, v: np.ndarray) -> complex:
    return complex(np.vdot(v, u) * box.h**2)


def periodic_wall(wall: DomainWallProfile, L: float):
    """Mirror-doubled wall on ``[0, L)``: 1 near ``x2 = 0 ~ L``, 0 around ``L/2``, flat at both."""
    if wall.constant is not None:
        return lambda x2: wall(x2)
    lo, hi = wall.region
    if max(-lo, hi) >= L / 4:
        raise ValidationError(f"wall [{lo}, {hi}] does not fit twice into a periodic box of length {L}")

    def rho(x2):
        s = np.mod(np.asarray(x2, dtype=float), L) - L / 2
        return wall(L / 4 - np.abs(s))

    return rho


@dataclass(eq=False)
class DiscreteOperator2D:
    """``D.sigma + (m + beta lap) sigma_3 + V(x)`` with ``V`` a pointwise Hermitian 2x2 field."""

    box: PeriodicBox
    m: float
    beta: float
    potential: np.ndarray | None = field(default=None, repr=False)  # shape (2, 2, N, N)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        K1, K2, D1, D2 = self.box.frequencies()
        self._mass = self.m - self.beta * (K1**2 + K2**2)
        self._dm = D1 - 1j * D2
        self._dp = D1 + 1j * D2
        if self.potential is None:
            self._c = np.zeros((2, 2), dtype=complex)
        else:
            self._c = self.potential.mean(axis=(2, 3))

    def apply(self, u: np.ndarray) -> np.ndarray:
        u = u.reshape(2, self.box.N, self.box.N)
        U = np.fft.fft2(u, axes=(1, 2))
        out = np.empty_like(U)
        out[0] = self._mass * U[0] + self._dm * U[1]
        out[1] = self._dp * U[0] - self._mass * U[1]
        out = np.fft.ifft2(out, axes=(1, 2))
        if self.potential is not None:
            out = out + np.einsum("klij,lij->kij", self.potential, u)
        return out

    def solve_constant(self, f: np.ndarray, z: complex) -> np.ndarray:
        """Exact inverse of ``(H_const - z)`` where ``H_const`` uses the cell-averaged potential."""
        F = np.fft.fft2(f.reshape(2, self.box.N, self.box.N), axes=(1, 2))
        c = self._c
        a = self._mass + c[0, 0] - z
        d = -self._mass + c[1, 1] - z
        b = self._dm + c[0, 1]
        cc = self._dp + c[1, 0]
        det = a * d - b * cc
        out = np.empty_like(F)
        out[0] = (d * F[0] - b * F[1]) / det
        out[1] = (-cc * F[0] + a * F[1]) / det
        return np.fft.ifft2(out, axes=(1, 2))

    def symbol(self, xi: tuple[float, float]) -> np.ndarray:
        x1, x2 = xi
        M = self.m - self.beta * (x1 * x1 + x2 * x2)
        return np.array([[M, x1 - 1j * x2], [x1 + 1j * x2, -M]])


def _check_commensurate(box: PeriodicBox, eps: float) -> int:
    k = box.L / eps
    kr = int(round(k))
    if kr < 1 or abs(k - kr) > 1e-9 * max(k, 1.0):
        raise IncommensurateEpsilon(f"epsilon = {eps:g} does not divide L_box = {box.L:g}")
    if box.N % (8 * kr):
        raise IncommensurateEpsilon(f"N_box = {box.N} is not a multiple of 8 x {kr}: epsilon-cells under-resolved")
    return kr


def build_Heps(box: PeriodicBox, eps: float, p: PotentialSet, m: float, beta: float,
               wall: DomainWallProfile | None = None) -> DiscreteOperator2D:
    _check_commensurate(box, eps)
    wall = wall or constant_wall(1.0)
    rho = periodic_wall(wall, box.L)(box.x)
    W = assemble_W(p)
    y = np.mod(box.x / eps, 1.0)
    V = np.empty((2, 2, box.N, box.N), dtype=complex)
    for k in range(2):
        for l in range(2):
            V[k, l] = trig_interpolate(W[k][l], y, y) * rho[None, :] / eps
    V = 0.5 * (V + np.conj(np.swapaxes(V, 0, 1)))
    return DiscreteOperator2D(box, m, beta, V, meta={"kind": "oscillatory", "epsilon": eps})


def build_H0(box: PeriodicBox, tensor: EffectiveTensor | np.ndarray, m: float, beta: float,
             wall: DomainWallProfile | None = None) -> DiscreteOperator2D:
    tau = tensor.tau if isinstance(tensor, EffectiveTensor) else np.asarray(tensor, dtype=complex)
    tau = 0.5 * (tau + tau.conj().T)
    wall = wall or constant_wall(1.0)
    r2 = periodic_wall(wall, box.L)(box.x) ** 2
    V = beta * tau[:, :, None, None] * np.broadcast_to(r2[None, :], (box.N, box.N))[None, None]
    return DiscreteOperator2D(box, m, beta, np.ascontiguousarray(V), meta={"kind": "homogenized"})


def build_Hinf(box: PeriodicBox, m: float, beta: float) -> DiscreteOperator2D:
    return DiscreteOperator2D(box, m, beta, None, meta={"kind": "unperturbed"})


@dataclass
class SolveInfo:
    iterations: int
    residual: float
    bound_ok: bool


def resolvent_solve(op: DiscreteOperator2D, z: complex, f: np.ndarray, tol: float = 1e-9,
                    restart: int = 60, maxiter: int = 20, return_info: bool = False):
    """Solve ``(H - z) psi = f`` to relative residual ``tol``.

    The attainable floor is about ``eps_mach * norm(H) / abs(Im z)``, a few 1e-10
    at ``N_box = 256``, ``Im z = 0.25``; hence the 1e-9 default.
    """
    if z.imag == 0:
        raise ValidationError("resolvent needs Im z != 0")
    f = np.asarray(f, dtype=complex).reshape(2, op.box.N, op.box.N)
    nf = np.linalg.norm(f)
    if nf == 0:
        psi = np.zeros_like(f)
        return (psi, SolveInfo(0, 0.0, True)) if return_info else psi
    n = f.size

    def mv(y):
        u = op.solve_constant(y, z)
        return (op.apply(u) - z * u).ravel()

    A = sla.LinearOperator((n, n), matvec=mv, dtype=complex)
    count = [0]

    def cb(_):
        count[0] += 1

    # defect correction around short GMRES cycles: each pass works on the true
    # residual, so FFT round-off in the recursive estimate cannot stall restarts
    psi = np.zeros_like(f)
    r = f
    res = 1.0
    for _ in range(maxiter):
        y, _ = sla.gmres(A, r.ravel(), rtol=1e-4, atol=0.0, restart=restart, maxiter=1,
                         callback=cb, callback_type="pr_norm")
        psi = psi + op.solve_constant(y, z)
        r = f - (op.apply(psi) - z * psi)
        res = float(np.linalg.norm(r) / nf)
        if res <= tol:
            break
    if res > tol:
        raise NoConvergence(count[0], res)
    bound_ok = bool(l2_norm(op.box, psi) <= l2_norm(op.box, f) / abs(z.imag) * (1 + 1e-9))
    info = SolveInfo(count[0], res, bound_ok)
    return (psi, info) if return_info else psi


def corrector_field(psi_s: np.ndarray, sol: CellSolution, eps: float, box: PeriodicBox,
                    wall: DomainWallProfile | None = None) -> np.ndarray:
    """``rho(x) sigma_3 T(x/eps) psi_s(x)`` with ``T`` trigonometrically interpolated."""
    wall = wall or constant_wall(1.0)
    rho = periodic_wall(wall, box.L)(box.x)[None, :]
    y = np.mod(box.x / eps, 1.0)
    out = np.zeros_like(psi_s, dtype=complex)
    for k, s in ((0, 1.0), (1, -1.0)):
        for l in range(2):
            T = trig_interpolate(sol.T[k][l], y, y)
            out[k] += s * rho * T * psi_s[l]
    return out


# ---------------------------------------------------------------- sources

def gaussian_source(box: PeriodicBox, width: float = 0.1) -> np.ndarray:
    X1, X2 = box.mesh()
    c = box.L / 2
    g = np.exp(-((X1 - c) ** 2 + (X2 - c) ** 2) / (2 * (width * box.L) ** 2))
    f = np.stack([g, 0.5 * g * np.exp(2j * np.pi * X2 / box.L)])
    return f / l2_norm(box, f)


def random_source(box: PeriodicBox, rng: np.random.Generator, kmax: int = 2) -> np.ndarray:
    """Random spinor with modes ``|k_i| <= kmax``, kept below the coarsest cell frequency."""
    F = np.zeros((2, box.N, box.N), dtype=complex)
    ks = np.r_[0:kmax + 1, -kmax:0]
    for s in range(2):
        F[s][np.ix_(ks, ks)] = rng.standard_normal((len(ks), len(ks))) + 1j * rng.standard_normal((len(ks), len(ks)))
    f = np.fft.ifft2(F, axes=(1, 2))
    return f / l2_norm(box, f)


def plane_wave_source(box: PeriodicBox, k: tuple[int, int], component: int = 0) -> np.ndarray:
    X1, X2 = box.mesh()
    f = np.zeros((2, box.N, box.N), dtype=complex)
    f[component] = np.exp(2j * np.pi * (k[0] * X1 + k[1] * X2) / box.L)
    return f / l2_norm(box, f)


def structured_sources(box: PeriodicBox) -> list[np.ndarray]:
    out = [gaussian_source(box, 0.1), gaussian_source(box, 0.05)]
    for k, c in (((0, 0), 0), ((0, 0), 1), ((1, 0), 0), ((0, 1), 1), ((1, 1), 0), ((2, 1), 1)):
        out.append(plane_wave_source(box, k, c))
    return out


# ---------------------------------------------------------------- study

@dataclass
class StudyConfig:
    potentials: dict = field(default_factory=lambda: {"V0": "4*cos(2*pi*y1)"})
    m: float = -0.05
    beta: float = 1.0
    n_cell: int = 64
    epsilons: list = field(default_factory=lambda: [1 / 4, 1 / 8, 1 / 16, 1 / 32])
    z: complex = 1j
    L_box: float = 1.0
    N_box: int = 256
    source: str = "gaussian"
    seed: int = 0
    wall: dict | None = None

    def config_hash(self) -> str:
        d = asdict(self)
        d["z"] = [self.z.real, self.z.imag]
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()


@dataclass
class ConvergenceStudy:
    config: StudyConfig
    epsilons: list
    errors_L2: list
    errors_H1_corrected: list
    errors_H1_uncorrected: list
    iterations: list
    residuals: list
    bound_ok: list
    slope_L2: float
    slope_H1_corrected: float
    slope_H1_uncorrected: float

    @property
    def monotone(self) -> bool:
        e = self.errors_L2
        return all(e[i + 1] <= 1.05 * e[i] for i in range(len(e) - 1))

    def to_json(self) -> dict:
        return {
            "slopes": {"L2": self.slope_L2, "H1_corrected": self.slope_H1_corrected,
                       "H1_uncorrected": self.slope_H1_uncorrected},
            "epsilons": self.epsilons,
            "errors_L2": self.errors_L2,
            "errors_H1_corrected": self.errors_H1_corrected,
            "errors_H1_uncorrected": self.errors_H1_uncorrected,
            "iterations": self.iterations,
            "residuals": self.residuals,
            "resolvent_bound_ok": all(self.bound_ok),
            "monotone_L2": self.monotone,
            "config_hash": self.config.config_hash(),
            "seeds": {"source": self.config.seed},
            "z": [self.config.z.real, self.config.z.imag],
        }

    def write_csv(self, path: str | Path) -> None:
        table = np.column_stack([self.epsilons, self.errors_L2, self.errors_H1_corrected, self.iterations])
        np.savetxt(path, table, delimiter=",", header="epsilon,err_L2,err_H1_corr,iters", comments="",
                   fmt=["%.10g", "%.10e", "%.10e", "%d"])


def fit_slope(eps, err) -> float:
    eps, err = np.asarray(eps, float), np.asarray(err, float)
    if np.any(err <= 0):
        return float("nan")
    return float(np.polyfit(np.log(eps), np.log(err), 1)[0])


def _wall_from(d: dict | None) -> DomainWallProfile | None:
    if not d:
        return None
    return DomainWallProfile(float(d["a"]), float(d["b"]), d.get("shape", "smoothstep_quintic"))


def make_source(cfg: StudyConfig, box: PeriodicBox) -> np.ndarray:
    if cfg.source == "gaussian":
        return gaussian_source(box)
    if cfg.source == "random":
        return random_source(box, np.random.default_rng(cfg.seed))
    raise ValidationError(f"unknown source {cfg.source!r}")


def convergence_study(cfg: StudyConfig, potentials: PotentialSet | None = None, check: bool = True,
                      threads: int = 1) -> ConvergenceStudy:
    """Solve both resolvents for every epsilon and fit log-log error slopes."""
    from .torus import PeriodicGrid

    if len(cfg.epsilons) < 4:
        raise ValidationError("a convergence study needs at least four epsilons")
    if cfg.z.imag == 0:
        raise ValidationError("z must have nonzero imaginary part")
    box = PeriodicBox(cfg.L_box, cfg.N_box)
    epsilons = sorted((float(e) for e in cfg.epsilons), reverse=True)
    for e in epsilons:
        _check_commensurate(box, e)
    p = potentials or PotentialSet.from_expressions(PeriodicGrid(cfg.n_cell), cfg.potentials)
    wall = _wall_from(cfg.wall)
    sol = solve_cells(p, cfg.beta)
    tensor = effective_tensor(sol, cfg.m, check_mass=False)
    f = make_source(cfg, box)
    H0 = build_H0(box, tensor, cfg.m, cfg.beta, wall)
    psi_s, info0 = resolvent_solve(H0, cfg.z, f, return_info=True)

    def one(eps):
        Heps = build_Heps(box, eps, p, cfg.m, cfg.beta, wall)
        psi, info = resolvent_solve(Heps, cfg.z, f, return_info=True)
        psi_f = corrector_field(psi_s, sol, eps, box, wall)
        d = psi - psi_s
        return (l2_norm(box, d), h1_norm(box, d - eps * psi_f), h1_norm(box, d), info)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            rows = list(ex.map(one, epsilons))
    else:
        rows = [one(e) for e in epsilons]
    eL2 = [r[0] for r in rows]
    eH1c = [r[1] for r in rows]
    eH1 = [r[2] for r in rows]
    study = ConvergenceStudy(
        config=cfg, epsilons=epsilons, errors_L2=eL2, errors_H1_corrected=eH1c, errors_H1_uncorrected=eH1,
        iterations=[r[3].iterations for r in rows], residuals=[r[3].residual for r in rows],
        bound_ok=[info0.bound_ok] + [r[3].bound_ok for r in rows],
        slope_L2=fit_slope(epsilons, eL2), slope_H1_corrected=fit_slope(epsilons, eH1c),
        slope_H1_uncorrected=fit_slope(epsilons, eH1),
    )
    if check:
        for name, s in (("L2", study.slope_L2), ("H1 corrected", study.slope_H1_corrected)):
            if not s >= 0.85:
                raise SlopeBelowThreshold(f"{name} slope {s:.3f} < 0.85")
    return study


def resolvent_difference_norm(Ha: DiscreteOperator2D, Hb: DiscreteOperator2D, z: complex,
                              n_random: int = 16, seed: int = 0, power_iters: int = 0) -> float:
    """Lower estimate of ``||R_a(z) - R_b(z)||`` over random and structured unit sources.

    With ``power_iters > 0`` the best source seeds a power iteration on
    ``D* D`` where ``D* = R_a(conj z) - R_b(conj z)`` by self-adjointness.
    """
    box = Ha.box
    rng = np.random.default_rng(seed)
    sources = [random_source(box, rng) for _ in range(n_random)] + structured_sources(box)
    best, best_f = -1.0, None
    for f in sources:
        val = l2_norm(box, resolvent_solve(Ha, z, f) - resolvent_solve(Hb, z, f))
        if val > best:
            best, best_f = val, f
    v = best_f
    for _ in range(power_iters):
        d = resolvent_solve(Ha, z, v) - resolvent_solve(Hb, z, v)
        w = resolvent_solve(Ha, np.conj(z), d) - resolvent_solve(Hb, np.conj(z), d)
        nw = l2_norm(box, w)
        if nw == 0:
            break
        v = w / nw
        best = max(best, l2_norm(box, resolvent_solve(Ha, z, v) - resolvent_solve(Hb, z, v)))
    return float(best)


def z_sanity_ratio(cfg: StudyConfig, eps: float, z_hi: complex = 0.1 + 0.5j, z_lo: complex = 0.1 + 0.25j,
                   n_random: int = 16, potentials: PotentialSet | None = None) -> tuple[float, float]:
    """Measured growth of the resolvent difference when ``|Im z|`` halves, and the ``(1+|Im z|^-2)`` prediction."""
    from .torus import PeriodicGrid

    box = PeriodicBox(cfg.L_box, cfg.N_box)
    p = potentials or PotentialSet.from_expressions(PeriodicGrid(cfg.n_cell), cfg.potentials)
    sol = solve_cells(p, cfg.beta)
    tensor = effective_tensor(sol, cfg.m, check_mass=False)
    wall = _wall_from(cfg.wall)
    He = build_Heps(box, eps, p, cfg.m, cfg.beta, wall)
    H0 = build_H0(box, tensor, cfg.m, cfg.beta, wall)
    a = resolvent_difference_norm(He, H0, z_hi, n_random=n_random, seed=cfg.seed)
    b = resolvent_difference_norm(He, H0, z_lo, n_random=n_random, seed=cfg.seed)
    pred = (1 + abs(z_lo.imag) ** -2) / (1 + abs(z_hi.imag) ** -2)
    return b / a, pred


def dumps(d: dict) -> str:
    return json.dumps(d, indent=2, sort_keys=True) + "\n"
