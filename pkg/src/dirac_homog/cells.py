"""Periodic cell problems: assemble the 2x2 matrix potential and solve for the correctors."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import GridMismatch, NonZeroMean, ValidationError, ZeroBeta
from .expressions import parse_expression
from .torus import (
    SOLVABILITY_RTOL,
    PeriodicField,
    PeriodicGrid,
    divergence,
    invert_laplacian,
    l2_norm,
    laplacian,
    read_field_csv,
    sample,
    spectral_gradient,
    write_field_csv,
)

Matrix2 = tuple[tuple[PeriodicField, PeriodicField], tuple[PeriodicField, PeriodicField]]


@dataclass(frozen=True, eq=False)
class PotentialSet:
    """Real scalar potentials ``V0..V3`` sampled on one cell grid."""

    V0: PeriodicField
    V1: PeriodicField
    V2: PeriodicField
    V3: PeriodicField
    hoelder_note: str = ""

    def __post_init__(self):
        grid = self.V0.grid
        for name, v in self.items():
            if v.grid != grid:
                raise GridMismatch(f"{name} lives on n={v.grid.n}, V0 on n={grid.n}")
            scale = max(v.max_abs(), 1.0)
            if np.abs(v.values.imag).max() > 1e-12 * scale:
                raise ValidationError(f"{name} must be real-valued")
            if abs(v.mean()) > SOLVABILITY_RTOL * max(v.max_abs(), np.finfo(float).tiny):
                raise NonZeroMean(f"{name} has cell mean {v.mean().real:.3e}; cell problems need mean-zero data")

    @property
    def grid(self) -> PeriodicGrid:
        return self.V0.grid

    def items(self):
        return (("V0", self.V0), ("V1", self.V1), ("V2", self.V2), ("V3", self.V3))

    def scaled(self, c: float) -> "PotentialSet":
        return PotentialSet(*(v * c for _, v in self.items()), hoelder_note=self.hoelder_note)

    @classmethod
    def from_expressions(cls, grid: PeriodicGrid, exprs: dict[str, str], hoelder_note: str = "") -> "PotentialSet":
        unknown = set(exprs) - {"V0", "V1", "V2", "V3"}
        if unknown:
            raise ValidationError(f"unknown potential names {sorted(unknown)}")
        fields = []
        for name in ("V0", "V1", "V2", "V3"):
            src = exprs.get(name, "0")
            fields.append(sample(grid, parse_expression(src)))
        note = hoelder_note or "closed-form expressions (smooth)"
        return cls(*fields, hoelder_note=note)

    @classmethod
    def zeros(cls, grid: PeriodicGrid) -> "PotentialSet":
        return cls(*(PeriodicField.zeros(grid) for _ in range(4)), hoelder_note="zero")


def random_potentials(grid: PeriodicGrid, rng: np.random.Generator, kmax: int = 3,
                      components=("V0", "V1", "V2", "V3")) -> PotentialSet:
    """Real mean-zero band-limited potentials with modes ``|k_i| <= kmax``."""
    y1, y2 = grid.mesh()
    out = {}
    for name in ("V0", "V1", "V2", "V3"):
        vals = np.zeros_like(y1)
        if name in components:
            for k1 in range(-kmax, kmax + 1):
                for k2 in range(0, kmax + 1):
                    if k2 == 0 and k1 <= 0:
                        continue
                    a, b = rng.normal(size=2)
                    phase = 2 * np.pi * (k1 * y1 + k2 * y2)
                    vals += a * np.cos(phase) + b * np.sin(phase)
        out[name] = PeriodicField(grid, vals)
    return PotentialSet(**out, hoelder_note=f"random trigonometric polynomial, kmax={kmax}")


def assemble_W(p: PotentialSet) -> Matrix2:
    """Hermitian 2x2 matrix potential built from the Pauli decomposition."""
    return (
        (p.V0 + p.V3, p.V1 - 1j * p.V2),
        (p.V1 + 1j * p.V2, p.V0 - p.V3),
    )


@dataclass(frozen=True, eq=False)
class CellSolution:
    W: Matrix2
    T: Matrix2
    t1: PeriodicField
    t2: PeriodicField
    beta: float
    Phi: tuple = field(repr=False)
    residuals: dict = field(default_factory=dict)

    @property
    def grid(self) -> PeriodicGrid:
        return self.t1.grid


def _relres(beta: float, u: PeriodicField, rhs: PeriodicField) -> float:
    r = l2_norm(laplacian(u) * beta + rhs)
    nrm = l2_norm(rhs)
    return r / nrm if nrm > 0 else r


def solve_cells(p: PotentialSet, beta: float) -> CellSolution:
    """Solve ``beta lap T_kl + W_kl = 0`` and ``beta lap t_j + V_j = 0`` in the mean-zero gauge."""
    if beta == 0 or not np.isfinite(beta):
        raise ZeroBeta("beta must be nonzero and finite")
    W = assemble_W(p)
    T = tuple(tuple(invert_laplacian(-W[k][l] / beta) for l in range(2)) for k in range(2))
    t1 = invert_laplacian(-p.V1 / beta)
    t2 = invert_laplacian(-p.V2 / beta)
    Phi = tuple(tuple(spectral_gradient(invert_laplacian(W[k][l])) for l in range(2)) for k in range(2))
    residuals = {f"T_{k + 1}{l + 1}": _relres(beta, T[k][l], W[k][l]) for k in range(2) for l in range(2)}
    residuals["t_1"] = _relres(beta, t1, p.V1)
    residuals["t_2"] = _relres(beta, t2, p.V2)
    return CellSolution(W=W, T=T, t1=t1, t2=t2, beta=float(beta), Phi=Phi, residuals=residuals)


def phi_divergence_error(sol: CellSolution) -> float:
    """Largest relative L2 mismatch between ``div Phi_kl`` and ``W_kl``."""
    worst = 0.0
    for k in range(2):
        for l in range(2):
            w = sol.W[k][l]
            d = divergence(*sol.Phi[k][l]) - w
            nrm = l2_norm(w)
            worst = max(worst, l2_norm(d) / nrm if nrm > 0 else l2_norm(d))
    return worst


def verify_t_decomposition(sol: CellSolution) -> float:
    """Max pointwise deviation of the off-diagonal correctors from ``t1 -/+ i t2``."""
    e12 = np.abs(sol.T[0][1].values - (sol.t1.values - 1j * sol.t2.values)).max()
    e21 = np.abs(sol.T[1][0].values - (sol.t1.values + 1j * sol.t2.values)).max()
    return float(max(e12, e21))


def dump_cell_solution(sol: CellSolution, outdir: str | Path) -> Path:
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    for k in range(2):
        for l in range(2):
            write_field_csv(sol.W[k][l], outdir / f"W_{k + 1}{l + 1}.csv", f"matrix potential entry {k + 1}{l + 1}")
            write_field_csv(sol.T[k][l], outdir / f"T_{k + 1}{l + 1}.csv", f"cell corrector entry {k + 1}{l + 1}")
    write_field_csv(sol.t1, outdir / "t_1.csv", "scalar corrector 1")
    write_field_csv(sol.t2, outdir / "t_2.csv", "scalar corrector 2")
    manifest = {
        "beta": sol.beta,
        "n": sol.grid.n,
        "residuals": sol.residuals,
        "t_decomposition_error": verify_t_decomposition(sol),
    }
    (outdir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return outdir


def load_cell_solution(outdir: str | Path) -> CellSolution:
    """Rebuild a solution from a dump; the diagnostic potentials are recomputed from W."""
    outdir = Path(outdir)
    manifest = json.loads((outdir / "manifest.json").read_text())
    W = tuple(tuple(read_field_csv(outdir / f"W_{k + 1}{l + 1}.csv") for l in range(2)) for k in range(2))
    T = tuple(tuple(read_field_csv(outdir / f"T_{k + 1}{l + 1}.csv") for l in range(2)) for k in range(2))
    Phi = tuple(tuple(spectral_gradient(invert_laplacian(W[k][l])) for l in range(2)) for k in range(2))
    return CellSolution(W=W, T=T, t1=read_field_csv(outdir / "t_1.csv"), t2=read_field_csv(outdir / "t_2.csv"),
                        beta=float(manifest["beta"]), Phi=Phi, residuals=manifest["residuals"])
