"""Stage orchestration: cell -> tensor -> bulk -> edge, and the bench.

Every stage writes its artifacts and a JSON block into the output directory.
Blocks carry the config hash; a later run with the same hash reuses them
instead of recomputing upstream stages.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .bench import StudyConfig, convergence_study, z_sanity_ratio
from .bulk import BulkModel, bulk_index_pair, common_gap, find_gap, write_band_csv
from .cells import dump_cell_solution, load_cell_solution, phi_divergence_error, solve_cells, verify_t_decomposition
from .config import ScenarioConfig, resolve_xi1_range, sorted_epsilons
from .effective import EffectiveTensor, effective_tensor
from .errors import DegenerateMass, NoCommonGap, NumericalCheckError, SolverError, ValidationError
from .interface import (
    InterfaceModel,
    SwitchFunction,
    build_wall,
    conductivity_band_integral,
    edge_bands,
    spectral_flow,
    write_bands_csv,
)
from .trace2d import Box, direct_trace_sigma

log = logging.getLogger(__name__)

STAGES = ("cell", "tensor", "bulk", "edge", "bench")
DEPENDS = {"cell": (), "tensor": ("cell",), "bulk": ("tensor",), "edge": ("tensor", "bulk"), "bench": ("cell",)}

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL, EXIT_SOLVER = 0, 2, 3, 4


def check(name: str, value, passed: bool, tolerance=None, expected=None) -> dict:
    out = {"name": name, "value": _plain(value), "pass": bool(passed)}
    if tolerance is not None:
        out["tolerance"] = tolerance
    if expected is not None:
        out["expected"] = _plain(expected)
    return out


def _plain(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, np.bool_):
        return bool(v)
    if isinstance(v, dict):
        return {k: _plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    return v


def dumps(d: dict) -> str:
    return json.dumps(_plain(d), indent=2, sort_keys=True) + "\n"


@dataclass
class ScenarioReport:
    config_hash: str
    stages: dict = field(default_factory=dict)
    exit_code: int = EXIT_OK

    @property
    def checks(self) -> list[dict]:
        return [c for blk in self.stages.values() for c in blk.get("checks", [])]

    @property
    def passed(self) -> bool:
        return self.exit_code == EXIT_OK and all(c["pass"] for c in self.checks)

    def to_json(self) -> dict:
        return {"config_hash": self.config_hash, "tool_version": __version__, "stages": self.stages,
                "pass": self.passed, "exit_code": self.exit_code}


class Runner:
    def __init__(self, cfg: ScenarioConfig, out: Path, threads: int = 1):
        self.cfg = cfg
        self.out = Path(out)
        self.threads = max(1, int(threads))
        self.hash = cfg.config_hash()
        self._mem: dict = {}
        self.out.mkdir(parents=True, exist_ok=True)

    # -- cache helpers
    def _path(self, stage: str) -> Path:
        return self.out / f"{stage}.json"

    def cached(self, stage: str) -> dict | None:
        p = self._path(stage)
        if not p.exists():
            return None
        blk = json.loads(p.read_text())
        return blk if blk.get("config_hash") == self.hash and "error" not in blk else None

    def _store(self, stage: str, blk: dict) -> dict:
        blk = _plain(dict(blk, config_hash=self.hash, stage=stage))
        self._path(stage).write_text(dumps(blk))
        return blk

    # -- data access with caching
    def cell_solution(self):
        if "sol" not in self._mem:
            if self.cached("cell") and (self.out / "cell" / "manifest.json").exists():
                self._mem["sol"] = load_cell_solution(self.out / "cell")
            else:
                self.run_stage("cell")
        return self._mem["sol"]

    def tensor(self) -> EffectiveTensor:
        if "tensor" not in self._mem:
            blk = self.cached("tensor")
            if blk:
                self._mem["tensor"] = EffectiveTensor.from_json(blk["tensor"])
            else:
                self.run_stage("tensor")
        return self._mem["tensor"]

    def m0(self) -> float:
        override = self.cfg["interface"]["m0_override"]
        if override:
            return float(override)
        blk = self.cached("bulk")
        if blk is None:
            blk = self.run_stage("bulk")
        if "m0" not in blk:
            raise NoCommonGap(blk.get("error", {}).get("message", "no common gap"))
        return float(blk["m0"])

    # -- stages
    def run_stage(self, stage: str) -> dict:
        blk = getattr(self, f"_stage_{stage}")()
        return self._store(stage, blk)

    def _stage_cell(self) -> dict:
        p = self.cfg.potentials()
        sol = solve_cells(p, self.cfg.beta)
        self._mem["sol"] = sol
        dump_cell_solution(sol, self.out / "cell")
        tdec = verify_t_decomposition(sol)
        div = phi_divergence_error(sol)
        worst = max(sol.residuals.values())
        return {
            "n": sol.grid.n, "beta": sol.beta, "residuals": sol.residuals, "hoelder_note": p.hoelder_note,
            "checks": [
                check("cell_residual", worst, worst <= 1e-8, 1e-8),
                check("t_decomposition", tdec, tdec <= 1e-10, 1e-10),
                check("phi_divergence", div, div <= 1e-10, 1e-10),
            ],
        }

    def _stage_tensor(self) -> dict:
        sol = self.cell_solution()
        t = effective_tensor(sol, self.cfg.m, check_mass=False)
        self._mem["tensor"] = t
        r = t.residuals
        blk = {"tensor": t.to_json(), "tau3": t.real_components[3], "m_plus": t.m_plus, "m_minus": t.m_minus,
               "transition": t.transition}
        imag = max(abs(np.imag(c)) for c in (t.tau0, t.tau1, t.tau2, t.tau3))
        blk["checks"] = [
            check("dual_form_agreement", r["dual_form"], r["dual_form"] <= 1e-9, 1e-9),
            check("pauli_direct_agreement", r["pauli_direct"], r["pauli_direct"] <= 1e-9, 1e-9),
            check("hermiticity", r["hermiticity"], r["hermiticity"] <= 1e-10, 1e-10),
            check("pauli_components_real", imag, imag <= 1e-10, 1e-10),
        ]
        from .effective import effective_masses

        effective_masses(self.cfg.m, self.cfg.beta, t.real_components[3])  # raises DegenerateMass
        return blk

    def _stage_bulk(self) -> dict:
        t = self.tensor()
        a = BulkModel.unperturbed(self.cfg.m, self.cfg.beta)
        b = BulkModel.homogenized(t)
        gaps = common_gap(a, b)
        pair = bulk_index_pair(a, b)
        write_band_csv(a, self.out / "bands_unperturbed.csv")
        write_band_csv(b, self.out / "bands_homogenized.csv")
        ga, gb = find_gap(a), find_gap(b)
        return {
            "gap": [gaps.gap_lower, gaps.gap_upper], "m0": gaps.m0, "gap_report": gaps.to_json(),
            "models": {"unperturbed": dict(a.to_json(), gap=[ga.lower, ga.upper]),
                       "homogenized": dict(b.to_json(), gap=[gb.lower, gb.upper])},
            "indices": pair.to_json(),
            "checks": [
                check("chern_unperturbed_quantized", pair.chern_inf.raw,
                      abs(pair.chern_inf.raw - pair.index_inf) <= 1e-3, 1e-3, pair.index_inf),
                check("chern_homogenized_quantized", pair.chern_0B.raw,
                      abs(pair.chern_0B.raw - pair.index_0B) <= 1e-3, 1e-3, pair.index_0B),
                check("chern_matches_sign_formula", pair.agree, pair.agree),
                check("indices_differ", pair.differ, pair.differ == t.transition, expected=t.transition),
            ],
        }

    def _stage_edge(self) -> dict:
        t = self.tensor()
        m0 = self.m0()
        icfg = self.cfg["interface"]
        wcfg = self.cfg["wall"]
        model = InterfaceModel.from_tensor(t)
        wall = build_wall(wcfg["a"], wcfg["b"], wcfg["shape"], icfg["L"])
        xr = resolve_xi1_range(self.cfg, model.m_plus, model.m_minus)
        bands = edge_bands(model, wall, xr, icfg["steps"], icfg["L"], icfg["N"], m0=m0, threads=self.threads)
        write_bands_csv(bands, self.out / "edge_bands.csv")
        phi = SwitchFunction(m0, icfg["switch"])
        expected = model.expected_flow()
        blk = {"scenario_hash": self.hash, "m0": m0, "xi1_range": list(xr), "n_xi1": len(bands.xi1_grid),
               "expected_flow": expected, "sigma_direct": None}
        checks = []
        try:
            flow = spectral_flow(bands)
            blk["spectral_flow"] = flow
            checks.append(check("spectral_flow", flow, flow == expected, 0, expected))
        except NumericalCheckError as exc:
            blk["spectral_flow"] = None
            checks.append(check("spectral_flow", str(exc), False, 0, expected))
        try:
            sigma = conductivity_band_integral(bands, phi)
            blk["sigma_band_integral"] = sigma
            checks.append(check("sigma_band_integral", sigma, abs(sigma - expected) <= 0.05, 0.05, expected))
        except NumericalCheckError as exc:
            blk["sigma_band_integral"] = None
            checks.append(check("sigma_band_integral", str(exc), False, 0.05, expected))
        dt = icfg["direct_trace"]
        if dt["enabled"]:
            box = Box.from_spacing(dt["L"], dt["L"], dt["h"])
            wall2 = build_wall(wcfg["a"], wcfg["b"], wcfg["shape"], dt["L"])
            sd = direct_trace_sigma(model, wall2, phi, box)
            blk["sigma_direct"] = sd
            checks.append(check("sigma_direct", sd, abs(sd - expected) <= 0.2, 0.2, expected))
        blk["checks"] = checks
        return blk

    def _stage_bench(self) -> dict:
        bcfg = self.cfg["bench"]
        p = self.cfg.potentials()
        runs = []
        checks = []
        for z in self.cfg.z_list:
            for source in bcfg["sources"]:
                sc = StudyConfig(potentials={}, m=self.cfg.m, beta=self.cfg.beta, n_cell=p.grid.n,
                                 epsilons=sorted_epsilons(self.cfg), z=z, L_box=bcfg["L_box"],
                                 N_box=bcfg["N_box"], source=source, seed=bcfg["seed"])
                study = convergence_study(sc, potentials=p, check=False, threads=self.threads)
                tag = f"z={z.real:g}{z.imag:+g}i,{source}"
                study.write_csv(self.out / f"bench_{source}_z{len(runs)}.csv")
                js = study.to_json()
                js["config_hash"] = self.hash
                runs.append(dict(js, source=source, tag=tag))
                for key, s in (("L2", study.slope_L2), ("H1_corrected", study.slope_H1_corrected)):
                    checks.append(check(f"slope_{key}[{tag}]", s, 0.85 <= s <= 1.15, [0.85, 1.15]))
                checks.append(check(f"resolvent_bound[{tag}]", all(study.bound_ok), all(study.bound_ok)))
                checks.append(check(f"monotone_L2[{tag}]", study.monotone, study.monotone, 0.05))
                gap = study.slope_H1_corrected - study.slope_H1_uncorrected
                checks.append(check(f"corrector_slope_gain[{tag}]", gap, gap >= 0.5, 0.5))
        blk = {"runs": runs, "box": {"L": bcfg["L_box"], "N": bcfg["N_box"]}}
        eps_mid = sorted_epsilons(self.cfg)[min(1, len(bcfg["epsilons"]) - 1)]
        sc = StudyConfig(potentials={}, m=self.cfg.m, beta=self.cfg.beta, n_cell=p.grid.n,
                         epsilons=sorted_epsilons(self.cfg), L_box=bcfg["L_box"], N_box=bcfg["N_box"],
                         seed=bcfg["seed"])
        ratio, pred = z_sanity_ratio(sc, eps_mid, potentials=p)
        blk["z_sanity"] = {"epsilon": eps_mid, "ratio": ratio, "predicted": pred}
        checks.append(check("z_sanity_ratio", ratio, ratio <= 4.4, 4.4))
        blk["checks"] = checks
        return blk


def _closure(stages) -> list[str]:
    want = set(stages)
    return [s for s in STAGES if s in want]


def run_scenario(cfg: ScenarioConfig, stages=STAGES, out: str | Path | None = None, threads: int = 1) -> ScenarioReport:
    """Run the requested stages in dependency order and write ``report.json``."""
    unknown = set(stages) - set(STAGES)
    if unknown:
        raise ValidationError(f"unknown stages {sorted(unknown)}; choose from {STAGES}")
    out = Path(out or cfg["output"])
    runner = Runner(cfg, out, threads)
    report = ScenarioReport(runner.hash)
    for stage in _closure(stages):
        log.info("running stage %s", stage)
        try:
            report.stages[stage] = runner.run_stage(stage)
        except (DegenerateMass, NoCommonGap) as exc:
            report.stages[stage] = runner._store(stage, {"error": {"type": type(exc).__name__, "message": str(exc)},
                                                         "checks": [check(type(exc).__name__, str(exc), False)]})
            report.exit_code = EXIT_NUMERICAL
            break
        except SolverError as exc:
            report.stages[stage] = runner._store(stage, {"error": {"type": type(exc).__name__, "message": str(exc)},
                                                         "checks": [check(type(exc).__name__, str(exc), False)]})
            report.exit_code = EXIT_SOLVER
            break
        except ValidationError:
            raise
        except NumericalCheckError as exc:
            report.stages[stage] = runner._store(stage, {"error": {"type": type(exc).__name__, "message": str(exc)},
                                                         "checks": [check(type(exc).__name__, str(exc), False)]})
            report.exit_code = EXIT_NUMERICAL
    if report.exit_code == EXIT_OK and not all(c["pass"] for c in report.checks):
        report.exit_code = EXIT_NUMERICAL
    (out / "report.json").write_text(dumps(report.to_json()))
    return report


def collect_report(cfg: ScenarioConfig, out: str | Path | None = None) -> ScenarioReport:
    """Assemble a report from cached stage blocks without recomputing anything."""
    out = Path(out or cfg["output"])
    runner = Runner(cfg, out)
    report = ScenarioReport(runner.hash)
    for stage in STAGES:
        p = out / f"{stage}.json"
        if p.exists():
            blk = json.loads(p.read_text())
            if blk.get("config_hash") == runner.hash:
                report.stages[stage] = blk
    if not all(c["pass"] for c in report.checks):
        report.exit_code = EXIT_NUMERICAL
    (out / "report.json").write_text(dumps(report.to_json()))
    return report


__all__ = ["run_scenario", "collect_report", "ScenarioReport", "STAGES"]
