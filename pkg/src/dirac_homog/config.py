"""Scenario configuration: JSON schema validation, defaults and cross-field constraints."""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
from jsonschema import Draft202012Validator
from jsonschema.exceptions import best_match

from .cells import PotentialSet
from .errors import ConstraintError, SchemaError, ValidationError
from .torus import PeriodicGrid, read_field_csv, sample
from .expressions import parse_expression

DEFAULTS = {
    "name": "scenario",
    "hoelder_note": "",
    "grid": {"n": 64},
    "wall": {"a": -1.0, "b": 1.0, "shape": "smoothstep_quintic"},
    "bulk": {"R": None, "resolution": 256},
    "interface": {
        "L": 30.0,
        "N": 1024,
        "xi1_range": None,
        "steps": 121,
        "m0_override": None,
        "switch": "septic",
        "direct_trace": {"enabled": False, "L": 30.0, "h": 0.5},
    },
    "bench": {
        "epsilons": [0.25, 0.125, 0.0625, 0.03125],
        "z": [[0.0, 1.0], [0.1, 0.25]],
        "sources": ["gaussian", "random"],
        "seed": 0,
        "L_box": 1.0,
        "N_box": 256,
        "lambda": 1.0,
    },
    "output": "out",
}


def schema() -> dict:
    text = resources.files("dirac_homog").joinpath("schema/scenario.schema.json").read_text()
    return json.loads(text)


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


@dataclass
class ScenarioConfig:
    data: dict
    base_dir: Path = field(default_factory=Path.cwd)

    def __getitem__(self, key):
        return self.data[key]

    @property
    def m(self) -> float:
        return float(self.data["m"])

    @property
    def beta(self) -> float:
        return float(self.data["beta"])

    @property
    def z_list(self) -> list[complex]:
        return [complex(re, im) for re, im in self.data["bench"]["z"]]

    def config_hash(self) -> str:
        d = {k: v for k, v in self.data.items() if k != "output"}
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()

    def potentials(self) -> PotentialSet:
        grid = PeriodicGrid(int(self.data["grid"]["n"]))
        fields = {}
        for name in ("V0", "V1", "V2", "V3"):
            entry = self.data["potentials"].get(name, "0")
            if isinstance(entry, dict):
                path = Path(entry["csv"])
                if not path.is_absolute():
                    path = self.base_dir / path
                f = read_field_csv(path)
                if f.grid != grid:
                    raise ConstraintError(f"{name} CSV has n={f.grid.n} but grid.n={grid.n}")
                fields[name] = f
            else:
                fields[name] = sample(grid, parse_expression(entry))
        note = self.data.get("hoelder_note") or "closed-form expressions or sampled CSV"
        return PotentialSet(**fields, hoelder_note=note)


def check_constraints(d: dict) -> None:
    if d["beta"] == 0:
        raise ConstraintError("beta must be nonzero")
    if d["m"] == 0:
        raise ConstraintError("m must be nonzero")
    n = d["grid"]["n"]
    if n % 2:
        raise ConstraintError(f"grid.n must be even, got {n}")
    w, itf = d["wall"], d["interface"]
    if not (w["a"] < 0 < w["b"]):
        raise ConstraintError(f"wall needs a < 0 < b, got a={w['a']}, b={w['b']}")
    L = itf["L"]
    if w["a"] < -0.8 * L or w["b"] > 0.8 * L:
        raise ConstraintError("wall must keep a 0.2 L margin inside the strip")
    if itf["N"] < 256:
        raise ConstraintError(f"interface.N must be at least 256, got {itf['N']}")
    xr = itf["xi1_range"]
    if xr is not None and not xr[0] < xr[1]:
        raise ConstraintError("interface.xi1_range must be increasing")
    b = d["bench"]
    for re, im in b["z"]:
        if im == 0:
            raise ConstraintError("bench z values need nonzero imaginary part")
        if abs(re) > b["lambda"]:
            raise ConstraintError(f"|Re z| = {abs(re)} exceeds bench.lambda = {b['lambda']}")
    for eps in b["epsilons"]:
        k = b["L_box"] / eps
        kr = int(round(k))
        if kr < 1 or abs(k - kr) > 1e-9 * max(k, 1.0) or b["N_box"] % (8 * kr):
            raise ConstraintError(
                f"commensurability: epsilon={eps:g} needs L_box/epsilon integer and N_box={b['N_box']} "
                f"a multiple of 8*L_box/epsilon")
    if b["N_box"] % 2:
        raise ConstraintError("bench.N_box must be even")


def load_config(data: dict, base_dir: str | Path | None = None) -> ScenarioConfig:
    validator = Draft202012Validator(schema())
    err = best_match(validator.iter_errors(data))
    if err is not None:
        path = ".".join(str(p) for p in err.absolute_path) or "$"
        raise SchemaError(path, err.message)
    full = _merge(DEFAULTS, data)
    check_constraints(full)
    return ScenarioConfig(full, Path(base_dir) if base_dir else Path.cwd())


def validate_config(path: str | Path) -> ScenarioConfig:
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"config file {path} does not exist")
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise SchemaError("$", f"invalid JSON: {exc}") from None
    return load_config(data, path.parent)


def sorted_epsilons(cfg: ScenarioConfig) -> list[float]:
    return sorted((float(e) for e in cfg["bench"]["epsilons"]), reverse=True)


def resolve_xi1_range(cfg: ScenarioConfig, m_plus: float, m_minus: float) -> tuple[float, float]:
    xr = cfg["interface"]["xi1_range"]
    if xr is not None:
        return float(xr[0]), float(xr[1])
    r = 3.0 * max(1.0, np.sqrt(abs(m_plus / cfg.beta)), np.sqrt(abs(m_minus / cfg.beta)))
    return -r, r
