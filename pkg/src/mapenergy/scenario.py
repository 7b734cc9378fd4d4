"""Scenario files: schema, validation and execution.

A scenario is a JSON object::

    {
      "version": 1,
      "name": "sphere_inclusion",
      "mode": "verify",              # verify | flow | sweep | projective
      "domain": "sphere2:r=1",
      "target": "euclid3",
      "map": "sphere_inclusion",
      "resolution": [96, 192],       # optional
      "levels": 3,                   # optional
      "seed": 0,                     # optional
      "tolerances": {"rank": 1e-8},  # optional
      "expect": {"verdict": "HOLDS", "E1": {"approx": 25.1327, "tol": 1e-4}}
    }

plus a ``"flow"`` block in flow mode, a ``"sweep"`` block in sweep mode
and ``"theta"`` in projective mode. Unknown keys are rejected.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Optional

import numpy as np

from . import calculus as C
from .catalog import manifold
from .energy import Verdict, energy_report, verify_main_inequality
from .errors import ConfigError, MapEnergyError
from .flow import DiscreteMap, FlowConfig, run_flow
from .maps import MAP_CATALOG, build_map, canonical_param, format_map_spec, parse_map_spec
from .projective import one_form, projective_check, recover_theta
from .quadrature import build_grid
from .svg import line_plot

SCHEMA_VERSION = 1
MODES = ("verify", "flow", "sweep", "projective")

TOP_KEYS = {
    "version",
    "name",
    "mode",
    "domain",
    "target",
    "map",
    "resolution",
    "levels",
    "seed",
    "tolerances",
    "expect",
    "flow",
    "sweep",
    "theta",
    "description",
}
TOLERANCE_KEYS = {"rank", "npc", "projective"}
FLOW_KEYS = {"mode", "dt", "cfl", "max_steps", "tol", "energy_tol", "record_every", "max_rejections", "order", "time_limit"}
SWEEP_KEYS = {"param", "values"}

EXIT_OK = 0
EXIT_MISMATCH = 1
EXIT_PRECONDITION = 2
EXIT_VIOLATION = 3
EXIT_CONFIG = 4

SWEEP_COLUMNS = ("value", "E1", "E2", "margin", "residual", "verdict")


@dataclass
class Scenario:
    name: str
    mode: str
    domain: str
    target: str
    map: str
    resolution: Any = None
    levels: int = 3
    seed: int = 0
    tolerances: dict = field(default_factory=dict)
    expect: dict = field(default_factory=dict)
    flow: dict = field(default_factory=dict)
    sweep: dict = field(default_factory=dict)
    theta: str = "zero"
    description: str = ""


def _reject_unknown(obj: dict, allowed: set, where: str) -> None:
    extra = sorted(set(obj) - allowed)
    if extra:
        raise ConfigError(f"{where}: unknown keys {extra}")


def _positive(value, what: str) -> float:
    try:
        v = float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{what} must be a number, got {value!r}") from None
    if not v > 0 or not math.isfinite(v):
        raise ConfigError(f"{what} must be positive, got {value!r}")
    return v


def parse_scenario(data: dict, default_name: str = "scenario") -> Scenario:
    if not isinstance(data, dict):
        raise ConfigError("scenario must be a JSON object")
    _reject_unknown(data, TOP_KEYS, "scenario")
    if data.get("version") != SCHEMA_VERSION:
        raise ConfigError(f"scenario version must be {SCHEMA_VERSION}, got {data.get('version')!r}")
    for key in ("mode", "domain", "target", "map"):
        if not isinstance(data.get(key), str):
            raise ConfigError(f"scenario needs a string {key!r}")
    mode = data["mode"]
    if mode not in MODES:
        raise ConfigError(f"mode must be one of {MODES}, got {mode!r}")
    tol = data.get("tolerances", {})
    if not isinstance(tol, dict):
        raise ConfigError("tolerances must be an object")
    _reject_unknown(tol, TOLERANCE_KEYS, "tolerances")
    tol = {k: _positive(v, f"tolerances.{k}") for k, v in tol.items()}
    flow = data.get("flow", {})
    if mode == "flow":
        if not isinstance(flow, dict):
            raise ConfigError("flow must be an object")
        _reject_unknown(flow, FLOW_KEYS, "flow")
    elif "flow" in data:
        raise ConfigError(f"'flow' block is only valid in flow mode, not {mode}")
    sweep = data.get("sweep", {})
    if mode == "sweep":
        if not isinstance(sweep, dict):
            raise ConfigError("sweep must be an object")
        _reject_unknown(sweep, SWEEP_KEYS, "sweep")
    elif "sweep" in data:
        raise ConfigError(f"'sweep' block is only valid in sweep mode, not {mode}")
    if "theta" in data and mode != "projective":
        raise ConfigError("'theta' is only valid in projective mode")
    levels = data.get("levels", 3)
    if not isinstance(levels, int) or levels < 1:
        raise ConfigError(f"levels must be a positive integer, got {levels!r}")
    seed = data.get("seed", 0)
    if not isinstance(seed, int) or seed < 0:
        raise ConfigError(f"seed must be a non-negative integer, got {seed!r}")
    expect = data.get("expect", {})
    if not isinstance(expect, dict):
        raise ConfigError("expect must be an object")
    sc = Scenario(
        name=str(data.get("name", default_name)),
        mode=mode,
        domain=data["domain"],
        target=data["target"],
        map=data["map"],
        resolution=data.get("resolution"),
        levels=levels,
        seed=seed,
        tolerances=tol,
        expect=expect,
        flow=dict(flow),
        sweep=dict(sweep),
        theta=str(data.get("theta", "zero")),
        description=str(data.get("description", "")),
    )
    validate(sc)
    return sc


def load_scenario(path) -> Scenario:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return parse_scenario(data, default_name=path.stem)


def validate(sc: Scenario) -> None:
    """Resolve every catalog reference and check numeric settings."""
    try:
        dom, tgt = manifold(sc.domain), manifold(sc.target)
        name, _ = parse_map_spec(sc.map)
        build_map(sc.map, dom, tgt)
        if sc.mode == "projective" and sc.theta != "recover":
            one_form(sc.theta, dom.dim)
    except MapEnergyError as exc:
        raise ConfigError(str(exc)) from None
    if sc.resolution is not None:
        res = sc.resolution
        items = res if isinstance(res, list) else [res]
        if not items or not all(isinstance(r, int) and r > 0 for r in items):
            raise ConfigError(f"resolution must be a positive integer or list of them, got {res!r}")
    if sc.mode == "flow":
        _flow_config(sc)
    if sc.mode == "sweep":
        values = sc.sweep.get("values")
        if not isinstance(values, list) or not values:
            raise ConfigError("sweep.values must be a nonempty list")
        for v in values:
            if not isinstance(v, (int, float)) or not math.isfinite(v):
                raise ConfigError(f"sweep value {v!r} is not a finite number")
        _sweep_spec(sc, sc.sweep.get("param"), values[0])


def _flow_config(sc: Scenario) -> FlowConfig:
    cfg = dict(sc.flow)
    for key in ("max_steps", "record_every", "max_rejections", "order"):
        if key in cfg and not isinstance(cfg[key], int):
            raise ConfigError(f"flow.{key} must be an integer")
    try:
        return FlowConfig(**cfg)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def _sweep_spec(sc: Scenario, param, value) -> tuple[str, str]:
    """(domain, map spec) with ``param`` set to ``value``."""
    if not isinstance(param, str) or not param:
        raise ConfigError("sweep.param must be a nonempty string")
    name, params = parse_map_spec(sc.map)
    param = canonical_param(name, param)
    if param in MAP_CATALOG[name].params:
        params = {**params, param: float(value)}
        return sc.domain, format_map_spec(name, params)
    if param == "r" and sc.domain.startswith("sphere2"):
        if not value > 0:
            raise ConfigError("sphere radius must be positive")
        return f"sphere2:r={float(value)!r}", sc.map
    raise ConfigError(f"sweep parameter {param!r} is not a parameter of map {name!r}")


# ---------------------------------------------------------------------------
# execution


@dataclass
class Outcome:
    name: str
    mode: str
    verdict: str
    report: dict
    artifacts: dict
    failures: list

    @property
    def exit_code(self) -> int:
        verdicts = self.report.get("verdicts", [self.verdict])
        if Verdict.VIOLATION.value in verdicts:
            return EXIT_VIOLATION
        if Verdict.PRECONDITION_FAILED.value in verdicts:
            return EXIT_PRECONDITION
        if self.failures:
            return EXIT_MISMATCH
        return EXIT_OK

    def summary(self) -> str:
        status = {0: "ok", 1: "MISMATCH", 2: "precondition failed", 3: "VIOLATION", 4: "config error"}[self.exit_code]
        line = f"{self.name} [{self.mode}] {self.verdict}: {status}"
        if self.failures:
            line += " (" + "; ".join(self.failures) + ")"
        return line


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    if isinstance(obj, Verdict):
        return obj.value
    return obj


def dumps(obj) -> str:
    return json.dumps(_clean(obj), sort_keys=True, indent=2) + "\n"


def _lookup(report: dict, key: str):
    cur = report
    for part in key.split("."):
        if not isinstance(cur, dict) or part not in cur:
            raise KeyError(key)
        cur = cur[part]
    return cur


def check_expectations(report: dict, expect: dict) -> list[str]:
    """Compare report entries with expectations.

    A value is matched exactly (a list means "one of"); an object may hold
    ``approx`` with ``tol``, ``min`` and/or ``max``. Keys use dots for nested
    entries, e.g. ``"equality.rigid"``.
    """
    failures = []
    for key, want in sorted(expect.items()):
        try:
            got = _lookup(report, key)
        except KeyError:
            failures.append(f"{key} missing from report")
            continue
        if isinstance(want, dict):
            unknown = set(want) - {"approx", "tol", "min", "max"}
            if unknown:
                raise ConfigError(f"expect.{key}: unknown keys {sorted(unknown)}")
            try:
                x = float(got)
            except (TypeError, ValueError):
                failures.append(f"{key}={got!r} is not numeric")
                continue
            if "approx" in want and not abs(x - float(want["approx"])) <= float(want.get("tol", 1e-9)):
                failures.append(f"{key}={x:.10g} not within {want.get('tol', 1e-9)} of {want['approx']}")
            if "min" in want and not x >= float(want["min"]):
                failures.append(f"{key}={x:.6g} < {want['min']}")
            if "max" in want and not x <= float(want["max"]):
                failures.append(f"{key}={x:.6g} > {want['max']}")
        elif isinstance(want, list):
            if got not in want:
                failures.append(f"{key}={got!r} not in {want}")
        elif got != want:
            failures.append(f"{key}={got!r} != {want!r}")
    return failures


def apply_overrides(sc: Scenario, resolution=None, levels=None, seed=None) -> Scenario:
    changes = {}
    if resolution is not None:
        changes["resolution"] = resolution
    if levels is not None:
        changes["levels"] = levels
    if seed is not None:
        changes["seed"] = seed
    return replace(sc, **changes) if changes else sc


def _resolution(sc: Scenario):
    res = sc.resolution
    return tuple(res) if isinstance(res, list) else res


def _verify_report(sc: Scenario, domain: str, spec: str) -> dict:
    dom, tgt = manifold(domain), manifold(sc.target)
    f = build_map(spec, dom, tgt)
    rep = energy_report(
        f,
        levels=sc.levels,
        resolution=_resolution(sc),
        rank_tolerance=sc.tolerances.get("rank", C.RANK_TOLERANCE),
        seed=sc.seed,
        npc_tolerance=sc.tolerances.get("npc", 1e-9),
    )
    out = rep.to_dict()
    out["map"] = spec
    out["verdict"] = verify_main_inequality(rep).value
    return out


def run_verify(sc: Scenario) -> tuple[dict, dict]:
    report = _verify_report(sc, sc.domain, sc.map)
    row = ",".join(
        [sc.name] + [repr(float(report[k])) for k in ("E1", "E2", "integral_Q", "integral_sff", "bochner_residual", "margin")]
        + [report["verdict"]]
    )
    csv = "name,E1,E2,integral_Q,integral_sff,bochner_residual,margin,verdict\n" + row + "\n"
    return report, {"summary.csv": csv}


def run_projective(sc: Scenario) -> tuple[dict, dict]:
    dom, tgt = manifold(sc.domain), manifold(sc.target)
    f = build_map(sc.map, dom, tgt)
    grid = build_grid(dom, _resolution(sc))
    extra = {}
    if sc.theta == "recover":
        fit = recover_theta(f, grid)
        theta = fit.theta
        extra = {"fit_residual": fit.max_residual, "skipped_nodes": fit.skipped.tolist()}
    else:
        theta = one_form(sc.theta, dom.dim)
    tol = sc.tolerances.get("projective")
    kwargs = {"tolerance": tol} if tol is not None else {}
    rep = projective_check(f, grid, theta, seed=sc.seed, **kwargs)
    out = rep.to_dict()
    out.update(extra)
    out.update({"map": sc.map, "domain": dom.name, "target": tgt.name, "theta": sc.theta, "resolution": list(grid.resolution)})
    return out, {}


def run_sweep(sc: Scenario, param: Optional[str] = None, values: Optional[list] = None) -> tuple[dict, dict]:
    param = param if param is not None else sc.sweep.get("param")
    values = values if values is not None else sc.sweep.get("values")
    if not values:
        raise ConfigError("sweep needs a nonempty list of values")
    rows = []
    for v in values:
        domain, spec = _sweep_spec(sc, param, v)
        rep = _verify_report(sc, domain, spec)
        rows.append(
            {
                "value": float(v),
                "E1": rep["E1"],
                "E2": rep["E2"],
                "margin": rep["margin"],
                "residual": rep["bochner_residual"],
                "verdict": rep["verdict"],
                "energy_ratio": rep["energy_ratio"],
            }
        )
    lines = [",".join(SWEEP_COLUMNS)]
    for r in rows:
        lines.append(",".join(repr(float(r[k])) if k != "verdict" else r[k] for k in SWEEP_COLUMNS))
    csv = "\n".join(lines) + "\n"
    xs = [r["value"] for r in rows]
    svg = line_plot(
        {"margin": (xs, [r["margin"] for r in rows])},
        title=f"{sc.name}: margin vs {param}",
        xlabel=param,
        ylabel="E2 - Ric_min E1",
    )
    verdicts = [r["verdict"] for r in rows]
    report = {
        "param": param,
        "rows": rows,
        "verdicts": verdicts,
        "min_margin": min(r["margin"] for r in rows),
        "map": sc.map,
        "domain": sc.domain,
        "target": sc.target,
    }
    return report, {"sweep.csv": csv, "margin.svg": svg}


def _flow_initial(sc: Scenario, shape) -> DiscreteMap:
    dom, tgt = manifold(sc.domain), manifold(sc.target)
    name, params = parse_map_spec(sc.map)
    spec = sc.map
    if name == "sphere_capped" and "z0" not in params and "values" not in params:
        # put the zero set of the initial map on the pinned rings
        nt = shape[0] if isinstance(shape, tuple) else shape
        spec = format_map_spec(name, {**params, "z0": math.cos(math.pi / (2 * nt))})
    f = build_map(spec, dom, tgt)
    return DiscreteMap.from_analytic(f, shape)


def run_flow_scenario(sc: Scenario) -> tuple[dict, dict]:
    config = _flow_config(sc)
    shape = _resolution(sc) or 64
    if isinstance(shape, int) and sc.domain.startswith("sphere2"):
        shape = (shape, shape)
    m0 = _flow_initial(sc, shape)
    trace, m = run_flow(m0, config, seed=sc.seed)
    margins = trace.column("margin")
    certs = np.array(trace.certificates)
    npc = np.array(trace.npc_certified)
    ok = margins >= -certs
    if not npc.all():
        verdict = Verdict.PRECONDITION_FAILED.value
    elif ok.all():
        verdict = Verdict.HOLDS.value
    else:
        verdict = Verdict.VIOLATION.value
    E1 = trace.column("E1")
    report = {
        "map": sc.map,
        "domain": m0.domain.name,
        "target": m0.target.name,
        "mode": config.mode,
        "shape": list(m0.grid.shape),
        "trace": trace.to_dict(),
        "E1_ratio": float(E1[-1] / E1[0]) if E1[0] > 0 else 0.0,
        "sup_tau1": float(trace.column("sup_tau1")[-1]),
        "sup_tau2": float(trace.column("sup_tau2")[-1]),
        "min_margin_slack": float(np.min(margins + certs)),
        "verdict": verdict,
    }
    svg = line_plot(
        {"E1": (trace.column("t"), E1), "E2": (trace.column("t"), trace.column("E2"))},
        title=f"{sc.name}: {config.mode} flow",
        xlabel="t",
        ylabel="energy",
        logy=True,
    )
    return report, {"trace.csv": trace.to_csv(), "energy.svg": svg}


RUNNERS = {"verify": run_verify, "flow": run_flow_scenario, "projective": run_projective}


def run_scenario(sc: Scenario, out_dir: Optional[Path] = None, param=None, values=None) -> Outcome:
    """Run ``sc`` and write ``report.json`` plus mode artifacts to ``out_dir/<name>``."""
    try:
        if sc.mode == "sweep" or param is not None or values is not None:
            report, artifacts = run_sweep(sc, param, values)
            verdict = "HOLDS"
            for bad in (Verdict.VIOLATION.value, Verdict.PRECONDITION_FAILED.value):
                if bad in report["verdicts"]:
                    verdict = bad
                    break
            report["verdict"] = verdict
        else:
            report, artifacts = RUNNERS[sc.mode](sc)
    except ConfigError:
        raise
    except MapEnergyError as exc:
        raise ConfigError(f"{sc.name}: {type(exc).__name__}: {exc}") from None
    report = {"scenario": sc.name, "mode": sc.mode, "seed": sc.seed, **report}
    failures = check_expectations(report, sc.expect)
    if out_dir is not None:
        target = Path(out_dir) / sc.name
        target.mkdir(parents=True, exist_ok=True)
        (target / "report.json").write_text(dumps(report))
        for fname, text in artifacts.items():
            (target / fname).write_text(text)
    return Outcome(sc.name, sc.mode, report["verdict"], report, artifacts, failures)


def bundled_scenarios() -> list[Path]:
    return sorted((Path(__file__).parent / "scenarios").glob("*.json"))
