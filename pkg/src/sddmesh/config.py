"""YAML experiment documents <-> :class:`SimulationConfig`.

Schema (all keys except ``problem``, ``dt`` and ``t_final`` are optional and
fall back to the per-problem defaults)::

    problem: burgers-dirichlet
    dt: 0.001
    t_final: 1.25
    t0: 0.25
    grid: {nx: 41, ny: 41}
    decomposition: [2, 2]              # used by `run`
    decompositions: [[2, 2], [4, 4]]   # swept by `table`
    snapshots: [0.75, 1.0, 1.25]
    mc: {n_samples: 10000, substeps: 10, seed: 20150601, stride: 1}
    density: {adaptive_c: 10.0, smoothing_passes: 0}   # or {alpha: 0.2}
    physics: {nu: 0.005, u0: 0.75, amplitude: 0.5, ring_r: 30.0,
              pile_base: 10.0, pile_height: 12.5, pile_radius: 0.5}
    initial_mesh: adapted
    pre_adapt_steps: 500
    threads: 1
    max_substeps: 200000
    figures: true
"""

from __future__ import annotations

import dataclasses
from typing import Any

import yaml

from sddmesh.density import DensityConfig
from sddmesh.driver import SimulationConfig
from sddmesh.stochastic import McConfig

REQUIRED = ("problem", "dt", "t_final")

_SCALARS: dict[str, tuple[type, ...]] = {
    "problem": (str,),
    "dt": (float, int),
    "t_final": (float, int),
    "t0": (float, int),
    "initial_mesh": (str,),
    "pre_adapt_steps": (int,),
    "threads": (int,),
    "max_substeps": (int,),
    "figures": (bool,),
}
_GRID = {"nx": (int,), "ny": (int,)}
_MC = {"n_samples": (int,), "substeps": (int,), "seed": (int,), "stride": (int,)}
_DENSITY = {"alpha": (float, int), "adaptive_c": (float, int), "smoothing_passes": (int,)}
_PHYSICS = {k: (float, int) for k in ("nu", "u0", "amplitude", "ring_r", "pile_base", "pile_height", "pile_radius")}
_SECTIONS = {"grid": _GRID, "mc": _MC, "density": _DENSITY, "physics": _PHYSICS}
_LISTS = ("decomposition", "decompositions", "snapshots")


class ConfigError(ValueError):
    pass


def _check_type(where: str, value: Any, types: tuple[type, ...]) -> Any:
    # bool is an int subclass; only accept it where bool is asked for
    if isinstance(value, bool) and bool not in types:
        raise ConfigError(f"{where}: expected {types[0].__name__}, got bool")
    if not isinstance(value, types):
        raise ConfigError(f"{where}: expected {types[0].__name__}, got {type(value).__name__}")
    return float(value) if float in types else value


def _section(doc: dict, name: str, schema: dict) -> dict:
    body = doc.get(name, {})
    if body is None:
        return {}
    if not isinstance(body, dict):
        raise ConfigError(f"{name}: expected a mapping")
    unknown = sorted(set(body) - set(schema))
    if unknown:
        raise ConfigError(f"unknown key(s) in {name}: {', '.join(unknown)}")
    return {k: _check_type(f"{name}.{k}", v, schema[k]) for k, v in body.items()}


def _pair(where: str, value: Any) -> tuple[int, int]:
    if not (isinstance(value, (list, tuple)) and len(value) == 2):
        raise ConfigError(f"{where}: expected [px, py]")
    return (_check_type(f"{where}[0]", value[0], (int,)), _check_type(f"{where}[1]", value[1], (int,)))


def config_from_dict(doc: dict | None) -> SimulationConfig:
    """Resolve a parsed document into a validated config (strict keys)."""
    doc = doc or {}
    if not isinstance(doc, dict):
        raise ConfigError("config document must be a mapping")
    missing = [k for k in REQUIRED if k not in doc]
    if missing:
        raise ConfigError(f"missing required key(s): {', '.join(missing)}")
    unknown = sorted(set(doc) - set(_SCALARS) - set(_SECTIONS) - set(_LISTS))
    if unknown:
        raise ConfigError(f"unknown key(s): {', '.join(unknown)}")

    kw: dict[str, Any] = {k: _check_type(k, doc[k], t) for k, t in _SCALARS.items() if k in doc}
    problem = kw.pop("problem")
    kw.update(_section(doc, "grid", _GRID))
    kw.update(_section(doc, "physics", _PHYSICS))
    if "decomposition" in doc:
        kw["px"], kw["py"] = _pair("decomposition", doc["decomposition"])
    if "decompositions" in doc:
        seq = doc["decompositions"]
        if not isinstance(seq, list) or not seq:
            raise ConfigError("decompositions: expected a non-empty list of [px, py]")
        kw["decompositions"] = tuple(_pair(f"decompositions[{k}]", v) for k, v in enumerate(seq))
    if "snapshots" in doc:
        seq = doc["snapshots"]
        if not isinstance(seq, list):
            raise ConfigError("snapshots: expected a list of times")
        kw["snapshots"] = tuple(_check_type(f"snapshots[{k}]", v, (float, int)) for k, v in enumerate(seq))

    try:
        base = SimulationConfig.for_problem(problem, **kw)
        mc = dataclasses.replace(base.mc, **_section(doc, "mc", _MC))
        dens = _section(doc, "density", _DENSITY)
        density = base.density
        if dens:
            if "alpha" in dens and "adaptive_c" in dens:
                raise ConfigError("density: give alpha or adaptive_c, not both")
            mode = {k: dens[k] for k in ("alpha", "adaptive_c") if k in dens}
            if not mode:
                mode = {"alpha": density.alpha} if density.alpha is not None else {"adaptive_c": density.adaptive_c}
            density = DensityConfig(**mode, smoothing_passes=dens.get("smoothing_passes", density.smoothing_passes))
        return dataclasses.replace(base, mc=mc, density=density)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def parse_config(text: str) -> SimulationConfig:
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    return config_from_dict(doc)


def config_to_dict(cfg: SimulationConfig) -> dict:
    """Fully explicit document; ``config_from_dict`` inverts it exactly."""
    density: dict[str, Any] = {"smoothing_passes": cfg.density.smoothing_passes}
    if cfg.density.alpha is not None:
        density["alpha"] = cfg.density.alpha
    else:
        density["adaptive_c"] = cfg.density.adaptive_c
    return {
        "problem": cfg.problem,
        "dt": cfg.dt,
        "t_final": cfg.t_final,
        "t0": cfg.t0,
        "grid": {"nx": cfg.nx, "ny": cfg.ny},
        "decomposition": [cfg.px, cfg.py],
        "decompositions": [list(d) for d in cfg.decompositions],
        "snapshots": list(cfg.snapshots),
        "mc": dataclasses.asdict(cfg.mc),
        "density": density,
        "physics": {k: getattr(cfg, k) for k in _PHYSICS},
        "initial_mesh": cfg.initial_mesh,
        "pre_adapt_steps": cfg.pre_adapt_steps,
        "threads": cfg.threads,
        "max_substeps": cfg.max_substeps,
        "figures": cfg.figures,
    }


def dump_config(cfg: SimulationConfig) -> str:
    return yaml.safe_dump(config_to_dict(cfg), sort_keys=False)
