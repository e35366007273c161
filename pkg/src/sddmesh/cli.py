"""Command line entry point: ``sddmesh run | table | check``."""

from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from sddmesh import __version__
from sddmesh.config import ConfigError, config_to_dict, parse_config
from sddmesh.driver import PROBLEM_DEFAULTS, SimulationConfig, SimulationError, record_at, run_reference, run_sdd
from sddmesh.problems import PROBLEMS, get_problem
from sddmesh.quality import linf_error, quality_ratio
from sddmesh.report import (
    QualityRow,
    RunManifest,
    decomposition_label,
    plot_mesh,
    write_long_table,
    write_snapshot,
    write_wide_table,
)

SEED_ENV = "SDDMESH_SEED"

log = logging.getLogger("sddmesh")


def _time_tag(t: float) -> str:
    return f"{t:.6g}".replace(".", "p")


def run_experiment(cfg: SimulationConfig, output_dir, decompositions=None) -> RunManifest:
    """Reference run plus one decomposed run per entry of ``decompositions``.

    Writes node snapshots (and figures) at every snapshot time, the long and
    wide quality tables, and ``manifest.json``. Defaults to ``cfg.decompositions``.
    """
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    decompositions = [tuple(d) for d in (decompositions or cfg.decompositions)]
    times = tuple(cfg.snapshots) or (cfg.t_final,)
    cfg = dataclasses.replace(cfg, snapshots=times)
    problem = get_problem(cfg)
    start = time.perf_counter()

    runs = {"SD": run_reference(cfg)}
    for px, py in decompositions:
        runs[decomposition_label(px, py)] = run_sdd(dataclasses.replace(cfg, px=px, py=py))

    written: list[Path] = []
    rows: list[QualityRow] = []
    for t in times:
        ref = record_at(runs["SD"], t)
        for label, records in runs.items():
            rec = record_at(records, t)
            meta = {"problem": cfg.problem, "time": repr(rec.time), "grid": f"{cfg.nx}x{cfg.ny}",
                    "decomposition": "1x1" if label == "SD" else label, "seed": cfg.mc.seed}
            stem = f"mesh_{label}_t{_time_tag(t)}"
            written.append(write_snapshot(out / f"{stem}.csv", rec.mesh, meta))
            if cfg.figures:
                title = f"{cfg.problem}, {'single domain' if label == 'SD' else label}, t={t:g}"
                written.append(plot_mesh(out / f"{stem}.png", rec.mesh, title))
            l_inf = linf_error(rec.state.u, rec.mesh, problem.exact, rec.time) if problem.has_exact else None
            r_max = r_mean = None
            if label != "SD":
                r_max, r_mean = quality_ratio(ref.mesh, rec.mesh)
            rows.append(QualityRow(t, label, l_inf, r_max, r_mean))

    labels = [decomposition_label(*d) for d in decompositions]
    written.append(write_long_table(out / "quality_long.csv", rows))
    written.append(write_wide_table(out / "quality_table.csv", rows, labels, problem.has_exact))
    written.append(write_wide_table(out / "quality_table_rounded.csv", rows, labels, problem.has_exact, digits=2))

    manifest = RunManifest(config_to_dict(cfg), cfg.mc.seed, __version__, time.perf_counter() - start)
    for p in written:
        manifest.add(p, out)
    manifest.write(out / "manifest.json")
    return manifest


def check(mc_n: int = 1000, steps: int = 10, seed: int | None = None, threads: int = 1, stream=None) -> bool:
    """Short runs of every problem: 1x1 must match the reference, 2x2 must run."""
    stream = stream or sys.stdout
    ok = True
    for name in PROBLEMS:
        d = PROBLEM_DEFAULTS[name]
        base = SimulationConfig.for_problem(name, t_final=d["t0"] + steps * d["dt"], threads=threads,
                                            pre_adapt_steps=50)
        mc = dataclasses.replace(base.mc, n_samples=mc_n, **({"seed": seed} if seed is not None else {}))
        base = dataclasses.replace(base, mc=mc)
        try:
            ref = run_reference(base)[-1]
            one = run_sdd(dataclasses.replace(base, px=1, py=1))[-1]
            same = np.array_equal(ref.mesh.x, one.mesh.x) and np.array_equal(ref.mesh.y, one.mesh.y)
            sdd = run_sdd(dataclasses.replace(base, px=2, py=2))[-1]
            r_max, r_mean = quality_ratio(ref.mesh, sdd.mesh)
            line = f"{name:18s} 1x1-identical={same} R_max(2x2)={r_max:.4f} R_mean(2x2)={r_mean:.4f}"
            ok &= same
        except SimulationError as exc:
            line = f"{name:18s} FAILED: {exc}"
            ok = False
        print(line, file=stream)
    return ok


def _load(args) -> SimulationConfig:
    try:
        cfg = parse_config(Path(args.config).read_text())
    except OSError as exc:
        raise SystemExit(f"cannot read config: {exc}")
    except ConfigError as exc:
        raise SystemExit(f"config error: {exc}")
    return _apply_overrides(cfg, args)


def _seed_override(args) -> int | None:
    if args.seed is not None:
        return args.seed
    env = os.environ.get(SEED_ENV)
    if env:
        try:
            return int(env)
        except ValueError:
            raise SystemExit(f"{SEED_ENV} must be an integer, got {env!r}")
    return None


def _apply_overrides(cfg: SimulationConfig, args) -> SimulationConfig:
    mc = {}
    seed = _seed_override(args)
    if seed is not None:
        mc["seed"] = seed
    if args.mc_n is not None:
        mc["n_samples"] = args.mc_n
    if args.stride is not None:
        mc["stride"] = args.stride
    kw = {}
    if args.threads is not None:
        kw["threads"] = args.threads
    return dataclasses.replace(cfg, mc=dataclasses.replace(cfg.mc, **mc), **kw)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sddmesh", description="Moving meshes by stochastic domain decomposition.")
    p.add_argument("--version", action="version", version=f"sddmesh {__version__}")
    sub = p.add_subparsers(dest="verb", required=True)

    def common(sp, need_config=True):
        if need_config:
            sp.add_argument("--config", required=True, help="YAML experiment document")
            sp.add_argument("--out", required=True, help="output directory")
        sp.add_argument("--seed", type=int, default=None, help=f"master seed (overrides ${SEED_ENV})")
        sp.add_argument("--threads", type=int, default=None)
        sp.add_argument("--stride", type=int, default=None, help="estimate every k-th interface node")
        sp.add_argument("--mc-n", type=int, default=None, help="Monte-Carlo samples per node")
        sp.add_argument("-v", "--verbose", action="store_true")

    common(sub.add_parser("run", help="reference plus the configured decomposition"))
    common(sub.add_parser("table", help="reference plus every decomposition in the config"))
    ck = sub.add_parser("check", help="short reduced-N runs of all four problems")
    common(ck, need_config=False)
    ck.add_argument("--steps", type=int, default=10)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.verb == "check":
        ok = check(args.mc_n or 1000, args.steps, _seed_override(args), args.threads or 1)
        return 0 if ok else 1
    cfg = _load(args)
    decs = [(cfg.px, cfg.py)] if args.verb == "run" else list(cfg.decompositions)
    try:
        manifest = run_experiment(cfg, args.out, decs)
    except SimulationError as exc:
        print(f"simulation failed: {exc}", file=sys.stderr)
        return 2
    for name in manifest.files:
        print(Path(args.out) / name)
    return 0


if __name__ == "__main__":
    sys.exit(main())
