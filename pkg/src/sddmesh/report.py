"""File outputs: mesh snapshots, quality tables, figures and the run manifest."""

from __future__ import annotations

import csv
import hashlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from sddmesh.grid import PhysicalMesh

SNAPSHOT_COLUMNS = ("i", "j", "xi", "eta", "x", "y")
LONG_COLUMNS = ("t_f", "decomposition", "l_inf", "r_max", "r_mean")


def decomposition_label(px: int, py: int) -> str:
    return f"{px}x{py}"


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_snapshot(path: Path, mesh: PhysicalMesh, meta: dict) -> Path:
    """One row per node, preceded by ``# key: value`` metadata lines."""
    g = mesh.grid
    xi, eta = g.nodes()
    with open(path, "w", newline="") as fh:
        for k, v in meta.items():
            fh.write(f"# {k}: {v}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SNAPSHOT_COLUMNS)
        for j in range(g.ny):
            for i in range(g.nx):
                w.writerow((i, j, _fmt(xi[i, j]), _fmt(eta[i, j]), _fmt(mesh.x[i, j]), _fmt(mesh.y[i, j])))
    return path


def read_snapshot(path: Path) -> tuple[dict, np.ndarray]:
    """Metadata dict and an ``(n, 6)`` array in :data:`SNAPSHOT_COLUMNS` order."""
    meta = {}
    rows = []
    with open(path) as fh:
        for line in fh:
            if line.startswith("#"):
                k, _, v = line[1:].partition(":")
                meta[k.strip()] = v.strip()
            elif line.startswith("i,"):
                continue
            elif line.strip():
                rows.append([float(s) for s in line.split(",")])
    return meta, np.array(rows)


@dataclass
class QualityRow:
    t_f: float
    decomposition: str
    l_inf: float | None
    r_max: float | None
    r_mean: float | None


def write_long_table(path: Path, rows: list[QualityRow]) -> Path:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LONG_COLUMNS)
        for r in rows:
            w.writerow((_fmt(r.t_f), r.decomposition, _fmt(r.l_inf), _fmt(r.r_max), _fmt(r.r_mean)))
    return path


def wide_columns(decompositions: list[str], with_error: bool) -> list[str]:
    cols = ["t_f"]
    if with_error:
        cols.append("l_inf_SD")
    for d in decompositions:
        if with_error:
            cols.append(f"l_inf_{d}")
        cols += [f"R_max_{d}", f"R_mean_{d}"]
    return cols


def write_wide_table(path: Path, rows: list[QualityRow], decompositions: list[str], with_error: bool,
                     digits: int | None = None) -> Path:
    """One line per final time, one column group per decomposition.

    ``digits`` rounds the values the way published tables do.
    """
    cols = wide_columns(decompositions, with_error)
    times = sorted({r.t_f for r in rows})
    by_key = {(r.t_f, r.decomposition): r for r in rows}

    def val(v):
        return _fmt(v if v is None or digits is None else round(float(v), digits))

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for t in times:
            line = [_fmt(t)]
            if with_error:
                ref = by_key.get((t, "SD"))
                line.append(val(ref.l_inf if ref else None))
            for d in decompositions:
                r = by_key.get((t, d))
                if with_error:
                    line.append(val(r.l_inf if r else None))
                line += [val(r.r_max if r else None), val(r.r_mean if r else None)]
            w.writerow(line)
    return path


def plot_mesh(path: Path, mesh: PhysicalMesh, title: str = "") -> Path:
    """Draw the mesh lines (both families) to an image file."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5, 5))
    kw = dict(color="k", lw=0.4)
    for i in range(mesh.grid.nx):
        ax.plot(mesh.x[i, :], mesh.y[i, :], **kw)
    for j in range(mesh.grid.ny):
        ax.plot(mesh.x[:, j], mesh.y[:, j], **kw)
    d = mesh.domain
    ax.set_xlim(d.x0, d.x0 + d.Lx)
    ax.set_ylim(d.y0, d.y0 + d.Ly)
    ax.set_aspect("equal")
    ax.set_xlabel("x")
    ax.set_ylabel("y")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    # no software/date stamps, so reruns produce identical bytes
    fig.savefig(path, dpi=120, metadata={"Software": None})
    plt.close(fig)
    return path


def sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


@dataclass
class RunManifest:
    config: dict
    seed: int
    version: str
    wall_clock: float
    files: dict[str, str] = field(default_factory=dict)

    def add(self, path: Path, root: Path) -> None:
        self.files[os.path.relpath(path, root)] = sha256(path)

    def write(self, path: Path) -> Path:
        body = {"config": self.config, "seed": self.seed, "version": self.version,
                "wall_clock_s": self.wall_clock, "files": self.files}
        path.write_text(json.dumps(body, indent=2, sort_keys=False) + "\n")
        return path

    @classmethod
    def read(cls, path: Path) -> "RunManifest":
        body = json.loads(Path(path).read_text())
        return cls(body["config"], body["seed"], body["version"], body["wall_clock_s"], body["files"])

    def verify(self, root: Path) -> list[str]:
        """Names of listed files that are missing or whose checksum changed."""
        bad = []
        for name, digest in self.files.items():
            p = Path(root) / name
            if not p.is_file() or sha256(p) != digest:
                bad.append(name)
        return bad
