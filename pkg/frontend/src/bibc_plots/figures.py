"""Render figures from bibc experiment CSV files.

Pure file-to-file transformations: the only numerics here are dB
conversion and axis scaling. Three kinds are supported, matching the
producer's CSV schemas:

  pe    semilog-y error-probability curves, one per (problem, bits, csi)
        from `snr_db,problem,bits,csi,pe_closed,pe_sim,trials`
        (the `csi` column is optional)
  pg    path-gain heatmap in dB over the room floor plan, with AP and
        device markers taken from the scene config, from `x_m,y_m,pg_db`
  nmse  estimation error vs pilot SNR, with/without refinement, from
        `snr_p_db,ap_id,variant,nmse_db` (or the estimator CLI's
        `snr_p_db,ap_id,nmse_iter,nmse_noiter`, converted to dB here)
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np
import yaml

FIGURE_KINDS = ("pe", "pg", "nmse")


class SchemaError(ValueError):
    """A required CSV column is missing or the file has no data rows."""


@dataclass
class FigureSpec:
    csv_path: str
    kind: str
    out_path: str
    scene_path: str | None = None
    title: str | None = None
    xlim: tuple[float, float] | None = None
    ylim: tuple[float, float] | None = None
    dpi: int = 150

    def __post_init__(self) -> None:
        if self.kind not in FIGURE_KINDS:
            raise ValueError(f"unknown figure kind {self.kind!r}")


def read_csv(path) -> tuple[list[str], list[dict]]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        rows = list(reader)
    if not rows:
        raise SchemaError(f"{path}: no data rows")
    return header, rows


def require_columns(header, needed, path) -> None:
    missing = [c for c in needed if c not in header]
    if missing:
        raise SchemaError(f"{path}: missing column(s) {', '.join(missing)}")


def load_scene_markers(path) -> dict:
    cfg = yaml.safe_load(Path(path).read_text())
    room = cfg.get("room", {})
    return {
        "dims": tuple(room.get("dims_m", (20.0, 10.0, 4.0))),
        "aps": [tuple(ap["center_m"]) for ap in cfg.get("aps", [])],
        "ref": [tuple(ap["center_m"]) for ap in cfg.get("aps", []) if ap.get("is_ref")],
        "bdes": [tuple(b["position_m"]) for b in cfg.get("bdes", [])],
    }


def plot_pe(spec: FigureSpec) -> Path:
    """Semilog-y error-rate curves grouped by problem, bit depth, and CSI."""
    header, rows = read_csv(spec.csv_path)
    require_columns(header, ["snr_db", "problem", "bits", "pe_closed"], spec.csv_path)
    has_csi = "csi" in header
    has_sim = "pe_sim" in header
    series: dict[tuple, list] = {}
    for r in rows:
        key = (r["problem"], r["bits"], r.get("csi", "") if has_csi else "")
        series.setdefault(key, []).append(r)
    fig, ax = plt.subplots(figsize=(6.4, 4.6))
    for (problem, bits, csi_mode), pts in sorted(series.items()):
        pts.sort(key=lambda r: float(r["snr_db"]))
        snr = np.array([float(r["snr_db"]) for r in pts])
        label = f"{problem}, b={bits}" + (f", {csi_mode}" if csi_mode else "")
        closed = np.array([float(r["pe_closed"]) for r in pts])
        ax.semilogy(snr, np.maximum(closed, 1e-300), marker="o", ms=3, label=label)
        if has_sim:
            sim = np.array([float(r["pe_sim"]) if r["pe_sim"] else np.nan for r in pts])
            if np.any(np.isfinite(sim)):
                ax.semilogy(snr, sim, linestyle="none", marker="x",
                            label=label + " (sim)")
    ax.set_xlabel("SNR (dB)")
    ax.set_ylabel("error probability")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(fontsize=8)
    if spec.title:
        ax.set_title(spec.title)
    if spec.xlim:
        ax.set_xlim(*spec.xlim)
    if spec.ylim:
        ax.set_ylim(*spec.ylim)
    return _save(fig, spec)


def plot_pg_map(spec: FigureSpec) -> Path:
    """Path-gain heatmap; axis extents equal the room dimensions."""
    header, rows = read_csv(spec.csv_path)
    require_columns(header, ["x_m", "y_m", "pg_db"], spec.csv_path)
    xs = np.array(sorted({float(r["x_m"]) for r in rows}))
    ys = np.array(sorted({float(r["y_m"]) for r in rows}))
    grid = np.full((ys.size, xs.size), np.nan)
    xi = {v: i for i, v in enumerate(xs)}
    yi = {v: i for i, v in enumerate(ys)}
    for r in rows:
        grid[yi[float(r["y_m"])], xi[float(r["x_m"])]] = float(r["pg_db"])
    markers = load_scene_markers(spec.scene_path) if spec.scene_path else None
    if markers:
        extent = (0.0, markers["dims"][0], 0.0, markers["dims"][1])
    else:
        # pad degenerate single-row/column grids so the axes stay regular
        dx = 0.5 if xs.min() == xs.max() else 0.0
        dy = 0.5 if ys.min() == ys.max() else 0.0
        extent = (xs.min() - dx, xs.max() + dx, ys.min() - dy, ys.max() + dy)
    fig, ax = plt.subplots(figsize=(7.2, 4.0))
    im = ax.imshow(grid, origin="lower", extent=extent, aspect="equal", cmap="viridis")
    fig.colorbar(im, ax=ax, label="path gain (dB)")
    if markers:
        if markers["aps"]:
            pts = np.array(markers["aps"])
            ax.plot(pts[:, 0], pts[:, 1], "w^", ms=7, mec="k", label="AP")
        if markers["ref"]:
            pts = np.array(markers["ref"])
            ax.plot(pts[:, 0], pts[:, 1], "ws", ms=8, mec="k", label="reference AP")
        if markers["bdes"]:
            pts = np.array(markers["bdes"])
            ax.plot(pts[:, 0], pts[:, 1], "r*", ms=11, mec="k", label="device")
        ax.legend(loc="upper right", fontsize=8)
        ax.set_xlim(0.0, markers["dims"][0])
        ax.set_ylim(0.0, markers["dims"][1])
    ax.set_xlabel("x (m)")
    ax.set_ylabel("y (m)")
    if spec.title:
        ax.set_title(spec.title)
    return _save(fig, spec)


def plot_nmse(spec: FigureSpec) -> Path:
    """Estimation-error curves: one line per (AP, variant)."""
    header, rows = read_csv(spec.csv_path)
    if "nmse_db" in header:
        require_columns(header, ["snr_p_db", "ap_id", "variant", "nmse_db"], spec.csv_path)
        records = [
            (float(r["snr_p_db"]), r["ap_id"], r["variant"], float(r["nmse_db"]))
            for r in rows
        ]
    else:
        require_columns(
            header, ["snr_p_db", "ap_id", "nmse_iter", "nmse_noiter"], spec.csv_path
        )
        records = []
        for r in rows:
            for variant, col in (("iter", "nmse_iter"), ("noiter", "nmse_noiter")):
                records.append(
                    (
                        float(r["snr_p_db"]),
                        r["ap_id"],
                        variant,
                        10.0 * np.log10(max(float(r[col]), 1e-300)),
                    )
                )
    series: dict[tuple, list] = {}
    for snr_p, ap, variant, val in records:
        series.setdefault((ap, variant), []).append((snr_p, val))
    fig, ax = plt.subplots(figsize=(6.4, 4.6))
    styles = {"iter": "-", "noiter": "--"}
    for (ap, variant), pts in sorted(series.items()):
        pts.sort()
        ax.plot(
            [p[0] for p in pts],
            [p[1] for p in pts],
            styles.get(variant, "-."),
            marker="o",
            ms=3,
            label=f"AP {ap}, {'with' if variant == 'iter' else 'without'} refinement",
        )
    ax.set_xlabel("pilot SNR (dB)")
    ax.set_ylabel("NMSE (dB)")
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=8)
    if spec.title:
        ax.set_title(spec.title)
    return _save(fig, spec)


def render(spec: FigureSpec) -> Path:
    return {"pe": plot_pe, "pg": plot_pg_map, "nmse": plot_nmse}[spec.kind](spec)


def _save(fig, spec: FigureSpec) -> Path:
    out = Path(spec.out_path)
    out.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out, dpi=spec.dpi, bbox_inches="tight")
    plt.close(fig)
    return out
