"""Render solver outputs to raster figures.

Consumes only the frozen CSV schemas emitted by the cordes-pinn harness:

  field dumps       x1..xd, exact, predicted, abs_error
  history           epoch, total_loss, ..., grad_norm, sigma_proxy, l2, linf, ...
  landscape         a, b, loss
  transport grids   x1, x2, t1, t2

Four figure kinds: fields_triptych, dynamics_pair, landscape_surface,
transport_grid. Invoked as a script:

  cpinn-render --kind dynamics_pair --in cordes.csv plain.csv --out fig.png
"""

from __future__ import annotations

import argparse
import csv
import sys
from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = ["FigureRequest", "render", "SchemaError", "main"]

KINDS = ("fields_triptych", "dynamics_pair", "landscape_surface", "transport_grid")


class SchemaError(ValueError):
    """Input file does not carry the expected columns."""


@dataclass
class FigureRequest:
    kind: str
    inputs: tuple[str, ...]
    output: str
    title: str | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SchemaError(f"unknown figure kind {self.kind!r}; choose from {KINDS}")


def _read_csv(path, required: tuple[str, ...]) -> dict[str, np.ndarray]:
    path = Path(path)
    if not path.exists():
        raise SchemaError(f"input file not found: {path}")
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or ()
        missing = [c for c in required if c not in header]
        if missing:
            raise SchemaError(
                f"{path.name}: missing column(s) {', '.join(missing)}; "
                f"found {', '.join(header)}"
            )
        rows = list(reader)
    out = {}
    for col in header:
        vals = [(r[col] if r[col] != "" else "nan") for r in rows]
        try:
            out[col] = np.array(vals, dtype=float)
        except ValueError:
            out[col] = np.array([r[col] for r in rows])
    return out


def _scatter_field(ax, x, y, values, label):
    order = np.argsort(values)
    sc = ax.scatter(x[order], y[order], c=values[order], s=4, cmap="viridis")
    ax.set_title(label)
    ax.set_xlabel("x1")
    ax.set_ylabel("x2")
    ax.set_aspect("equal")
    return sc


def _render_fields_triptych(request: FigureRequest):
    data = _read_csv(request.inputs[0], ("x1", "x2", "predicted"))
    fig, axes = plt.subplots(1, 3, figsize=(13.5, 4.2), constrained_layout=True)
    panels = [("exact", "exact solution"), ("predicted", "numerical solution"),
              ("abs_error", "absolute error")]
    for ax, (col, label) in zip(axes, panels):
        if col not in data or np.all(np.isnan(data[col])):
            ax.text(0.5, 0.5, f"no {col} column", ha="center", va="center")
            ax.set_axis_off()
            continue
        sc = _scatter_field(ax, data["x1"], data["x2"], data[col], label)
        fig.colorbar(sc, ax=ax, fraction=0.046)
    if request.title:
        fig.suptitle(request.title)
    return fig


def _render_dynamics_pair(request: FigureRequest):
    if len(request.inputs) != 2:
        raise SchemaError("dynamics_pair needs two history files: cordes then plain")
    cordes = _read_csv(request.inputs[0], ("epoch", "grad_norm", "sigma_proxy"))
    plain = _read_csv(request.inputs[1], ("epoch", "grad_norm", "sigma_proxy"))
    fig, axes = plt.subplots(1, 2, figsize=(11.0, 4.0), constrained_layout=True)
    series = [("grad_norm", "gradient norm"), ("sigma_proxy", "sigma_max proxy")]
    for ax, (col, label) in zip(axes, series):
        for data, name in ((cordes, "C-PINN"), (plain, "PINN")):
            mask = np.isfinite(data[col])
            ax.plot(data["epoch"][mask], data[col][mask], label=name)
        ax.set_yscale("log")
        ax.set_xlabel("epoch")
        ax.set_title(label)
        ax.legend()
    if request.title:
        fig.suptitle(request.title)
    return fig


def _render_landscape_surface(request: FigureRequest):
    data = _read_csv(request.inputs[0], ("a", "b", "loss"))
    a_vals = np.unique(data["a"])
    b_vals = np.unique(data["b"])
    grid = np.full((a_vals.size, b_vals.size), np.nan)
    ai = np.searchsorted(a_vals, data["a"])
    bi = np.searchsorted(b_vals, data["b"])
    grid[ai, bi] = data["loss"]
    if np.any(np.isnan(grid)):
        raise SchemaError("landscape CSV does not cover a full offset grid")
    fig = plt.figure(figsize=(6.4, 5.2))
    ax = fig.add_subplot(projection="3d")
    mesh_a, mesh_b = np.meshgrid(a_vals, b_vals, indexing="ij")
    ax.plot_surface(mesh_a, mesh_b, np.log10(np.maximum(grid, 1e-300)),
                    cmap="viridis", linewidth=0)
    ax.set_xlabel("a")
    ax.set_ylabel("b")
    ax.set_zlabel("log10 loss")
    if request.title:
        ax.set_title(request.title)
    return fig


def _render_transport_grid(request: FigureRequest):
    data = _read_csv(request.inputs[0], ("x1", "x2", "t1", "t2"))
    fig, axes = plt.subplots(1, 2, figsize=(10.2, 5.0), constrained_layout=True)
    for ax, (cx, cy, label) in zip(
        axes, (("x1", "x2", "source grid"), ("t1", "t2", "transported grid"))
    ):
        _plot_grid_lines(ax, data["x1"], data["x2"], data[cx], data[cy])
        ax.set_title(label)
        ax.set_aspect("equal")
    if request.title:
        fig.suptitle(request.title)
    return fig


def _plot_grid_lines(ax, src_x, src_y, px, py):
    xs = np.unique(src_x)
    ys = np.unique(src_y)
    if xs.size * ys.size == src_x.size:
        # structured grid: draw its (mapped) rows and columns
        ix = np.searchsorted(xs, src_x)
        iy = np.searchsorted(ys, src_y)
        gx = np.empty((xs.size, ys.size))
        gy = np.empty((xs.size, ys.size))
        gx[ix, iy] = px
        gy[ix, iy] = py
        for i in range(xs.size):
            ax.plot(gx[i, :], gy[i, :], color="tab:blue", linewidth=0.6)
        for j in range(ys.size):
            ax.plot(gx[:, j], gy[:, j], color="tab:blue", linewidth=0.6)
    else:
        ax.scatter(px, py, s=2)


_RENDERERS = {
    "fields_triptych": _render_fields_triptych,
    "dynamics_pair": _render_dynamics_pair,
    "landscape_surface": _render_landscape_surface,
    "transport_grid": _render_transport_grid,
}


def render(request: FigureRequest) -> Path:
    """Render one figure; returns the written image path."""
    fig = _RENDERERS[request.kind](request)
    out = Path(request.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out, dpi=130)
    plt.close(fig)
    return out


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="cpinn-render", description=__doc__)
    parser.add_argument("--kind", required=True, choices=KINDS)
    parser.add_argument("--in", dest="inputs", nargs="+", required=True)
    parser.add_argument("--out", required=True)
    parser.add_argument("--title", default=None)
    args = parser.parse_args(argv)
    try:
        path = render(
            FigureRequest(kind=args.kind, inputs=tuple(args.inputs),
                          output=args.out, title=args.title)
        )
    except SchemaError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    print(f"wrote {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
