"""CSV and ESRI-ASCII writers for rasters and curves.

Floats are written with ``repr`` so files round-trip exactly and reruns are
byte-identical.
"""

from __future__ import annotations

import csv

import numpy as np

from .core import Raster

NODATA = -9999.0


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    if isinstance(v, str):
        return v
    return repr(float(v))


def write_rows(path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def write_raster_csv(raster: Raster, path) -> None:
    """Flat ``i,j,x,y,value`` for masked-in cells (0-based indices)."""
    g = raster.grid
    cx, cy = g.centroids()
    ii, jj = np.nonzero(g.mask)
    write_rows(path, ["i", "j", "x", "y", "value"],
               ((i, j, cx[i, j], cy[i, j], raster.values[i, j]) for i, j in zip(ii, jj)))


def write_esri_ascii(raster: Raster, path) -> None:
    """ESRI ASCII grid; first data row is the top (largest ``y``) row."""
    g = raster.grid
    vals = np.where(g.mask, raster.values, NODATA)
    lines = [f"ncols {g.m}", f"nrows {g.p}", f"xllcorner {g.x_min!r}", f"yllcorner {g.y_min!r}"]
    if np.isclose(g.dx, g.dy, rtol=1e-12, atol=0):
        lines.append(f"cellsize {g.dx!r}")
    else:
        lines += [f"dx {g.dx!r}", f"dy {g.dy!r}"]
    lines.append(f"NODATA_value {NODATA!r}")
    for j in range(g.p - 1, -1, -1):
        lines.append(" ".join(repr(float(v)) for v in vals[:, j]))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def read_esri_ascii(path) -> tuple[dict, np.ndarray]:
    """Header dict and an ``(m, p)`` value array (NaN for NODATA)."""
    header = {}
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    k = 0
    while k < len(lines) and lines[k].split() and lines[k].split()[0][0].isalpha():
        key, value = lines[k].split()[:2]
        header[key.lower()] = float(value)
        k += 1
    rows = np.array([[float(v) for v in ln.split()] for ln in lines[k:] if ln.strip()])
    vals = rows[::-1].T.copy()
    vals[vals == header.get("nodata_value", NODATA)] = np.nan
    return header, vals


def write_surface(path, r_grid, t_grid, values) -> None:
    write_rows(path, ["r", "t", "value"],
               ((r, t, values[a, b]) for a, r in enumerate(r_grid) for b, t in enumerate(t_grid)))


def write_curve(path, name, grid, values, extra: dict | None = None) -> None:
    cols = [name, "value"] + list(extra or {})
    data = [grid, values] + [np.asarray(v) for v in (extra or {}).values()]
    write_rows(path, cols, zip(*data))
