"""Deterministic artifact writers.

Reports are JSON with sorted keys, tables are comma-separated with quoted
string cells and LF line ends, and density plots are self-contained SVG
built from fixed-format numbers. Identical inputs must produce identical
bytes; nothing here may consult the clock or unordered containers.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import os

import numpy as np


def config_digest(config) -> str:
    canonical = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()


def _jsonable(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, complex):
        return {"re": x.real, "im": x.imag}
    if isinstance(x, np.ndarray):
        return [_jsonable(v) for v in x.tolist()]
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    return x


def write_json(path, payload):
    text = json.dumps(_jsonable(payload), sort_keys=True, indent=2)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text + "\n")


def write_csv(path, header, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n", quoting=csv.QUOTE_NONNUMERIC)
    writer.writerow(list(header))
    for row in rows:
        writer.writerow([v.item() if isinstance(v, (np.floating, np.integer)) else v
                         for v in row])
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(buf.getvalue())


def density_grid(points, weights, bins, bounds=None):
    x = np.real(points)
    y = np.imag(points)
    if bounds is None:
        pad = 0.05 * max(np.ptp(x), np.ptp(y), 1e-9)
        bounds = (x.min() - pad, x.max() + pad, y.min() - pad, y.max() + pad)
    grid, _, _ = np.histogram2d(
        x, y, bins=bins,
        range=[[bounds[0], bounds[1]], [bounds[2], bounds[3]]],
        weights=weights,
    )
    return grid, bounds


def write_density_svg(path, cloud, bins=64, size=480):
    """Self-contained SVG heat map of the 2-D histogram of a point cloud.

    Empty cells render at zero intensity; the byte output is a pure function
    of the cloud and the parameters.
    """
    grid, bounds = density_grid(cloud.points, cloud.effective_weights(), bins)
    peak = grid.max()
    cell = size / bins
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
        f'viewBox="0 0 {size} {size}">',
        f'<rect width="{size}" height="{size}" fill="#000000"/>',
    ]
    for i in range(bins):
        for j in range(bins):
            v = grid[i, j]
            if v <= 0:
                continue
            shade = int(round(255 * (v / peak) ** 0.5))
            # histogram x is the real axis; SVG y runs downward
            x0 = i * cell
            y0 = size - (j + 1) * cell
            parts.append(
                f'<rect x="{x0:.2f}" y="{y0:.2f}" width="{cell:.2f}" '
                f'height="{cell:.2f}" fill="#{shade:02x}{shade:02x}ff"/>'
            )
    parts.append(
        f'<!-- bounds {bounds[0]:.6f} {bounds[1]:.6f} {bounds[2]:.6f} {bounds[3]:.6f} -->'
    )
    parts.append("</svg>")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(parts) + "\n")


def ensure_dir(path):
    os.makedirs(path, exist_ok=True)
    return path
