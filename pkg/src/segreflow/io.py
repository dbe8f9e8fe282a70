"""Writers for the run outputs: JSON summaries, CSV tables and PGM label images."""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .grid import Grid
from .kop import State
from .partition import Partition, intervals_1d

__all__ = [
    "dumps_json",
    "write_json",
    "write_rows_csv",
    "write_fields_csv",
    "write_partition_csv",
    "write_partition_pgm",
    "interface_mask",
    "label_image",
]


def _clean(obj):
    """Make ``obj`` strict-JSON serialisable (numpy scalars, non-finite floats)."""
    if isinstance(obj, Mapping):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if np.isfinite(v) else None
    return obj


def dumps_json(obj) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_json(path: str | Path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps_json(obj))
    return path


def write_rows_csv(path: str | Path, rows: Iterable[Mapping], fieldnames: list[str] | None = None) -> Path:
    rows = list(rows)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if fieldnames is None:
        fieldnames = list(rows[0]) if rows else []
    with path.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames, lineterminator="\n")
        writer.writeheader()
        for r in rows:
            writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
    return path


def write_fields_csv(path: str | Path, u: State) -> Path:
    """Columns ``x[,y],component,value``; one row per interior point and component."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    grid = u.grid
    coords = [c.ravel() for c in grid.coords]
    axes = ["x", "y"][: grid.dim]
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(axes + ["component", "value"])
        for i in range(u.m):
            vals = u.values[i].ravel()
            for p in range(grid.size):
                w.writerow([repr(float(c[p])) for c in coords] + [i, repr(float(vals[p]))])
    return path


def write_partition_csv(path: str | Path, p: Partition) -> Path:
    """1D interval list: ``component,lo,hi`` with ``-1`` for unowned bands."""
    rows = [{"component": lab, "lo": lo, "hi": hi} for lab, lo, hi in intervals_1d(p)]
    return write_rows_csv(path, rows, ["component", "lo", "hi"])


def interface_mask(p: Partition) -> np.ndarray:
    """Unowned points and owned points with a face neighbour owned by another component."""
    lab = p.labels
    out = lab < 0
    for ax in range(lab.ndim):
        a = np.moveaxis(lab, ax, 0)
        o = np.moveaxis(out, ax, 0)
        diff = (a[1:] != a[:-1]) & (a[1:] >= 0) & (a[:-1] >= 0)
        o[1:] |= diff
        o[:-1] |= diff
    return out


def label_image(p: Partition) -> np.ndarray:
    """8-bit image, rows top to bottom in decreasing ``y``; 0 marks the interface."""
    if p.grid.dim != 2:
        raise ValueError("label images need a 2D grid")
    levels = np.round(255 * (np.arange(p.m) + 1) / p.m).astype(np.uint8)
    img = np.where(p.labels >= 0, levels[np.maximum(p.labels, 0)], 0).astype(np.uint8)
    img[interface_mask(p)] = 0
    return img.T[::-1]


def write_partition_pgm(path: str | Path, p: Partition) -> Path:
    """Binary PGM (P5)."""
    img = label_image(p)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    h, w = img.shape
    with path.open("wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(np.ascontiguousarray(img).tobytes())
    return path


def read_pgm(path: str | Path) -> np.ndarray:
    """Read back a P5 image written by :func:`write_partition_pgm`."""
    data = Path(path).read_bytes()
    parts = data.split(b"\n", 3)
    if parts[0] != b"P5":
        raise ValueError("not a binary PGM")
    w, h = (int(x) for x in parts[1].split())
    return np.frombuffer(parts[3], dtype=np.uint8).reshape(h, w)


def grid_descriptor(grid: Grid) -> dict:
    return {"extents": list(grid.extents), "counts": list(grid.counts), "spacing": list(grid.spacing)}
