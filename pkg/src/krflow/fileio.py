"""Snapshots of grid fields and plot-ready CSV exports.

Snapshot format: ``key=value`` header lines (each starting with ``#``), a
line ``#data``, then one value per line in row-major order.  Complex values
are written as ``re,im``.  Floats are written with ``repr`` so a round trip
is exact and repeated runs give identical bytes.
"""

from __future__ import annotations

import csv
import io
import os
from dataclasses import dataclass

import numpy as np

MAGIC = "# krflow snapshot v1"


@dataclass(frozen=True)
class Snapshot:
    meta: dict
    data: np.ndarray


def _num(x):
    return repr(float(x))


def snapshot_text(data, **meta):
    data = np.asarray(data)
    is_complex = np.iscomplexobj(data)
    lines = [MAGIC]
    for k, v in meta.items():
        if "\n" in str(v) or "=" in str(k):
            raise ValueError(f"bad header entry {k!r}")
        lines.append(f"# {k}={v}")
    lines.append(f"# shape={','.join(str(s) for s in data.shape)}")
    lines.append(f"# complex={int(is_complex)}")
    lines.append("#data")
    flat = data.ravel()
    if is_complex:
        lines += [f"{_num(z.real)},{_num(z.imag)}" for z in flat]
    else:
        lines += [_num(x) for x in flat]
    return "\n".join(lines) + "\n"


def parse_snapshot(text):
    lines = text.splitlines()
    if not lines or lines[0] != MAGIC:
        raise ValueError("not a snapshot file")
    meta = {}
    i = 1
    while i < len(lines) and lines[i] != "#data":
        key, _, val = lines[i][1:].strip().partition("=")
        meta[key] = val
        i += 1
    if i == len(lines):
        raise ValueError("snapshot has no data section")
    shape = tuple(int(s) for s in meta.pop("shape").split(",") if s)
    is_complex = meta.pop("complex") == "1"
    body = lines[i + 1:]
    if is_complex:
        vals = np.array([complex(*map(float, ln.split(","))) for ln in body])
    else:
        vals = np.array([float(ln) for ln in body])
    if vals.size != int(np.prod(shape)):
        raise ValueError(f"expected {int(np.prod(shape))} values, found {vals.size}")
    return Snapshot(meta, vals.reshape(shape))


def write_snapshot(path, data, **meta):
    with open(path, "w", newline="\n") as fh:
        fh.write(snapshot_text(data, **meta))


def read_snapshot(path):
    with open(path) as fh:
        return parse_snapshot(fh.read())


def grid_csv(chart, values, name="value"):
    """Long-format CSV ``x,y,<name>`` of a real field on a one-dimensional chart."""
    if chart.n != 1:
        raise ValueError("grid CSV export is for one complex dimension")
    x, y = chart.coordinates()
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["x", "y", name])
    for a, b, v in zip(x.ravel(), y.ravel(), np.asarray(values).real.ravel()):
        w.writerow([_num(a), _num(b), _num(v)])
    return buf.getvalue()


def profile_csv(profile):
    """CSV ``tau,phi,ratio,density`` of a rotation-invariant profile."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["tau", "phi", "ratio", "density"])
    for row in zip(profile.grid.tau, profile.phi, profile.ratio, profile.density):
        w.writerow([_num(v) for v in row])
    return buf.getvalue()


def write_text(path, text):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", newline="\n") as fh:
        fh.write(text)
