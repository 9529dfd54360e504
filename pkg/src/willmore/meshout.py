"""Mesh assembly and file export for surface fields.

A surface field lives on a rectangular grid with holes (invalid vertices).
This module flattens it into a vertex/face mesh in a 3-coordinate chart of
the chosen space form, writes OBJ and ascii PLY, and writes the residual
table as CSV with a trailing aggregate block.

Chart choices per model: the unit 3-sphere is mapped by stereographic
projection from a configurable pole; the hyperboloid points are sent to
Poincare ball coordinates x / (1 + t); the "poincare" slot projection is
already 3-dimensional and is written as-is.
"""

import csv
import numpy as np
from dataclasses import dataclass, field

from .lorentz import PointAtInfinity, stereographic


@dataclass
class MeshOutput:
    """Flattened grid mesh: vertices in row-major order, faces over cells.

    vertices is (N, 3) with NaN rows at invalid spots, faces hold 4- or
    3-tuples of vertex indices and reference valid vertices only; channels
    are optional per-vertex scalars written into PLY files.
    """

    vertices: np.ndarray
    valid: np.ndarray
    faces: list
    channels: dict = field(default_factory=dict)
    grid_shape: tuple = None

    def __post_init__(self):
        for f in self.faces:
            if not all(self.valid[v] for v in f):
                raise ValueError("face references an invalid vertex")


def build_mesh(points, valid, channels=None):
    """Mesh over a (Nu, Nv, 3) point grid.

    Each grid cell becomes a quad when all four corners are valid and a
    triangle when exactly three are (keeping the cyclic corner order), so
    one bad vertex costs a notch, not a full quad ring.
    """
    points = np.asarray(points, dtype=float)
    if points.ndim != 3 or points.shape[-1] != 3:
        raise ValueError("points must be (Nu, Nv, 3)")
    nu, nv = points.shape[:2]
    valid = np.asarray(valid, dtype=bool) & np.isfinite(points).all(axis=-1)

    verts = points.reshape(nu * nv, 3).copy()
    flat_valid = valid.reshape(nu * nv)
    verts[~flat_valid] = np.nan

    def vid(i, j):
        return i * nv + j

    faces = []
    for i in range(nu - 1):
        for j in range(nv - 1):
            corners = [vid(i, j), vid(i + 1, j),
                       vid(i + 1, j + 1), vid(i, j + 1)]
            ok = [flat_valid[c] for c in corners]
            if all(ok):
                faces.append(tuple(corners))
            elif sum(ok) == 3:
                faces.append(tuple(c for c, good in zip(corners, ok) if good))

    flat_channels = {}
    for name, arr in (channels or {}).items():
        arr = np.asarray(arr, dtype=float)
        if arr.shape != (nu, nv):
            raise ValueError(f"channel {name!r} does not match the grid")
        flat_channels[name] = arr.reshape(nu * nv)
    return MeshOutput(verts, flat_valid, faces, flat_channels, (nu, nv))


def _sphere_chart(y, pole):
    out = np.full(y.shape[:-1] + (3,), np.nan)
    for idx in np.ndindex(y.shape[:-1]):
        if not np.isfinite(y[idx]).all():
            continue
        try:
            out[idx] = stereographic(y[idx], pole)
        except PointAtInfinity:
            pass
    return out


def mesh_from_field(sf, model="s3", which="Y", pole=(0.0, 0.0, 0.0, 1.0),
                    slot=4, channels=None):
    """Project a surface field and assemble the mesh in one step.

    Vertices that cross the chart's ideal boundary (the stereographic pole,
    or the backward hyperboloid sheet) are dropped by validity, not error.
    """
    if model == "s3":
        proj = sf.project("s3", which)
    elif model == "h3":
        proj = sf.project("h3", which, slot=slot)
    elif model == "poincare":
        proj = sf.project("poincare", which)
    else:
        raise ValueError(f"unknown model {model!r}")

    if proj.shape[-1] == 0:  # nothing was projectable at all
        pts = np.full(sf.grid.shape + (3,), np.nan)
    elif model == "s3":
        pts = _sphere_chart(proj, pole)
    elif model == "h3":
        t = proj[..., 0]
        with np.errstate(invalid="ignore", divide="ignore"):
            pts = np.where((t > 0.0)[..., None],
                           proj[..., 1:] / (1.0 + t[..., None]), np.nan)
    else:
        if proj.shape[-1] != 3:
            raise ValueError("poincare slots must select 3 coordinates")
        pts = proj
    return build_mesh(pts, sf.valid & np.isfinite(pts).all(axis=-1), channels)


def _valid_index_map(mesh):
    """1-based rank of each valid vertex in write order, 0 elsewhere."""
    ranks = np.cumsum(mesh.valid)
    return np.where(mesh.valid, ranks, 0)


def write_obj(mesh, path):
    ranks = _valid_index_map(mesh)
    with open(path, "w") as fh:
        for k in range(len(mesh.vertices)):
            if not mesh.valid[k]:
                continue
            x, y, z = (float(c) for c in mesh.vertices[k])
            fh.write(f"v {x!r} {y!r} {z!r}\n")
        for f in mesh.faces:
            fh.write("f " + " ".join(str(ranks[v]) for v in f) + "\n")


def write_ply(mesh, path):
    ranks = _valid_index_map(mesh)
    names = list(mesh.channels)
    with open(path, "w") as fh:
        fh.write("ply\nformat ascii 1.0\n")
        fh.write(f"element vertex {int(mesh.valid.sum())}\n")
        fh.write("property float x\nproperty float y\nproperty float z\n")
        for name in names:
            fh.write(f"property float {name}\n")
        fh.write(f"element face {len(mesh.faces)}\n")
        fh.write("property list uchar int vertex_indices\n")
        fh.write("end_header\n")
        for k in range(len(mesh.vertices)):
            if not mesh.valid[k]:
                continue
            row = [repr(float(c)) for c in mesh.vertices[k]]
            row += [repr(float(mesh.channels[name][k])) for name in names]
            fh.write(" ".join(row) + "\n")
        for f in mesh.faces:
            fh.write(str(len(f)) + " "
                     + " ".join(str(ranks[v] - 1) for v in f) + "\n")


_WRITERS = {"obj": write_obj, "ply": write_ply}


def export_mesh(mesh, path, fmt=None):
    """Write the mesh; the format comes from `fmt` or the file suffix."""
    if fmt is None:
        fmt = str(path).rsplit(".", 1)[-1]
    fmt = fmt.lower()
    if fmt not in _WRITERS:
        raise ValueError(f"unsupported mesh format {fmt!r}")
    _WRITERS[fmt](mesh, path)
    return path


def report(rr, path):
    """Residual table as CSV plus a trailing '#'-commented aggregate block."""
    rr.to_csv(path)
    nu, nv = rr.grid.shape
    if nu * nv == 0:
        return path
    with open(path, "a", newline="") as fh:
        w = csv.writer(fh)
        for name in rr.columns:
            agg = rr.aggregates[name]
            w.writerow([f"# aggregate {name}",
                        "max", repr(float(agg["max"])),
                        "rms", repr(float(agg["rms"]))])
    return path


def read_report_aggregates(path):
    """Parse the aggregate block back out of a report CSV."""
    out = {}
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or not row[0].startswith("# aggregate "):
                continue
            name = row[0][len("# aggregate "):]
            out[name] = {row[1]: float(row[2]), row[3]: float(row[4])}
    return out
