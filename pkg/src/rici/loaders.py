"""OBJ and PLY readers producing :class:`TriangleMesh` objects."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .mesh import TriangleMesh, area_weighted_vertex_normals, triangle_areas

log = logging.getLogger(__name__)


class MeshFormatError(ValueError):
    """Raised when a mesh file cannot be turned into triangle geometry."""


@dataclass
class LoadReport:
    degenerate_faces: int = 0
    triangulated_polygons: int = 0
    computed_normals: bool = False


def _fan(poly: list[int]) -> list[tuple[int, int, int]]:
    return [(poly[0], poly[i], poly[i + 1]) for i in range(1, len(poly) - 1)]


def _parse_obj(path: Path, report: LoadReport):
    positions, normals = [], []
    faces = []  # lists of (v, vn) index pairs, zero based, vn = -1 if absent
    with open(path, "r", encoding="utf-8", errors="replace") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            tag = parts[0]
            try:
                if tag in ("v", "vn"):
                    if len(parts) < 4:
                        raise MeshFormatError(f"{path}:{lineno}: expected 3 coordinates")
                    (positions if tag == "v" else normals).append([float(x) for x in parts[1:4]])
                elif tag == "f":
                    face = []
                    for ref in parts[1:]:
                        fields = ref.split("/")
                        vi = int(fields[0])
                        vi = vi - 1 if vi > 0 else len(positions) + vi
                        ni = -1
                        if len(fields) >= 3 and fields[2]:
                            ni = int(fields[2])
                            ni = ni - 1 if ni > 0 else len(normals) + ni
                        face.append((vi, ni))
                    if len(face) < 3:
                        raise MeshFormatError(f"{path}:{lineno}: face with fewer than 3 vertices")
                    faces.append(face)
            except (ValueError, IndexError) as exc:
                if isinstance(exc, MeshFormatError):
                    raise
                raise MeshFormatError(f"{path}:{lineno}: cannot parse {line.strip()!r}") from exc

    positions = np.asarray(positions, dtype=np.float64).reshape(-1, 3)
    normals = np.asarray(normals, dtype=np.float64).reshape(-1, 3)

    have_normals = bool(faces) and all(ni >= 0 for f in faces for _, ni in f)
    keyed: dict[tuple[int, int], int] = {}
    tris = []
    for face in faces:
        idx = []
        for vi, ni in face:
            if not 0 <= vi < len(positions):
                raise MeshFormatError(f"{path}: vertex index {vi + 1} out of range")
            if have_normals and not 0 <= ni < len(normals):
                raise MeshFormatError(f"{path}: normal index {ni + 1} out of range")
            key = (vi, ni if have_normals else -1)
            if key not in keyed:
                keyed[key] = len(keyed)
            idx.append(keyed[key])
        if len(idx) > 3:
            report.triangulated_polygons += 1
        tris.extend(_fan(idx))

    order = sorted(keyed.items(), key=lambda kv: kv[1])
    verts = positions[[k[0] for k, _ in order]] if order else np.zeros((0, 3))
    vnorm = normals[[k[1] for k, _ in order]] if (order and have_normals) else None
    return verts, vnorm, np.asarray(tris, dtype=np.int64).reshape(-1, 3)


def _parse_ply(path: Path, report: LoadReport):
    from plyfile import PlyData

    try:
        ply = PlyData.read(str(path))
    except Exception as exc:  # plyfile raises a mix of exception types
        raise MeshFormatError(f"{path}: {exc}") from exc
    names = [e.name for e in ply.elements]
    if "vertex" not in names or "face" not in names:
        raise MeshFormatError(f"{path}: PLY needs vertex and face elements")
    vdata = ply["vertex"].data
    verts = np.column_stack([vdata["x"], vdata["y"], vdata["z"]]).astype(np.float64)
    vnorm = None
    if all(k in vdata.dtype.names for k in ("nx", "ny", "nz")):
        vnorm = np.column_stack([vdata["nx"], vdata["ny"], vdata["nz"]]).astype(np.float64)
    fdata = ply["face"].data
    key = next((k for k in ("vertex_indices", "vertex_index") if k in fdata.dtype.names), None)
    if key is None:
        raise MeshFormatError(f"{path}: face element lacks vertex_indices")
    tris = []
    for poly in fdata[key]:
        poly = [int(i) for i in poly]
        if len(poly) < 3:
            raise MeshFormatError(f"{path}: face with fewer than 3 vertices")
        if len(poly) > 3:
            report.triangulated_polygons += 1
        tris.extend(_fan(poly))
    tris = np.asarray(tris, dtype=np.int64).reshape(-1, 3)
    if tris.size and (tris.min() < 0 or tris.max() >= len(verts)):
        raise MeshFormatError(f"{path}: face index out of range")
    return verts, vnorm, tris


def load_mesh(path, fmt: str | None = None, report: LoadReport | None = None) -> TriangleMesh:
    """Read an OBJ or PLY file into a triangle mesh.

    Polygons are fan-triangulated and zero-area faces are dropped (counted in
    ``report.degenerate_faces``). Vertices not used by any remaining triangle
    are removed. Missing or unusable normals are replaced by area-weighted
    vertex normals.
    """
    path = Path(path)
    report = report if report is not None else LoadReport()
    fmt = (fmt or path.suffix.lstrip(".")).lower()
    if not path.is_file():
        raise FileNotFoundError(f"no such mesh file: {path}")
    if fmt == "obj":
        verts, vnorm, tris = _parse_obj(path, report)
    elif fmt == "ply":
        verts, vnorm, tris = _parse_ply(path, report)
    else:
        raise MeshFormatError(f"unsupported mesh format {fmt!r}")

    if len(tris):
        c = verts[tris]
        keep = triangle_areas(c[:, 0], c[:, 1], c[:, 2]) > 0.0
        report.degenerate_faces = int((~keep).sum())
        if report.degenerate_faces:
            log.warning("%s: dropped %d degenerate faces", path, report.degenerate_faces)
        tris = tris[keep]
    if len(tris) == 0:
        raise MeshFormatError(f"{path}: no usable triangles")

    used = np.unique(tris)
    remap = np.full(len(verts), -1, dtype=np.int64)
    remap[used] = np.arange(len(used))
    verts, tris = verts[used], remap[tris]
    if vnorm is not None:
        vnorm = vnorm[used]
        length = np.linalg.norm(vnorm, axis=1)
        if np.all(length > 0) and np.all(np.isfinite(vnorm)):
            vnorm = vnorm / length[:, None]
        else:
            vnorm = None
    if vnorm is None:
        report.computed_normals = True
        vnorm = area_weighted_vertex_normals(verts, tris)
    return TriangleMesh(verts, vnorm, tris)


def write_obj(mesh: TriangleMesh, path) -> None:
    """Debug dump with positions, normals and 1-based v//vn faces."""
    with open(path, "w", encoding="utf-8") as fh:
        for v in mesh.vertices.tolist():
            fh.write("v %r %r %r\n" % tuple(v))
        for n in mesh.normals.tolist():
            fh.write("vn %r %r %r\n" % tuple(n))
        for a, b, c in mesh.triangles + 1:
            fh.write(f"f {a}//{a} {b}//{b} {c}//{c}\n")
