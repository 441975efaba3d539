"""Mesh and point-cloud file formats.

Meshes travel as ASCII OBJ (``v``/``f`` records, 1-based indices) or binary
little-endian PLY; point clouds as binary little-endian PLY (double-precision,
so round trips are bit-exact) or plain-text XYZ.  The readers accept the
common variants found in the wild: OBJ faces with ``v/vt/vn`` slashes and
polygon fans, PLY in ascii or binary_little_endian with extra vertex
properties.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .meshing import TriangleMesh

_FLOAT_FMT = "%.17g"

_PLY_TYPES = {
    "char": "i1", "uchar": "u1", "int8": "i1", "uint8": "u1",
    "short": "i2", "ushort": "u2", "int16": "i2", "uint16": "u2",
    "int": "i4", "uint": "u4", "int32": "i4", "uint32": "u4",
    "float": "f4", "float32": "f4", "double": "f8", "float64": "f8",
}


# ---------------------------------------------------------------------------
# OBJ
# ---------------------------------------------------------------------------

def save_mesh_obj(path, mesh: TriangleMesh) -> None:
    lines = []
    for v in mesh.vertices:
        lines.append("v " + " ".join(_FLOAT_FMT % x for x in v))
    for f in mesh.faces:
        lines.append(f"f {f[0] + 1} {f[1] + 1} {f[2] + 1}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_mesh_obj(path) -> TriangleMesh:
    verts = []
    faces = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "v":
            verts.append([float(x) for x in parts[1:4]])
        elif parts[0] == "f":
            idx = [int(p.split("/")[0]) for p in parts[1:]]
            idx = [i - 1 if i > 0 else len(verts) + i for i in idx]
            for k in range(1, len(idx) - 1):
                faces.append([idx[0], idx[k], idx[k + 1]])
    return TriangleMesh(np.array(verts), np.array(faces, dtype=np.int64).reshape(-1, 3))


# ---------------------------------------------------------------------------
# PLY
# ---------------------------------------------------------------------------

def _ply_header(n_verts: int, n_faces: int | None) -> bytes:
    lines = [
        "ply",
        "format binary_little_endian 1.0",
        f"element vertex {n_verts}",
        "property double x",
        "property double y",
        "property double z",
    ]
    if n_faces is not None:
        lines.append(f"element face {n_faces}")
        lines.append("property list uchar int32 vertex_indices")
    lines.append("end_header")
    return ("\n".join(lines) + "\n").encode("ascii")


def save_mesh_ply(path, mesh: TriangleMesh) -> None:
    with open(path, "wb") as fh:
        fh.write(_ply_header(len(mesh.vertices), len(mesh.faces)))
        fh.write(np.ascontiguousarray(mesh.vertices, dtype="<f8").tobytes())
        counts = np.full((len(mesh.faces), 1), 3, dtype="u1")
        idx = np.ascontiguousarray(mesh.faces, dtype="<i4")
        packed = np.empty(len(idx), dtype=[("n", "u1"), ("v", "<i4", (3,))])
        packed["n"] = counts[:, 0]
        packed["v"] = idx
        fh.write(packed.tobytes())


def save_cloud_ply(path, points: np.ndarray) -> None:
    points = np.asarray(points, dtype=np.float64)
    with open(path, "wb") as fh:
        fh.write(_ply_header(len(points), None))
        fh.write(np.ascontiguousarray(points, dtype="<f8").tobytes())


def _parse_ply_header(raw: bytes):
    end = raw.index(b"end_header")
    end = raw.index(b"\n", end) + 1
    header = raw[:end].decode("ascii", errors="replace").splitlines()
    if not header or header[0].strip() != "ply":
        raise ValueError("not a PLY file")
    fmt = None
    elements = []  # (name, count, [(prop_name, dtype) or ("list", counts, items, name)])
    for line in header[1:]:
        parts = line.split()
        if not parts or parts[0] == "comment":
            continue
        if parts[0] == "format":
            fmt = parts[1]
        elif parts[0] == "element":
            elements.append((parts[1], int(parts[2]), []))
        elif parts[0] == "property":
            if parts[1] == "list":
                elements[-1][2].append(("list", _PLY_TYPES[parts[2]], _PLY_TYPES[parts[3]], parts[4]))
            else:
                elements[-1][2].append((parts[2], _PLY_TYPES[parts[1]]))
    if fmt not in ("ascii", "binary_little_endian"):
        raise ValueError(f"unsupported PLY format: {fmt}")
    return fmt, elements, raw[end:]


def _load_ply(path) -> tuple[np.ndarray, np.ndarray]:
    raw = Path(path).read_bytes()
    fmt, elements, body = _parse_ply_header(raw)
    verts = np.zeros((0, 3))
    faces: list[list[int]] = []

    if fmt == "ascii":
        tokens = body.decode("ascii").split()
        pos = 0
        for name, count, props in elements:
            if name == "vertex":
                stride = len(props)
                cols = {p[0]: i for i, p in enumerate(props)}
                arr = np.array(tokens[pos : pos + count * stride], dtype=np.float64)
                arr = arr.reshape(count, stride)
                verts = arr[:, [cols["x"], cols["y"], cols["z"]]]
                pos += count * stride
            elif name == "face":
                for _ in range(count):
                    n = int(tokens[pos]); pos += 1
                    poly = [int(t) for t in tokens[pos : pos + n]]; pos += n
                    for k in range(1, n - 1):
                        faces.append([poly[0], poly[k], poly[k + 1]])
            else:
                for _ in range(count):
                    pos += len(props)  # scalar-only unknown elements
    else:
        offset = 0
        for name, count, props in elements:
            if name == "vertex":
                dt = np.dtype([(p[0], "<" + p[1]) for p in props])
                arr = np.frombuffer(body, dtype=dt, count=count, offset=offset)
                offset += dt.itemsize * count
                verts = np.column_stack(
                    [arr["x"], arr["y"], arr["z"]]
                ).astype(np.float64)
            elif name == "face":
                (tag, cdt, idt, _pname) = props[0]
                assert tag == "list"
                csize = np.dtype(cdt).itemsize
                isize = np.dtype(idt).itemsize
                for _ in range(count):
                    n = int(np.frombuffer(body, dtype="<" + cdt, count=1, offset=offset)[0])
                    offset += csize
                    poly = np.frombuffer(body, dtype="<" + idt, count=n, offset=offset)
                    offset += isize * n
                    for k in range(1, n - 1):
                        faces.append([int(poly[0]), int(poly[k]), int(poly[k + 1])])
            else:
                dt = np.dtype([(p[0], "<" + p[1]) for p in props])
                offset += dt.itemsize * count
    return verts, np.array(faces, dtype=np.int64).reshape(-1, 3)


def load_mesh_ply(path) -> TriangleMesh:
    verts, faces = _load_ply(path)
    return TriangleMesh(verts, faces)


def load_cloud_ply(path) -> np.ndarray:
    verts, _ = _load_ply(path)
    return verts


# ---------------------------------------------------------------------------
# XYZ text clouds and extension dispatch
# ---------------------------------------------------------------------------

def save_cloud_xyz(path, points: np.ndarray) -> None:
    points = np.asarray(points, dtype=np.float64)
    lines = (" ".join(_FLOAT_FMT % x for x in p) for p in points)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_cloud_xyz(path) -> np.ndarray:
    return np.loadtxt(path, dtype=np.float64).reshape(-1, 3)


def load_mesh(path) -> TriangleMesh:
    """Load OBJ or PLY by extension."""
    suffix = Path(path).suffix.lower()
    if suffix == ".obj":
        return load_mesh_obj(path)
    if suffix == ".ply":
        return load_mesh_ply(path)
    raise ValueError(f"unsupported mesh format: {suffix!r} (use .obj or .ply)")


def save_mesh(path, mesh: TriangleMesh) -> None:
    suffix = Path(path).suffix.lower()
    if suffix == ".obj":
        save_mesh_obj(path, mesh)
    elif suffix == ".ply":
        save_mesh_ply(path, mesh)
    else:
        raise ValueError(f"unsupported mesh format: {suffix!r} (use .obj or .ply)")


def load_cloud(path) -> np.ndarray:
    suffix = Path(path).suffix.lower()
    if suffix == ".ply":
        return load_cloud_ply(path)
    if suffix == ".xyz":
        return load_cloud_xyz(path)
    raise ValueError(f"unsupported cloud format: {suffix!r} (use .ply or .xyz)")


def save_cloud(path, points: np.ndarray) -> None:
    suffix = Path(path).suffix.lower()
    if suffix == ".ply":
        save_cloud_ply(path, points)
    elif suffix == ".xyz":
        save_cloud_xyz(path, points)
    else:
        raise ValueError(f"unsupported cloud format: {suffix!r} (use .ply or .xyz)")
