"""Triangle meshes from SDF compositions.

The object pipeline never runs marching cubes per object: each primitive kind
is meshed once (analytic tables for the cuboid and platonic solids, marching
cubes for the curved kinds), cached, and objects are assembled by transforming
vertices, clipping against the truncation plane, and concatenating the parts.
Interpenetrating parts are left as-is; no boolean union is ever computed.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass

import numpy as np

from . import geometry
from .errors import DegenerateMesh, EmptySurface, SingularTransform
from .geometry import AffineTransform, Plane, PrimitiveKind, SdfNode


@dataclass(frozen=True, eq=False)
class TriangleMesh:
    """Immutable vertex/face soup; faces are integer index triples."""

    vertices: np.ndarray
    faces: np.ndarray

    def __post_init__(self):
        v = np.ascontiguousarray(np.asarray(self.vertices, dtype=np.float64))
        f = np.ascontiguousarray(np.asarray(self.faces, dtype=np.int64))
        if v.ndim != 2 or v.shape[1] != 3:
            raise ValueError(f"vertices must be (N, 3), got {v.shape}")
        if f.ndim != 2 or f.shape[1] != 3:
            raise ValueError(f"faces must be (M, 3), got {f.shape}")
        if not np.isfinite(v).all():
            raise ValueError("vertices must be finite")
        if f.size:
            if f.min() < 0 or f.max() >= len(v):
                raise ValueError("face index out of range")
            if (
                (f[:, 0] == f[:, 1]) | (f[:, 1] == f[:, 2]) | (f[:, 0] == f[:, 2])
            ).any():
                raise ValueError("degenerate face (repeated vertex index)")
        v.setflags(write=False)
        f.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "faces", f)

    def triangle_areas(self) -> np.ndarray:
        a, b, c = (self.vertices[self.faces[:, i]] for i in range(3))
        return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=-1)

    def surface_area(self) -> float:
        return float(self.triangle_areas().sum())


@dataclass(frozen=True)
class GridSpec:
    """Axis-aligned sampling lattice for isosurface extraction."""

    bounds_min: tuple[float, float, float]
    bounds_max: tuple[float, float, float]
    resolution: int

    def __post_init__(self):
        if self.resolution < 8:
            raise ValueError("resolution must be >= 8 cells per axis")
        if not all(lo < hi for lo, hi in zip(self.bounds_min, self.bounds_max)):
            raise ValueError("bounds_min must be < bounds_max componentwise")

    @property
    def cell_size(self) -> np.ndarray:
        lo = np.asarray(self.bounds_min)
        hi = np.asarray(self.bounds_max)
        return (hi - lo) / self.resolution

    @property
    def cell_diagonal(self) -> float:
        return float(np.linalg.norm(self.cell_size))


#: Meshing lattice used for unit-circumradius curved primitives: < 2% area
#: error on the sphere at negligible cost.
DEFAULT_GRID = GridSpec((-1.2, -1.2, -1.2), (1.2, 1.2, 1.2), 64)


def marching_cubes(node: SdfNode, grid: GridSpec) -> TriangleMesh:
    """Extract the zero level set of ``node`` on ``grid``.

    Raises EmptySurface when the field has no sign change inside the grid.
    """
    from skimage.measure import marching_cubes as _mc

    n = grid.resolution
    axes = [
        np.linspace(lo, hi, n + 1)
        for lo, hi in zip(grid.bounds_min, grid.bounds_max)
    ]
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    volume = geometry.eval_sdf(node, pts)
    if not ((volume < 0.0).any() and (volume > 0.0).any()):
        raise EmptySurface("no sign change inside the sampling grid")
    verts, faces, _, _ = _mc(volume, level=0.0, spacing=tuple(grid.cell_size))
    verts = verts.astype(np.float64) + np.asarray(grid.bounds_min)
    faces = faces.astype(np.int64)
    good = (
        (faces[:, 0] != faces[:, 1])
        & (faces[:, 1] != faces[:, 2])
        & (faces[:, 0] != faces[:, 2])
    )
    return TriangleMesh(verts, faces[good])


# ---------------------------------------------------------------------------
# Canonical primitive meshes
# ---------------------------------------------------------------------------

_CUBOID_FACES = np.array(
    [
        [0, 2, 1], [1, 2, 3],  # -z
        [4, 5, 6], [5, 7, 6],  # +z
        [0, 1, 4], [1, 5, 4],  # -y
        [2, 6, 3], [3, 6, 7],  # +y
        [0, 4, 2], [2, 4, 6],  # -x
        [1, 3, 5], [3, 7, 5],  # +x
    ],
    dtype=np.int64,
)

_canonical_cache: dict[PrimitiveKind, TriangleMesh] = {}
_canonical_lock = threading.Lock()


def _cuboid_mesh(kind: geometry.Cuboid) -> TriangleMesh:
    h = np.asarray(kind.half_extents)
    corners = np.array(
        [[x, y, z] for z in (-1, 1) for y in (-1, 1) for x in (-1, 1)],
        dtype=np.float64,
    )
    return TriangleMesh(corners * h, _CUBOID_FACES)


def _platonic_mesh(kind: PrimitiveKind) -> TriangleMesh:
    verts, polys = geometry.platonic_polygons(kind)
    tris = []
    for poly in polys:
        for i in range(1, len(poly) - 1):
            tris.append((poly[0], poly[i], poly[i + 1]))
    return TriangleMesh(verts, np.array(tris, dtype=np.int64))


def _curved_mesh(kind: PrimitiveKind) -> TriangleMesh:
    r = geometry.circumradius(kind)
    if abs(r - 1.0) < 1e-12:
        grid = DEFAULT_GRID
    else:
        grid = GridSpec(
            tuple(-1.2 * r for _ in range(3)),
            tuple(1.2 * r for _ in range(3)),
            DEFAULT_GRID.resolution,
        )
    return marching_cubes(kind, grid)


def canonical_mesh(kind: PrimitiveKind) -> TriangleMesh:
    """Cached unit mesh for a primitive kind; repeated calls share one object."""
    cached = _canonical_cache.get(kind)
    if cached is not None:
        return cached
    with _canonical_lock:
        cached = _canonical_cache.get(kind)
        if cached is None:
            if isinstance(kind, geometry.Cuboid):
                cached = _cuboid_mesh(kind)
            elif isinstance(
                kind,
                (
                    geometry.Tetrahedron,
                    geometry.Octahedron,
                    geometry.Icosahedron,
                    geometry.Dodecahedron,
                ),
            ):
                cached = _platonic_mesh(kind)
            else:
                cached = _curved_mesh(kind)
            _canonical_cache[kind] = cached
    return cached


# ---------------------------------------------------------------------------
# Mesh operators
# ---------------------------------------------------------------------------

def transform_mesh(mesh: TriangleMesh, transform: AffineTransform) -> TriangleMesh:
    """Carry a mesh through an affine query transform.

    Vertices move by the inverse of the query map, so the result is the zero
    set of the composed field.
    """
    m = transform.matrix()
    det = np.linalg.det(m)
    if abs(det) < 1e-12:
        raise SingularTransform(f"linear part is singular (det={det:g})")
    verts = transform.apply_inverse(mesh.vertices)
    faces = mesh.faces
    if det < 0:  # cannot happen under the transform invariants
        faces = faces[:, ::-1]
    return TriangleMesh(verts, faces)


def clip_mesh(mesh: TriangleMesh, plane: Plane) -> TriangleMesh:
    """Keep the half-space where the plane SDF is <= 0, splitting crossing
    triangles.  The cut cross-section is left open."""
    sd = plane.sdf(mesh.vertices)
    inside = sd <= 0.0
    if not inside.any():
        raise EmptySurface("plane cuts away the entire mesh")

    corner_in = inside[mesh.faces]  # (M, 3) bools
    n_in = corner_in.sum(axis=1)

    kept = mesh.faces[n_in == 3]

    # Rotate crossing faces into canonical corner order (cyclic, so winding
    # is preserved): one-inside -> inside corner first; two-inside -> outside
    # corner last.
    def _rotated(faces_sub, corner_sub, patterns):
        rolled = np.empty_like(faces_sub)
        for pattern, shift in patterns:
            sel = (corner_sub == pattern).all(axis=1)
            rolled[sel] = np.roll(faces_sub[sel], -shift, axis=1)
        return rolled

    one = _rotated(
        mesh.faces[n_in == 1],
        corner_in[n_in == 1],
        [((True, False, False), 0), ((False, True, False), 1), ((False, False, True), 2)],
    )
    two = _rotated(
        mesh.faces[n_in == 2],
        corner_in[n_in == 2],
        [((True, True, False), 0), ((False, True, True), 1), ((True, False, True), 2)],
    )

    def _cut(i, j):
        a, b = mesh.vertices[i], mesh.vertices[j]
        da, db = sd[i], sd[j]
        t = (da / (da - db))[:, None]
        return a + t * (b - a)

    new_blocks = []  # cut points, interleaved to match the indices handed out
    new_faces = []
    base = len(mesh.vertices)

    if len(one):
        # (a in, b out, c out) -> triangle (a, ab, ca)
        ab = _cut(one[:, 0], one[:, 1])
        ca = _cut(one[:, 0], one[:, 2])
        idx = base + 2 * np.arange(len(one))
        new_blocks.append(np.stack([ab, ca], axis=1).reshape(-1, 3))
        new_faces.append(np.column_stack([one[:, 0], idx, idx + 1]))
        base += 2 * len(one)
    if len(two):
        # (a in, b in, c out) -> quad (a, b, bc, ca) as two triangles
        bc = _cut(two[:, 1], two[:, 2])
        ca = _cut(two[:, 0], two[:, 2])
        idx = base + 2 * np.arange(len(two))
        new_blocks.append(np.stack([bc, ca], axis=1).reshape(-1, 3))
        new_faces.append(np.column_stack([two[:, 0], two[:, 1], idx]))
        new_faces.append(np.column_stack([two[:, 0], idx, idx + 1]))

    if new_blocks:
        verts = np.vstack([mesh.vertices] + new_blocks)
        faces = np.vstack([kept] + new_faces)
    else:
        verts = mesh.vertices
        faces = kept

    if len(faces) == 0:
        raise EmptySurface("no triangles survive the clip")

    # Compact away unreferenced (outside) vertices.
    used = np.zeros(len(verts), dtype=bool)
    used[faces.ravel()] = True
    remap = np.cumsum(used) - 1
    return TriangleMesh(verts[used], remap[faces])


def merge_meshes(meshes: list[TriangleMesh]) -> TriangleMesh:
    """Concatenate vertex and face lists with index offsets; no welding."""
    if not meshes:
        raise ValueError("need at least one mesh")
    if len(meshes) == 1:
        return meshes[0]
    verts = np.vstack([m.vertices for m in meshes])
    offsets = np.cumsum([0] + [len(m.vertices) for m in meshes[:-1]])
    faces = np.vstack([m.faces + off for m, off in zip(meshes, offsets)])
    return TriangleMesh(verts, faces)


def normalize_mesh(mesh: TriangleMesh) -> TriangleMesh:
    """Center the bounding box on the origin and scale the farthest vertex to
    unit norm."""
    if len(mesh.vertices) == 0:
        raise DegenerateMesh("empty mesh")
    lo = mesh.vertices.min(axis=0)
    hi = mesh.vertices.max(axis=0)
    centered = mesh.vertices - (lo + hi) / 2.0
    scale = np.linalg.norm(centered, axis=1).max()
    if scale < 1e-12:
        raise DegenerateMesh("all vertices coincide")
    return TriangleMesh(centered / scale, mesh.faces)
