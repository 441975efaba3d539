"""Signed-distance primitives, affine query transforms, and shape composition.

Nine primitive kinds (sphere, cuboid, cone, cylinder, torus, and the four
non-cubic platonic solids) are modeled as small frozen dataclasses that double
as leaf nodes of a composition tree.  Inner nodes transform the query point
(:class:`Transformed`), cut with a half-space (:class:`Truncated`, a ``max``),
or combine children (:class:`Union`, a ``min``).

All evaluation functions accept point arrays of shape ``(..., 3)`` and return
values of shape ``(...,)``.  Values are negative inside, positive outside and
zero on the surface.  Sphere, cuboid, cone, cylinder and torus are exact
Euclidean distances; the platonic solids use the max over their face planes,
which is exact inside and a sign-correct bound outside.

Everything here is immutable after construction and safe to share across
threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import SingularTransform

_ORTHO_TOL = 1e-9


def _as_points(p) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    if p.shape[-1] != 3:
        raise ValueError(f"expected (..., 3) points, got shape {p.shape}")
    return p


# ---------------------------------------------------------------------------
# Primitive kinds
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Sphere:
    radius: float = 1.0

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("sphere radius must be > 0")


@dataclass(frozen=True)
class Cuboid:
    half_extents: tuple[float, float, float] = (
        1.0 / math.sqrt(3.0),
        1.0 / math.sqrt(3.0),
        1.0 / math.sqrt(3.0),
    )

    def __post_init__(self):
        if min(self.half_extents) <= 0:
            raise ValueError("cuboid half-extents must be > 0")


# Canonical cone: circumradius 1 at half-angle pi/6 puts the base rim on the
# unit sphere (height = sqrt(12/7)).
_CONE_CANONICAL_HEIGHT = math.sqrt(12.0 / 7.0)


@dataclass(frozen=True)
class Cone:
    """Finite capped cone, apex up along +y, centered on the origin."""

    half_angle: float = math.pi / 6.0
    height: float = _CONE_CANONICAL_HEIGHT

    def __post_init__(self):
        if not 0 < self.half_angle < math.pi / 2:
            raise ValueError("cone half-angle must be in (0, pi/2)")
        if self.height <= 0:
            raise ValueError("cone height must be > 0")

    @property
    def base_radius(self) -> float:
        return self.height * math.tan(self.half_angle)


@dataclass(frozen=True)
class Cylinder:
    radius: float = 1.0 / math.sqrt(2.0)
    half_height: float = 1.0 / math.sqrt(2.0)

    def __post_init__(self):
        if self.radius <= 0 or self.half_height <= 0:
            raise ValueError("cylinder radius and half-height must be > 0")


@dataclass(frozen=True)
class Torus:
    """Torus in the xz-plane; circumradius is ``major + minor``."""

    major: float = 0.75
    minor: float = 0.25

    def __post_init__(self):
        if self.minor <= 0 or self.major <= 0:
            raise ValueError("torus radii must be > 0")
        if self.minor >= self.major:
            raise ValueError("torus minor radius must be < major radius")


@dataclass(frozen=True)
class Tetrahedron:
    circumradius: float = 1.0

    def __post_init__(self):
        if self.circumradius <= 0:
            raise ValueError("circumradius must be > 0")


@dataclass(frozen=True)
class Octahedron:
    circumradius: float = 1.0

    def __post_init__(self):
        if self.circumradius <= 0:
            raise ValueError("circumradius must be > 0")


@dataclass(frozen=True)
class Icosahedron:
    circumradius: float = 1.0

    def __post_init__(self):
        if self.circumradius <= 0:
            raise ValueError("circumradius must be > 0")


@dataclass(frozen=True)
class Dodecahedron:
    circumradius: float = 1.0

    def __post_init__(self):
        if self.circumradius <= 0:
            raise ValueError("circumradius must be > 0")


PrimitiveKind = (
    Sphere
    | Cuboid
    | Cone
    | Cylinder
    | Torus
    | Tetrahedron
    | Octahedron
    | Icosahedron
    | Dodecahedron
)

#: The nine canonical unit-circumradius primitives, in a fixed order.
PRIMITIVE_KINDS: tuple[PrimitiveKind, ...] = (
    Sphere(),
    Cuboid(),
    Cone(),
    Cylinder(),
    Torus(),
    Tetrahedron(),
    Octahedron(),
    Icosahedron(),
    Dodecahedron(),
)


def circumradius(kind: PrimitiveKind) -> float:
    """Radius of the smallest origin-centered sphere enclosing the primitive."""
    if isinstance(kind, Sphere):
        return kind.radius
    if isinstance(kind, Cuboid):
        return float(np.linalg.norm(kind.half_extents))
    if isinstance(kind, Cone):
        h = kind.height / 2.0
        return max(h, math.hypot(kind.base_radius, h))
    if isinstance(kind, Cylinder):
        return math.hypot(kind.radius, kind.half_height)
    if isinstance(kind, Torus):
        return kind.major + kind.minor
    return kind.circumradius


# ---------------------------------------------------------------------------
# Platonic solid vertex and face tables (circumradius 1)
# ---------------------------------------------------------------------------

_PHI = (1.0 + math.sqrt(5.0)) / 2.0


def _tetrahedron_vertices() -> np.ndarray:
    v = np.array(
        [[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]], dtype=np.float64
    )
    return v / math.sqrt(3.0)


def _octahedron_vertices() -> np.ndarray:
    return np.array(
        [[1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1], [0, 0, -1]],
        dtype=np.float64,
    )


def _icosahedron_vertices() -> np.ndarray:
    v = []
    for a in (-1.0, 1.0):
        for b in (-_PHI, _PHI):
            v.append([0.0, a, b])
            v.append([a, b, 0.0])
            v.append([b, 0.0, a])
    v = np.array(v, dtype=np.float64)
    return v / np.linalg.norm(v[0])


def _dodecahedron_vertices() -> np.ndarray:
    v = []
    for sx in (-1.0, 1.0):
        for sy in (-1.0, 1.0):
            for sz in (-1.0, 1.0):
                v.append([sx, sy, sz])
    inv = 1.0 / _PHI
    for a in (-inv, inv):
        for b in (-_PHI, _PHI):
            v.append([0.0, a, b])
            v.append([a, b, 0.0])
            v.append([b, 0.0, a])
    v = np.array(v, dtype=np.float64)
    return v / math.sqrt(3.0)


def _faces_from_directions(
    verts: np.ndarray, directions: np.ndarray, verts_per_face: int
) -> list[list[int]]:
    """Polygonal faces of a regular solid, one per outward face direction.

    For each direction the ``verts_per_face`` nearest vertices are taken and
    ordered counterclockwise as seen from outside.
    """
    faces = []
    for d in directions:
        d = d / np.linalg.norm(d)
        order = np.argsort(-(verts @ d))[:verts_per_face]
        ring = verts[order]
        center = ring.mean(axis=0)
        # Angular sort in the face plane, then orient CCW about the outward d.
        u = ring[0] - center
        u = u - d * (u @ d)
        u /= np.linalg.norm(u)
        w = np.cross(d, u)
        ang = np.arctan2((ring - center) @ w, (ring - center) @ u)
        faces.append([int(i) for i in order[np.argsort(ang)]])
    return faces


def _hull_face_directions(verts: np.ndarray, expected: int) -> np.ndarray:
    """Outward unit normals of a convex solid, coplanar hull triangles merged."""
    from scipy.spatial import ConvexHull

    normals = {tuple(np.round(eq[:3], 9)) for eq in ConvexHull(verts).equations}
    if len(normals) != expected:
        raise RuntimeError(f"expected {expected} faces, found {len(normals)}")
    return np.array(sorted(normals))


def _platonic_tables() -> dict[type, tuple[np.ndarray, list[list[int]]]]:
    tet_v = _tetrahedron_vertices()
    tet_f = _faces_from_directions(tet_v, -tet_v, 3)
    oct_v = _octahedron_vertices()
    oct_dirs = np.array(
        [[sx, sy, sz] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)],
        dtype=np.float64,
    )
    oct_f = _faces_from_directions(oct_v, oct_dirs, 3)
    ico_v = _icosahedron_vertices()
    ico_f = _faces_from_directions(ico_v, _hull_face_directions(ico_v, 20), 3)
    dod_v = _dodecahedron_vertices()
    dod_f = _faces_from_directions(dod_v, _hull_face_directions(dod_v, 12), 5)
    return {
        Tetrahedron: (tet_v, tet_f),
        Octahedron: (oct_v, oct_f),
        Icosahedron: (ico_v, ico_f),
        Dodecahedron: (dod_v, dod_f),
    }


_PLATONIC = _platonic_tables()


def platonic_polygons(kind: PrimitiveKind) -> tuple[np.ndarray, list[list[int]]]:
    """Vertices and polygonal faces of a platonic kind, scaled to its circumradius."""
    verts, faces = _PLATONIC[type(kind)]
    return verts * kind.circumradius, faces


def _face_planes(verts: np.ndarray, faces: list[list[int]]) -> tuple[np.ndarray, np.ndarray]:
    """Outward unit normals and plane offsets, one per polygonal face."""
    normals = []
    offsets = []
    for f in faces:
        n = verts[f].mean(axis=0)
        n = n / np.linalg.norm(n)
        normals.append(n)
        offsets.append(n @ verts[f[0]])
    return np.array(normals), np.array(offsets)


_PLATONIC_PLANES = {
    kind_type: _face_planes(v, f) for kind_type, (v, f) in _PLATONIC.items()
}


# ---------------------------------------------------------------------------
# Primitive signed distances
# ---------------------------------------------------------------------------

def _sphere_sdf(p: np.ndarray, r: float) -> np.ndarray:
    return np.linalg.norm(p, axis=-1) - r


def _cuboid_sdf(p: np.ndarray, half: np.ndarray) -> np.ndarray:
    q = np.abs(p) - half
    outside = np.linalg.norm(np.maximum(q, 0.0), axis=-1)
    inside = np.minimum(np.max(q, axis=-1), 0.0)
    return outside + inside


def _cylinder_sdf(p: np.ndarray, r: float, h: float) -> np.ndarray:
    radial = np.hypot(p[..., 0], p[..., 2])
    d = np.stack([radial - r, np.abs(p[..., 1]) - h], axis=-1)
    outside = np.linalg.norm(np.maximum(d, 0.0), axis=-1)
    inside = np.minimum(np.max(d, axis=-1), 0.0)
    return outside + inside


def _torus_sdf(p: np.ndarray, big_r: float, small_r: float) -> np.ndarray:
    radial = np.hypot(p[..., 0], p[..., 2]) - big_r
    return np.hypot(radial, p[..., 1]) - small_r


def _cone_sdf(p: np.ndarray, base_r: float, half_h: float) -> np.ndarray:
    # Exact distance to the capped cone with base radius at y=-h and apex at
    # y=+h, computed in the (radial, y) half-plane.
    q = np.stack([np.hypot(p[..., 0], p[..., 2]), p[..., 1]], axis=-1)
    k1 = np.array([0.0, half_h])
    k2 = np.array([-base_r, 2.0 * half_h])
    cap_r = np.where(q[..., 1] < 0.0, base_r, 0.0)
    ca = np.stack(
        [q[..., 0] - np.minimum(q[..., 0], cap_r), np.abs(q[..., 1]) - half_h],
        axis=-1,
    )
    t = np.clip(((k1 - q) @ k2) / (k2 @ k2), 0.0, 1.0)
    cb = q - k1 + np.multiply.outer(t, k2)
    sign = np.where((cb[..., 0] < 0.0) & (ca[..., 1] < 0.0), -1.0, 1.0)
    d2 = np.minimum(np.sum(ca * ca, axis=-1), np.sum(cb * cb, axis=-1))
    return sign * np.sqrt(d2)


def _planes_sdf(p: np.ndarray, normals: np.ndarray, offsets: np.ndarray) -> np.ndarray:
    return np.max(p @ normals.T - offsets, axis=-1)


def eval_primitive_sdf(kind: PrimitiveKind, p) -> np.ndarray:
    """Signed distance from points ``p`` to a canonical primitive."""
    p = _as_points(p)
    if isinstance(kind, Sphere):
        return _sphere_sdf(p, kind.radius)
    if isinstance(kind, Cuboid):
        return _cuboid_sdf(p, np.asarray(kind.half_extents))
    if isinstance(kind, Cone):
        return _cone_sdf(p, kind.base_radius, kind.height / 2.0)
    if isinstance(kind, Cylinder):
        return _cylinder_sdf(p, kind.radius, kind.half_height)
    if isinstance(kind, Torus):
        return _torus_sdf(p, kind.major, kind.minor)
    normals, offsets = _PLATONIC_PLANES[type(kind)]
    return _planes_sdf(p, normals, offsets * kind.circumradius)


# ---------------------------------------------------------------------------
# Affine transforms and planes
# ---------------------------------------------------------------------------

def shear_matrix(coeffs) -> np.ndarray:
    """Composite of the three single-coefficient shears.

    The per-axis factors feed each coordinate into the next one cyclically
    (y += s0*x, z += s1*y, x += s2*z), so the composite always has
    determinant 1.
    """
    s0, s1, s2 = coeffs
    m = np.eye(3)
    m[1, 0] = s0
    m[2, 1] = s1
    m[0, 2] = s2
    # Product S_x @ S_y @ S_z picks up one second-order term.
    m[1, 2] = s0 * s2
    return m


@dataclass(frozen=True, eq=False)
class AffineTransform:
    """Query-point map ``p -> alpha * R * Shear * Stretch * p - t``.

    Evaluating a distance field through this map has the inverse-style
    geometric effect: alpha = 2 halves the shape, translation t moves the
    shape's center to t.
    """

    alpha: float = 1.0
    rot: np.ndarray = field(default_factory=lambda: np.eye(3))
    shear: tuple[float, float, float] = (0.0, 0.0, 0.0)
    stretch: tuple[float, float, float] = (1.0, 1.0, 1.0)
    translation: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        rot = np.asarray(self.rot, dtype=np.float64)
        object.__setattr__(self, "rot", rot)
        if self.alpha <= 0:
            raise ValueError("alpha must be > 0")
        if rot.shape != (3, 3):
            raise ValueError("rot must be 3x3")
        if not np.allclose(rot @ rot.T, np.eye(3), atol=_ORTHO_TOL):
            raise ValueError("rot must be orthogonal")
        if abs(np.linalg.det(rot) - 1.0) > 1e-6:
            raise ValueError("rot must have determinant +1")
        if min(self.stretch) <= 0:
            raise ValueError("stretch factors must be > 0")

    @classmethod
    def identity(cls) -> "AffineTransform":
        return cls()

    def matrix(self) -> np.ndarray:
        """The composed linear part ``alpha * R * Shear * Stretch``."""
        return self.alpha * self.rot @ shear_matrix(self.shear) @ np.diag(self.stretch)

    def inverse_matrix(self) -> np.ndarray:
        m = self.matrix()
        det = np.linalg.det(m)
        if abs(det) < 1e-12:
            raise SingularTransform(f"linear part is singular (det={det:g})")
        return np.linalg.inv(m)

    def apply(self, p) -> np.ndarray:
        """Map query points: ``alpha * R * Shear * Stretch * p - t``."""
        p = _as_points(p)
        return p @ self.matrix().T - np.asarray(self.translation)

    def apply_inverse(self, p) -> np.ndarray:
        """Exact inverse of :meth:`apply`."""
        p = _as_points(p)
        return (p + np.asarray(self.translation)) @ self.inverse_matrix().T


@dataclass(frozen=True, eq=False)
class Plane:
    """Half-space boundary given by an anchor point and a unit normal."""

    anchor: tuple[float, float, float]
    normal: tuple[float, float, float]

    def __post_init__(self):
        n = np.asarray(self.normal, dtype=np.float64)
        if abs(np.linalg.norm(n) - 1.0) > _ORTHO_TOL:
            raise ValueError("plane normal must be unit length")

    def sdf(self, p) -> np.ndarray:
        """Positive on the normal side, negative on the kept side."""
        p = _as_points(p)
        return (p - np.asarray(self.anchor)) @ np.asarray(self.normal)


# ---------------------------------------------------------------------------
# Composition tree
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Transformed:
    child: "SdfNode"
    transform: AffineTransform


@dataclass(frozen=True, eq=False)
class Truncated:
    child: "SdfNode"
    plane: Plane


@dataclass(frozen=True, eq=False)
class Union:
    children: tuple["SdfNode", ...]

    def __post_init__(self):
        children = tuple(self.children)
        object.__setattr__(self, "children", children)
        if not children:
            raise ValueError("union needs at least one child")


SdfNode = PrimitiveKind | Transformed | Truncated | Union


def eval_sdf(node: SdfNode, p) -> np.ndarray:
    """Signed distance of a composition tree at points of shape ``(..., 3)``."""
    p = _as_points(p)
    if isinstance(node, Transformed):
        return eval_sdf(node.child, node.transform.apply(p))
    if isinstance(node, Truncated):
        return np.maximum(eval_sdf(node.child, p), node.plane.sdf(p))
    if isinstance(node, Union):
        values = eval_sdf(node.children[0], p)
        for child in node.children[1:]:
            values = np.minimum(values, eval_sdf(child, p))
        return values
    return eval_primitive_sdf(node, p)
