"""Point clouds from meshes.

Clouds are plain ``(n, 3)`` float64 arrays throughout the package.  This
module provides uniform area-weighted surface sampling, uniform SO(3)
rotations, and a small software z-buffer renderer used to produce partial
(2.5D) views: render a depth map from a camera pose, then back-project the
hit pixels.

All randomness is drawn from an explicit seed or ``numpy`` Generator, so
results are reproducible and callers can parallelize across objects by giving
each one an independent seeded stream.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateMesh, EmptyDepth, NothingVisible
from .meshing import TriangleMesh
from .rng import SeedLike, as_generator

_NEAR = 1e-6


@dataclass(frozen=True, eq=False)
class CameraPose:
    """Pinhole camera: position looking at a target point."""

    position: tuple[float, float, float]
    target: tuple[float, float, float] = (0.0, 0.0, 0.0)
    up: tuple[float, float, float] = (0.0, 0.0, 1.0)
    focal: float = 96.0  # pixels
    width: int = 96
    height: int = 96

    def __post_init__(self):
        if np.allclose(self.position, self.target):
            raise ValueError("camera position must differ from target")
        if self.focal <= 0:
            raise ValueError("focal length must be > 0")

    def basis(self) -> tuple[np.ndarray, np.ndarray]:
        """World-to-camera rotation (rows right/down/forward) and position."""
        pos = np.asarray(self.position, dtype=np.float64)
        fwd = np.asarray(self.target, dtype=np.float64) - pos
        fwd = fwd / np.linalg.norm(fwd)
        up = np.asarray(self.up, dtype=np.float64)
        right = np.cross(fwd, up)
        norm = np.linalg.norm(right)
        if norm < 1e-9:  # up hint parallel to the view direction
            up = np.array([0.0, 1.0, 0.0])
            right = np.cross(fwd, up)
            norm = np.linalg.norm(right)
        right = right / norm
        down = np.cross(fwd, right)
        return np.stack([right, down, fwd]), pos


@dataclass(frozen=True, eq=False)
class DepthMap:
    """Per-pixel camera-frame z; no-hit pixels hold ``inf``."""

    depth: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.depth, dtype=np.float64)
        finite = d[np.isfinite(d)]
        if finite.size and finite.min() <= 0:
            raise ValueError("hit depths must be > 0")
        d.setflags(write=False)
        object.__setattr__(self, "depth", d)

    @property
    def height(self) -> int:
        return self.depth.shape[0]

    @property
    def width(self) -> int:
        return self.depth.shape[1]

    def hit_count(self) -> int:
        return int(np.isfinite(self.depth).sum())


def sample_surface(mesh: TriangleMesh, n: int, seed: SeedLike = None) -> np.ndarray:
    """Draw ``n`` points uniformly from the mesh surface.

    Triangles are selected proportionally to area, then a point is placed
    uniformly inside via reflected barycentric coordinates.
    """
    if n < 1:
        raise ValueError("need n >= 1")
    rng = as_generator(seed)
    areas = mesh.triangle_areas()
    total = areas.sum()
    if len(mesh.faces) == 0 or total <= 0.0:
        raise DegenerateMesh("mesh has no surface area to sample")
    cum = np.cumsum(areas)
    face_idx = np.searchsorted(cum, rng.random(n) * total)
    face_idx = np.minimum(face_idx, len(areas) - 1)
    tri = mesh.vertices[mesh.faces[face_idx]]
    r1 = rng.random(n)
    r2 = rng.random(n)
    flip = r1 + r2 > 1.0
    r1 = np.where(flip, 1.0 - r1, r1)
    r2 = np.where(flip, 1.0 - r2, r2)
    return (
        tri[:, 0]
        + r1[:, None] * (tri[:, 1] - tri[:, 0])
        + r2[:, None] * (tri[:, 2] - tri[:, 0])
    )


def random_rotation(seed: SeedLike = None) -> np.ndarray:
    """Rotation matrix uniform over SO(3) (normalized 4-normal quaternion)."""
    rng = as_generator(seed)
    q = rng.standard_normal(4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def random_camera(
    seed: SeedLike = None,
    radius_range: tuple[float, float] = (2.2, 4.0),
    focal: float = 96.0,
    width: int = 96,
    height: int = 96,
) -> CameraPose:
    """Camera at a uniform direction and radius, looking at the origin."""
    r_min, r_max = radius_range
    if not 0 < r_min <= r_max:
        raise ValueError("need 0 < r_min <= r_max")
    rng = as_generator(seed)
    d = rng.standard_normal(3)
    while np.linalg.norm(d) < 1e-12:
        d = rng.standard_normal(3)
    d /= np.linalg.norm(d)
    radius = rng.uniform(r_min, r_max)
    return CameraPose(
        position=tuple(d * radius), focal=focal, width=width, height=height
    )


def render_depth(mesh: TriangleMesh, cam: CameraPose) -> DepthMap:
    """Rasterize the mesh into a z-buffer of camera-frame depths."""
    rot, pos = cam.basis()
    cam_v = (mesh.vertices - pos) @ rot.T
    w, h, f = cam.width, cam.height, cam.focal
    cx, cy = w / 2.0, h / 2.0

    tri = cam_v[mesh.faces]  # (M, 3, 3)
    zs = tri[:, :, 2]
    visible = (zs > _NEAR).all(axis=1)
    tri = tri[visible]
    if len(tri) == 0:
        raise NothingVisible("no triangle lies in front of the camera")

    inv_z = 1.0 / tri[:, :, 2]
    sx = f * tri[:, :, 0] * inv_z + cx
    sy = f * tri[:, :, 1] * inv_z + cy

    buf = np.full((h, w), np.inf)
    lo_x = np.clip(np.floor(sx.min(axis=1) - 0.5).astype(int), 0, w - 1)
    hi_x = np.clip(np.ceil(sx.max(axis=1) + 0.5).astype(int), 0, w)
    lo_y = np.clip(np.floor(sy.min(axis=1) - 0.5).astype(int), 0, h - 1)
    hi_y = np.clip(np.ceil(sy.max(axis=1) + 0.5).astype(int), 0, h)

    for t in range(len(tri)):
        x0, x1 = lo_x[t], hi_x[t]
        y0, y1 = lo_y[t], hi_y[t]
        if x1 <= x0 or y1 <= y0:
            continue
        ax, ay = sx[t, 0], sy[t, 0]
        bx, by = sx[t, 1], sy[t, 1]
        cx_, cy_ = sx[t, 2], sy[t, 2]
        denom = (by - cy_) * (ax - cx_) + (cx_ - bx) * (ay - cy_)
        if abs(denom) < 1e-12:
            continue
        px, py = np.meshgrid(
            np.arange(x0, x1) + 0.5, np.arange(y0, y1) + 0.5
        )
        l0 = ((by - cy_) * (px - cx_) + (cx_ - bx) * (py - cy_)) / denom
        l1 = ((cy_ - ay) * (px - cx_) + (ax - cx_) * (py - cy_)) / denom
        l2 = 1.0 - l0 - l1
        mask = (l0 >= 0) & (l1 >= 0) & (l2 >= 0)
        if not mask.any():
            continue
        # Perspective-correct depth: 1/z interpolates linearly in screen space.
        z = 1.0 / (
            l0 * inv_z[t, 0] + l1 * inv_z[t, 1] + l2 * inv_z[t, 2]
        )
        rows, cols = np.nonzero(mask)
        zvals = z[rows, cols]
        rr = rows + y0
        cc = cols + x0
        better = zvals < buf[rr, cc]
        buf[rr[better], cc[better]] = zvals[better]

    if not np.isfinite(buf).any():
        raise NothingVisible("mesh projects onto no pixel")
    return DepthMap(buf)


def depth_to_cloud(
    d: DepthMap, cam: CameraPose, n: int, seed: SeedLike = None
) -> np.ndarray:
    """Back-project hit pixels to world space and subsample to ``n`` points."""
    rng = as_generator(seed)
    rows, cols = np.nonzero(np.isfinite(d.depth))
    if len(rows) == 0:
        raise EmptyDepth("depth map has no hit pixels")
    z = d.depth[rows, cols]
    cx, cy = d.width / 2.0, d.height / 2.0
    x = (cols + 0.5 - cx) / cam.focal * z
    y = (rows + 0.5 - cy) / cam.focal * z
    pts_cam = np.column_stack([x, y, z])
    if len(rows) >= n:
        pick = rng.choice(len(rows), size=n, replace=False)
    else:
        pick = rng.choice(len(rows), size=n, replace=True)
    rot, pos = cam.basis()
    return pts_cam[pick] @ rot + pos
