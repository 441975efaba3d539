"""Expand a policy into concrete synthetic datasets.

One object is a union of ``m`` primitives, each independently transformed
within the policy's numeric ranges and truncated by a random plane.  Objects
are assembled from cached canonical meshes (transform, clip, concatenate),
normalized to unit scale, and paired with a fixed-size surface sampling.
Target datasets are built from a reference mesh by rotating it and resampling.

Every entry derives its own seed from the run seed and entry index, so
datasets are reproducible and can be generated in parallel in any order.
"""

from __future__ import annotations

import hashlib
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import meshio
from .errors import DegenerateMesh, EmptySurface, RetryExhausted
from .geometry import (
    AffineTransform,
    Plane,
    PrimitiveKind,
    PRIMITIVE_KINDS,
    SdfNode,
    Transformed,
    Truncated,
    Union,
)
from .meshing import (
    TriangleMesh,
    canonical_mesh,
    clip_mesh,
    merge_meshes,
    normalize_mesh,
    transform_mesh,
)
from .policy import GenerationRanges, Policy, to_ranges
from .rng import SeedLike, as_generator, derive_seed
from .sampling import random_rotation, sample_surface

_MAX_DRAWS = 10


@dataclass(frozen=True, eq=False)
class ObjectSpec:
    """Resolved recipe for one object: (kind, transform, world-frame plane)."""

    parts: tuple[tuple[PrimitiveKind, AffineTransform, Plane], ...]

    def __post_init__(self):
        if len(self.parts) < 1:
            raise ValueError("object needs at least one part")


@dataclass(frozen=True, eq=False)
class DatasetEntry:
    mesh: TriangleMesh
    cloud: np.ndarray
    spec: ObjectSpec | None = None


@dataclass(frozen=True, eq=False)
class Dataset:
    name: str
    entries: tuple[DatasetEntry, ...]
    points_per_cloud: int
    seed: int
    policy: Policy | None = None

    def __post_init__(self):
        for e in self.entries:
            if e.cloud.shape != (self.points_per_cloud, 3):
                raise ValueError("all clouds must have the configured point count")

    def __len__(self) -> int:
        return len(self.entries)

    def cloud_array(self) -> np.ndarray:
        """All clouds stacked as ``(n_entries, v, 3)``."""
        return np.stack([e.cloud for e in self.entries])

    def content_hash(self) -> str:
        """Order-sensitive digest of all vertex, face, and cloud data."""
        h = hashlib.sha256()
        for e in self.entries:
            h.update(e.mesh.vertices.tobytes())
            h.update(e.mesh.faces.tobytes())
            h.update(e.cloud.tobytes())
        return h.hexdigest()


def object_node(spec: ObjectSpec) -> SdfNode:
    """The SDF composition equivalent to the meshed object (before
    normalization): union over truncated, transformed primitives."""
    return Union(
        tuple(
            Truncated(Transformed(kind, tr), plane) for kind, tr, plane in spec.parts
        )
    )


def _axis_angle(axis: np.ndarray, angle: float) -> np.ndarray:
    x, y, z = axis
    k = np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])
    return np.eye(3) + np.sin(angle) * k + (1.0 - np.cos(angle)) * (k @ k)


def _unit_vector(rng: np.random.Generator) -> np.ndarray:
    v = rng.standard_normal(3)
    while np.linalg.norm(v) < 1e-12:
        v = rng.standard_normal(3)
    return v / np.linalg.norm(v)


def _draw_transform(ranges: GenerationRanges, rng: np.random.Generator) -> AffineTransform:
    axis = _unit_vector(rng)
    angle = rng.uniform(0.0, ranges.rotation_max)
    translation = rng.uniform(-ranges.translation_max, ranges.translation_max, size=3)
    alpha = rng.uniform(1.0 - ranges.scale_delta, 1.0 + ranges.scale_delta)
    shear = tuple(rng.uniform(-s, s) for s in ranges.shear_max)
    stretch = tuple(rng.uniform(1.0 / (1.0 + a), 1.0 + a) for a in ranges.stretch_amount)
    return AffineTransform(
        alpha=alpha,
        rot=_axis_angle(axis, angle),
        shear=shear,
        stretch=stretch,
        translation=tuple(translation),
    )


def _build_part(
    kind: PrimitiveKind,
    transform: AffineTransform,
    ranges: GenerationRanges,
    rng: np.random.Generator,
) -> tuple[Plane, TriangleMesh]:
    """Transform a canonical mesh, then draw and apply the truncation plane.

    The plane lives in the world frame: its anchor sits at a random fraction
    of the part's world-frame radius from the part's centroid, so an offset
    near the radius cuts almost nothing.
    """
    part = transform_mesh(canonical_mesh(kind), transform)
    center = part.vertices.mean(axis=0)
    radius = np.linalg.norm(part.vertices - center, axis=1).max()
    normal = _unit_vector(rng)
    offset = rng.uniform(0.0, ranges.truncation_max) * radius
    plane = Plane(anchor=tuple(center + offset * normal), normal=tuple(normal))
    return plane, clip_mesh(part, plane)


def generate_object(
    ranges: GenerationRanges, seed: SeedLike = None
) -> tuple[ObjectSpec, TriangleMesh]:
    """Draw one object: ``m`` uniformly chosen primitive kinds, each
    transformed and truncated, merged into a single normalized mesh."""
    rng = as_generator(seed)
    for _ in range(_MAX_DRAWS):
        parts = []
        meshes = []
        for _ in range(ranges.primitive_count):
            kind = PRIMITIVE_KINDS[int(rng.integers(0, len(PRIMITIVE_KINDS)))]
            transform = _draw_transform(ranges, rng)
            try:
                plane, mesh = _build_part(kind, transform, ranges, rng)
            except EmptySurface:
                continue
            parts.append((kind, transform, plane))
            meshes.append(mesh)
        if not meshes:
            continue
        try:
            merged = normalize_mesh(merge_meshes(meshes))
        except DegenerateMesh:
            continue
        return ObjectSpec(tuple(parts)), merged
    raise RetryExhausted(
        f"{_MAX_DRAWS} consecutive draws produced empty geometry; "
        "the generation ranges are pathological"
    )


def build_object_mesh(spec: ObjectSpec) -> TriangleMesh:
    """Re-build the merged (un-normalized) mesh recorded in a spec."""
    meshes = [
        clip_mesh(transform_mesh(canonical_mesh(kind), tr), plane)
        for kind, tr, plane in spec.parts
    ]
    return merge_meshes(meshes)


def _indexed_map(fn, n: int, threads: int):
    if threads <= 1:
        return [fn(i) for i in range(n)]
    results = [None] * n
    with ThreadPoolExecutor(max_workers=threads) as pool:
        futures = {pool.submit(fn, i): i for i in range(n)}
        for fut in futures:
            results[futures[fut]] = fut.result()
    return results


def generate_dataset(
    p: Policy,
    n_objects: int,
    v: int,
    seed: int,
    name: str = "synthetic",
    threads: int = 1,
) -> Dataset:
    """Expand a policy into ``n_objects`` objects with ``v``-point clouds.

    A pure function of ``(p, n_objects, v, seed)``: entries use per-index
    derived seeds, so the result is identical for any thread count.
    """
    if n_objects < 1:
        raise ValueError("need n_objects >= 1")
    if v < 8:
        raise ValueError("need v >= 8 points per cloud")
    ranges = to_ranges(p)

    def _one(index: int) -> DatasetEntry:
        rng = as_generator(derive_seed(seed, "object", index))
        try:
            spec, mesh = generate_object(ranges, rng)
        except RetryExhausted as err:
            raise RetryExhausted(f"object {index}: {err}") from err
        return DatasetEntry(mesh=mesh, cloud=sample_surface(mesh, v, rng), spec=spec)

    entries = _indexed_map(_one, n_objects, threads)
    return Dataset(
        name=name,
        entries=tuple(entries),
        points_per_cloud=v,
        seed=seed,
        policy=p,
    )


def build_target_dataset(
    mesh: TriangleMesh, n_aug: int, v: int, seed: int, name: str = "target"
) -> Dataset:
    """Rotated resamplings of one reference mesh."""
    if n_aug < 1:
        raise ValueError("need n_aug >= 1")
    base = normalize_mesh(mesh)
    entries = []
    for index in range(n_aug):
        rng = as_generator(derive_seed(seed, "target", index))
        rot = random_rotation(rng)
        rotated = TriangleMesh(base.vertices @ rot.T, base.faces)
        entries.append(
            DatasetEntry(mesh=rotated, cloud=sample_surface(rotated, v, rng))
        )
    return Dataset(
        name=name, entries=tuple(entries), points_per_cloud=v, seed=seed
    )


def render_pair(
    entry: DatasetEntry, seed: SeedLike = None
) -> tuple[np.ndarray, np.ndarray, tuple[np.ndarray, np.ndarray]]:
    """Registration-style training pair from one entry.

    The source cloud is a fresh full sampling of the mesh; the target cloud is
    a partial 2.5D view of the mesh posed by a random rigid transform, which
    is returned as ground truth ``(rotation, translation)``.
    """
    from .sampling import depth_to_cloud, random_camera, render_depth

    rng = as_generator(seed)
    v = len(entry.cloud)
    source = sample_surface(entry.mesh, v, rng)
    rot = random_rotation(rng)
    trans = rng.uniform(-0.3, 0.3, size=3)
    posed = TriangleMesh(entry.mesh.vertices @ rot.T + trans, entry.mesh.faces)
    cam = random_camera(rng)
    depth = render_depth(posed, cam)
    target = depth_to_cloud(depth, cam, v, rng)
    return source, target, (rot, trans)


# ---------------------------------------------------------------------------
# Export / import
# ---------------------------------------------------------------------------

def export_dataset(
    d: Dataset, directory, mesh_format: str = "obj", cloud_format: str = "ply"
) -> Path:
    """Write one mesh and one cloud file per entry plus ``manifest.json``.

    Returns the manifest path.  The manifest uses canonical key order, so
    re-serializing a loaded manifest reproduces the same bytes.
    """
    if mesh_format not in ("obj", "ply"):
        raise ValueError("mesh_format must be 'obj' or 'ply'")
    if cloud_format not in ("ply", "xyz"):
        raise ValueError("cloud_format must be 'ply' or 'xyz'")
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    entries = []
    for i, entry in enumerate(d.entries):
        mesh_name = f"obj_{i:05d}.{mesh_format}"
        cloud_name = f"cloud_{i:05d}.{cloud_format}"
        meshio.save_mesh(directory / mesh_name, entry.mesh)
        meshio.save_cloud(directory / cloud_name, entry.cloud)
        entries.append({"cloud": cloud_name, "mesh": mesh_name})
    manifest = {
        "entries": entries,
        "name": d.name,
        "points_per_cloud": d.points_per_cloud,
        "policy": None if d.policy is None else {
            "labels": list(d.policy.labels),
            "version": 1,
        },
        "seed": d.seed,
        "version": 1,
    }
    path = directory / "manifest.json"
    path.write_text(
        json.dumps(manifest, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    return path


def import_dataset(manifest_path) -> Dataset:
    """Rebuild a dataset from an exported manifest (specs are not recorded)."""
    manifest_path = Path(manifest_path)
    data = json.loads(manifest_path.read_text(encoding="utf-8"))
    directory = manifest_path.parent
    entries = []
    for item in data["entries"]:
        mesh = meshio.load_mesh(directory / item["mesh"])
        cloud = meshio.load_cloud(directory / item["cloud"])
        entries.append(DatasetEntry(mesh=mesh, cloud=cloud))
    pol = data.get("policy")
    return Dataset(
        name=data["name"],
        entries=tuple(entries),
        points_per_cloud=int(data["points_per_cloud"]),
        seed=int(data["seed"]),
        policy=None if pol is None else Policy(tuple(pol["labels"])),
    )


def demo_target_mesh() -> TriangleMesh:
    """Bundled demo target: a fixed composite of a few posed primitives.

    Procedurally built so the search runs out of the box without external
    assets; any user OBJ/PLY can replace it.
    """
    from . import geometry

    rng = as_generator(derive_seed(20240101, "demo-target"))
    parts = []
    poses = [
        (geometry.Sphere(), 1.25, (0.0, 0.0, 0.45)),
        (geometry.Cuboid(), 1.1, (0.0, 0.0, -0.35)),
        (geometry.Cylinder(), 2.2, (0.45, 0.0, 0.1)),
        (geometry.Torus(), 1.6, (-0.4, 0.2, 0.0)),
    ]
    for kind, alpha, translation in poses:
        transform = AffineTransform(
            alpha=alpha, rot=random_rotation(rng), translation=translation
        )
        parts.append(transform_mesh(canonical_mesh(kind), transform))
    return normalize_mesh(merge_meshes(parts))
