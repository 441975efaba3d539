"""Shared test oracles, independent of the library code paths they check."""

import numpy as np
import pytest


def brute_chamfer(x: np.ndarray, y: np.ndarray) -> float:
    """Quadratic reference Chamfer: no spatial index, plain broadcasting."""
    d2 = np.sum((x[:, None, :] - y[None, :, :]) ** 2, axis=-1)
    return float((d2.min(axis=1).sum() + d2.min(axis=0).sum()) / (2.0 * len(x)))


def mesh_area(vertices: np.ndarray, faces: np.ndarray) -> float:
    a = vertices[faces[:, 0]]
    b = vertices[faces[:, 1]]
    c = vertices[faces[:, 2]]
    return float(0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1).sum())


def signed_volume(vertices: np.ndarray, faces: np.ndarray) -> float:
    """Divergence-theorem volume of a closed mesh (sign follows winding)."""
    a = vertices[faces[:, 0]]
    b = vertices[faces[:, 1]]
    c = vertices[faces[:, 2]]
    return float(np.einsum("ij,ij->i", a, np.cross(b, c)).sum() / 6.0)


def point_mesh_distance(points: np.ndarray, vertices: np.ndarray, faces: np.ndarray) -> np.ndarray:
    """Distance from each point to the nearest triangle (exact, brute force)."""
    a = vertices[faces[:, 0]]
    ab = vertices[faces[:, 1]] - a
    ac = vertices[faces[:, 2]] - a
    out = np.full(len(points), np.inf)
    for i, p in enumerate(points):
        ap = p - a
        d1 = np.einsum("ij,ij->i", ab, ap)
        d2 = np.einsum("ij,ij->i", ac, ap)
        bp = p - (a + ab)
        d3 = np.einsum("ij,ij->i", ab, bp)
        d4 = np.einsum("ij,ij->i", ac, bp)
        cp = p - (a + ac)
        d5 = np.einsum("ij,ij->i", ab, cp)
        d6 = np.einsum("ij,ij->i", ac, cp)
        va = d3 * d6 - d5 * d4
        vb = d5 * d2 - d1 * d6
        vc = d1 * d4 - d3 * d2
        denom = va + vb + vc
        v = np.where(np.abs(denom) > 0, vb / np.where(denom == 0, 1, denom), 0.0)
        w = np.where(np.abs(denom) > 0, vc / np.where(denom == 0, 1, denom), 0.0)
        # Clamp barycentric coordinates to the triangle.
        v = np.clip(v, 0.0, 1.0)
        w = np.clip(w, 0.0, 1.0)
        scale = np.where(v + w > 1.0, v + w, 1.0)
        v, w = v / scale, w / scale
        # Edge regions: project onto each edge and keep the best candidate.
        candidates = [a + v[:, None] * ab + w[:, None] * ac]
        for base, edge in ((a, ab), (a, ac), (a + ab, ac - ab)):
            t = np.einsum("ij,ij->i", p - base, edge) / np.einsum("ij,ij->i", edge, edge)
            t = np.clip(t, 0.0, 1.0)
            candidates.append(base + t[:, None] * edge)
        best = min(
            float(np.min(np.linalg.norm(p - cand, axis=1))) for cand in candidates
        )
        out[i] = best
    return out


def random_special_orthogonal(seed: int) -> np.ndarray:
    """Haar-ish random rotation via QR, independent of the library's method."""
    rng = np.random.default_rng(seed)
    q, r = np.linalg.qr(rng.standard_normal((3, 3)))
    q = q @ np.diag(np.sign(np.diag(r)))
    if np.linalg.det(q) < 0:
        q[:, [0, 1]] = q[:, [1, 0]]
    return q


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
