"""Incremental 3D convex hull with exact facet-fan volume.

Points are inserted one at a time: facets visible from the new point are
removed, the horizon edges are stitched to the point with new facets,
and orientation is kept outward via the interior centroid of the
starting simplex. The volume is the sum of signed tetrahedra from the
centroid over the final facets.

Degenerate inputs (fewer than four points, collinear or coplanar sets)
have zero enclosed volume and return 0; callers that need a positive
volume for thin configurations inflate each point to a small sphere
first (see :func:`swarm_nmpc.metrics.inflated_hull_volume`).
"""

from __future__ import annotations

import numpy as np


def _initial_simplex(pts: np.ndarray, eps: float):
    """Four affinely independent points, or None if degenerate."""
    n = pts.shape[0]
    i0 = 0
    i1 = max(range(n), key=lambda i: np.linalg.norm(pts[i] - pts[i0]))
    if np.linalg.norm(pts[i1] - pts[i0]) <= eps:
        return None
    d1 = pts[i1] - pts[i0]
    i2 = max(range(n), key=lambda i: np.linalg.norm(np.cross(d1, pts[i] - pts[i0])))
    if np.linalg.norm(np.cross(d1, pts[i2] - pts[i0])) <= eps ** 2:
        return None
    normal = np.cross(d1, pts[i2] - pts[i0])
    normal /= np.linalg.norm(normal)
    i3 = max(range(n), key=lambda i: abs(normal @ (pts[i] - pts[i0])))
    if abs(normal @ (pts[i3] - pts[i0])) <= eps:
        return None
    return i0, i1, i2, i3


def convex_hull_facets(points) -> list[tuple[int, int, int]]:
    """Facets (vertex index triples, outward orientation) of the hull.

    Returns an empty list for degenerate input.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    n = pts.shape[0]
    if n < 4:
        return []
    span = float(np.max(np.ptp(pts, axis=0)))
    if span == 0.0:
        return []
    eps = 1e-12 * max(span, 1.0)
    simplex = _initial_simplex(pts, max(eps, 1e-14))
    if simplex is None:
        return []
    i0, i1, i2, i3 = simplex
    interior = pts[[i0, i1, i2, i3]].mean(axis=0)

    def oriented(a, b, c):
        normal = np.cross(pts[b] - pts[a], pts[c] - pts[a])
        if normal @ (interior - pts[a]) > 0.0:
            return (a, c, b)
        return (a, b, c)

    facets = {oriented(i0, i1, i2), oriented(i0, i1, i3),
              oriented(i0, i2, i3), oriented(i1, i2, i3)}
    geom_eps = 1e-9 * max(span, 1.0)

    order = [i for i in range(n) if i not in {i0, i1, i2, i3}]
    for idx in order:
        p = pts[idx]
        visible = []
        for f in facets:
            a, b, c = f
            normal = np.cross(pts[b] - pts[a], pts[c] - pts[a])
            if normal @ (p - pts[a]) > geom_eps:
                visible.append(f)
        if not visible:
            continue
        # Horizon: edges of visible facets shared with exactly one facet.
        edge_count: dict[tuple[int, int], int] = {}
        for a, b, c in visible:
            for e in ((a, b), (b, c), (c, a)):
                key = (min(e), max(e))
                edge_count[key] = edge_count.get(key, 0) + 1
        horizon = []
        for a, b, c in visible:
            for e in ((a, b), (b, c), (c, a)):
                if edge_count[(min(e), max(e))] == 1:
                    horizon.append(e)
        facets.difference_update(visible)
        for a, b in horizon:
            facets.add(oriented(a, b, idx))
    return sorted(facets)


def convex_hull_volume(points, inflate_radius: float = 0.0,
                       sphere_samples: int = 42) -> float:
    """Volume of the convex hull of 3D points.

    With ``inflate_radius > 0`` every point is replaced by a sampled
    sphere of that radius before hulling, which gives thin or degenerate
    configurations (including a single point) a positive volume.
    Degenerate sets at zero radius have volume 0.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    if pts.shape[0] < 1:
        raise ValueError("need at least one point")
    if inflate_radius > 0.0:
        pts = inflate_points(pts, inflate_radius, sphere_samples)
    facets = convex_hull_facets(pts)
    if not facets:
        return 0.0
    ref = pts[facets[0][0]]
    vol = 0.0
    for a, b, c in facets:
        vol += np.dot(np.cross(pts[b] - pts[a], pts[c] - pts[a]), pts[a] - ref)
    return abs(vol) / 6.0


def sphere_points(n: int = 42) -> np.ndarray:
    """Deterministic unit-sphere sampling (Fibonacci spiral), (n, 3)."""
    k = np.arange(n, dtype=float)
    golden = np.pi * (3.0 - np.sqrt(5.0))
    z = 1.0 - 2.0 * (k + 0.5) / n
    r = np.sqrt(np.maximum(1.0 - z * z, 0.0))
    phi = golden * k
    return np.column_stack([r * np.cos(phi), r * np.sin(phi), z])


def inflate_points(points, radius: float, sphere_samples: int = 42) -> np.ndarray:
    """Union of spheres around the points, as a sampled point cloud."""
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    ball = radius * sphere_points(sphere_samples)
    return (pts[:, None, :] + ball[None, :, :]).reshape(-1, 3)
