"""Oriented boxes, similarity transforms, and low-level geometric tests."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def unit(v: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(v)
    if n == 0.0:
        raise ValueError("cannot normalize zero vector")
    return v / n


def rotation_about_axis(axis: np.ndarray, angle: float) -> np.ndarray:
    """Rodrigues rotation matrix for an angle (radians) about a unit axis."""
    a = unit(np.asarray(axis, dtype=float))
    k = np.array([[0, -a[2], a[1]], [a[2], 0, -a[0]], [-a[1], a[0], 0]])
    return np.eye(3) + np.sin(angle) * k + (1.0 - np.cos(angle)) * (k @ k)


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Uniform-ish random rotation from QR of a Gaussian matrix."""
    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    q *= np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


@dataclass
class OrientedBox:
    """Cuboid given by center, orthonormal right-handed axes (rows), half-extents."""

    center: np.ndarray
    axes: np.ndarray
    extents: np.ndarray
    source_regions: tuple[int, ...] = ()

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=float).reshape(3)
        self.axes = np.asarray(self.axes, dtype=float).reshape(3, 3)
        self.extents = np.asarray(self.extents, dtype=float).reshape(3)
        self.source_regions = tuple(int(r) for r in self.source_regions)
        if not np.allclose(self.axes @ self.axes.T, np.eye(3), atol=1e-9):
            raise ValueError("box axes are not orthonormal")
        if np.linalg.det(self.axes) < 0:
            raise ValueError("box axes are left-handed")
        if np.any(self.extents <= 0):
            raise ValueError("box extents must be strictly positive")

    @property
    def volume(self) -> float:
        return float(8.0 * np.prod(self.extents))

    @property
    def diagonal(self) -> float:
        return float(2.0 * np.linalg.norm(self.extents))

    def corners(self) -> np.ndarray:
        signs = np.array([[sx, sy, sz] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)], dtype=float)
        return self.center + (signs * self.extents) @ self.axes

    def aabb(self) -> tuple[np.ndarray, np.ndarray]:
        c = self.corners()
        return c.min(axis=0), c.max(axis=0)

    def contains(self, points: np.ndarray, eps: float = 0.0) -> np.ndarray:
        """Boolean mask of points inside (or on) the box, optionally inflated by eps."""
        local = (np.atleast_2d(points) - self.center) @ self.axes.T
        return np.all(np.abs(local) <= self.extents + eps, axis=1)

    def support_length(self, direction: np.ndarray) -> float:
        """Full length of the box along an arbitrary unit direction."""
        d = unit(np.asarray(direction, dtype=float))
        return float(2.0 * np.sum(self.extents * np.abs(self.axes @ d)))

    def enlarged(self, factor: float) -> "OrientedBox":
        return OrientedBox(self.center.copy(), self.axes.copy(), self.extents * factor, self.source_regions)


@dataclass
class SimilarityTransform:
    """Map p -> scale * (rotation @ p) + translation.

    ``rotation`` is orthogonal; a determinant of -1 (a reflection) is allowed
    because sign disambiguation of principal axes can demand one.
    """

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    scale: float = 1.0
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.rotation = np.asarray(self.rotation, dtype=float).reshape(3, 3)
        self.translation = np.asarray(self.translation, dtype=float).reshape(3)
        self.scale = float(self.scale)

    def apply(self, points: np.ndarray) -> np.ndarray:
        return self.scale * (np.atleast_2d(points) @ self.rotation.T) + self.translation

    def apply_normals(self, normals: np.ndarray) -> np.ndarray:
        return np.atleast_2d(normals) @ self.rotation.T

    def apply_box(self, box: OrientedBox) -> OrientedBox:
        center = self.apply(box.center[None])[0]
        axes = box.axes @ self.rotation.T
        if np.linalg.det(axes) < 0:
            axes = axes.copy()
            axes[2] = -axes[2]  # a box is symmetric along each axis
        return OrientedBox(center, axes, box.extents * self.scale, box.source_regions)

    def inverse(self) -> "SimilarityTransform":
        rot = self.rotation.T
        s = 1.0 / self.scale
        return SimilarityTransform(rot, s, -s * (rot @ self.translation))

    @staticmethod
    def identity() -> "SimilarityTransform":
        return SimilarityTransform()


def point_triangle_distance(points: np.ndarray, tri: np.ndarray) -> np.ndarray:
    """Distance from each point to a single triangle (vectorized, Ericson-style)."""
    p = np.atleast_2d(points)
    a, b, c = tri[0], tri[1], tri[2]
    ab, ac = b - a, c - a

    ap = p - a
    d1 = ap @ ab
    d2 = ap @ ac
    bp = p - b
    d3 = bp @ ab
    d4 = bp @ ac
    cp = p - c
    d5 = cp @ ab
    d6 = cp @ ac

    closest = np.empty_like(p)
    done = np.zeros(len(p), dtype=bool)

    def settle(mask, value):
        m = mask & ~done
        closest[m] = value[m] if value.ndim == 2 else value
        done[m] = True

    settle((d1 <= 0) & (d2 <= 0), np.broadcast_to(a, p.shape))
    settle((d3 >= 0) & (d4 <= d3), np.broadcast_to(b, p.shape))
    settle((d6 >= 0) & (d5 <= d6), np.broadcast_to(c, p.shape))

    va = d3 * d6 - d5 * d4
    vb = d5 * d2 - d1 * d6
    vc = d1 * d4 - d3 * d2

    t_ab = np.divide(d1, d1 - d3, out=np.zeros_like(d1), where=(d1 - d3) != 0)
    settle((vc <= 0) & (d1 >= 0) & (d3 <= 0), a + t_ab[:, None] * ab)
    t_ac = np.divide(d2, d2 - d6, out=np.zeros_like(d2), where=(d2 - d6) != 0)
    settle((vb <= 0) & (d2 >= 0) & (d6 <= 0), a + t_ac[:, None] * ac)
    denom_bc = (d4 - d3) + (d5 - d6)
    t_bc = np.divide(d4 - d3, denom_bc, out=np.zeros_like(d4), where=denom_bc != 0)
    settle((va <= 0) & (d4 - d3 >= 0) & (d5 - d6 >= 0), b + t_bc[:, None] * (c - b))

    total = va + vb + vc
    inv = np.divide(1.0, total, out=np.zeros_like(total), where=total != 0)
    v = vb * inv
    w = vc * inv
    settle(np.ones(len(p), dtype=bool), a + v[:, None] * ab + w[:, None] * ac)

    return np.linalg.norm(p - closest, axis=1)


def point_triangles_distance(points: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    """Min distance from each point to any triangle in an (m, 3, 3) array."""
    best = np.full(len(np.atleast_2d(points)), np.inf)
    for tri in triangles:
        best = np.minimum(best, point_triangle_distance(points, tri))
    return best


def aabb_overlap_volume(lo_a, hi_a, lo_b, hi_b) -> float:
    d = np.minimum(hi_a, hi_b) - np.maximum(lo_a, lo_b)
    if np.any(d <= 0):
        return 0.0
    return float(np.prod(d))


def box_iou_upper_bound(a: OrientedBox, b: OrientedBox) -> float:
    """Cheap upper bound: AABB intersection over the larger exact volume."""
    lo_a, hi_a = a.aabb()
    lo_b, hi_b = b.aabb()
    return aabb_overlap_volume(lo_a, hi_a, lo_b, hi_b) / max(a.volume, b.volume)


def box_lattice_counts(a: OrientedBox, b: OrientedBox, resolution: int) -> tuple[int, int, int]:
    """Deterministic lattice estimate over the joint AABB of two boxes.

    Returns cell-center counts (inside a, inside b, inside both) on a
    resolution^3 lattice. Disjoint AABBs short-circuit to zero intersection.
    """
    lo_a, hi_a = a.aabb()
    lo_b, hi_b = b.aabb()
    lo = np.minimum(lo_a, lo_b)
    hi = np.maximum(hi_a, hi_b)
    step = (hi - lo) / resolution
    coords = [lo[k] + (np.arange(resolution) + 0.5) * step[k] for k in range(3)]
    gx, gy, gz = np.meshgrid(*coords, indexing="ij")
    pts = np.stack([gx.ravel(), gy.ravel(), gz.ravel()], axis=1)
    in_a = a.contains(pts)
    in_b = b.contains(pts)
    return int(in_a.sum()), int(in_b.sum()), int((in_a & in_b).sum())


def box_iou(a: OrientedBox, b: OrientedBox, resolution: int = 64) -> float:
    """Volumetric IoU of two oriented boxes on a shared lattice; symmetric."""
    lo_a, hi_a = a.aabb()
    lo_b, hi_b = b.aabb()
    if np.any(lo_a > hi_b) or np.any(lo_b > hi_a):
        return 0.0
    n_a, n_b, n_both = box_lattice_counts(a, b, resolution)
    union = n_a + n_b - n_both
    return n_both / union if union > 0 else 0.0
