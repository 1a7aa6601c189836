"""Synthetic multi-box shapes used by the experiment scripts and test suites."""
from __future__ import annotations

import numpy as np

from .geometry import OrientedBox
from .shape_io import TriangleMesh

# 12 triangles of a canonical cube spanning [-1, 1]^3, outward-facing
_CUBE_FACES = np.array([
    [0, 2, 1], [0, 3, 2],   # -z
    [4, 5, 6], [4, 6, 7],   # +z
    [0, 1, 5], [0, 5, 4],   # -y
    [2, 3, 7], [2, 7, 6],   # +y
    [0, 4, 7], [0, 7, 3],   # -x
    [1, 2, 6], [1, 6, 5],   # +x
], dtype=np.int64)

_CUBE_VERTS = np.array([
    [-1, -1, -1], [1, -1, -1], [1, 1, -1], [-1, 1, -1],
    [-1, -1, 1], [1, -1, 1], [1, 1, 1], [-1, 1, 1],
], dtype=float)


def box_mesh(center, half_extents, rotation: np.ndarray | None = None) -> TriangleMesh:
    """Closed triangle mesh of one cuboid."""
    v = _CUBE_VERTS * np.asarray(half_extents, dtype=float)
    if rotation is not None:
        v = v @ np.asarray(rotation).T
    return TriangleMesh(v + np.asarray(center, dtype=float), _CUBE_FACES.copy())


def merge_meshes(meshes) -> TriangleMesh:
    verts, faces, offset = [], [], 0
    for m in meshes:
        verts.append(m.vertices)
        faces.append(m.faces + offset)
        offset += len(m.vertices)
    return TriangleMesh(np.vstack(verts), np.vstack(faces))


def boxes_to_mesh(boxes) -> TriangleMesh:
    return merge_meshes([box_mesh(b.center, b.extents, b.axes.T) for b in boxes])


def jitter_mesh(mesh: TriangleMesh, sigma: float, rng: np.random.Generator) -> TriangleMesh:
    """Add Gaussian noise (absolute units) to every vertex."""
    return TriangleMesh(mesh.vertices + rng.normal(scale=sigma, size=mesh.vertices.shape), mesh.faces.copy())


def random_box_scene(rng: np.random.Generator, n_boxes: int, jitter_frac: float = 0.005,
                     ) -> tuple[TriangleMesh, list[OrientedBox]]:
    """Scene of disjoint axis-aligned boxes with jittered vertices.

    Boxes are rejection-sampled until pairwise gaps exceed 8% of the working
    domain, so view-cloud segmentation cannot bridge parts. Returns the
    jittered mesh and the clean ground-truth boxes.
    """
    domain = 1.0
    margin = 0.08 * domain
    hi = max(0.26 - 0.03 * n_boxes, 0.11)  # denser scenes get smaller parts
    boxes: list[OrientedBox] = []
    attempts = 0
    while len(boxes) < n_boxes:
        attempts += 1
        if attempts > 5000:
            raise RuntimeError("could not place disjoint boxes")
        half = rng.uniform(0.08, hi, size=3) * domain
        center = rng.uniform(-0.5 * domain + half + margin, 0.5 * domain - half - margin)
        ok = True
        for b in boxes:
            gap = np.abs(center - b.center) - (half + b.extents)
            if gap.max() < margin:
                ok = False
                break
        if ok:
            boxes.append(OrientedBox(center, np.eye(3), half))
    mesh = boxes_to_mesh(boxes)
    if jitter_frac > 0:
        mesh = jitter_mesh(mesh, jitter_frac * mesh.diagonal, rng)
    return mesh, boxes


def table_scene(jitter_frac: float = 0.0, seed: int = 0) -> tuple[TriangleMesh, list[OrientedBox]]:
    """A table: one top slab plus four legs."""
    top = OrientedBox([0.0, 0.0, 0.45], np.eye(3), [0.5, 0.35, 0.05])
    legs = [OrientedBox([sx * 0.42, sy * 0.27, 0.2], np.eye(3), [0.05, 0.05, 0.2])
            for sx in (-1, 1) for sy in (-1, 1)]
    boxes = [top] + legs
    mesh = boxes_to_mesh(boxes)
    if jitter_frac > 0:
        mesh = jitter_mesh(mesh, jitter_frac * mesh.diagonal, np.random.default_rng(seed))
    return mesh, boxes


def synthetic_suite(n_shapes: int = 25, seed: int = 7, jitter_frac: float = 0.005):
    """Deterministic suite of 2-4 box scenes: list of (mesh, true_boxes)."""
    rng = np.random.default_rng(seed)
    suite = []
    for _ in range(n_shapes):
        n_boxes = int(rng.integers(2, 5))
        suite.append(random_box_scene(rng, n_boxes, jitter_frac=jitter_frac))
    return suite
