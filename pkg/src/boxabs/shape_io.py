"""Mesh ingestion, voxelization, surface sampling, and canonical alignment.

Supported inputs are OFF files and a minimal OBJ subset (``v``/``f`` records,
triangles or fans). Voxel grids persist in a run-length-encoded text format
documented in docs/formats.md.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from .errors import DegenerateCloud, EmptyMesh, ParseError
from .geometry import SimilarityTransform


@dataclass
class TriangleMesh:
    vertices: np.ndarray  # (n, 3) float
    faces: np.ndarray     # (m, 3) int

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=float).reshape(-1, 3)
        self.faces = np.asarray(self.faces, dtype=np.int64).reshape(-1, 3)
        if len(self.faces) == 0:
            raise EmptyMesh("mesh has no faces")
        if self.faces.min() < 0 or self.faces.max() >= len(self.vertices):
            raise ParseError("face index out of range")

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    @property
    def diagonal(self) -> float:
        lo, hi = self.bounds()
        return float(np.linalg.norm(hi - lo))

    def triangle_array(self) -> np.ndarray:
        """(m, 3, 3) array of triangle vertices."""
        return self.vertices[self.faces]

    def face_normals(self) -> np.ndarray:
        t = self.triangle_array()
        n = np.cross(t[:, 1] - t[:, 0], t[:, 2] - t[:, 0])
        lengths = np.linalg.norm(n, axis=1)
        safe = np.where(lengths > 0, lengths, 1.0)
        return n / safe[:, None]

    def face_areas(self) -> np.ndarray:
        t = self.triangle_array()
        return 0.5 * np.linalg.norm(np.cross(t[:, 1] - t[:, 0], t[:, 2] - t[:, 0]), axis=1)

    def transformed(self, rotation: np.ndarray = None, translation: np.ndarray = None) -> "TriangleMesh":
        v = self.vertices
        if rotation is not None:
            v = v @ np.asarray(rotation).T
        if translation is not None:
            v = v + np.asarray(translation)
        return TriangleMesh(v, self.faces.copy())


@dataclass
class VoxelGrid:
    """Dense boolean occupancy over a cubic lattice."""

    resolution: int
    origin: np.ndarray
    voxel_size: float
    occupancy: np.ndarray  # (r, r, r) bool

    def __post_init__(self):
        self.resolution = int(self.resolution)
        self.origin = np.asarray(self.origin, dtype=float).reshape(3)
        self.voxel_size = float(self.voxel_size)
        self.occupancy = np.asarray(self.occupancy, dtype=bool).reshape(
            self.resolution, self.resolution, self.resolution)
        if self.voxel_size <= 0:
            raise ValueError("voxel_size must be positive")

    def centers(self) -> np.ndarray:
        """(r^3, 3) voxel centers in C order (z fastest); cached."""
        cached = getattr(self, "_centers", None)
        if cached is None:
            r = self.resolution
            idx = np.indices((r, r, r)).reshape(3, -1).T
            cached = self.origin + (idx + 0.5) * self.voxel_size
            self._centers = cached
        return cached

    @property
    def occupied_count(self) -> int:
        return int(self.occupancy.sum())

    def same_lattice(self, other: "VoxelGrid", tol: float = 1e-9) -> bool:
        return (self.resolution == other.resolution
                and abs(self.voxel_size - other.voxel_size) <= tol * max(self.voxel_size, 1.0)
                and np.allclose(self.origin, other.origin, atol=tol * max(self.voxel_size, 1.0)))


@dataclass
class PointCloud:
    points: np.ndarray   # (n, 3)
    normals: np.ndarray  # (n, 3) unit

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float).reshape(-1, 3)
        self.normals = np.asarray(self.normals, dtype=float).reshape(-1, 3)
        if len(self.points) != len(self.normals):
            raise ValueError("points and normals must be index-aligned")
        if len(self.normals):
            lengths = np.linalg.norm(self.normals, axis=1)
            if np.any(np.abs(lengths - 1.0) > 1e-6):
                raise ValueError("normals must be unit length")

    def __len__(self) -> int:
        return len(self.points)


@dataclass
class LoadReport:
    path: str
    n_vertices: int
    n_faces: int
    degenerate_faces: tuple[int, ...] = ()
    warnings: tuple[str, ...] = ()


# ---------------------------------------------------------------------------
# mesh file loading
# ---------------------------------------------------------------------------

def load_mesh(path) -> TriangleMesh:
    mesh, _ = load_mesh_with_report(path)
    return mesh


def load_mesh_with_report(path) -> tuple[TriangleMesh, LoadReport]:
    """Load an OFF or OBJ mesh; degenerate zero-area faces are kept but flagged."""
    path = Path(path)
    text = path.read_text()
    suffix = path.suffix.lower()
    if suffix == ".obj":
        vertices, faces = _read_obj(text)
    else:
        vertices, faces = _read_off(text)
    if len(faces) == 0:
        raise EmptyMesh(f"{path}: no faces")
    mesh = TriangleMesh(np.array(vertices), np.array(faces))
    areas = mesh.face_areas()
    degenerate = tuple(int(i) for i in np.nonzero(areas <= 1e-14 * max(mesh.diagonal, 1.0) ** 2)[0])
    warnings = (f"{len(degenerate)} zero-area faces",) if degenerate else ()
    report = LoadReport(str(path), len(mesh.vertices), len(mesh.faces), degenerate, warnings)
    return mesh, report


def _tokens(text: str):
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            yield from line.split()


def _read_off(text: str):
    toks = list(_tokens(text))
    if not toks:
        raise ParseError("empty OFF file")
    pos = 0
    if toks[0].upper() == "OFF":
        pos = 1
    elif toks[0].upper().startswith("OFF") and len(toks[0]) > 3:
        # ModelNet quirk: counts glued to the header ("OFF123 456 0")
        toks = [toks[0][3:]] + toks[1:]
    else:
        raise ParseError("missing OFF header")
    try:
        nv, nf = int(toks[pos]), int(toks[pos + 1])
        pos += 3  # skip edge count
        vertices = []
        for _ in range(nv):
            vertices.append([float(toks[pos]), float(toks[pos + 1]), float(toks[pos + 2])])
            pos += 3
        faces = []
        for _ in range(nf):
            k = int(toks[pos])
            pos += 1
            idx = [int(toks[pos + j]) for j in range(k)]
            pos += k
            if k < 3:
                raise ParseError("face with fewer than 3 vertices")
            for j in range(1, k - 1):  # fan-triangulate polygons
                faces.append([idx[0], idx[j], idx[j + 1]])
    except (ValueError, IndexError) as exc:
        raise ParseError(f"malformed OFF data: {exc}") from exc
    if any(i < 0 or i >= nv for f in faces for i in f):
        raise ParseError("face index out of range")
    return vertices, faces


def _read_obj(text: str):
    vertices, faces = [], []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        try:
            if parts[0] == "v":
                vertices.append([float(parts[1]), float(parts[2]), float(parts[3])])
            elif parts[0] == "f":
                idx = []
                for token in parts[1:]:
                    i = int(token.split("/", 1)[0])
                    if i <= 0:
                        raise ParseError(f"line {lineno}: non-positive OBJ index")
                    idx.append(i - 1)
                if len(idx) < 3:
                    raise ParseError(f"line {lineno}: face with fewer than 3 vertices")
                for j in range(1, len(idx) - 1):
                    faces.append([idx[0], idx[j], idx[j + 1]])
        except (ValueError, IndexError) as exc:
            raise ParseError(f"line {lineno}: {exc}") from exc
    if any(i >= len(vertices) for f in faces for i in f):
        raise ParseError("OBJ face index out of range")
    return vertices, faces


# ---------------------------------------------------------------------------
# voxelization
# ---------------------------------------------------------------------------

def cubified_bounds(lo: np.ndarray, hi: np.ndarray, pad: float = 0.02) -> tuple[np.ndarray, float]:
    """Expand an AABB by ``pad`` and make it a cube; returns (origin, side)."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    center = 0.5 * (lo + hi)
    half = 0.5 * float((hi - lo).max()) * (1.0 + pad)
    if half <= 0:
        raise EmptyMesh("degenerate bounds")
    return center - half, 2.0 * half


def _triangle_cell_overlap(tri: np.ndarray, centers: np.ndarray, h: float) -> np.ndarray:
    """Separating-axis test of one triangle against cubic cells of half-size h."""
    v0 = tri[0] - centers
    v1 = tri[1] - centers
    v2 = tri[2] - centers
    ok = np.ones(len(centers), dtype=bool)

    # cell axes
    for k in range(3):
        lo = np.minimum(np.minimum(v0[:, k], v1[:, k]), v2[:, k])
        hi = np.maximum(np.maximum(v0[:, k], v1[:, k]), v2[:, k])
        ok &= (lo <= h) & (hi >= -h)

    # triangle plane
    n = np.cross(tri[1] - tri[0], tri[2] - tri[0])
    r = h * np.abs(n).sum()
    d = v0 @ n
    ok &= np.abs(d) <= r

    # nine edge cross products
    edges = (tri[1] - tri[0], tri[2] - tri[1], tri[0] - tri[2])
    for e in edges:
        for k in range(3):
            axis = np.zeros(3)
            axis[k] = 1.0
            a = np.cross(e, axis)
            if np.abs(a).sum() < 1e-15:
                continue
            p0, p1, p2 = v0 @ a, v1 @ a, v2 @ a
            r = h * np.abs(a).sum()
            lo = np.minimum(np.minimum(p0, p1), p2)
            hi = np.maximum(np.maximum(p0, p1), p2)
            ok &= (lo <= r) & (hi >= -r)
    return ok


def voxelize(mesh: TriangleMesh, resolution: int, fill: str = "solid",
             bounds: tuple[np.ndarray, np.ndarray] | None = None) -> VoxelGrid:
    """Voxelize a mesh on a cubic lattice.

    A cell is marked when it intersects the mesh surface; with ``fill="solid"``
    the interior (cells unreachable from the lattice boundary through empty
    space) is then filled. The lattice covers the mesh AABB expanded by 2% and
    cubified unless explicit ``bounds`` are given.
    """
    if resolution < 2:
        raise ValueError("resolution must be >= 2")
    if fill not in ("solid", "hollow"):
        raise ValueError("fill must be 'solid' or 'hollow'")
    if bounds is None:
        lo, hi = mesh.bounds()
    else:
        lo, hi = bounds
    origin, side = cubified_bounds(lo, hi)
    vs = side / resolution
    h = 0.5 * vs

    surface = np.zeros((resolution, resolution, resolution), dtype=bool)
    tris = mesh.triangle_array()
    for tri in tris:
        tlo = (tri.min(axis=0) - origin) / vs
        thi = (tri.max(axis=0) - origin) / vs
        i0 = np.maximum(np.floor(tlo - 1e-9).astype(int), 0)
        i1 = np.minimum(np.ceil(thi + 1e-9).astype(int), resolution)
        if np.any(i0 >= i1):
            continue
        xs, ys, zs = [np.arange(i0[k], i1[k]) for k in range(3)]
        gx, gy, gz = np.meshgrid(xs, ys, zs, indexing="ij")
        idx = np.stack([gx.ravel(), gy.ravel(), gz.ravel()], axis=1)
        centers = origin + (idx + 0.5) * vs
        hit = _triangle_cell_overlap(tri, centers, h)
        surface[idx[hit, 0], idx[hit, 1], idx[hit, 2]] = True

    if fill == "hollow":
        occupancy = surface
    else:
        empty = ~surface
        labels, _ = ndimage.label(empty)
        border_labels = set()
        for axis in range(3):
            for sl in (0, -1):
                face = np.take(labels, sl, axis=axis)
                border_labels.update(np.unique(face[face > 0]))
        exterior = np.isin(labels, sorted(border_labels)) & empty
        occupancy = ~exterior
    return VoxelGrid(resolution, origin, vs, occupancy)


def contains_points(mesh: TriangleMesh, points: np.ndarray) -> np.ndarray:
    """Ray-parity inside test for watertight meshes (vectorized over points).

    Casts along a fixed irrational-ish direction to dodge edge-on hits.
    """
    points = np.atleast_2d(points)
    direction = np.array([0.5773502691896258, 0.33166247903554, 0.7448455199817], dtype=float)
    direction /= np.linalg.norm(direction)
    crossings = np.zeros(len(points), dtype=np.int64)
    for tri in mesh.triangle_array():
        e1 = tri[1] - tri[0]
        e2 = tri[2] - tri[0]
        pvec = np.cross(direction, e2)
        det = float(pvec @ e1)
        if abs(det) < 1e-14:
            continue
        tvec = points - tri[0]
        u = (tvec @ pvec) / det
        qvec = np.cross(tvec, e1)
        v = (qvec @ direction) / det
        t = (qvec @ e2) / det
        hit = (u >= 0.0) & (v >= 0.0) & (u + v <= 1.0) & (t > 1e-12)
        crossings[hit] += 1
    return crossings % 2 == 1


# ---------------------------------------------------------------------------
# surface sampling and canonical alignment
# ---------------------------------------------------------------------------

def sample_surface_points(mesh: TriangleMesh, count: int, seed: int) -> PointCloud:
    """Area-uniform surface samples with face normals; deterministic per seed."""
    if count < 1:
        raise ValueError("count must be >= 1")
    areas = mesh.face_areas()
    total = areas.sum()
    if total <= 0:
        raise EmptyMesh("all faces are degenerate")
    rng = np.random.default_rng(seed)
    face_idx = rng.choice(len(areas), size=count, p=areas / total)
    u = rng.random(count)
    v = rng.random(count)
    flip = u + v > 1.0
    u[flip] = 1.0 - u[flip]
    v[flip] = 1.0 - v[flip]
    tris = mesh.triangle_array()[face_idx]
    pts = tris[:, 0] + u[:, None] * (tris[:, 1] - tris[:, 0]) + v[:, None] * (tris[:, 2] - tris[:, 0])
    return PointCloud(pts, mesh.face_normals()[face_idx])


def principal_frame(points: np.ndarray) -> np.ndarray:
    """Rows are principal directions by descending variance, signs fixed so the
    third moment along each axis is non-negative (ties resolved toward a
    positive determinant)."""
    pts = np.asarray(points, dtype=float)
    centered = pts - pts.mean(axis=0)
    cov = centered.T @ centered / len(pts)
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1]
    evals = evals[order]
    axes = evecs[:, order].T
    if evals[0] <= 0 or evals[2] / evals[0] < 1e-12:
        raise DegenerateCloud("covariance rank < 3")

    proj = centered @ axes.T
    m3 = (proj ** 3).mean(axis=0)
    scale3 = np.maximum(proj.std(axis=0) ** 3, 1e-300)
    ties = np.abs(m3) / scale3 < 1e-9
    signs = np.where(m3 >= 0, 1.0, -1.0)
    signs[ties] = 1.0
    axes = axes * signs[:, None]
    if np.any(ties) and np.linalg.det(axes) < 0:
        flip = int(np.nonzero(ties)[0][-1])
        axes[flip] = -axes[flip]
    return axes


def canonical_align(cloud: PointCloud) -> tuple[PointCloud, SimilarityTransform]:
    """Center, rotate to principal axes, and scale the longest extent to 1."""
    if len(cloud) < 4:
        raise DegenerateCloud("need at least 4 points")
    centroid = cloud.points.mean(axis=0)
    axes = principal_frame(cloud.points)
    rotated = (cloud.points - centroid) @ axes.T
    extent = rotated.max(axis=0) - rotated.min(axis=0)
    scale = 1.0 / float(extent.max())
    transform = SimilarityTransform(axes, scale, -scale * (axes @ centroid))
    out = PointCloud(transform.apply(cloud.points), transform.apply_normals(cloud.normals))
    return out, transform


# ---------------------------------------------------------------------------
# voxel grid persistence (RLE text format, see docs/formats.md)
# ---------------------------------------------------------------------------

def save_voxel_grid(grid: VoxelGrid, path) -> None:
    flat = grid.occupancy.reshape(-1)
    runs = []
    current, length = False, 0
    for bit in flat:
        if bit == current:
            length += 1
        else:
            runs.append(length)
            current, length = bit, 1
    runs.append(length)
    ox, oy, oz = (float(x) for x in grid.origin)
    with open(path, "w") as f:
        f.write("VOXRLE 1\n")
        f.write(f"resolution {grid.resolution}\n")
        f.write(f"origin {ox!r} {oy!r} {oz!r}\n")
        f.write(f"voxel_size {float(grid.voxel_size)!r}\n")
        f.write(" ".join(str(r) for r in runs) + "\n")


def load_voxel_grid(path) -> VoxelGrid:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0].strip() != "VOXRLE 1":
        raise ParseError("not a VOXRLE 1 file")
    try:
        resolution = int(lines[1].split()[1])
        origin = np.array([float(x) for x in lines[2].split()[1:4]])
        voxel_size = float(lines[3].split()[1])
        runs = [int(x) for x in lines[4].split()]
    except (IndexError, ValueError) as exc:
        raise ParseError(f"malformed VOXRLE file: {exc}") from exc
    flat = np.zeros(resolution ** 3, dtype=bool)
    pos, value = 0, False
    for run in runs:
        if value:
            flat[pos:pos + run] = True
        pos += run
        value = not value
    if pos != resolution ** 3:
        raise ParseError("run lengths do not cover the grid")
    return VoxelGrid(resolution, origin, voxel_size, flat.reshape(resolution, resolution, resolution))
