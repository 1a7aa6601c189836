"""Depth rendering from six fixed viewpoints and normal estimation.

Cameras sit on a ring of six equally spaced azimuths with alternating
elevations, all looking at the shape center. Depth is the Euclidean distance
along each pixel ray to the nearest triangle (ray casting), zero on miss.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateBounds
from .geometry import unit
from .shape_io import PointCloud, TriangleMesh

WORLD_UP = np.array([0.0, 0.0, 1.0])


@dataclass
class Intrinsics:
    focal: float
    cx: float
    cy: float


@dataclass
class CameraPose:
    """World-to-camera rigid transform: p_cam = rotation @ p_world + translation."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        self.rotation = np.asarray(self.rotation, dtype=float).reshape(3, 3)
        self.translation = np.asarray(self.translation, dtype=float).reshape(3)
        if not np.allclose(self.rotation @ self.rotation.T, np.eye(3), atol=1e-9):
            raise ValueError("camera rotation is not orthonormal")

    @property
    def origin(self) -> np.ndarray:
        return -self.rotation.T @ self.translation


@dataclass
class DepthView:
    width: int
    height: int
    depth: np.ndarray            # (height, width), 0 = no hit
    pose: CameraPose
    intrinsics: Intrinsics

    def hit_mask(self) -> np.ndarray:
        return self.depth > 0


@dataclass
class ViewCloud:
    cloud: PointCloud
    view_id: int
    camera_origin: np.ndarray

    def __post_init__(self):
        self.camera_origin = np.asarray(self.camera_origin, dtype=float).reshape(3)


def default_intrinsics(width: int, height: int, fov_deg: float = 40.0) -> Intrinsics:
    focal = (height / 2.0) / np.tan(np.radians(fov_deg) / 2.0)
    return Intrinsics(focal, width / 2.0, height / 2.0)


def look_at(position: np.ndarray, target: np.ndarray, up: np.ndarray = WORLD_UP) -> CameraPose:
    forward = unit(np.asarray(target, dtype=float) - np.asarray(position, dtype=float))
    side = np.cross(forward, up)
    if np.linalg.norm(side) < 1e-12:
        side = np.cross(forward, np.array([1.0, 0.0, 0.0]))
    right = unit(side)
    down = np.cross(forward, right)
    rotation = np.stack([right, down, forward])
    return CameraPose(rotation, -rotation @ np.asarray(position, dtype=float))


def camera_rig(shape_bounds: tuple[np.ndarray, np.ndarray], distance_factor: float = 2.5,
               elevations_deg: tuple[float, float] = (0.0, 15.0)) -> list[CameraPose]:
    """Six poses at azimuths 0,60,...,300 degrees with alternating elevation."""
    lo = np.asarray(shape_bounds[0], dtype=float)
    hi = np.asarray(shape_bounds[1], dtype=float)
    diagonal = float(np.linalg.norm(hi - lo))
    if diagonal <= 0:
        raise DegenerateBounds("bounds have zero extent")
    center = 0.5 * (lo + hi)
    distance = distance_factor * diagonal
    poses = []
    for i in range(6):
        azimuth = np.radians(60.0 * i)
        elevation = np.radians(elevations_deg[i % 2])
        offset = distance * np.array([
            np.cos(elevation) * np.cos(azimuth),
            np.cos(elevation) * np.sin(azimuth),
            np.sin(elevation),
        ])
        poses.append(look_at(center + offset, center))
    return poses


def render_depth(mesh: TriangleMesh, pose: CameraPose, intrinsics: Intrinsics,
                 width: int, height: int) -> DepthView:
    """Ray-cast depth image; depth is distance along the (unit) pixel ray."""
    if width < 16 or height < 16:
        raise ValueError("width and height must be >= 16")
    cols, rows = np.meshgrid(np.arange(width), np.arange(height))
    u = (cols + 0.5 - intrinsics.cx) / intrinsics.focal
    v = (rows + 0.5 - intrinsics.cy) / intrinsics.focal
    dirs_cam = np.stack([u, v, np.ones_like(u)], axis=-1).reshape(-1, 3)
    dirs_cam /= np.linalg.norm(dirs_cam, axis=1, keepdims=True)
    dirs = dirs_cam @ pose.rotation  # R.T @ d for each ray
    origin = pose.origin

    depth = np.full(width * height, np.inf)
    for tri in mesh.triangle_array():
        e1 = tri[1] - tri[0]
        e2 = tri[2] - tri[0]
        tvec = origin - tri[0]
        qvec = np.cross(tvec, e1)
        e2q = float(qvec @ e2)
        pvec = np.cross(dirs, e2)
        det = pvec @ e1
        with np.errstate(divide="ignore", invalid="ignore"):
            inv = np.where(np.abs(det) > 1e-14, 1.0 / det, 0.0)
            uu = (pvec @ tvec) * inv
            vv = (dirs @ qvec) * inv
            t = e2q * inv
        hit = (np.abs(det) > 1e-14) & (uu >= -1e-12) & (vv >= -1e-12) \
            & (uu + vv <= 1 + 1e-12) & (t > 1e-9)
        depth = np.where(hit & (t < depth), t, depth)

    depth[~np.isfinite(depth)] = 0.0
    return DepthView(width, height, depth.reshape(height, width), pose, intrinsics)


def backproject(view: DepthView) -> tuple[np.ndarray, np.ndarray]:
    """World points for every hit pixel; returns (points, (row, col) indices)."""
    rows, cols = np.nonzero(view.hit_mask())
    u = (cols + 0.5 - view.intrinsics.cx) / view.intrinsics.focal
    v = (rows + 0.5 - view.intrinsics.cy) / view.intrinsics.focal
    dirs_cam = np.stack([u, v, np.ones_like(u)], axis=-1)
    dirs_cam /= np.linalg.norm(dirs_cam, axis=1, keepdims=True)
    dirs = dirs_cam @ view.pose.rotation
    points = view.pose.origin + dirs * view.depth[rows, cols][:, None]
    return points, np.stack([rows, cols], axis=1)


def normals_from_depth(view: DepthView, view_id: int = 0) -> ViewCloud:
    """Back-projected hit pixels with central-difference normals.

    Normals come from the cross product of the image-space tangents of the
    back-projected position image and are oriented toward the camera. Pixels
    missing any of their four neighbors are dropped.
    """
    h, w = view.height, view.width
    hits = view.hit_mask()
    position = np.full((h, w, 3), np.nan)
    if hits.any():
        pts, rc = backproject(view)
        position[rc[:, 0], rc[:, 1]] = pts

    valid = np.zeros((h, w), dtype=bool)
    valid[1:-1, 1:-1] = (hits[1:-1, 1:-1] & hits[1:-1, :-2] & hits[1:-1, 2:]
                         & hits[:-2, 1:-1] & hits[2:, 1:-1])
    if not valid.any():
        return ViewCloud(PointCloud(np.zeros((0, 3)), np.zeros((0, 3))), view_id, view.pose.origin)

    rows, cols = np.nonzero(valid)
    du = position[rows, cols + 1] - position[rows, cols - 1]
    dv = position[rows + 1, cols] - position[rows - 1, cols]
    normals = np.cross(du, dv)
    lengths = np.linalg.norm(normals, axis=1)
    keep = lengths > 1e-14
    rows, cols, normals = rows[keep], cols[keep], normals[keep] / lengths[keep, None]

    points = position[rows, cols]
    toward = points - view.pose.origin
    flip = np.sum(normals * toward, axis=1) > 0
    normals[flip] = -normals[flip]
    return ViewCloud(PointCloud(points, normals), view_id, view.pose.origin)


def write_pgm(view: DepthView, path) -> None:
    """Debug dump: 16-bit big-endian PGM, hits scaled to 1..65535, misses 0."""
    depth = view.depth
    hits = depth > 0
    out = np.zeros(depth.shape, dtype=np.uint16)
    if hits.any():
        lo, hi = depth[hits].min(), depth[hits].max()
        span = hi - lo if hi > lo else 1.0
        out[hits] = (1 + (depth[hits] - lo) / span * 65534).astype(np.uint16)
    with open(path, "wb") as f:
        f.write(f"P5\n{view.width} {view.height}\n65535\n".encode())
        f.write(struct.pack(f">{out.size}H", *out.reshape(-1)))
