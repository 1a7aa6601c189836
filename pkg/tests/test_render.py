import numpy as np
import pytest

from boxabs.errors import DegenerateBounds
from boxabs.geometry import rotation_about_axis
from boxabs.render import (
    backproject,
    camera_rig,
    default_intrinsics,
    look_at,
    normals_from_depth,
    render_depth,
    write_pgm,
)
from boxabs.shape_io import TriangleMesh


def big_quad(z=0.0, half=50.0):
    """Two-triangle square in the z=const plane."""
    v = np.array([[-half, -half, z], [half, -half, z], [half, half, z], [-half, half, z]])
    return TriangleMesh(v, np.array([[0, 1, 2], [0, 2, 3]]))


def test_camera_rig_angles():
    poses = camera_rig((np.zeros(3), np.ones(3)))
    assert len(poses) == 6
    center = np.full(3, 0.5)
    diagonal = np.sqrt(3.0)
    for i, pose in enumerate(poses):
        offset = pose.origin - center
        dist = np.linalg.norm(offset)
        assert abs(dist - 2.5 * diagonal) < 1e-9
        azimuth = np.degrees(np.arctan2(offset[1], offset[0])) % 360
        elevation = np.degrees(np.arcsin(offset[2] / dist))
        assert abs(azimuth - 60.0 * i) < 1e-6
        assert abs(elevation - (15.0 if i % 2 else 0.0)) < 1e-6


def test_camera_rig_looks_at_center():
    poses = camera_rig((np.zeros(3), np.ones(3)))
    center = np.full(3, 0.5)
    for pose in poses:
        optical_axis = pose.rotation[2]  # camera +z in world coords
        to_center = center - pose.origin
        cos = optical_axis @ to_center / np.linalg.norm(to_center)
        assert abs(cos - 1.0) < 1e-9


def test_camera_rig_translation_equivariant():
    shift = np.array([3.0, -1.0, 2.0])
    rig0 = camera_rig((np.zeros(3), np.ones(3)))
    rig1 = camera_rig((shift, shift + 1.0))
    for p0, p1 in zip(rig0, rig1):
        assert np.allclose(p1.origin, p0.origin + shift, atol=1e-9)
        assert np.allclose(p1.rotation, p0.rotation, atol=1e-12)


def test_camera_rig_degenerate_bounds():
    with pytest.raises(DegenerateBounds):
        camera_rig((np.zeros(3), np.zeros(3)))


def test_render_triangle_center_depth():
    d = 4.0
    tri = TriangleMesh(np.array([[-1.0, -1, d], [1, -1, d], [0, 1.5, d]]), np.array([[0, 1, 2]]))
    pose = look_at(np.zeros(3), np.array([0.0, 0, d]), up=np.array([0.0, 1, 0]))
    intr = default_intrinsics(33, 33)
    view = render_depth(tri, pose, intr, 33, 33)
    assert abs(view.depth[16, 16] - d) < 1e-6


def test_render_miss_is_zero(unit_cube):
    pose = look_at(np.array([10.0, 0, 0]), np.array([20.0, 0, 0]))  # facing away
    view = render_depth(unit_cube, pose, default_intrinsics(32, 32), 32, 32)
    assert np.all(view.depth == 0)


def test_render_cube_depth_bounds(unit_cube):
    d_face = 4.5  # camera 5.0 from center, front face 0.5 closer
    pose = look_at(np.array([5.5, 0.5, 0.5]), np.array([0.5, 0.5, 0.5]))
    view = render_depth(unit_cube, pose, default_intrinsics(65, 65), 65, 65)
    hits = view.depth[view.hit_mask()]
    assert hits.size > 0
    assert hits.min() >= d_face - 1e-9
    assert hits.max() <= d_face + np.sqrt(3) + 1e-9
    assert abs(view.depth[32, 32] - d_face) < 1e-9  # on-axis pixel hits the front face


def test_backproject_points_lie_on_surface(unit_cube):
    poses = camera_rig(unit_cube.bounds())
    intr = default_intrinsics(48, 48)
    diag = unit_cube.diagonal
    for pose in poses[:3]:
        view = render_depth(unit_cube, pose, intr, 48, 48)
        pts, _ = backproject(view)
        # every back-projected point sits on one of the 6 cube planes
        err = np.minimum.reduce([
            np.min(np.abs(pts - 0.0), axis=1),
            np.min(np.abs(pts - 1.0), axis=1),
        ])
        assert np.max(err) < 1e-4 * diag


def test_viewclouds_share_world_frame(unit_cube):
    poses = camera_rig(unit_cube.bounds())
    intr = default_intrinsics(48, 48)
    all_pts = []
    for i, pose in enumerate(poses):
        vc = normals_from_depth(render_depth(unit_cube, pose, intr, 48, 48), view_id=i)
        if len(vc.cloud):
            all_pts.append(vc.cloud.points)
    pts = np.vstack(all_pts)
    assert np.all(pts.min(axis=0) >= -0.01)
    assert np.all(pts.max(axis=0) <= 1.01)


def test_normals_frontoparallel_plane():
    pose = look_at(np.array([0.0, 0, -10]), np.zeros(3), up=np.array([0.0, 1, 0]))
    view = render_depth(big_quad(z=0.0), pose, default_intrinsics(64, 64), 64, 64)
    vc = normals_from_depth(view)
    assert len(vc.cloud) > 100
    view_dir = pose.rotation[2]
    errs = np.linalg.norm(vc.cloud.normals - (-view_dir), axis=1)
    assert np.max(errs) < 1e-3


def test_normals_tilted_plane_against_analytic():
    # plane tilted 45 degrees about the image x axis
    rot = rotation_about_axis(np.array([1.0, 0, 0]), np.radians(45.0))
    quad = big_quad(z=0.0, half=50.0).transformed(rotation=rot, translation=np.array([0, 0, 30.0]))
    pose = look_at(np.array([0.0, 0, -10]), np.array([0.0, 0, 30.0]), up=np.array([0.0, 1, 0]))
    view = render_depth(quad, pose, default_intrinsics(64, 64), 64, 64)
    vc = normals_from_depth(view)
    assert len(vc.cloud) > 50
    expected = rot @ np.array([0.0, 0, -1])  # oriented toward the camera at -z
    errs = np.linalg.norm(vc.cloud.normals - expected, axis=1)
    assert np.max(errs) < 1e-2


def test_normals_empty_depth():
    pose = look_at(np.array([0.0, 0, -10]), np.zeros(3), up=np.array([0.0, 1, 0]))
    view = render_depth(big_quad(z=-20.0), pose, default_intrinsics(32, 32), 32, 32)
    vc = normals_from_depth(view)
    assert len(vc.cloud) == 0


def test_normals_face_the_camera(unit_cube):
    poses = camera_rig(unit_cube.bounds())
    intr = default_intrinsics(48, 48)
    for i, pose in enumerate(poses):
        vc = normals_from_depth(render_depth(unit_cube, pose, intr, 48, 48), view_id=i)
        if not len(vc.cloud):
            continue
        toward = vc.cloud.points - vc.camera_origin
        assert np.all(np.sum(vc.cloud.normals * toward, axis=1) < 0)


def test_pgm_dump(tmp_path, unit_cube):
    pose = camera_rig(unit_cube.bounds())[0]
    view = render_depth(unit_cube, pose, default_intrinsics(32, 32), 32, 32)
    path = tmp_path / "depth.pgm"
    write_pgm(view, path)
    data = path.read_bytes()
    assert data.startswith(b"P5\n32 32\n65535\n")
    assert len(data) == len(b"P5\n32 32\n65535\n") + 32 * 32 * 2
