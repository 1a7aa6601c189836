"""Bottom-up box proposals: region growing, pair selection, tight box fitting.

Each rendered view cloud is segmented into smooth regions by greedy growth
over proximity and normal agreement. Region pairs that could be the two
visible faces of a cuboid get a tightly fitted oriented box; near-duplicate
boxes across views are merged by volumetric IoU.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .config import PipelineConfig
from .errors import DegeneratePair
from .geometry import OrientedBox, box_iou, box_iou_upper_bound, unit
from .render import ViewCloud, camera_rig, default_intrinsics, normals_from_depth, render_depth
from .shape_io import TriangleMesh


@dataclass
class SegmentedRegion:
    id: int
    point_indices: np.ndarray   # indices into the owning view cloud
    mean_normal: np.ndarray
    area: float
    view_id: int

    def __post_init__(self):
        self.point_indices = np.asarray(self.point_indices, dtype=np.int64)
        self.mean_normal = np.asarray(self.mean_normal, dtype=float).reshape(3)


def median_nn_spacing(points: np.ndarray) -> float:
    """Median nearest-neighbor distance; 0 for fewer than 2 points."""
    if len(points) < 2:
        return 0.0
    d, _ = cKDTree(points).query(points, k=2)
    return float(np.median(d[:, 1]))


def segment_regions(cloud: ViewCloud, angle_threshold_deg: float, spacing_threshold: float,
                    min_region_size: int = 30) -> list[SegmentedRegion]:
    """Greedy region growing over the view cloud.

    A point joins a region when it lies within ``spacing_threshold`` of a
    member and its normal is within ``angle_threshold_deg`` of the region's
    running mean normal. Regions below ``min_region_size`` are dropped.
    """
    points = cloud.cloud.points
    normals = cloud.cloud.normals
    n = len(points)
    if n == 0:
        return []
    tree = cKDTree(points)
    cos_thresh = np.cos(np.radians(angle_threshold_deg))
    assigned = np.full(n, -1, dtype=np.int64)
    regions: list[SegmentedRegion] = []
    next_id = 0

    for seed in range(n):
        if assigned[seed] != -1:
            continue
        member_idx = [seed]
        assigned[seed] = next_id
        normal_sum = normals[seed].copy()
        frontier = [seed]
        while frontier:
            mean = normal_sum / np.linalg.norm(normal_sum)
            neighbor_lists = tree.query_ball_point(points[frontier], spacing_threshold)
            candidates = np.unique(np.concatenate([np.asarray(lst, dtype=np.int64)
                                                   for lst in neighbor_lists]))
            candidates = candidates[assigned[candidates] < 0]
            if candidates.size == 0:
                break
            accept = normals[candidates] @ mean >= cos_thresh
            newcomers = candidates[accept]
            if newcomers.size == 0:
                break
            assigned[newcomers] = next_id
            member_idx.extend(newcomers.tolist())
            normal_sum += normals[newcomers].sum(axis=0)
            frontier = newcomers.tolist()

        if len(member_idx) < min_region_size:
            assigned[np.asarray(member_idx)] = -2  # absorbable later, never a seed
            continue
        idx = np.asarray(sorted(member_idx), dtype=np.int64)
        d, _ = cKDTree(points[idx]).query(points[idx], k=2)
        area = float(len(idx) * np.mean(d[:, 1]) ** 2)
        regions.append(SegmentedRegion(next_id, idx, unit(normal_sum), area, cloud.view_id))
        next_id += 1
    return regions


def candidate_region_pairs(regions: list[SegmentedRegion], clouds,
                           proximity_threshold: float,
                           angle_range_deg: tuple[float, float] = (45.0, 135.0)) -> list[tuple[int, int]]:
    """Pairs of nearby, roughly perpendicular regions (same view only).

    ``clouds`` maps view ids to their ViewClouds (any sequence of ViewCloud).
    """
    by_view = {vc.view_id: vc for vc in clouds}
    cos_hi = np.cos(np.radians(angle_range_deg[0]))   # upper bound on |cos|
    cos_lo = np.cos(np.radians(angle_range_deg[1]))
    pairs: list[tuple[int, int]] = []
    trees = {}
    for r in regions:
        trees[r.id] = cKDTree(by_view[r.view_id].cloud.points[r.point_indices])
    for i, ra in enumerate(regions):
        for rb in regions[i + 1:]:
            if ra.view_id != rb.view_id:
                continue
            cos = float(ra.mean_normal @ rb.mean_normal)
            if not (cos_lo <= cos <= cos_hi):
                continue
            pts_a = by_view[ra.view_id].cloud.points[ra.point_indices]
            dmin = trees[rb.id].query(pts_a, k=1)[0].min()
            if dmin < proximity_threshold:
                pairs.append((ra.id, rb.id))
    return pairs


def fit_box(pair: tuple[SegmentedRegion, SegmentedRegion], cloud: ViewCloud,
            min_extent: float = 1e-6) -> OrientedBox:
    """Tight box over the two regions' points, framed by their normals.

    axis1 is the first region's mean normal, axis2 the second normal's
    component orthogonal to axis1, axis3 their cross product.
    """
    ra, rb = pair
    n1 = unit(ra.mean_normal)
    ortho = rb.mean_normal - (rb.mean_normal @ n1) * n1
    if np.linalg.norm(ortho) < 1e-6:
        raise DegeneratePair("region normals are parallel")
    n2 = unit(ortho)
    axes = np.stack([n1, n2, np.cross(n1, n2)])

    pts = np.vstack([cloud.cloud.points[ra.point_indices], cloud.cloud.points[rb.point_indices]])
    local = pts @ axes.T
    lo = local.min(axis=0)
    hi = local.max(axis=0)
    extents = np.maximum(0.5 * (hi - lo), min_extent)
    center = (0.5 * (hi + lo)) @ axes
    return OrientedBox(center, axes, extents, source_regions=(ra.id, rb.id))


def dedup_boxes(boxes: list[OrientedBox], areas: list[float], iou_threshold: float,
                resolution: int = 32) -> list[OrientedBox]:
    """Greedy merge of near-duplicates; the box with larger source area wins.

    An AABB-overlap upper bound prunes most pairs before the lattice IoU runs.
    """
    order = np.argsort(areas)[::-1]
    kept: list[OrientedBox] = []
    for idx in order:
        box = boxes[idx]
        duplicate = False
        for other in kept:
            if box_iou_upper_bound(box, other) <= iou_threshold:
                continue
            if box_iou(box, other, resolution) > iou_threshold:
                duplicate = True
                break
        if not duplicate:
            kept.append(box)
    return kept


def build_view_clouds(mesh: TriangleMesh, config: PipelineConfig) -> list[ViewCloud]:
    """Render the six rig views and return their non-empty point clouds."""
    rc = config.render
    poses = camera_rig(mesh.bounds(), rc.distance_factor, rc.elevations_deg)
    intr = default_intrinsics(rc.width, rc.height, rc.fov_deg)
    clouds = []
    for view_id, pose in enumerate(poses):
        view = render_depth(mesh, pose, intr, rc.width, rc.height)
        clouds.append(normals_from_depth(view, view_id=view_id))
    return clouds


def propose_from_clouds(clouds: list[ViewCloud], config: PipelineConfig,
                        shape_diagonal: float) -> tuple[list[OrientedBox], list[SegmentedRegion]]:
    """Segment every view, fit boxes to candidate pairs, dedup across views."""
    seg = config.segmentation
    min_extent = config.proposals.min_extent_frac * shape_diagonal
    all_regions: list[SegmentedRegion] = []
    boxes: list[OrientedBox] = []
    areas: list[float] = []
    offset = 0
    region_by_id: dict[int, SegmentedRegion] = {}

    for vc in clouds:
        if len(vc.cloud) == 0:
            continue
        spacing = median_nn_spacing(vc.cloud.points)
        if spacing <= 0:
            continue
        regions = segment_regions(vc, seg.angle_threshold_deg, seg.spacing_factor * spacing,
                                  seg.min_region_size)
        for r in regions:
            r.id += offset
            region_by_id[r.id] = r
        offset += len(regions) if regions else 0
        all_regions.extend(regions)
        pairs = candidate_region_pairs(regions, [vc], seg.proximity_factor * spacing,
                                       seg.pair_angle_range_deg)
        for ia, ib in pairs:
            try:
                box = fit_box((region_by_id[ia], region_by_id[ib]), vc, min_extent)
            except DegeneratePair:
                continue
            boxes.append(box)
            areas.append(region_by_id[ia].area + region_by_id[ib].area)

    kept = dedup_boxes(boxes, areas, config.proposals.dedup_iou, config.proposals.dedup_resolution)
    return kept, all_regions


def generate_proposals(mesh: TriangleMesh, config: PipelineConfig | None = None,
                       ) -> tuple[list[OrientedBox], list[SegmentedRegion]]:
    """Full multi-view proposal pipeline for one mesh."""
    config = config or PipelineConfig()
    clouds = build_view_clouds(mesh, config)
    return propose_from_clouds(clouds, config, mesh.diagonal)


# ---------------------------------------------------------------------------
# exports
# ---------------------------------------------------------------------------

def boxes_to_json(boxes: list[OrientedBox]) -> list[dict]:
    return [{
        "center": [float(x) for x in b.center],
        "axes": [float(x) for x in b.axes.reshape(-1)],   # row-major 3x3
        "extents": [float(x) for x in b.extents],
        "source_regions": list(b.source_regions),
    } for b in boxes]


def boxes_from_json(records: list[dict]) -> list[OrientedBox]:
    return [OrientedBox(np.array(r["center"]), np.array(r["axes"]).reshape(3, 3),
                        np.array(r["extents"]), tuple(r.get("source_regions", ())))
            for r in records]


def save_boxes_json(boxes: list[OrientedBox], path) -> None:
    with open(path, "w") as f:
        json.dump({"boxes": boxes_to_json(boxes)}, f, indent=2)


def load_boxes_json(path) -> list[OrientedBox]:
    with open(path) as f:
        return boxes_from_json(json.load(f)["boxes"])


def save_boxes_obj(boxes: list[OrientedBox], path) -> None:
    """Wireframe OBJ: 8 vertices and 12 'l' line elements per box."""
    edges = [(0, 1), (0, 2), (1, 3), (2, 3), (4, 5), (4, 6), (5, 7), (6, 7),
             (0, 4), (1, 5), (2, 6), (3, 7)]
    lines = ["# boxabs wireframe boxes"]
    base = 1
    for b in boxes:
        for corner in b.corners():
            lines.append("v {} {} {}".format(*(float(c) for c in corner)))
        lines.extend(f"l {base + i} {base + j}" for i, j in edges)
        base += 8
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")
