"""Selection-energy costs for box proposals.

Six per-box costs (empty volume, normal-entropy uniformity, face compactness,
neighborhood support, convexity of the enclosed points, reflective symmetry),
a pairwise overlap cost, per-region coverage costs, and the lattice cuboid
IoU. ``build_shape_context`` runs the proposal pipeline and caches every cost
a solver needs; the bundle serializes to JSON (docs/formats.md).
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import ConvexHull, QhullError, cKDTree

from .config import PipelineConfig, WeightConfig
from .errors import (
    DegenerateCovariance,
    NoSourceRegions,
    NoValidViews,
    NoVisibleFaces,
    TooFewPoints,
)
from .geometry import (
    OrientedBox,
    SimilarityTransform,
    box_iou_upper_bound,
    box_lattice_counts,
    point_triangle_distance,
)
from .proposals import SegmentedRegion, build_view_clouds, propose_from_clouds
from .render import ViewCloud
from .shape_io import PointCloud, TriangleMesh, VoxelGrid, canonical_align, sample_surface_points, voxelize

COST_NAMES = ("oc", "su", "pc", "sc", "co", "ss")


@dataclass
class CostVector:
    oc: float  # empty-volume fraction
    su: float  # normal-direction entropy of the source regions
    pc: float  # uncovered visible-face fraction
    sc: float  # support ratio from the 5% shell
    co: float  # mean distance to the frontal convex hull
    ss: float  # reflective asymmetry

    def __post_init__(self):
        values = self.as_array()
        if not np.all(np.isfinite(values)) or np.any(values < 0):
            raise ValueError("cost entries must be finite and non-negative")

    def as_array(self) -> np.ndarray:
        return np.array([self.oc, self.su, self.pc, self.sc, self.co, self.ss], dtype=float)


@dataclass
class CrfWeights:
    """Energy weights. ``mu_coverage``/``mu_cooccurrence`` are non-positive
    (zero switches the term off); the pairwise and parsimony weights are
    strictly positive."""

    mu_unary: np.ndarray
    w: np.ndarray
    mu_pairwise: float
    mu_parsimony: float
    mu_coverage: float
    mu_cooccurrence: float

    def __post_init__(self):
        self.mu_unary = np.asarray(self.mu_unary, dtype=float).reshape(6)
        self.w = np.asarray(self.w, dtype=float).reshape(6)
        if np.any(self.w <= 0):
            raise ValueError("normalizers w must be positive")
        if self.mu_pairwise <= 0 or self.mu_parsimony <= 0:
            raise ValueError("pairwise and parsimony weights must be positive")
        if self.mu_coverage > 0 or self.mu_cooccurrence > 0:
            raise ValueError("coverage and co-occurrence weights must be <= 0")

    @staticmethod
    def from_config(cfg: WeightConfig) -> "CrfWeights":
        return CrfWeights(np.array(cfg.mu_unary), np.array(cfg.w), cfg.mu_pairwise,
                          cfg.mu_parsimony, cfg.mu_coverage, cfg.mu_cooccurrence)

    def replaced(self, **kwargs) -> "CrfWeights":
        data = dict(mu_unary=self.mu_unary.copy(), w=self.w.copy(),
                    mu_pairwise=self.mu_pairwise, mu_parsimony=self.mu_parsimony,
                    mu_coverage=self.mu_coverage, mu_cooccurrence=self.mu_cooccurrence)
        data.update(kwargs)
        return CrfWeights(**data)


@dataclass
class ShapeContext:
    """Everything the solver needs for one shape, costs precomputed."""

    shape_id: str
    grid: VoxelGrid
    clouds: list[ViewCloud]
    proposals: list[OrientedBox]
    regions: list[SegmentedRegion]
    unary: list[CostVector]
    coverage: np.ndarray                      # per-region, sums to 1
    overlap: dict[tuple[int, int], float]     # sparse pairwise costs, i < j
    incidence: list[list[int]]                # per region: proposals containing it
    cooc: list[list[float]] = field(default_factory=list)  # per proposal: matched IoUs
    canonical: SimilarityTransform = field(default_factory=SimilarityTransform.identity)
    diagonal: float = 1.0


# ---------------------------------------------------------------------------
# unary costs
# ---------------------------------------------------------------------------

def cost_occupancy(box: OrientedBox, grid: VoxelGrid) -> float:
    """Fraction of grid voxel centers inside the box that are unoccupied.

    Defined as 1 when no voxel center falls inside the box.
    """
    inside = box.contains(grid.centers())
    total = int(inside.sum())
    if total == 0:
        return 1.0
    occupied = int((inside & grid.occupancy.reshape(-1)).sum())
    return (total - occupied) / total


def _direction_bins() -> np.ndarray:
    offsets = np.array([[i, j, k] for i in (-1, 0, 1) for j in (-1, 0, 1) for k in (-1, 0, 1)
                        if (i, j, k) != (0, 0, 0)], dtype=float)
    return offsets / np.linalg.norm(offsets, axis=1, keepdims=True)


_BINS26 = _direction_bins()


def normal_entropy(normals: np.ndarray, frame: np.ndarray | None = None) -> float:
    """Shannon entropy (nats) of normals binned to the 26 lattice directions.

    Binning happens in ``frame`` coordinates (rows), which keeps the value
    unchanged when shape and frame rotate together.
    """
    local = normals if frame is None else normals @ frame.T
    bins = np.argmax(local @ _BINS26.T, axis=1)
    counts = np.bincount(bins, minlength=26).astype(float)
    p = counts[counts > 0] / counts.sum()
    return float(-(p * np.log(p)).sum())


def cost_uniformity(box: OrientedBox, regions: list[SegmentedRegion],
                    clouds: list[ViewCloud]) -> float:
    """Mean normal-direction entropy over the box's source regions."""
    if not box.source_regions:
        raise NoSourceRegions("box has no source regions")
    region_by_id = {r.id: r for r in regions}
    cloud_by_view = {vc.view_id: vc for vc in clouds}
    entropies = []
    for rid in box.source_regions:
        r = region_by_id[rid]
        normals = cloud_by_view[r.view_id].cloud.normals[r.point_indices]
        entropies.append(normal_entropy(normals, frame=box.axes))
    return float(np.mean(entropies))


def _box_faces(box: OrientedBox):
    """Yield (outward normal, face center, in-plane axes u/v, half sizes)."""
    for k in range(3):
        u, v = box.axes[(k + 1) % 3], box.axes[(k + 2) % 3]
        eu, ev = box.extents[(k + 1) % 3], box.extents[(k + 2) % 3]
        for sign in (-1.0, 1.0):
            normal = sign * box.axes[k]
            center = box.center + sign * box.extents[k] * box.axes[k]
            yield normal, center, u, v, eu, ev, k


def cost_compactness(box: OrientedBox, clouds: list[ViewCloud], cells: int = 16,
                     band_frac: float = 0.05) -> float:
    """Mean empty-area fraction over the visible faces.

    Each visible face (outward normal pointing against some camera ray) is
    rasterized into ``cells x cells`` bins of the shape points lying within a
    distance band of the face plane.
    """
    points = np.vstack([vc.cloud.points for vc in clouds if len(vc.cloud)])
    origins = [vc.camera_origin for vc in clouds if len(vc.cloud)]
    if len(points) == 0 or not origins:
        raise NoVisibleFaces("no view points available")

    terms = []
    for normal, center, u, v, eu, ev, k in _box_faces(box):
        visible = any((center - o) @ normal < 0 for o in origins)
        if not visible:
            continue
        band = max(min(band_frac * box.diagonal, 0.9 * box.extents[k]), 1e-12)
        rel = points - center
        near = np.abs(rel @ normal) <= band
        if not near.any():
            terms.append(1.0)
            continue
        pu = rel[near] @ u
        pv = rel[near] @ v
        on_face = (np.abs(pu) <= eu) & (np.abs(pv) <= ev)
        if not on_face.any():
            terms.append(1.0)
            continue
        iu = np.clip(((pu[on_face] + eu) / (2 * eu) * cells).astype(int), 0, cells - 1)
        iv = np.clip(((pv[on_face] + ev) / (2 * ev) * cells).astype(int), 0, cells - 1)
        covered = len(np.unique(iu * cells + iv))
        terms.append(1.0 - covered / (cells * cells))
    if not terms:
        raise NoVisibleFaces("no face is visible from any view")
    return float(np.mean(terms))


def cost_support(box: OrientedBox, grid: VoxelGrid, enlarge: float = 1.05,
                 cap: float = 10.0) -> float:
    """Occupied voxels inside the box over occupied voxels in the 5% shell.

    Returns ``cap`` when the enlarged box adds no occupied voxels. Higher
    values mean better support; the fused weight for this entry is negative.
    """
    centers = grid.centers()
    occupied = grid.occupancy.reshape(-1)
    n_sc = int((box.contains(centers) & occupied).sum())
    n_ex = int((box.enlarged(enlarge).contains(centers) & occupied).sum())
    if n_ex == n_sc:
        return cap
    return min(n_sc / (n_ex - n_sc), cap)


def cost_convexity(box: OrientedBox, clouds: list[ViewCloud]) -> float:
    """Mean distance from per-view in-box points to their frontal convex hull.

    A view contributes when it sees at least 4 non-coplanar points inside the
    box; frontal means hull facets facing that view's camera.
    """
    contributions = []
    for vc in clouds:
        if len(vc.cloud) == 0:
            continue
        pts = vc.cloud.points[box.contains(vc.cloud.points)]
        if len(pts) < 4:
            continue
        centered = pts - pts.mean(axis=0)
        evals = np.linalg.eigvalsh(centered.T @ centered / len(pts))
        if evals[0] < 1e-12 * max(evals[2], 1e-300):
            continue  # coplanar
        try:
            hull = ConvexHull(pts)
        except QhullError:
            continue
        normals = hull.equations[:, :3]
        centroids = pts[hull.simplices].mean(axis=1)
        frontal = np.sum(normals * (vc.camera_origin - centroids), axis=1) > 0
        if not frontal.any():
            continue
        dists = np.full(len(pts), np.inf)
        for simplex in hull.simplices[frontal]:
            dists = np.minimum(dists, point_triangle_distance(pts, pts[simplex]))
        contributions.append(float(dists.mean()))
    if not contributions:
        raise NoValidViews("no view has enough non-coplanar points in the box")
    return float(np.mean(contributions))


def cost_symmetry(box: OrientedBox, cloud: PointCloud, min_points: int = 10) -> float:
    """Reflective asymmetry of the enclosed points about their principal planes.

    For each principal axis the cloud is reflected, every point is matched to
    its nearest reflected point, and the per-axis term is the mean position
    gap (normalized by the box length along that axis) plus the mean normal
    disagreement. Terms are combined weighted by the eigenvalues.
    """
    if len(cloud) < min_points:
        raise TooFewPoints(f"need at least {min_points} points")
    pts = cloud.points
    normals = cloud.normals
    centroid = pts.mean(axis=0)
    centered = pts - centroid
    cov = centered.T @ centered / len(pts)
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1]
    evals = evals[order]
    axes = evecs[:, order].T
    if evals[0] <= 0 or evals[1] / evals[0] < 1e-12:
        raise DegenerateCovariance("points are collinear")

    weighted = 0.0
    for k in range(3):
        a = axes[k]
        refl_pts = pts - 2.0 * (centered @ a)[:, None] * a
        refl_nrm = normals - 2.0 * (normals @ a)[:, None] * a
        nn = cKDTree(refl_pts).query(pts, k=1)[1]
        gap = np.linalg.norm(pts - refl_pts[nn], axis=1)
        disagree = 1.0 - np.sum(normals * refl_nrm[nn], axis=1)
        term = float(gap.mean()) / box.support_length(a) + float(disagree.mean())
        weighted += evals[k] * term
    return float(weighted / evals.sum())


def fuse_unary(costs: CostVector, weights: CrfWeights) -> float:
    """Inner product of the weight vector with the normalized cost vector."""
    return float(np.dot(weights.mu_unary, weights.w * costs.as_array()))


# ---------------------------------------------------------------------------
# pairwise / higher-order ingredients
# ---------------------------------------------------------------------------

def cuboid_iou(a: OrientedBox, b: OrientedBox, resolution: int = 64) -> float:
    """Volumetric IoU on a resolution^3 lattice over the joint bounding box."""
    if resolution < 16:
        raise ValueError("resolution must be >= 16")
    n_a, n_b, n_both = box_lattice_counts(a, b, resolution)
    union = n_a + n_b - n_both
    return n_both / union if union > 0 else 0.0


def cost_pairwise_overlap(a: OrientedBox, b: OrientedBox, resolution: int = 64) -> float:
    """Lattice intersection volume over the smaller box's lattice volume."""
    if resolution < 16:
        raise ValueError("resolution must be >= 16")
    n_a, n_b, n_both = box_lattice_counts(a, b, resolution)
    smaller = min(n_a, n_b)
    return n_both / smaller if smaller > 0 else 0.0


def coverage_costs(regions: list[SegmentedRegion]) -> np.ndarray:
    """Region areas normalized to sum to one."""
    areas = np.array([r.area for r in regions], dtype=float)
    total = areas.sum()
    return areas / total if total > 0 else areas


# ---------------------------------------------------------------------------
# shape context assembly
# ---------------------------------------------------------------------------

def points_in_box_cloud(box: OrientedBox, clouds: list[ViewCloud]) -> PointCloud:
    pts, nrm = [], []
    for vc in clouds:
        if len(vc.cloud) == 0:
            continue
        mask = box.contains(vc.cloud.points)
        pts.append(vc.cloud.points[mask])
        nrm.append(vc.cloud.normals[mask])
    if not pts:
        return PointCloud(np.zeros((0, 3)), np.zeros((0, 3)))
    return PointCloud(np.vstack(pts), np.vstack(nrm))


def compute_cost_vector(box: OrientedBox, grid: VoxelGrid, regions: list[SegmentedRegion],
                        clouds: list[ViewCloud], config: PipelineConfig) -> CostVector:
    """All six costs for one proposal; costs whose preconditions fail fall
    back to neutral values (0 for convexity/symmetry, 1 for compactness)."""
    cc = config.costs
    oc = cost_occupancy(box, grid)
    try:
        su = cost_uniformity(box, regions, clouds)
    except NoSourceRegions:
        su = 0.0
    try:
        pc = cost_compactness(box, clouds, cc.compactness_cells, cc.compactness_band_frac)
    except NoVisibleFaces:
        pc = 1.0
    sc = cost_support(box, grid, cc.support_enlarge, cc.support_cap)
    try:
        co = cost_convexity(box, clouds)
    except NoValidViews:
        co = 0.0
    try:
        ss = cost_symmetry(box, points_in_box_cloud(box, clouds), cc.symmetry_min_points)
    except (TooFewPoints, DegenerateCovariance):
        ss = 0.0
    return CostVector(oc, su, pc, sc, co, ss)


def region_incidence(boxes: list[OrientedBox], regions: list[SegmentedRegion],
                     clouds: list[ViewCloud], frac: float = 0.5) -> list[list[int]]:
    """For each region, the proposals holding at least ``frac`` of its points."""
    cloud_by_view = {vc.view_id: vc for vc in clouds}
    incidence = []
    for r in regions:
        pts = cloud_by_view[r.view_id].cloud.points[r.point_indices]
        holders = [i for i, box in enumerate(boxes)
                   if box.contains(pts, eps=1e-9).mean() >= frac]
        incidence.append(holders)
    return incidence


def build_shape_context(mesh: TriangleMesh, config: PipelineConfig | None = None,
                        shape_id: str = "shape") -> ShapeContext:
    """Run rendering, segmentation, proposal fitting, and every cost."""
    config = config or PipelineConfig()
    clouds = build_view_clouds(mesh, config)
    boxes, regions = propose_from_clouds(clouds, config, mesh.diagonal)
    grid = voxelize(mesh, config.costs.grid_resolution)

    unary = [compute_cost_vector(b, grid, regions, clouds, config) for b in boxes]
    coverage = coverage_costs(regions)
    incidence = region_incidence(boxes, regions, clouds, config.costs.incidence_frac)

    overlap: dict[tuple[int, int], float] = {}
    for i in range(len(boxes)):
        for j in range(i + 1, len(boxes)):
            if box_iou_upper_bound(boxes[i], boxes[j]) <= 0.0:
                continue
            c = cost_pairwise_overlap(boxes[i], boxes[j], config.costs.overlap_resolution)
            if c > 0.0:
                overlap[(i, j)] = c

    surface = sample_surface_points(mesh, config.costs.surface_samples, config.seed)
    try:
        _, canonical = canonical_align(surface)
    except Exception:
        canonical = SimilarityTransform.identity()

    return ShapeContext(shape_id, grid, clouds, boxes, regions, unary, coverage,
                        overlap, incidence, cooc=[[] for _ in boxes],
                        canonical=canonical, diagonal=mesh.diagonal)


# ---------------------------------------------------------------------------
# JSON bundle (view clouds are not persisted; see docs/formats.md)
# ---------------------------------------------------------------------------

def context_to_dict(ctx: ShapeContext) -> dict:
    from .proposals import boxes_to_json

    flat = ctx.grid.occupancy.reshape(-1)
    runs, current, length = [], False, 0
    for bit in flat:
        if bool(bit) == current:
            length += 1
        else:
            runs.append(length)
            current, length = bool(bit), 1
    runs.append(length)
    return {
        "shape_id": ctx.shape_id,
        "diagonal": ctx.diagonal,
        "grid": {
            "resolution": ctx.grid.resolution,
            "origin": [float(x) for x in ctx.grid.origin],
            "voxel_size": float(ctx.grid.voxel_size),
            "rle": runs,
        },
        "proposals": boxes_to_json(ctx.proposals),
        "regions": [{
            "id": r.id, "view_id": r.view_id, "area": float(r.area),
            "mean_normal": [float(x) for x in r.mean_normal],
            "n_points": int(len(r.point_indices)),
        } for r in ctx.regions],
        "unary": [[float(x) for x in cv.as_array()] for cv in ctx.unary],
        "coverage": [float(x) for x in ctx.coverage],
        "overlap": [[i, j, float(c)] for (i, j), c in sorted(ctx.overlap.items())],
        "incidence": ctx.incidence,
        "cooc": ctx.cooc,
        "canonical": {
            "rotation": [float(x) for x in ctx.canonical.rotation.reshape(-1)],
            "scale": float(ctx.canonical.scale),
            "translation": [float(x) for x in ctx.canonical.translation],
        },
    }


def context_from_dict(data: dict) -> ShapeContext:
    from .proposals import boxes_from_json

    g = data["grid"]
    flat = np.zeros(g["resolution"] ** 3, dtype=bool)
    pos, value = 0, False
    for run in g["rle"]:
        if value:
            flat[pos:pos + run] = True
        pos += run
        value = not value
    grid = VoxelGrid(g["resolution"], np.array(g["origin"]), g["voxel_size"],
                     flat.reshape(g["resolution"], g["resolution"], g["resolution"]))
    regions = [SegmentedRegion(r["id"], np.zeros(0, dtype=np.int64),
                               np.array(r["mean_normal"]), r["area"], r["view_id"])
               for r in data["regions"]]
    canonical = SimilarityTransform(
        np.array(data["canonical"]["rotation"]).reshape(3, 3),
        data["canonical"]["scale"],
        np.array(data["canonical"]["translation"]))
    return ShapeContext(
        shape_id=data["shape_id"],
        grid=grid,
        clouds=[],
        proposals=boxes_from_json(data["proposals"]),
        regions=regions,
        unary=[CostVector(*row) for row in data["unary"]],
        coverage=np.array(data["coverage"], dtype=float),
        overlap={(i, j): c for i, j, c in data["overlap"]},
        incidence=[list(map(int, row)) for row in data["incidence"]],
        cooc=[list(map(float, row)) for row in data["cooc"]],
        canonical=canonical,
        diagonal=data["diagonal"],
    )


def save_context(ctx: ShapeContext, path) -> None:
    with open(path, "w") as f:
        json.dump(context_to_dict(ctx), f)


def load_context(path) -> ShapeContext:
    with open(path) as f:
        return context_from_dict(json.load(f))
