"""Shape similarity search and minimum-weight bipartite matching.

The matcher is the classic primal-dual assignment method: it maintains dual
node values that never violate ``z_p + z_q <= w_pq`` and augments along tight
edges until the (padded) matching is perfect. Rectangular inputs are padded
with zero-weight dummy nodes; nodes matched to dummies come back as exposed
and get no co-occurrence entry.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InsufficientDataset, NonFiniteWeight
from .geometry import OrientedBox, box_iou_upper_bound
from .potentials import ShapeContext, cuboid_iou
from .shape_io import VoxelGrid, principal_frame


@dataclass
class ShapeDescriptor:
    vector: np.ndarray
    shape_id: str

    def __post_init__(self):
        self.vector = np.asarray(self.vector, dtype=float).reshape(-1)


@dataclass
class MatchingResult:
    matches: list[tuple[int, int, float]]      # (p, q, weight)
    duals_left: np.ndarray                     # z_p
    duals_right: np.ndarray                    # z_q
    exposed_left: list[int]
    exposed_right: list[int]

    @property
    def total_weight(self) -> float:
        return float(sum(w for _, _, w in self.matches))


# ---------------------------------------------------------------------------
# descriptors and kNN
# ---------------------------------------------------------------------------

def shape_descriptor(grid: VoxelGrid, shape_id: str = "", cells: int = 8) -> ShapeDescriptor:
    """Occupancy-fraction descriptor on a cells^3 partition of the aligned shape.

    Occupied voxel centers are aligned to their principal frame; each cell's
    entry is the occupied fraction of the grid centers that land in it.
    """
    occupied = grid.occupancy.reshape(-1)
    if not occupied.any():
        return ShapeDescriptor(np.zeros(cells ** 3), shape_id)
    centers = grid.centers()
    occ_centers = centers[occupied]
    try:
        frame = principal_frame(occ_centers)
    except Exception:
        frame = np.eye(3)
    centroid = occ_centers.mean(axis=0)
    aligned_all = (centers - centroid) @ frame.T
    aligned_occ = aligned_all[occupied]

    lo = aligned_occ.min(axis=0)
    hi = aligned_occ.max(axis=0)
    span = np.maximum(hi - lo, 1e-12)
    idx = np.clip(((aligned_all - lo) / span * cells).astype(int), 0, cells - 1)
    flat = (idx[:, 0] * cells + idx[:, 1]) * cells + idx[:, 2]
    total = np.bincount(flat, minlength=cells ** 3).astype(float)
    hit = np.bincount(flat[occupied], minlength=cells ** 3).astype(float)
    with np.errstate(invalid="ignore"):
        frac = np.where(total > 0, hit / np.maximum(total, 1.0), 0.0)
    return ShapeDescriptor(frac, shape_id)


def knn_shapes(query: ShapeDescriptor, dataset: list[ShapeDescriptor], k: int) -> list[str]:
    """Ids of the k nearest descriptors (Euclidean), excluding the query's own
    id; distance ties break toward the smaller id."""
    if k < 1:
        raise ValueError("k must be >= 1")
    others = [d for d in dataset if d.shape_id != query.shape_id]
    if len(others) < k:
        raise InsufficientDataset(f"need {k} other shapes, have {len(others)}")
    ranked = sorted(others, key=lambda d: (float(np.linalg.norm(d.vector - query.vector)), d.shape_id))
    return [d.shape_id for d in ranked[:k]]


# ---------------------------------------------------------------------------
# primal-dual assignment
# ---------------------------------------------------------------------------

def _hungarian(cost: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Minimum-cost perfect matching on a square matrix.

    Returns (col_of_row, u, v) where u, v are feasible duals with
    u[i] + v[j] <= cost[i, j] and equality on matched edges.
    """
    n = cost.shape[0]
    INF = np.inf
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    p = np.full(n + 1, n, dtype=int)      # p[j] = row matched to column j (n = none)
    way = np.zeros(n + 1, dtype=int)

    for i in range(n):
        p[n] = i
        j0 = n
        minv = np.full(n + 1, INF)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = p[j0]
            delta = INF
            j1 = -1
            cur = cost[i0, :n] - u[i0] - v[:n]
            better = ~used[:n] & (cur < minv[:n])
            minv[:n][better] = cur[better]
            way[:n][better] = j0
            free = ~used[:n]
            if free.any():
                jbest = int(np.argmin(np.where(free, minv[:n], INF)))
                delta = minv[jbest]
                j1 = jbest
            if not np.isfinite(delta):
                raise NonFiniteWeight("matching failed to progress")
            u[p[used]] += delta
            v[used] -= delta
            minv[~used] -= delta
            j0 = j1
            if p[j0] == n:
                break
        while j0 != n:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1

    col_of_row = np.empty(n, dtype=int)
    for j in range(n):
        col_of_row[p[j]] = j
    return col_of_row, u[:n], v[:n]


def bipartite_match(weights: np.ndarray) -> MatchingResult:
    """Minimum-weight matching between the rows and columns of ``weights``.

    Rectangular matrices are padded internally with zero-weight dummy nodes,
    so every node on the smaller side gets matched and the excess nodes on the
    larger side are exposed. Returned duals are feasible for the original
    matrix and tight on every reported match.
    """
    w = np.asarray(weights, dtype=float)
    if w.ndim != 2:
        raise ValueError("weight matrix must be 2-D")
    if not np.all(np.isfinite(w)):
        raise NonFiniteWeight("weights must be finite")
    n_left, n_right = w.shape
    n = max(n_left, n_right)
    if n == 0:
        return MatchingResult([], np.zeros(0), np.zeros(0), [], [])
    padded = np.zeros((n, n))
    padded[:n_left, :n_right] = w

    col_of_row, u, v = _hungarian(padded)
    matches = []
    exposed_left, exposed_right = [], []
    for i in range(n_left):
        j = int(col_of_row[i])
        if j < n_right:
            matches.append((i, j, float(w[i, j])))
        else:
            exposed_left.append(i)
    matched_cols = {j for _, j, _ in matches}
    exposed_right = [j for j in range(n_right) if j not in matched_cols]
    return MatchingResult(matches, u[:n_left], v[:n_right], exposed_left, exposed_right)


# ---------------------------------------------------------------------------
# co-occurrence sets
# ---------------------------------------------------------------------------

def match_primitive_sets(proposals: list[OrientedBox], neighbor_boxes: list[OrientedBox],
                         resolution: int = 64) -> list[tuple[int, int, float]]:
    """Max-IoU assignment between two canonical-frame box sets.

    Returns (proposal index, neighbor index, iou) for each matched pair;
    solved as minimum-weight matching on the negated IoU matrix.
    """
    if not proposals or not neighbor_boxes:
        return []
    iou = np.zeros((len(proposals), len(neighbor_boxes)))
    for i, a in enumerate(proposals):
        for j, b in enumerate(neighbor_boxes):
            if box_iou_upper_bound(a, b) <= 0.0:
                continue
            iou[i, j] = cuboid_iou(a, b, resolution)
    result = bipartite_match(-iou)
    return [(i, j, float(iou[i, j])) for i, j, _ in result.matches]


def build_cooccurrence(shape: ShapeContext, neighbor_primitive_sets: list[list[OrientedBox]],
                       resolution: int = 64) -> list[list[float]]:
    """Per-proposal IoU lists against matched primitives of similar shapes.

    Neighbor boxes must already be in their own shapes' canonical frames; the
    shape's proposals are mapped through its canonical transform here. Matches
    with zero IoU count as exposed and contribute nothing.
    """
    cooc: list[list[float]] = [[] for _ in shape.proposals]
    if not shape.proposals:
        return cooc
    own = [shape.canonical.apply_box(b) for b in shape.proposals]
    for neighbor in neighbor_primitive_sets:
        for i, _j, iou in match_primitive_sets(own, neighbor, resolution):
            if iou > 0.0:
                cooc[i].append(iou)
    return cooc


# ---------------------------------------------------------------------------
# external feature files ("shape_id v1 v2 ... vD" per line)
# ---------------------------------------------------------------------------

def load_feature_file(path) -> list[ShapeDescriptor]:
    descriptors = []
    with open(path) as f:
        for line in f:
            parts = line.split()
            if not parts:
                continue
            descriptors.append(ShapeDescriptor(np.array([float(x) for x in parts[1:]]), parts[0]))
    return descriptors
