"""End-to-end orchestration: contexts, calibration, selection, co-occurrence.

``discover_dataset`` runs every shape through proposal generation and cost
computation, calibrates the unary normalizers on the pooled costs, solves
each selection problem, and (when the co-occurrence weight is active) runs
further rounds in which each shape's proposals are matched against the
primitives its neighbors selected in the previous round.
"""
from __future__ import annotations

import json
import platform
import sys
import time
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .branch_bound import solve_branch_and_bound
from .config import PipelineConfig
from .errors import EmptyContext, InsufficientDataset
from .geometry import OrientedBox
from .matching import build_cooccurrence, knn_shapes, shape_descriptor
from .milp import MilpProblem, Solution, build_milp, selected_proposals
from .potentials import CrfWeights, ShapeContext, build_shape_context, fuse_unary
from .shape_io import TriangleMesh


@dataclass
class ShapeResult:
    shape_id: str
    context: ShapeContext
    problem: MilpProblem | None
    solution: Solution | None
    selected_indices: list[int]
    runtime_s: float = 0.0

    @property
    def selected(self) -> list[OrientedBox]:
        return [self.context.proposals[i] for i in self.selected_indices]

    @property
    def status(self) -> str:
        if self.solution is None:
            return "no_proposals"
        return self.solution.status


def weights_from_config(config: PipelineConfig) -> CrfWeights:
    return CrfWeights.from_config(config.weights)


def calibrate_normalizers(contexts: list[ShapeContext], percentile: float = 95.0,
                          clamp: tuple[float, float] = (1e-3, 1e3)) -> np.ndarray:
    """Normalizers making the six unary costs commensurate.

    Each entry is the reciprocal of the given percentile of that cost over
    every proposal of every context, clamped to ``clamp``.
    """
    rows = [cv.as_array() for ctx in contexts for cv in ctx.unary]
    if not rows:
        return np.ones(6)
    data = np.vstack(rows)
    scale = np.percentile(data, percentile, axis=0)
    with np.errstate(divide="ignore"):
        w = np.where(scale > 0, 1.0 / np.maximum(scale, 1e-300), clamp[1])
    return np.clip(w, clamp[0], clamp[1])


def solve_context(ctx: ShapeContext, weights: CrfWeights, config: PipelineConfig) -> ShapeResult:
    start = time.monotonic()
    try:
        problem = build_milp(ctx, weights)
    except EmptyContext:
        return ShapeResult(ctx.shape_id, ctx, None, None, [], time.monotonic() - start)
    solution = solve_branch_and_bound(problem, config.solver.time_limit_s,
                                      config.solver.integrality_tol,
                                      config.solver.fathom_tol)
    chosen = selected_proposals(problem, solution) if solution.status != "infeasible" else []
    return ShapeResult(ctx.shape_id, ctx, problem, solution, chosen,
                       time.monotonic() - start)


def discover_shape(mesh: TriangleMesh, config: PipelineConfig | None = None,
                   shape_id: str = "shape", weights: CrfWeights | None = None,
                   ) -> ShapeResult:
    """Single-shape pipeline; calibrates normalizers on the shape itself."""
    config = config or PipelineConfig()
    ctx = build_shape_context(mesh, config, shape_id)
    if weights is None:
        weights = weights_from_config(config)
        if config.eval.calibrate:
            weights = weights.replaced(
                w=calibrate_normalizers([ctx], config.eval.calibration_percentile))
    return solve_context(ctx, weights, config)


def discover_dataset(meshes: list[TriangleMesh], config: PipelineConfig | None = None,
                     ids: list[str] | None = None) -> list[ShapeResult]:
    """Dataset pipeline with pooled calibration and co-occurrence rounds."""
    config = config or PipelineConfig()
    ids = ids or [f"shape_{i:04d}" for i in range(len(meshes))]
    contexts = [build_shape_context(mesh, config, sid) for mesh, sid in zip(meshes, ids)]

    weights = weights_from_config(config)
    if config.eval.calibrate:
        weights = weights.replaced(
            w=calibrate_normalizers(contexts, config.eval.calibration_percentile))

    # round 0: no co-occurrence term
    round0 = weights.replaced(mu_cooccurrence=0.0)
    results = [solve_context(ctx, round0, config) for ctx in contexts]

    total_rounds = config.matching.rounds
    if weights.mu_cooccurrence == 0.0 or len(contexts) < 2:
        total_rounds = 1
    k = min(config.matching.k_neighbors, len(contexts) - 1)

    for _ in range(1, total_rounds):
        descriptors = [shape_descriptor(ctx.grid, ctx.shape_id, config.matching.descriptor_cells)
                       for ctx in contexts]
        by_id = {r.shape_id: r for r in results}
        canonical_selected = {
            ctx.shape_id: [ctx.canonical.apply_box(b) for b in by_id[ctx.shape_id].selected]
            for ctx in contexts
        }
        new_results = []
        for ctx, desc in zip(contexts, descriptors):
            try:
                neighbor_ids = knn_shapes(desc, descriptors, k) if k >= 1 else []
            except InsufficientDataset:
                neighbor_ids = []
            neighbor_sets = [canonical_selected[nid] for nid in neighbor_ids]
            ctx.cooc = build_cooccurrence(ctx, neighbor_sets, config.costs.iou_resolution)
            new_results.append(solve_context(ctx, weights, config))
        results = new_results
    return results


def select_top_unary(ctx: ShapeContext, weights: CrfWeights, count: int = 4) -> list[int]:
    """Baseline that skips selection entirely: lowest fused unary cost wins."""
    fused = np.array([fuse_unary(cv, weights) for cv in ctx.unary])
    order = np.argsort(fused, kind="stable")
    return [int(i) for i in order[:min(count, len(fused))]]


def write_manifest(path, config: PipelineConfig, results: list[ShapeResult],
                   extra: dict | None = None) -> None:
    """Machine-readable record of a run: config, versions, per-shape status."""
    import scipy

    manifest = {
        "command": sys.argv,
        "versions": {
            "boxabs": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
        "config": config.to_dict(),
        "shapes": [{
            "id": r.shape_id,
            "status": r.status,
            "proposals": len(r.context.proposals),
            "selected": len(r.selected_indices),
            "runtime_s": round(r.runtime_s, 3),
        } for r in results],
    }
    if extra:
        manifest.update(extra)
    with open(path, "w") as f:
        json.dump(manifest, f, indent=2)
