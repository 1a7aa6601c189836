"""Dataclass configuration for every stage of the pipeline.

All knobs live here so experiment scripts and the CLI can override any of
them; ``PipelineConfig.from_dict`` accepts the nested dict form used by JSON
config files.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields
from typing import Any


@dataclass
class RenderConfig:
    width: int = 128
    height: int = 128
    fov_deg: float = 40.0          # vertical field of view
    distance_factor: float = 2.5   # camera distance as a multiple of the bounds diagonal
    elevations_deg: tuple[float, float] = (0.0, 15.0)  # alternated over the 6 azimuths


@dataclass
class SegmentationConfig:
    angle_threshold_deg: float = 20.0
    spacing_factor: float = 3.0        # growth radius as a multiple of median point spacing
    min_region_size: int = 30
    proximity_factor: float = 5.0      # pair gate as a multiple of median point spacing
    pair_angle_range_deg: tuple[float, float] = (45.0, 135.0)


@dataclass
class ProposalConfig:
    dedup_iou: float = 0.9
    dedup_resolution: int = 32         # coarser lattice is fine for a 0.9 gate
    min_extent_frac: float = 0.01      # extent floor as a fraction of the shape diagonal


@dataclass
class CostConfig:
    grid_resolution: int = 50
    iou_resolution: int = 64           # lattice for box/box IoU (matching, dedup audits)
    overlap_resolution: int = 32       # coarser lattice for the O(N^2) overlap map
    entropy_bins: int = 26
    compactness_cells: int = 16
    compactness_band_frac: float = 0.05  # in-band distance as a fraction of the box diagonal
    support_enlarge: float = 1.05
    support_cap: float = 10.0
    symmetry_min_points: int = 10
    surface_samples: int = 2000        # for canonical alignment of the shape
    incidence_frac: float = 0.5        # region counts as inside a box above this point fraction


@dataclass
class WeightConfig:
    """CRF weights; normalizers ``w`` may be recalibrated on a dataset."""

    mu_unary: tuple[float, ...] = (1.0, 0.5, 1.0, -0.5, 0.5, 0.5)
    w: tuple[float, ...] = (1.0, 1.0, 1.0, 1.0, 1.0, 1.0)
    mu_pairwise: float = 2.0
    mu_parsimony: float = 0.05
    mu_coverage: float = -3.0
    mu_cooccurrence: float = -0.5


@dataclass
class SolverConfig:
    time_limit_s: float = 30.0
    integrality_tol: float = 1e-7
    fathom_tol: float = 1e-9


@dataclass
class MatchingConfig:
    k_neighbors: int = 5
    rounds: int = 2                    # round 0 has no co-occurrence term
    descriptor_cells: int = 8


@dataclass
class EvalConfig:
    resolution: int = 50
    truth_fill: str = "hollow"         # "hollow" (surface cells) or "solid" (interior test)
    calibrate: bool = True
    calibration_percentile: float = 95.0


@dataclass
class PipelineConfig:
    seed: int = 0
    render: RenderConfig = field(default_factory=RenderConfig)
    segmentation: SegmentationConfig = field(default_factory=SegmentationConfig)
    proposals: ProposalConfig = field(default_factory=ProposalConfig)
    costs: CostConfig = field(default_factory=CostConfig)
    weights: WeightConfig = field(default_factory=WeightConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    matching: MatchingConfig = field(default_factory=MatchingConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    @staticmethod
    def from_dict(data: dict[str, Any]) -> "PipelineConfig":
        cfg = PipelineConfig()
        for f in fields(PipelineConfig):
            if f.name not in data:
                continue
            value = data[f.name]
            current = getattr(cfg, f.name)
            if dataclasses.is_dataclass(current):
                for sub in fields(current):
                    if sub.name in value:
                        v = value[sub.name]
                        if isinstance(getattr(current, sub.name), tuple):
                            v = tuple(v)
                        setattr(current, sub.name, v)
            else:
                setattr(cfg, f.name, value)
        return cfg
