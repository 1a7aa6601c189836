"""boxabs: unsupervised cuboid abstraction of 3D shapes.

Box proposals are generated from multi-view depth renderings, scored by
geometric and volumetric costs, and an optimal subset is selected by exact
energy minimization (branch and bound over an LP relaxation). Co-occurrence
across similar shapes is enforced through bipartite matching of primitives.
"""

__version__ = "0.1.0"

from .config import PipelineConfig
from .geometry import OrientedBox, SimilarityTransform
from .shape_io import PointCloud, TriangleMesh, VoxelGrid

__all__ = [
    "__version__",
    "PipelineConfig",
    "OrientedBox",
    "SimilarityTransform",
    "PointCloud",
    "TriangleMesh",
    "VoxelGrid",
]
