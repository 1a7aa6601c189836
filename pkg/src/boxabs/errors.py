"""Exception types shared across the pipeline."""


class BoxAbsError(Exception):
    """Base class for all library errors."""


# --- mesh / voxel ingestion ---

class ParseError(BoxAbsError):
    """Malformed mesh file (bad header, counts, or indices)."""


class EmptyMesh(BoxAbsError):
    """Mesh has no usable faces."""


class DegenerateCloud(BoxAbsError):
    """Point cloud covariance has rank < 3."""


# --- rendering ---

class DegenerateBounds(BoxAbsError):
    """Bounding box has zero extent."""


# --- proposals ---

class DegeneratePair(BoxAbsError):
    """Region pair normals are parallel; no box frame exists."""


# --- potentials ---

class NoSourceRegions(BoxAbsError):
    """Box carries no source regions."""


class NoVisibleFaces(BoxAbsError):
    """No box face is visible from any view."""


class NoValidViews(BoxAbsError):
    """No view contributes enough non-coplanar points."""


class TooFewPoints(BoxAbsError):
    """Not enough points for a stable estimate."""


class DegenerateCovariance(BoxAbsError):
    """Principal axes undefined (covariance rank < 2)."""


# --- matching ---

class InsufficientDataset(BoxAbsError):
    """Dataset too small for the requested neighbor count."""


class NonFiniteWeight(BoxAbsError):
    """Matching weight matrix contains NaN or infinity."""


# --- solver ---

class EmptyContext(BoxAbsError):
    """Shape context has no proposals to optimize over."""


class Infeasible(BoxAbsError):
    """Linear program has no feasible point."""


class NumericalFailure(BoxAbsError):
    """LP solve did not converge (unbounded ray or iteration limit)."""


class TooLarge(BoxAbsError):
    """Instance exceeds the exhaustive solver's size limit."""


# --- codec / eval ---

class EmptyInput(BoxAbsError):
    """Operation requires at least one element."""


class ResolutionMismatch(BoxAbsError):
    """Voxel grids are not on the same lattice."""
