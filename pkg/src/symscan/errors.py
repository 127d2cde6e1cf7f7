"""Exception types shared across the toolkit."""


class SymscanError(Exception):
    """Base class for all symscan errors."""


class ParseError(SymscanError):
    """Malformed OBJ/PLY input."""


class EmptyGeometry(SymscanError):
    """No usable geometry (no faces after cleanup, empty cloud request)."""


class BadCount(SymscanError):
    """Sample/selection count out of range."""


class IslandCenter(SymscanError):
    """Patch center cannot reach enough points for the requested size."""


class DegeneratePatch(SymscanError):
    """Patch collapses to a single position (zero scale)."""


class EmptyCloud(SymscanError):
    """Operation requires a non-empty point cloud."""


class DegenerateInput(SymscanError):
    """Registration input is rank-deficient (all points collinear)."""


class ZeroVector(SymscanError):
    """Cosine similarity of a zero vector."""


class TooFewItems(SymscanError):
    """Not enough items for clustering."""


class NoFeasibleStep(SymscanError):
    """No growth step satisfies the distance threshold."""


class SizeMismatch(SymscanError):
    """Matrix size does not match the item count."""


class EmptySet(SymscanError):
    """Metric over an empty symmetry set."""


class EmptyDataset(SymscanError):
    """Benchmark dataset directory contains no shapes."""
