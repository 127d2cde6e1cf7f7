"""Geodesic patch extraction, normalization and training-pair export."""

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from . import containers
from .errors import BadCount, DegeneratePatch, IslandCenter
from .geometry import PointCloud, SampledShape, farthest_point_sampling, geodesic_nearest

PATCH_POINTS = containers.PATCH_POINTS


@dataclass(frozen=True)
class Patch:
    center: int
    point_indices: np.ndarray   # ordered by (geodesic distance, index)
    distances: np.ndarray       # matching geodesic distances from the center
    mode: str                   # "count" (delta_n) or "radius" (delta_d)
    size: float

    def __post_init__(self):
        self.point_indices.flags.writeable = False
        self.distances.flags.writeable = False

    def __len__(self):
        return len(self.point_indices)

    @property
    def radius(self):
        """Geodesic radius: largest center distance within the patch."""
        return float(self.distances[-1]) if len(self.distances) else 0.0


@dataclass(frozen=True)
class NormalizedPatch:
    points: np.ndarray  # (PATCH_POINTS, 3), mean at origin, max norm 1
    scale: float        # original max distance from the centroid (model units)
    centroid: np.ndarray

    def __post_init__(self):
        self.points.flags.writeable = False


@dataclass(frozen=True)
class PatchPair:
    patch_a: NormalizedPatch
    patch_b: NormalizedPatch
    offset: float  # geodesic displacement of the partner center


def _cloud_tree(shape: SampledShape) -> cKDTree:
    if "kdtree" not in shape._cache:
        shape._cache["kdtree"] = cKDTree(shape.cloud.points)
    return shape._cache["kdtree"]


def extract_patch(shape: SampledShape, center: int, count=None, radius=None,
                  metric="geodesic") -> Patch:
    """Extract the patch around a center.

    count selects the delta_n geodesically nearest points (ties toward lower
    index); radius selects every point within that geodesic distance. The
    "euclidean" metric is an ablation toggle that ignores surface connectivity.
    """
    n = len(shape.cloud)
    if not 0 <= center < n:
        raise BadCount(f"center {center} out of range")
    if (count is None) == (radius is None):
        raise ValueError("exactly one of count/radius required")
    if count is not None and count > n:
        raise BadCount(f"patch size {count} exceeds cloud size {n}")
    if metric == "euclidean":
        tree = _cloud_tree(shape)
        if count is not None:
            d, idx = tree.query(shape.cloud.points[center], k=count)
            d = np.atleast_1d(d); idx = np.atleast_1d(idx)
        else:
            idx = np.asarray(sorted(tree.query_ball_point(shape.cloud.points[center], radius)),
                             dtype=np.int64)
            d = np.linalg.norm(shape.cloud.points[idx] - shape.cloud.points[center], axis=1)
        order = np.lexsort((idx, d))
        mode, size = ("count", count) if count is not None else ("radius", radius)
        return Patch(center=center, point_indices=idx[order].astype(np.int64),
                     distances=d[order], mode=mode, size=float(size))
    idx, d = geodesic_nearest(shape.graph, center, count=count, radius=radius)
    if count is not None and len(idx) < count:
        raise IslandCenter(
            f"center {center} reaches only {len(idx)} of {count} requested points")
    mode, size = ("count", count) if count is not None else ("radius", radius)
    return Patch(center=center, point_indices=idx, distances=d, mode=mode, size=float(size))


def normalize_patch(patch: Patch, shape: SampledShape, seed: int) -> NormalizedPatch:
    """Resample to PATCH_POINTS points, center the mean and scale to the unit sphere.

    Patches larger than PATCH_POINTS are FPS-downsampled; smaller ones are
    repeat-padded by cycling indices. Scale and centroid are recorded so the
    normalization can be inverted.
    """
    pts = shape.cloud.points[patch.point_indices]
    m = len(pts)
    if m == 0:
        raise DegeneratePatch("empty patch")
    if m > PATCH_POINTS:
        sel = farthest_point_sampling(pts, PATCH_POINTS, seed)
        pts = pts[sel]
    elif m < PATCH_POINTS:
        pts = pts[np.arange(PATCH_POINTS) % m]
    centroid = pts.mean(axis=0)
    centered = pts - centroid
    scale = float(np.linalg.norm(centered, axis=1).max())
    if scale == 0.0:
        raise DegeneratePatch("all patch points coincide")
    return NormalizedPatch(points=centered / scale, scale=scale, centroid=centroid)


def sample_patch_set(shape: SampledShape, sizes, counts, seed: int):
    """Extract `counts[i]` patches of delta_n `sizes[i]` at FPS-ordered centers.

    Island centers are skipped; returns (patches, skipped_count).
    """
    if len(sizes) != len(counts):
        raise BadCount("sizes and counts must align")
    patches = []
    skipped = 0
    for size, count in zip(sizes, counts):
        for center in shape.centers[:count]:
            try:
                patches.append(extract_patch(shape, int(center), count=int(size)))
            except IslandCenter:
                skipped += 1
    return patches, skipped


def export_pairs(shape: SampledShape, base_patches, offset_fraction: float, seed: int):
    """Pair every base patch with one re-extracted at a jittered center.

    The partner center is displaced by a uniform random geodesic distance in
    [0, offset_fraction * patch radius]: the farthest patch point within that
    ball, ties toward the lowest index.
    """
    if not 0.0 <= offset_fraction <= 1.0:
        raise BadCount(f"offset fraction must be in [0, 1], got {offset_fraction}")
    pairs = []
    for i, base in enumerate(base_patches):
        rng = np.random.default_rng(np.random.SeedSequence((seed, i)))
        target = rng.uniform(0.0, offset_fraction * base.radius)
        # distances are sorted: the last entry <= target is the farthest
        # admissible center; equal distances resolve to the lowest index
        j = int(np.searchsorted(base.distances, target, side="right")) - 1
        new_center = int(base.point_indices[j])
        offset = float(base.distances[j])
        try:
            if base.mode == "count":
                partner = extract_patch(shape, new_center, count=int(base.size))
            else:
                partner = extract_patch(shape, new_center, radius=base.size)
        except IslandCenter:
            continue
        pa = normalize_patch(base, shape, seed=int(rng.integers(2 ** 63)))
        pb = normalize_patch(partner, shape, seed=int(rng.integers(2 ** 63)))
        pairs.append(PatchPair(patch_a=pa, patch_b=pb, offset=offset))
    return pairs


def save_patch_set(path, patches):
    containers.write_symp(
        path, [(p.center, p.mode, p.size, p.point_indices) for p in patches])


def load_patch_set(path, shape: SampledShape):
    """Read a SYMP container against the shape it was extracted from.

    Geodesic center distances are not stored; they are recovered by re-running
    the extraction, which must reproduce the stored membership.
    """
    out = []
    for center, mode, size, indices in containers.read_symp(path):
        if mode == "count":
            patch = extract_patch(shape, center, count=int(size))
        else:
            patch = extract_patch(shape, center, radius=size)
        if len(patch) != len(indices) or set(patch.point_indices) != set(indices):
            raise ValueError(
                f"{path}: stored patch at center {center} does not match this shape")
        out.append(patch)
    return out


def save_normalized_batch(path, normalized):
    containers.write_symb(path, np.stack([p.points for p in normalized]))
