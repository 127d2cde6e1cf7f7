"""Symmetry hypothesis extraction.

Patch features (latent vectors or a precomputed ICP matrix) are clustered,
each cluster is split into contiguous 3D regions via geodesic connected
components of the patch centers, regions are refined and made disjoint, and
hypotheses are filtered by their worst pairwise ICP distance.
"""

import json
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.spatial import cKDTree

from . import containers, meshio
from .clustering import cosine_distances, hdbscan_labels
from .errors import TooFewItems, ZeroVector
from .geometry import SampledShape, geodesic_nearest
from .icp import DistanceMatrix, IcpConfig, icp_distance, pair_seed


@dataclass(frozen=True)
class EmbeddingSet:
    vectors: np.ndarray    # (n, dim) unit rows
    patch_ids: np.ndarray  # (n,) aligned ids

    def __post_init__(self):
        norms = np.linalg.norm(self.vectors, axis=1)
        if np.abs(norms - 1.0).max() > 1e-5:
            raise ValueError("embedding vectors must be unit-normalized")
        self.vectors.flags.writeable = False

    @property
    def n(self):
        return len(self.vectors)


@dataclass(frozen=True)
class Region:
    point_indices: np.ndarray  # sorted, into the shape cloud
    patch_ids: tuple           # member patches (indices into the feature list)
    core_indices: np.ndarray = None  # refinement generators: the patch-point union

    def __post_init__(self):
        if len(self.point_indices) == 0:
            raise ValueError("region must be non-empty")
        self.point_indices.flags.writeable = False
        if self.core_indices is None:
            object.__setattr__(self, "core_indices", self.point_indices)

    def __len__(self):
        return len(self.point_indices)


@dataclass(frozen=True)
class Hypothesis:
    regions: tuple
    cluster_id: int
    max_pairwise: float = float("nan")  # worst pairwise ICP distance


@dataclass(frozen=True)
class SymmetrySet:
    hypotheses: tuple
    fingerprint: int
    shape_id: str = ""

    def __len__(self):
        return len(self.hypotheses)


@dataclass(frozen=True)
class DetectConfig:
    min_patch_count: int = 1024
    min_cluster_size: int = 8
    min_samples: int = 4
    alpha: float = 2.0           # component adjacency factor on the center spacing
    epsilon: float = None        # refinement radius; None = 2x median point spacing
    delta_sim: float = 0.005
    max_regions: int = 30
    seed: int = 0

    def __post_init__(self):
        if self.delta_sim <= 0:
            raise ValueError("delta_sim must be positive")
        if self.epsilon is not None and self.epsilon <= 0:
            raise ValueError("epsilon must be positive")

    def to_dict(self):
        return {"min_patch_count": self.min_patch_count,
                "min_cluster_size": self.min_cluster_size,
                "min_samples": self.min_samples, "alpha": self.alpha,
                "epsilon": self.epsilon, "delta_sim": self.delta_sim,
                "max_regions": self.max_regions, "seed": self.seed}

    @property
    def fingerprint(self):
        return containers.config_fingerprint(self.to_dict())


def cosine_similarity(z_i, z_j) -> float:
    """Dot product over the norm product."""
    z_i = np.asarray(z_i, dtype=np.float64)
    z_j = np.asarray(z_j, dtype=np.float64)
    ni = np.linalg.norm(z_i)
    nj = np.linalg.norm(z_j)
    if ni == 0.0 or nj == 0.0:
        raise ZeroVector("cosine similarity of a zero vector")
    return float(np.dot(z_i, z_j) / (ni * nj))


def cluster_features(source, cfg: DetectConfig) -> np.ndarray:
    """HDBSCAN labels over latent cosine distances or a precomputed matrix."""
    if isinstance(source, EmbeddingSet):
        dist = cosine_distances(source.vectors)
    elif isinstance(source, DistanceMatrix):
        dist = source.values
    else:
        dist = np.asarray(source, dtype=np.float64)
    if dist.shape[0] < cfg.min_cluster_size:
        raise TooFewItems(
            f"{dist.shape[0]} items < min_cluster_size {cfg.min_cluster_size}")
    return hdbscan_labels(dist, cfg.min_cluster_size, cfg.min_samples)


def split_components(members, shape: SampledShape, alpha: float):
    """Partition clustered patches into geodesically contiguous regions.

    Two patches connect when the geodesic distance between their centers is
    at most alpha times the shape's mean center spacing. Each component's
    patch points merge into one region; contested points are resolved later.
    members is a list of (patch_id, Patch).
    """
    if not members:
        return []
    limit = alpha * shape.center_spacing
    ids = [pid for pid, _ in members]
    patch_by_center = {int(p.center): k for k, (_, p) in enumerate(members)}
    parent = list(range(len(members)))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for k, (_, p) in enumerate(members):
        ball_idx, _ = geodesic_nearest(shape.graph, int(p.center), radius=limit)
        for b in ball_idx:
            other = patch_by_center.get(int(b))
            if other is not None and other != k:
                ra, rb = find(k), find(other)
                if ra != rb:
                    parent[max(ra, rb)] = min(ra, rb)

    groups = {}
    for k in range(len(members)):
        groups.setdefault(find(k), []).append(k)
    regions = []
    for root in sorted(groups):
        ks = groups[root]
        pts = np.unique(np.concatenate([members[k][1].point_indices for k in ks]))
        regions.append(Region(point_indices=pts,
                              patch_ids=tuple(ids[k] for k in ks)))
    return regions


def _region_centers(region: Region, members_by_id):
    return np.array([members_by_id[pid].center for pid in region.patch_ids], dtype=np.int64)


def resolve_overlaps(regions, shape: SampledShape, members_by_id):
    """Make regions pairwise disjoint.

    A point claimed by several regions goes to the one with the nearest
    member patch center (Euclidean); exact ties resolve to the lower region
    index. Regions emptied by the resolution are dropped.
    """
    counts = {}
    for r in regions:
        for p in r.point_indices:
            counts[int(p)] = counts.get(int(p), 0) + 1
    contested = np.array(sorted(p for p, c in counts.items() if c > 1), dtype=np.int64)
    if len(contested) == 0:
        return list(regions)
    pts = shape.cloud.points
    pos = {int(p): k for k, p in enumerate(contested)}
    claim = np.full(len(contested), -1, dtype=np.int64)
    best_d = np.full(len(contested), np.inf)
    for rid, r in enumerate(regions):
        mask = np.isin(contested, r.point_indices)
        if not mask.any():
            continue
        centers = pts[_region_centers(r, members_by_id)]
        cand = pts[contested[mask]]
        d = np.min(np.linalg.norm(cand[:, None, :] - centers[None, :, :], axis=2), axis=1)
        sel = np.where(mask)[0]
        better = d < best_d[sel]  # strict: ties stay with the earlier region
        best_d[sel[better]] = d[better]
        claim[sel[better]] = rid
    resolved = []
    for rid, r in enumerate(regions):
        keep = np.array(
            [p for p in r.point_indices
             if int(p) not in pos or claim[pos[int(p)]] == rid],
            dtype=np.int64)
        if len(keep):
            resolved.append(replace(r, point_indices=keep))
    return resolved


def refine_region(region: Region, shape: SampledShape, epsilon: float) -> Region:
    """Add every cloud point within epsilon of the region's patch points.

    The generators are the region's original patch-point union, so the
    operation is idempotent at a fixed epsilon.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    if "kdtree" not in shape._cache:
        shape._cache["kdtree"] = cKDTree(shape.cloud.points)
    tree = shape._cache["kdtree"]
    hits = tree.query_ball_point(shape.cloud.points[region.core_indices], epsilon)
    extra = {j for lst in hits for j in lst}
    merged = np.unique(np.concatenate(
        [region.point_indices, np.fromiter(extra, dtype=np.int64, count=len(extra))]))
    return replace(region, point_indices=merged)


def filter_hypotheses(candidates, shape: SampledShape, cfg: DetectConfig,
                      icp_cfg: IcpConfig = None) -> SymmetrySet:
    """Keep hypotheses with 2..max_regions regions whose worst pairwise ICP
    distance stays within delta_sim."""
    if icp_cfg is None:
        icp_cfg = IcpConfig(seed=cfg.seed)
    kept = []
    for h in candidates:
        if len(h.regions) < 2 or len(h.regions) > cfg.max_regions:
            continue
        worst = 0.0
        ok = True
        clouds = [shape.cloud.points[r.point_indices] for r in h.regions]
        # same per-pair seeds as region growing, so a growth profile's step 0
        # reproduces the stored distance exactly
        for i in range(len(clouds)):
            for j in range(i + 1, len(clouds)):
                seed = pair_seed(icp_cfg.seed, i, j)
                d = icp_distance(clouds[i], clouds[j], replace(icp_cfg, seed=seed))
                worst = max(worst, d)
                if worst > cfg.delta_sim:
                    ok = False
                    break
            if not ok:
                break
        if ok:
            kept.append(replace(h, max_pairwise=worst))
    return SymmetrySet(hypotheses=tuple(kept), fingerprint=cfg.fingerprint)


def detect_symmetries(shape: SampledShape, patches, features, cfg: DetectConfig,
                      icp_cfg: IcpConfig = None) -> SymmetrySet:
    """Full pipeline: cluster, split into components, refine, filter."""
    n = features.n if hasattr(features, "n") else len(features)
    if n != len(patches):
        raise ValueError(f"{n} features for {len(patches)} patches")
    if n < cfg.min_patch_count:
        raise TooFewItems(f"{n} patches < configured minimum {cfg.min_patch_count}")
    labels = cluster_features(features, cfg)
    eps = cfg.epsilon if cfg.epsilon is not None else 2.0 * shape.point_spacing
    members_by_id = dict(enumerate(patches))
    candidates = []
    for lab in sorted(set(labels[labels >= 0])):
        members = [(i, patches[i]) for i in np.where(labels == lab)[0]]
        regions = split_components(members, shape, cfg.alpha)
        regions = resolve_overlaps(regions, shape, members_by_id)
        regions = [refine_region(r, shape, eps) for r in regions]
        regions = resolve_overlaps(regions, shape, members_by_id)
        if regions:
            candidates.append(Hypothesis(regions=tuple(regions), cluster_id=int(lab)))
    return filter_hypotheses(candidates, shape, cfg, icp_cfg)


def pspsb_detect(parts, vectors, delta_sym: float) -> SymmetrySet:
    """Part-level symmetry: parts whose embeddings sit within delta_sym of each
    other (1 - cosine similarity) join one group; groups of >= 2 parts become
    hypotheses with one region per part, indexed into the merged part cloud."""
    if len(parts) < 2:
        raise TooFewItems("need at least 2 parts")
    v = vectors.vectors if isinstance(vectors, EmbeddingSet) else np.asarray(vectors)
    if len(v) != len(parts):
        raise ValueError(f"{len(v)} embeddings for {len(parts)} parts")
    dis = cosine_distances(v / np.linalg.norm(v, axis=1, keepdims=True))
    adj = dis <= delta_sym
    parent = list(range(len(parts)))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for i in range(len(parts)):
        for j in range(i + 1, len(parts)):
            if adj[i, j]:
                ri, rj = find(i), find(j)
                if ri != rj:
                    parent[max(ri, rj)] = min(ri, rj)
    offsets = np.cumsum([0] + [len(p.points if hasattr(p, "points") else p) for p in parts])
    groups = {}
    for i in range(len(parts)):
        groups.setdefault(find(i), []).append(i)
    hyps = []
    for k, root in enumerate(sorted(groups)):
        ids = groups[root]
        if len(ids) < 2:
            continue
        regions = tuple(
            Region(point_indices=np.arange(offsets[i], offsets[i + 1]), patch_ids=(i,))
            for i in ids)
        hyps.append(Hypothesis(regions=regions, cluster_id=k))
    return SymmetrySet(hypotheses=tuple(hyps),
                       fingerprint=containers.config_fingerprint({"delta_sym": delta_sym}))


def symmetry_set_to_json(sset: SymmetrySet) -> str:
    doc = {
        "shape": sset.shape_id,
        "fingerprint": sset.fingerprint,
        "hypotheses": [
            {
                "cluster": h.cluster_id,
                "max_icp_distance": h.max_pairwise,
                "regions": [
                    {"patches": list(r.patch_ids),
                     "points": [int(p) for p in r.point_indices]}
                    for r in h.regions
                ],
            }
            for h in sset.hypotheses
        ],
    }
    return json.dumps(doc, sort_keys=True, indent=1)


def symmetry_set_from_json(text: str) -> SymmetrySet:
    doc = json.loads(text)
    hyps = []
    for h in doc["hypotheses"]:
        regions = tuple(
            Region(point_indices=np.asarray(r["points"], dtype=np.int64),
                   patch_ids=tuple(r["patches"]))
            for r in h["regions"])
        hyps.append(Hypothesis(regions=regions, cluster_id=h["cluster"],
                               max_pairwise=h["max_icp_distance"]))
    return SymmetrySet(hypotheses=tuple(hyps), fingerprint=doc["fingerprint"],
                       shape_id=doc.get("shape", ""))


_PALETTE = np.array([
    [230, 60, 60], [60, 140, 230], [70, 190, 90], [240, 180, 40],
    [170, 90, 220], [70, 200, 200], [240, 120, 40], [150, 150, 60],
    [220, 90, 160], [100, 100, 240], [90, 160, 60], [180, 120, 90],
], dtype=np.uint8)


def region_colors(k):
    return _PALETTE[k % len(_PALETTE)]


def export_hypotheses_ply(shape: SampledShape, sset: SymmetrySet, out_dir, prefix="hypothesis"):
    """One colored PLY per hypothesis: region points colored, the rest gray."""
    import os
    paths = []
    for hi, h in enumerate(sset.hypotheses):
        colors = np.full((len(shape.cloud), 3), 190, dtype=np.uint8)
        for ri, r in enumerate(h.regions):
            colors[r.point_indices] = region_colors(ri)
        path = os.path.join(out_dir, f"{prefix}_{hi:03d}.ply")
        meshio.save_ply_points(path, shape.cloud.points, colors)
        paths.append(path)
    return paths
