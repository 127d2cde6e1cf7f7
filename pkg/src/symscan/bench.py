"""Ground-truth construction and the PSPSB/PSB evaluation metrics.

A dataset is a directory of shape directories, each holding shape.ply (mesh or
point cloud), parts/part_*.ply point clouds, a parts ICP matrix (SYMD) and
annotation.json carrying the per-shape symmetry threshold that turns the
matrix into ground-truth clusters.
"""

import json
import math
import os
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.spatial import cKDTree

from . import containers, meshio
from .detect import DetectConfig, Hypothesis, Region, SymmetrySet, detect_symmetries
from .errors import EmptyDataset, EmptySet, SizeMismatch
from .geometry import PointCloud, farthest_point_sampling, load_shape, sample_shape
from .icp import DistanceMatrix, IcpConfig, distance_matrix, icp_distance, pair_seed
from .patches import normalize_patch, sample_patch_set


@dataclass(frozen=True)
class AnnotationRecord:
    shape_id: str
    parts: tuple                 # PointCloud per part
    matrix: DistanceMatrix
    delta_sym: float
    ground_truth: SymmetrySet


@dataclass(frozen=True)
class BenchmarkReport:
    mode: str
    per_shape: tuple   # dicts: id, icp, iou, cov, n_hypotheses, skipped, reason
    macro: dict        # means over shapes with at least one hypothesis
    micro: dict        # pooled over clusters/predictions across those shapes
    n_models: int      # shapes with >= 1 predicted symmetry cluster
    n_shapes: int

    def to_json(self):
        return json.dumps({
            "mode": self.mode, "n_models": self.n_models, "n_shapes": self.n_shapes,
            "macro": self.macro, "micro": self.micro,
            "per_shape": list(self.per_shape),
        }, sort_keys=True, indent=1)

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write("id,icp,iou,cov,n_hypotheses,skipped,reason\n")
            for row in self.per_shape:
                fh.write("{id},{icp},{iou},{cov},{n_hypotheses},{skipped},{reason}\n"
                         .format(**row))


def merge_parts(parts):
    """Concatenate part clouds; returns (points, offsets) with len(offsets)=n+1."""
    arrays = [p.points if isinstance(p, PointCloud) else np.asarray(p) for p in parts]
    offsets = np.cumsum([0] + [len(a) for a in arrays])
    return np.vstack(arrays), offsets


def ground_truth_from_matrix(parts, matrix: DistanceMatrix, delta_sym: float) -> SymmetrySet:
    """Connected components of the thresholded part distance matrix.

    Parts i, j relate when matrix[i, j] <= delta_sym; components of at least
    two parts become hypotheses with one region per part, indices in the
    merged part cloud.
    """
    if matrix.kind != "icp":
        raise SizeMismatch(f"ground truth needs an icp matrix, got {matrix.kind}")
    n = len(parts)
    if matrix.n != n:
        raise SizeMismatch(f"matrix is {matrix.n}x{matrix.n} for {n} parts")
    parent = list(range(n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for i in range(n):
        for j in range(i + 1, n):
            if matrix.values[i, j] <= delta_sym:
                ri, rj = find(i), find(j)
                if ri != rj:
                    parent[max(ri, rj)] = min(ri, rj)
    _, offsets = merge_parts(parts)
    groups = {}
    for i in range(n):
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
    return SymmetrySet(
        hypotheses=tuple(hyps),
        fingerprint=containers.config_fingerprint({"delta_sym": delta_sym, "gt": True}))


def cluster_coords(sset: SymmetrySet, points):
    """Concatenated 3D coordinates of each symmetry cluster."""
    return [np.vstack([points[r.point_indices] for r in h.regions])
            for h in sset.hypotheses]


def metric_icp(sset: SymmetrySet, points, icp_cfg: IcpConfig = IcpConfig()) -> float:
    """Mean over clusters of the worst pairwise ICP distance inside each cluster."""
    if len(sset) == 0:
        raise EmptySet("metric over empty symmetry set")
    worst = []
    for h in sset.hypotheses:
        clouds = [points[r.point_indices] for r in h.regions]
        w = 0.0
        for i in range(len(clouds)):
            for j in range(i + 1, len(clouds)):
                seed = pair_seed(icp_cfg.seed, (h.cluster_id << 16) + i, j)
                w = max(w, icp_distance(clouds[i], clouds[j], replace(icp_cfg, seed=seed)))
        worst.append(w)
    return float(np.mean(worst))


def _inlier_masks(clusters, eval_points, epsilon):
    masks = []
    for coords in clusters:
        d, _ = cKDTree(coords).query(eval_points)
        masks.append(d <= epsilon)
    return masks


def _iou_terms(sp_clusters, sgt_clusters, eval_points, epsilon):
    """Per-prediction (best IoU, matched GT index)."""
    pred = _inlier_masks(sp_clusters, eval_points, epsilon)
    gt = _inlier_masks(sgt_clusters, eval_points, epsilon)
    terms = []
    for pm in pred:
        best, arg = 0.0, -1
        for gi, gm in enumerate(gt):
            union = np.logical_or(pm, gm).sum()
            inter = np.logical_and(pm, gm).sum()
            iou = inter / union if union else 0.0
            if iou > best:
                best, arg = float(iou), gi
        terms.append((best, arg))
    return terms


def default_epsilon(eval_points):
    """Inlier radius: twice the median nearest-neighbor spacing."""
    d, _ = cKDTree(eval_points).query(eval_points, k=2)
    return 2.0 * float(np.median(d[:, 1]))


def metric_iou(sp: SymmetrySet, sgt: SymmetrySet, points_pred, points_gt,
               eval_points, epsilon=None) -> float:
    """Mean over predicted clusters of their best IoU against ground truth,
    measured on inlier masks of the evaluation sample."""
    if len(sp) == 0 or len(sgt) == 0:
        raise EmptySet("IoU needs non-empty prediction and ground truth")
    if epsilon is None:
        epsilon = default_epsilon(eval_points)
    terms = _iou_terms(cluster_coords(sp, points_pred),
                       cluster_coords(sgt, points_gt), eval_points, epsilon)
    return float(np.mean([t[0] for t in terms]))


def metric_cov(sp: SymmetrySet, sgt: SymmetrySet, points_pred, points_gt,
               eval_points, epsilon=None) -> float:
    """Fraction of ground-truth clusters matched by some prediction.

    Each prediction matches the ground-truth cluster maximizing IoU with it;
    distinct matched clusters are counted once.
    """
    if len(sp) == 0 or len(sgt) == 0:
        raise EmptySet("coverage needs non-empty prediction and ground truth")
    if epsilon is None:
        epsilon = default_epsilon(eval_points)
    terms = _iou_terms(cluster_coords(sp, points_pred),
                       cluster_coords(sgt, points_gt), eval_points, epsilon)
    matched = {arg for best, arg in terms if arg >= 0 and best > 0.0}
    return len(matched) / len(sgt)


@dataclass(frozen=True)
class BenchConfig:
    mode: str = "psb"            # "psb" | "pspsb"
    n_points: int = 2 ** 16      # PSB shape sample size
    n_centers: int = 2 ** 11     # FPS centers == patch count in PSB mode
    patch_size: int = 512        # delta_n for PSB patches
    eval_size: int = None        # IoU sample; 2^12 (pspsb) / 2^16 (psb) if None
    max_parts: int = 30          # PSPSB shapes with more parts are skipped
    pred_delta_sym: float = 0.005  # PSPSB matrix-threshold prediction
    parallelism: int = 1
    seed: int = 0
    detect: DetectConfig = field(default_factory=DetectConfig)
    icp: IcpConfig = field(default_factory=IcpConfig)

    @property
    def resolved_eval_size(self):
        if self.eval_size is not None:
            return self.eval_size
        return 2 ** 12 if self.mode == "pspsb" else 2 ** 16


def load_annotation(shape_dir):
    """Parts, matrix and ground truth for one annotated shape directory."""
    ann_path = os.path.join(shape_dir, "annotation.json")
    with open(ann_path) as fh:
        ann = json.load(fh)
    parts_dir = os.path.join(shape_dir, "parts")
    part_files = sorted(f for f in os.listdir(parts_dir) if f.endswith(".ply"))
    parts = tuple(PointCloud(points=np.ascontiguousarray(meshio.load_ply(
        os.path.join(parts_dir, f))[0])) for f in part_files)
    values, kind, fp = containers.read_symd(os.path.join(shape_dir, ann["matrix"]))
    matrix = DistanceMatrix(values=values, kind=kind, fingerprint=fp)
    gt = ground_truth_from_matrix(parts, matrix, ann["delta_sym"])
    return AnnotationRecord(shape_id=os.path.basename(shape_dir), parts=parts,
                            matrix=matrix, delta_sym=ann["delta_sym"], ground_truth=gt)


def _load_shape_cloud(shape_dir, cfg):
    """shape.ply with faces is sampled; a bare point cloud is used as-is."""
    path = os.path.join(shape_dir, "shape.ply")
    verts, faces = meshio.load_ply(path)
    if len(faces):
        mesh = load_shape(path, fmt="ply")
        return sample_shape(mesh, n_points=cfg.n_points, n_centers=cfg.n_centers,
                            seed=cfg.seed)
    cloud = PointCloud(points=np.ascontiguousarray(verts))
    return sample_shape(cloud, n_centers=cfg.n_centers, seed=cfg.seed)


def _detect_psb(shape_dir, cfg: BenchConfig):
    shape = _load_shape_cloud(shape_dir, cfg)
    patches, _ = sample_patch_set(shape, [cfg.patch_size], [cfg.n_centers], cfg.seed)
    normalized = [normalize_patch(p, shape, seed=pair_seed(cfg.seed, 0xA, i))
                  for i, p in enumerate(patches)]
    matrix = distance_matrix([p.points for p in normalized],
                             replace(cfg.icp, seed=cfg.seed),
                             parallelism=cfg.parallelism)
    sset = detect_symmetries(shape, patches, matrix, cfg.detect, cfg.icp)
    return shape, sset


def _detect_pspsb(record: AnnotationRecord, shape_dir, cfg: BenchConfig):
    """Part-level prediction: SYME embeddings when present, else the part
    matrix thresholded at pred_delta_sym."""
    from .detect import pspsb_detect

    syme = os.path.join(shape_dir, "embeddings.syme")
    if os.path.exists(syme):
        vectors, _ = containers.read_syme(syme)
        return pspsb_detect(record.parts, vectors, cfg.pred_delta_sym)
    return ground_truth_from_matrix(record.parts, record.matrix, cfg.pred_delta_sym)


def run_benchmark(dataset_dir, cfg: BenchConfig) -> BenchmarkReport:
    """Evaluate every shape directory; per-shape failures are recorded, never raised."""
    shape_dirs = sorted(
        os.path.join(dataset_dir, d) for d in os.listdir(dataset_dir)
        if os.path.isdir(os.path.join(dataset_dir, d)))
    if not shape_dirs:
        raise EmptyDataset(f"no shape directories under {dataset_dir}")
    rows = []
    n_models = 0
    micro_icp, micro_iou_terms, micro_matched, micro_gt = [], [], set(), 0
    for shape_dir in shape_dirs:
        sid = os.path.basename(shape_dir)
        row = {"id": sid, "icp": "", "iou": "", "cov": "", "n_hypotheses": 0,
               "skipped": False, "reason": ""}
        try:
            record = load_annotation(shape_dir)
            if cfg.mode == "pspsb" and len(record.parts) > cfg.max_parts:
                row.update(skipped=True, reason=f"{len(record.parts)} parts > {cfg.max_parts}")
                rows.append(row)
                continue
            merged, _ = merge_parts(record.parts)
            if cfg.mode == "pspsb":
                sset = _detect_pspsb(record, shape_dir, cfg)
                points_pred = merged
            else:
                shape, sset = _detect_psb(shape_dir, cfg)
                points_pred = shape.cloud.points
            row["n_hypotheses"] = len(sset)
            if len(sset) == 0:
                rows.append(row)
                continue
            n_models += 1
            eval_size = min(cfg.resolved_eval_size, len(merged))
            eval_points = merged[farthest_point_sampling(merged, eval_size, cfg.seed)]
            eps = default_epsilon(eval_points)
            icp_val = metric_icp(sset, points_pred, cfg.icp)
            iou_val = metric_iou(sset, record.ground_truth, points_pred, merged,
                                 eval_points, eps)
            cov_val = metric_cov(sset, record.ground_truth, points_pred, merged,
                                 eval_points, eps)
            row.update(icp=icp_val, iou=iou_val, cov=cov_val)
            terms = _iou_terms(cluster_coords(sset, points_pred),
                               cluster_coords(record.ground_truth, merged),
                               eval_points, eps)
            micro_iou_terms.extend(t[0] for t in terms)
            micro_matched.update((sid, t[1]) for t in terms if t[1] >= 0 and t[0] > 0)
            micro_gt += len(record.ground_truth)
            micro_icp.extend(
                h.max_pairwise if not math.isnan(h.max_pairwise)
                else metric_icp(SymmetrySet((h,), 0), points_pred, cfg.icp)
                for h in sset.hypotheses)
        except Exception as exc:  # per-shape isolation is part of the contract
            row.update(skipped=True, reason=f"{type(exc).__name__}: {exc}")
        rows.append(row)

    scored = [r for r in rows if r["icp"] != ""]
    macro = {
        "icp": float(np.mean([r["icp"] for r in scored])) if scored else None,
        "iou": float(np.mean([r["iou"] for r in scored])) if scored else None,
        "cov": float(np.mean([r["cov"] for r in scored])) if scored else None,
    }
    micro = {
        "icp": float(np.mean(micro_icp)) if micro_icp else None,
        "iou": float(np.mean(micro_iou_terms)) if micro_iou_terms else None,
        "cov": (len(micro_matched) / micro_gt) if micro_gt else None,
    }
    return BenchmarkReport(mode=cfg.mode, per_shape=tuple(rows), macro=macro,
                           micro=micro, n_models=n_models, n_shapes=len(rows))
