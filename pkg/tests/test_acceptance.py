"""Acceptance criteria at their stated tolerances, one pass/fail line each.

Run with `pytest tests/test_acceptance.py -v -s`. The expensive table fixture
is shared with the rest of the suite through session fixtures; its build time
is charged to the criteria that consume it.
"""

import time

import numpy as np
import pytest

from symscan import containers, meshio
from symscan._kernels import register as kernel_register
from symscan.cli import main as cli_main
from symscan.detect import DetectConfig, detect_symmetries
from symscan.errors import NoFeasibleStep
from symscan.geometry import (PointCloud, build_neighbor_graph, component_labels,
                              farthest_point_sampling, geodesic_field, sample_shape,
                              save_shape)
from symscan.grow import grow_hypothesis
from symscan.icp import IcpConfig, chamfer, icp_distance, random_rotation
from symscan.icp import _icp_distance_curve
from symscan.synthetic import TABLE_TOP, bumpy_ellipsoid, cube_mesh, table_fixture, \
    two_plates
from symscan.detect import Region, Hypothesis

from conftest import TABLE_SEED

def report(name, ok, elapsed, detail=""):
    status = "PASS" if ok else "FAIL"
    print(f"[{status}] {name} ({elapsed:.1f}s) {detail}")
    assert ok, f"{name}: {detail}"


def test_chamfer_bruteforce_oracle():
    t0 = time.time()
    rng = np.random.default_rng(100)
    worst = 0.0
    for _ in range(200):
        a = rng.normal(size=(64, 3))
        b = rng.normal(size=(64, 3))
        got = chamfer(a, b)
        d2 = ((a[:, None, :] - b[None, :, :]) ** 2).sum(axis=2)
        want = d2.min(axis=1).mean() + d2.min(axis=0).mean()
        worst = max(worst, abs(got - want) / max(abs(want), 1e-300))
    elapsed = time.time() - t0
    report("chamfer matches brute force on 200 random 64-point pairs",
           worst <= 1e-12 and elapsed < 5.0, elapsed,
           f"worst relative error {worst:.2e}")


def test_icp_self_registration():
    t0 = time.time()
    fails = 0
    monotone = True
    first = []
    last = []
    for trial in range(100):
        rng = np.random.default_rng(1000 + trial)
        pts = np.ascontiguousarray(bumpy_ellipsoid(512, seed=trial))
        moved = pts @ random_rotation(rng).T
        if rng.random() < 0.5:
            moved = moved.copy()
            moved[:, 0] = -moved[:, 0]
        curve = _icp_distance_curve(np.ascontiguousarray(moved), pts,
                                    IcpConfig(seed=trial * 7 + 1, restarts=30))
        if curve[-1] > 1e-3:
            fails += 1
        if np.any(np.diff(curve) > 0):
            monotone = False
        first.append(curve[0])
        last.append(curve[-1])
    ratio = np.mean(last) / np.mean(first)
    elapsed = time.time() - t0
    report("ICP self-registration (100 rotated/reflected 512-point trials)",
           fails <= 5 and monotone and ratio <= 0.2 and elapsed < 300.0, elapsed,
           f"{100 - fails}/100 within 1e-3, mean(N=30)/mean(N=1)={ratio:.3g}")


def test_geodesic_accuracy_and_disconnection():
    t0 = time.time()
    rng = np.random.default_rng(0)
    n = 2 ** 14
    pts = np.column_stack([rng.uniform(0, 2, n), rng.uniform(0, 2, n), np.zeros(n)])
    cloud = PointCloud(points=pts)
    graph = build_neighbor_graph(cloud)
    src = int(np.argmin(np.einsum("ij,ij->i", pts, pts)))  # corner point
    field = geodesic_field(graph, cloud, [src])
    euclid = np.linalg.norm(pts - pts[src], axis=1)
    err = np.max(np.abs(field.dist - euclid)) / (2 * np.sqrt(2))

    far, labels = two_plates(2000, gap=100.0, seed=1)
    fgraph = build_neighbor_graph(PointCloud(points=far), k=2)
    ffield = geodesic_field(fgraph, PointCloud(points=far),
                            np.where(labels == 0)[0][:1])
    crosses_inf = np.isinf(ffield.dist[labels == 1]).all()
    elapsed = time.time() - t0
    report("geodesic accuracy on the planar square + disconnected clusters",
           err <= 0.02 and crosses_inf and elapsed < 30.0, elapsed,
           f"max |geo-euclid|/diameter = {err:.4f}")


def test_exhaustive_small_instance_oracles():
    from test_geometry import fps_oracle, knn_closure_oracle
    from test_bench import as_groups, cov_oracle, iou_oracle, toy_sets
    from symscan.bench import ground_truth_from_matrix, metric_cov, metric_iou
    from symscan.icp import DistanceMatrix

    t0 = time.time()
    rng = np.random.default_rng(200)
    ok = True
    for trial in range(5):
        pts = rng.normal(size=(64, 3))
        sel = farthest_point_sampling(pts, 8, seed=trial)
        ok &= sel.tolist() == fps_oracle(pts, int(sel[0]))[:8]
    for trial in range(3):
        pts = rng.normal(size=(48, 3))
        g = build_neighbor_graph(PointCloud(points=pts), k=4)
        got = {(min(i, j), max(i, j)) for i, j in zip(*g.adjacency.nonzero())}
        ok &= got == knn_closure_oracle(pts, 4)
    # connected components of a thresholded matrix vs flood fill
    v = rng.uniform(0.01, 1.0, size=(6, 6))
    v = (v + v.T) / 2
    np.fill_diagonal(v, 0.0)
    v[0, 3] = v[3, 0] = 1e-4
    v[1, 4] = v[4, 1] = 2e-4
    parts = [PointCloud(points=rng.normal(size=(4, 3))) for _ in range(6)]
    sset = ground_truth_from_matrix(
        parts, DistanceMatrix(values=v, kind="icp", fingerprint=0), 1e-3)
    groups = sorted(sorted(r.patch_ids[0] for r in h.regions) for h in sset.hypotheses)
    ok &= groups == [[0, 3], [1, 4]]
    # metric oracles on the toy configuration
    points, sp, sgt = toy_sets()
    ok &= metric_iou(sp, sgt, points, points, points, epsilon=1e-9) == \
        pytest.approx(iou_oracle(as_groups(sp), as_groups(sgt)))
    ok &= metric_cov(sp, sgt, points, points, points, epsilon=1e-9) == \
        pytest.approx(cov_oracle(as_groups(sp), as_groups(sgt)))
    elapsed = time.time() - t0
    report("FPS / k-NN / components / metrics match exhaustive oracles",
           ok and elapsed < 10.0, elapsed)


def _leg_stats(sset, labels):
    """(best hypothesis, per-region dominant legs, purities) for the table."""
    best = None
    for h in sset.hypotheses:
        if len(h.regions) != 4:
            continue
        doms, purities = [], []
        for r in h.regions:
            pl = labels[r.point_indices]
            dom = int(np.bincount(pl, minlength=5).argmax())
            doms.append(dom)
            purities.append(float(np.mean(pl == dom)))
        if sorted(doms) == [0, 1, 2, 3]:
            best = (h, doms, purities)
    return best


def test_end_to_end_table_detection(table_bundle, table_detection):
    t0 = time.time()
    sset = table_detection
    labels = table_bundle["labels"]
    found = _leg_stats(sset, labels)
    elapsed = (time.time() - t0) + table_bundle["build_seconds"]
    ok = found is not None
    detail = "no 4-leg hypothesis"
    if ok:
        h, doms, purities = found
        ok = min(purities) >= 0.9 and h.max_pairwise <= 0.005
        detail = (f"purities {['%.3f' % p for p in purities]}, "
                  f"max d_ICP {h.max_pairwise:.2e}")
    report("end-to-end table detection: 4 regions, one per leg",
           ok and elapsed < 600.0, elapsed, detail)


def test_region_growing_on_table(table_bundle):
    t0 = time.time()
    shape = table_bundle["shape"]
    labels = table_bundle["labels"]
    pts = shape.cloud.points
    regions = []
    for leg in range(4):
        idx = np.where(labels == leg)[0]
        zcut = np.quantile(pts[idx, 2], 0.96)
        regions.append(Region(point_indices=idx[pts[idx, 2] <= zcut],
                              patch_ids=(leg,)))
    h = Hypothesis(regions=tuple(regions), cluster_id=0)
    profile = grow_hypothesis(h, shape, IcpConfig(seed=TABLE_SEED), steps=100)

    nested = True
    prev = [set() for _ in range(4)]
    for t in range(100):
        for i, r in enumerate(profile.regions_at(t)):
            s = set(r.tolist())
            nested &= prev[i] <= s
            prev[i] = s

    grown = profile.selected_regions
    coverages = []
    for r in grown:
        pl = labels[r]
        dom = int(np.bincount(pl, minlength=5).argmax())
        coverages.append(np.sum(pl == dom) / np.sum(labels == dom))
    top_total = np.sum(labels == TABLE_TOP)
    top_claimed = sum(np.sum(labels[r] == TABLE_TOP) for r in grown)
    exclusion = 1.0 - top_claimed / top_total
    d_sel = float(profile.max_pairwise[profile.selected_step])
    elapsed = time.time() - t0
    ok = (min(coverages) >= 0.95 and exclusion >= 0.95 and d_sel <= 0.01
          and nested and elapsed < 600.0)
    report("region growing: legs completed, top excluded",
           ok, elapsed,
           f"coverage min {min(coverages):.3f}, top exclusion {exclusion:.3f}, "
           f"d at selection {d_sel:.2e}, nesting {nested}")


def test_cli_determinism(tmp_path):
    t0 = time.time()
    mesh = cube_mesh()
    obj = tmp_path / "cube.obj"
    meshio.save_obj(str(obj), mesh.vertices, mesh.faces)

    def run_twice(args, outputs):
        blobs = []
        for tag in ("r1", "r2"):
            paths = {k: str(tmp_path / f"{tag}_{v}") for k, v in outputs.items()}
            argv = [a.format(**paths) for a in args]
            assert cli_main(argv) == 0
            blobs.append(tuple(open(p, "rb").read() for p in paths.values()))
        return blobs[0] == blobs[1]

    ok = run_twice(["sample", str(obj), "-o", "{syms}", "--points", "2048",
                    "--centers", "48", "--seed", "3"], {"syms": "cube.syms"})

    # a shape with one true symmetry for detect/grow determinism
    rng = np.random.default_rng(4)
    bar = np.column_stack([np.linspace(0, 1, 400), 0.03 * rng.normal(size=400),
                           0.03 * rng.normal(size=400)])
    bridge = np.column_stack([np.linspace(1.02, 2.98, 200), np.zeros(200),
                              np.zeros(200)])
    cloud = np.vstack([bar, bridge, bar + np.array([3.0, 0, 0]),
                       bumpy_ellipsoid(1000, seed=5) * 0.4 + np.array([1.5, 2.0, 0])])
    shape = sample_shape(PointCloud(points=cloud), n_centers=24, k=8, seed=1)
    syms_path = str(tmp_path / "bars.syms")
    save_shape(syms_path, shape)

    ok &= run_twice(["patches", syms_path, "--k", "8", "-o", "{symp}", "--batch",
                     "{symb}", "--sizes", "200", "--counts", "12", "--seed", "2"],
                    {"symp": "p.symp", "symb": "p.symb"})
    base = str(tmp_path / "r1_p.symb")
    ok &= run_twice(["matrix", base, "-o", "{symd}", "--seed", "6",
                     "--restarts", "10", "--parallelism", "1"],
                    {"symd": "m.symd"})
    # parallelism must not change bytes either
    m1 = str(tmp_path / "r1_m.symd")
    mp = str(tmp_path / "mp.symd")
    assert cli_main(["matrix", base, "-o", mp, "--seed", "6", "--restarts", "10",
                     "--parallelism", "8"]) == 0
    ok &= open(m1, "rb").read() == open(mp, "rb").read()

    symp = str(tmp_path / "r1_p.symp")
    ok &= run_twice(["detect", syms_path, symp, "--k", "8", "--features", m1,
                     "-o", "{json}", "--min-patches", "1",
                     "--min-cluster-size", "4", "--min-samples", "2",
                     "--seed", "6"], {"json": "sym.json"})
    sym_json = str(tmp_path / "r1_sym.json")
    import json as _json
    n_hyp = len(_json.load(open(sym_json))["hypotheses"])
    ok &= n_hyp >= 1
    ok &= run_twice(["grow", syms_path, sym_json, "--k", "8", "-o", "{csv}",
                     "--hypothesis", "0", "--steps", "25", "--ply", "{ply}",
                     "--seed", "7"], {"csv": "g.csv", "ply": "g.ply"})
    elapsed = time.time() - t0
    report("CLI stages byte-identical on rerun (incl. matrix parallelism 1 vs 8)",
           ok, elapsed, f"detect found {n_hyp} hypotheses")


def test_rigid_motion_equivariance(table_bundle, table_detection):
    t0 = time.time()
    labels = table_bundle["labels"]
    base_found = _leg_stats(table_detection, labels)
    assert base_found is not None
    base_regions = {dom: set(r.point_indices.tolist())
                    for r, dom in zip(base_found[0].regions, base_found[1])}

    rng = np.random.default_rng(99)
    rot = random_rotation(rng)
    t = rng.normal(size=3) * 2.0
    pts, _ = table_fixture(n_points=2 ** 14, seed=TABLE_SEED)
    moved = PointCloud(points=np.ascontiguousarray(pts @ rot.T + t))
    shape = sample_shape(moved, n_centers=64, seed=TABLE_SEED)
    from symscan.patches import normalize_patch, sample_patch_set
    from symscan.icp import distance_matrix, pair_seed
    patches, _ = sample_patch_set(shape, [512], [64], seed=TABLE_SEED)
    normalized = [normalize_patch(p, shape, seed=pair_seed(TABLE_SEED, 0xA, i))
                  for i, p in enumerate(patches)]
    matrix = distance_matrix([p.points for p in normalized],
                             IcpConfig(seed=TABLE_SEED), parallelism=2)
    sset = detect_symmetries(shape, patches, matrix,
                             DetectConfig(min_patch_count=64, seed=TABLE_SEED),
                             IcpConfig(seed=TABLE_SEED))
    found = _leg_stats(sset, labels)
    ok = found is not None
    detail = "no 4-leg hypothesis after rigid motion"
    if ok:
        ious = []
        for r, dom in zip(found[0].regions, found[1]):
            s = set(r.point_indices.tolist())
            o = base_regions[dom]
            ious.append(len(s & o) / len(s | o))
        ok = min(ious) >= 0.9
        detail = f"per-region IoU {['%.3f' % v for v in ious]}"
    elapsed = time.time() - t0
    report("detection equivariant under a global rigid motion",
           ok, elapsed, detail)
