import numpy as np
import pytest

from symscan.detect import DetectConfig, detect_symmetries
from symscan.geometry import PointCloud, build_neighbor_graph, sample_shape
from symscan.icp import IcpConfig, distance_matrix, pair_seed
from symscan.patches import normalize_patch, sample_patch_set
from symscan.synthetic import table_shape

TABLE_SEED = 0


def collinear_cloud(n=10, spacing=1.0):
    pts = np.zeros((n, 3))
    pts[:, 0] = np.arange(n) * spacing
    return PointCloud(points=pts)


def path_shape(n=10, spacing=1.0, n_centers=2, seed=0):
    """Equispaced collinear points with a k=2 graph: a path with unit edges."""
    cloud = collinear_cloud(n, spacing)
    return sample_shape(cloud, n_centers=n_centers, k=2, seed=seed)


@pytest.fixture(scope="session")
def table_bundle():
    """Table fixture with patches and the 64x64 patch ICP matrix (expensive)."""
    import time
    t0 = time.time()
    shape, labels = table_shape(n_points=2 ** 14, n_centers=64, seed=TABLE_SEED)
    patches, _ = sample_patch_set(shape, [512], [64], seed=TABLE_SEED)
    normalized = [normalize_patch(p, shape, seed=pair_seed(TABLE_SEED, 0xA, i))
                  for i, p in enumerate(patches)]
    matrix = distance_matrix([p.points for p in normalized],
                             IcpConfig(seed=TABLE_SEED), parallelism=2)
    return {"shape": shape, "labels": labels, "patches": patches,
            "matrix": matrix, "build_seconds": time.time() - t0}


@pytest.fixture(scope="session")
def table_detection(table_bundle):
    cfg = DetectConfig(min_patch_count=64, seed=TABLE_SEED)
    sset = detect_symmetries(table_bundle["shape"], table_bundle["patches"],
                             table_bundle["matrix"], cfg, IcpConfig(seed=TABLE_SEED))
    return sset
