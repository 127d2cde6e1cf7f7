"""Symmetry-aware region growing.

Every cloud point is assigned to its geodesically nearest hypothesis region
(region points seed the field at distance 0). Regions are then cut at 100
evenly spaced distance levels; the level minimizing the worst pairwise ICP
distance (ties toward the larger level) gives the maximal symmetric regions.
"""

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.sparse.csgraph import dijkstra

from . import meshio
from .detect import Hypothesis, SymmetrySet, region_colors
from .errors import DegenerateInput, EmptyCloud, NoFeasibleStep
from .geometry import SampledShape
from .icp import IcpConfig, icp_distance, pair_seed


@dataclass(frozen=True)
class GrowthProfile:
    grid: np.ndarray          # (steps,) distance levels, linear in [0, d_geo_max]
    max_pairwise: np.ndarray  # worst pairwise ICP distance per level
    labels: np.ndarray        # (n,) nearest-region id per cloud point, -1 unreachable
    dgeo: np.ndarray          # (n,) geodesic distance to the assigned region
    selected_step: int        # argmin of max_pairwise, ties toward larger levels
    n_regions: int

    def regions_at(self, step):
        """Point-index sets of every region at a grid level (nested in step)."""
        level = self.grid[step]
        return [np.where((self.labels == i) & (self.dgeo <= level))[0]
                for i in range(self.n_regions)]

    @property
    def selected_regions(self):
        return self.regions_at(self.selected_step)

    def to_csv(self, path):
        sizes = np.zeros((len(self.grid), self.n_regions), dtype=np.int64)
        for i in range(self.n_regions):
            member = self.labels == i
            sizes[:, i] = np.sum(
                member[None, :] & (self.dgeo[None, :] <= self.grid[:, None]), axis=1)
        with open(path, "w") as fh:
            cols = ",".join(f"size_{i}" for i in range(self.n_regions))
            fh.write(f"step,delta_d,max_icp,{cols}\n")
            for t in range(len(self.grid)):
                row = ",".join(str(sizes[t, i]) for i in range(self.n_regions))
                fh.write(f"{t},{float(self.grid[t])!r},{float(self.max_pairwise[t])!r},{row}\n")


def assign_points(hypothesis: Hypothesis, shape: SampledShape):
    """Nearest-region label and geodesic distance for every cloud point.

    Region points seed their own field at distance 0; ties between regions
    resolve to the lower region id. Unreachable points get label -1 and +inf.
    """
    if not hypothesis.regions:
        raise EmptyCloud("hypothesis has no regions")
    n = len(shape.cloud)
    fields = np.empty((len(hypothesis.regions), n))
    for i, region in enumerate(hypothesis.regions):
        fields[i] = dijkstra(shape.graph.adjacency, directed=False,
                             indices=region.point_indices, min_only=True)
    labels = np.argmin(fields, axis=0).astype(np.int64)  # first index wins ties
    dgeo = fields[labels, np.arange(n)]
    labels[~np.isfinite(dgeo)] = -1
    return labels, dgeo


def grow_hypothesis(hypothesis: Hypothesis, shape: SampledShape,
                    icp_cfg: IcpConfig = IcpConfig(), steps: int = 100) -> GrowthProfile:
    """Evaluate the worst pairwise ICP distance across the growth grid.

    Per-pair seeds are fixed across levels so the profile varies only with
    geometry. ICP failures at a level become +inf.
    """
    labels, dgeo = assign_points(hypothesis, shape)
    reachable = np.isfinite(dgeo)
    d_max = float(dgeo[reachable].max()) if reachable.any() else 0.0
    grid = np.linspace(0.0, d_max, steps)
    nreg = len(hypothesis.regions)
    pts = shape.cloud.points
    max_pairwise = np.empty(steps)
    seeds = {(i, j): pair_seed(icp_cfg.seed, i, j)
             for i in range(nreg) for j in range(i + 1, nreg)}
    for t in range(steps):
        level = grid[t]
        regions = [pts[(labels == i) & (dgeo <= level)] for i in range(nreg)]
        worst = 0.0
        for i in range(nreg):
            for j in range(i + 1, nreg):
                try:
                    d = icp_distance(regions[i], regions[j],
                                     replace(icp_cfg, seed=seeds[(i, j)]))
                except (DegenerateInput, EmptyCloud):
                    d = math.inf
                worst = max(worst, d)
        max_pairwise[t] = worst
    best = np.min(max_pairwise)
    selected = int(np.max(np.where(max_pairwise == best)[0]))
    return GrowthProfile(grid=grid, max_pairwise=max_pairwise, labels=labels,
                         dgeo=dgeo, selected_step=selected, n_regions=nreg)


def select_by_threshold(profile: GrowthProfile, delta: float):
    """Regions at the largest level whose recorded distance is within delta."""
    if len(profile.grid) == 0:
        raise NoFeasibleStep("empty profile")
    feasible = np.where(profile.max_pairwise <= delta)[0]
    if len(feasible) == 0:
        raise NoFeasibleStep(f"no growth step has max ICP distance <= {delta}")
    return int(feasible[-1]), profile.regions_at(int(feasible[-1]))


def export_growth_ply(shape: SampledShape, hypothesis: Hypothesis,
                      profile: GrowthProfile, path, step=None):
    """Colored PLY at a growth level: initial points dark, grown points light."""
    step = profile.selected_step if step is None else step
    colors = np.full((len(shape.cloud), 3), 190, dtype=np.uint8)
    for i, grown in enumerate(profile.regions_at(step)):
        light = region_colors(i)
        colors[grown] = light
        initial = hypothesis.regions[i].point_indices
        colors[initial] = (light.astype(np.float64) * 0.55).astype(np.uint8)
    meshio.save_ply_points(path, shape.cloud.points, colors)


def grow_symmetry_set(sset: SymmetrySet, shape: SampledShape,
                      icp_cfg: IcpConfig = IcpConfig(), steps: int = 100):
    """Grow every hypothesis independently; overlap across hypotheses is allowed."""
    return [grow_hypothesis(h, shape, icp_cfg, steps) for h in sset.hypotheses]
