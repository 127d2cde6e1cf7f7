"""Density-based hierarchical clustering over a precomputed distance matrix.

Implements the published HDBSCAN construction: mutual-reachability distances,
a minimum spanning tree, the condensed cluster tree at min_cluster_size, and
excess-of-mass cluster selection. Re-implemented rather than wrapped so that
precomputed ICP matrices and latent cosine distances go through one code path.
Points outside every selected cluster are labeled -1.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import TooFewItems

# 1/distance with zero distances clamped, so stabilities stay finite
_LAMBDA_MAX = 1e18


def _lam(w):
    return _LAMBDA_MAX if w <= 1.0 / _LAMBDA_MAX else 1.0 / w


def _prim_mst(w):
    """Edges (u, v, weight) of a minimum spanning tree of the dense matrix."""
    n = len(w)
    in_tree = np.zeros(n, dtype=bool)
    best = np.full(n, math.inf)
    parent = np.full(n, -1, dtype=np.int64)
    best[0] = 0.0
    edges = []
    for _ in range(n):
        masked = np.where(in_tree, math.inf, best)
        u = int(np.argmin(masked))
        in_tree[u] = True
        if parent[u] >= 0:
            edges.append((int(parent[u]), u, float(best[u])))
        closer = ~in_tree & (w[u] < best)
        best[closer] = w[u][closer]
        parent[closer] = u
    return edges


@dataclass
class _CondensedTree:
    cluster_parent: dict   # cluster -> parent cluster (root absent)
    cluster_birth: dict    # cluster -> birth lambda
    cluster_children: dict  # cluster -> [child clusters]
    point_rows: list       # (cluster, point, lambda)
    cluster_rows: list     # (parent, child, lambda, size)
    root: int


def _single_linkage(edges, n):
    """Union-find merge sequence; returns (left, right, weight, size) per merge."""
    order = np.argsort([e[2] for e in edges], kind="stable")
    parent = np.arange(2 * n - 1, dtype=np.int64)
    size = np.ones(2 * n - 1, dtype=np.int64)
    merges = []

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return int(x)

    nxt = n
    for k in order:
        u, v, w = edges[k]
        ru, rv = find(u), find(v)
        merges.append((ru, rv, w, int(size[ru] + size[rv])))
        parent[ru] = parent[rv] = nxt
        size[nxt] = size[ru] + size[rv]
        nxt += 1
    return merges


def _condense(merges, n, min_cluster_size):
    """Collapse the dendrogram into clusters of at least min_cluster_size."""
    node_children = {}
    node_size = {}
    for k, (l, r, w, s) in enumerate(merges):
        node_children[n + k] = (l, r, w)
        node_size[n + k] = s
    for p in range(n):
        node_size[p] = 1
    root_node = n + len(merges) - 1

    def leaves_under(node):
        out = []
        stack = [node]
        while stack:
            x = stack.pop()
            if x < n:
                out.append(x)
            else:
                l, r, _ = node_children[x]
                stack.extend((l, r))
        return out

    tree = _CondensedTree(cluster_parent={}, cluster_birth={}, cluster_children={},
                          point_rows=[], cluster_rows=[], root=root_node)
    tree.cluster_birth[root_node] = 0.0
    tree.cluster_children[root_node] = []
    # stack of (dendrogram node, condensed cluster it belongs to)
    stack = [(root_node, root_node)]
    while stack:
        node, cluster = stack.pop()
        if node < n:
            # isolated point joining the walk directly (root of size 1 cannot
            # happen; leaves only appear via the branches below)
            tree.point_rows.append((cluster, node, _LAMBDA_MAX))
            continue
        l, r, w = node_children[node]
        lam = _lam(w)
        ls, rs = node_size[l], node_size[r]
        if ls >= min_cluster_size and rs >= min_cluster_size:
            for child in (l, r):
                tree.cluster_parent[child] = cluster
                tree.cluster_birth[child] = lam
                tree.cluster_children.setdefault(cluster, []).append(child)
                tree.cluster_children.setdefault(child, [])
                tree.cluster_rows.append((cluster, child, lam, node_size[child]))
                stack.append((child, child))
        elif ls < min_cluster_size and rs < min_cluster_size:
            for p in leaves_under(node):
                tree.point_rows.append((cluster, p, lam))
        else:
            keep, drop = (l, r) if ls >= min_cluster_size else (r, l)
            for p in leaves_under(drop):
                tree.point_rows.append((cluster, p, lam))
            stack.append((keep, cluster))
    return tree


def _stability(tree):
    birth = tree.cluster_birth
    stab = {c: 0.0 for c in birth}
    for cluster, _, lam in tree.point_rows:
        stab[cluster] += lam - birth[cluster]
    for parent, _, lam, size in tree.cluster_rows:
        stab[parent] += (lam - birth[parent]) * size
    return stab


def _select_eom(tree, stab):
    """Excess-of-mass selection; the root is never selected."""
    # children before parents: sort by birth descending breaks on equal births,
    # so order by tree depth instead
    depth = {tree.root: 0}
    order = [tree.root]
    i = 0
    while i < len(order):
        c = order[i]
        i += 1
        for ch in tree.cluster_children.get(c, ()):
            depth[ch] = depth[c] + 1
            order.append(ch)
    selected = set()
    propagated = {}
    for c in sorted(order, key=lambda x: -depth[x]):
        children = tree.cluster_children.get(c, ())
        subtree = sum(propagated[ch] for ch in children)
        if c == tree.root:
            propagated[c] = subtree
        elif stab[c] >= subtree:
            selected.add(c)
            propagated[c] = stab[c]
        else:
            propagated[c] = subtree
    # drop clusters shadowed by a selected ancestor
    final = set()
    stack = [(tree.root, False)]
    while stack:
        c, shadowed = stack.pop()
        chosen = c in selected and not shadowed
        if chosen:
            final.add(c)
        for ch in tree.cluster_children.get(c, ()):
            stack.append((ch, shadowed or chosen))
    return final


def hdbscan_labels(dist, min_cluster_size, min_samples=None):
    """Cluster labels from a symmetric distance matrix; noise is -1.

    min_samples defaults to min_cluster_size; the point itself counts toward
    its own neighborhood when computing core distances.
    """
    dist = np.asarray(dist, dtype=np.float64)
    n = dist.shape[0]
    if min_cluster_size < 2:
        raise ValueError("min_cluster_size must be >= 2")
    if n < min_cluster_size:
        raise TooFewItems(f"{n} items < min_cluster_size {min_cluster_size}")
    if min_samples is None:
        min_samples = min_cluster_size
    min_samples = min(min_samples, n)
    finite = np.where(np.isfinite(dist), dist, 1e15)

    # a fully degenerate matrix (all items mutually at distance ~0, up to
    # floating-point noise) is one cluster, not noise
    if finite.max() <= 1e-12:
        return np.zeros(n, dtype=np.int64)

    core = np.partition(finite, min_samples - 1, axis=1)[:, min_samples - 1]
    mreach = np.maximum(finite, np.maximum(core[:, None], core[None, :]))
    np.fill_diagonal(mreach, 0.0)

    edges = _prim_mst(mreach)
    merges = _single_linkage(edges, n)
    tree = _condense(merges, n, min_cluster_size)
    stab = _stability(tree)
    chosen = _select_eom(tree, stab)

    labels = np.full(n, -1, dtype=np.int64)
    if not chosen:
        return labels
    label_of = {c: i for i, c in enumerate(sorted(chosen))}
    for cluster, point, _ in tree.point_rows:
        c = cluster
        while c is not None and c not in label_of:
            c = tree.cluster_parent.get(c)
        if c is not None:
            labels[point] = label_of[c]
    return labels


def cosine_distances(vectors):
    """1 - cosine similarity for rows that are already unit-normalized."""
    d = 1.0 - np.asarray(vectors) @ np.asarray(vectors).T
    np.fill_diagonal(d, 0.0)
    return np.maximum(d, 0.0)
