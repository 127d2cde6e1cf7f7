"""Synthetic point-cloud fixtures with known symmetry structure.

Used by the test suite and handy for trying the pipeline without external
data. The table fixture carries exact translated copies of one leg template
under a randomly embossed top, so the legs are mutually symmetric while the
top breaks symmetry immediately at each junction.
"""

import numpy as np

from .geometry import Mesh, PointCloud, sample_shape

TABLE_LEG = list(range(4))
TABLE_TOP = 4


def cylinder_cloud(n, radius, length, seed):
    """Open tube along +z, z in [0, length], area-uniform."""
    rng = np.random.default_rng(seed)
    theta = rng.uniform(0.0, 2.0 * np.pi, n)
    z = rng.uniform(0.0, length, n)
    return np.column_stack([radius * np.cos(theta), radius * np.sin(theta), z])


def _wave_field(rng, n_waves, amplitude):
    freq = rng.uniform(8.0, 22.0, size=(n_waves, 2))
    phase = rng.uniform(0.0, 2.0 * np.pi, size=n_waves)
    amp = rng.uniform(0.5, 1.0, size=n_waves)
    amp *= amplitude / amp.sum()

    def field(x, y):
        total = np.zeros_like(x)
        for k in range(n_waves):
            total += amp[k] * np.sin(freq[k, 0] * x + freq[k, 1] * y + phase[k])
        return total

    return field


def bumpy_slab_cloud(n, sx, sy, sz, seed, amp_top=0.06, amp_bottom=0.12, n_waves=6):
    """Box surface x,y centered at 0, z in [0, sz].

    The top face is displaced by a random wave field; the bottom face is
    displaced strictly downward by the magnitude of another, so nothing pokes
    above z = 0 locally and every location looks different.
    """
    rng = np.random.default_rng(seed)
    f_top = _wave_field(rng, n_waves, amp_top)
    f_bot = _wave_field(rng, n_waves, amp_bottom)
    areas = np.array([sx * sy, sx * sy, sx * sz, sx * sz, sy * sz, sy * sz])
    face = rng.choice(6, size=n, p=areas / areas.sum())
    u = rng.uniform(-0.5, 0.5, n)
    v = rng.uniform(-0.5, 0.5, n)
    pts = np.empty((n, 3))
    top = face == 0
    pts[top] = np.column_stack([u[top] * sx, v[top] * sy,
                                sz + f_top(u[top] * sx, v[top] * sy)])
    bot = face == 1
    pts[bot] = np.column_stack([u[bot] * sx, v[bot] * sy,
                                -np.abs(f_bot(u[bot] * sx, v[bot] * sy))])
    for fid, sign in ((2, -1), (3, 1)):
        m = face == fid
        pts[m] = np.column_stack([u[m] * sx, np.full(m.sum(), sign * sy / 2),
                                  (v[m] + 0.5) * sz])
    for fid, sign in ((4, -1), (5, 1)):
        m = face == fid
        pts[m] = np.column_stack([np.full(m.sum(), sign * sx / 2), u[m] * sy,
                                  (v[m] + 0.5) * sz])
    return pts


def table_fixture(n_points=2 ** 14, seed=0, leg_radius=0.07, leg_length=0.78,
                  leg_offset=0.4, slab=(1.2, 1.2, 0.12), slab_z=0.74):
    """Four identical legs (translated copies) under a randomly embossed top.

    Returns (points (n,3), labels (n,)) with labels 0..3 for the legs and
    TABLE_TOP for the top. Leg tubes overshoot slab_z slightly so the
    neighbor graph connects them to the underside.
    """
    rng = np.random.default_rng(seed)
    total_area = 4 * 2 * np.pi * leg_radius * leg_length + \
        2 * slab[0] * slab[1] + 2 * (slab[0] + slab[1]) * slab[2]
    leg_n = int(round(n_points * 2 * np.pi * leg_radius * leg_length / total_area))
    slab_n = n_points - 4 * leg_n
    template = cylinder_cloud(leg_n, leg_radius, leg_length, int(rng.integers(2 ** 63)))
    pts = []
    labels = []
    for i, (sx, sy) in enumerate([(-1, -1), (-1, 1), (1, -1), (1, 1)]):
        leg = template + np.array([sx * leg_offset, sy * leg_offset, 0.0])
        pts.append(leg)
        labels.append(np.full(leg_n, i, dtype=np.int64))
    top = bumpy_slab_cloud(slab_n, slab[0], slab[1], slab[2],
                           int(rng.integers(2 ** 63)))
    top[:, 2] += slab_z
    pts.append(top)
    labels.append(np.full(slab_n, TABLE_TOP, dtype=np.int64))
    return np.vstack(pts), np.concatenate(labels)


FAUCET_BASE = list(range(3))
FAUCET_PIPES = 3
FAUCET_HANDLES = 4


def faucet_fixture(n_points=2 ** 14, seed=0, base_radius=0.08, base_length=0.5,
                   pipe_radius=0.05, ring_radius=0.55, stem_radius=0.02,
                   stem_length=0.6):
    """Three identical vertical bases on a triangular pipe loop.

    Identical thin stems rise from every base; two stems end in differently
    shaped handles that break the 3-fold symmetry only at their tips, so
    growth seeded at the bases can claim the whole symmetric plumbing before
    the handles disrupt it. Labels: 0..2 bases, 3 pipes+stems, 4 handles.
    """
    rng = np.random.default_rng(seed)
    corners = [np.array([ring_radius * np.cos(a), ring_radius * np.sin(a), 0.0])
               for a in (np.pi / 2, np.pi / 2 + 2 * np.pi / 3, np.pi / 2 + 4 * np.pi / 3)]
    base_area = 2 * np.pi * base_radius * base_length
    edge_len = np.linalg.norm(corners[0] - corners[1])
    pipe_area = 3 * 2 * np.pi * pipe_radius * edge_len
    stem_area = 3 * 2 * np.pi * stem_radius * stem_length
    handle_weight = 0.3
    total = 3 * base_area + pipe_area + stem_area + 2 * handle_weight
    base_n = int(round(n_points * base_area / total))
    stem_n = int(round(n_points * stem_area / 3 / total))
    handle_n = int(round(n_points * handle_weight / total))
    pipe_n = n_points - 3 * base_n - 3 * stem_n - 2 * handle_n

    base_template = cylinder_cloud(base_n, base_radius, base_length,
                                   int(rng.integers(2 ** 63)))
    # annular cap joining the base rim to the stem root, part of the template
    cap_n = max(32, base_n // 8)
    cap_rng = np.random.default_rng(int(rng.integers(2 ** 63)))
    cap_r = np.sqrt(cap_rng.uniform(stem_radius ** 2, base_radius ** 2, cap_n))
    cap_t = cap_rng.uniform(0, 2 * np.pi, cap_n)
    cap = np.column_stack([cap_r * np.cos(cap_t), cap_r * np.sin(cap_t),
                           np.full(cap_n, base_length)])
    base_template = np.vstack([base_template, cap])
    base_n = len(base_template)
    stem_template = cylinder_cloud(stem_n, stem_radius, stem_length,
                                   int(rng.integers(2 ** 63)))
    pts, labels = [], []
    for i, c in enumerate(corners):
        pts.append(base_template + c)
        labels.append(np.full(base_n, i, dtype=np.int64))
    for c in corners:
        pts.append(stem_template + c + [0.0, 0.0, base_length * 0.98])
        labels.append(np.full(stem_n, FAUCET_PIPES, dtype=np.int64))

    per_edge = pipe_n // 3
    for e in range(3):
        a, b = corners[e], corners[(e + 1) % 3]
        t = rng.uniform(0.0, 1.0, per_edge if e < 2 else pipe_n - 2 * per_edge)
        axis = (b - a) / np.linalg.norm(b - a)
        ortho1 = np.cross(axis, [0.0, 0.0, 1.0])
        ortho1 /= np.linalg.norm(ortho1)
        ortho2 = np.cross(axis, ortho1)
        theta = rng.uniform(0, 2 * np.pi, len(t))
        ring = (np.outer(np.cos(theta), ortho1) + np.outer(np.sin(theta), ortho2)) * pipe_radius
        pts.append(a + np.outer(t, b - a) + ring)
        labels.append(np.full(len(t), FAUCET_PIPES, dtype=np.int64))

    # mismatched handles on the tips of stems 0 and 1 only: thin arms carry
    # bulky boxes in different directions, so the first claimed box points
    # already sit far from everything in the other regions
    top = base_length * 0.98 + stem_length
    arm_n = max(24, handle_n // 16)
    box_n = handle_n - arm_n

    def arm(direction, seed):
        tube = cylinder_cloud(arm_n, 0.015, 0.72, seed)  # along +z
        frame = _axis_frame(direction)
        return tube[:, 0:1] * frame[1] + tube[:, 1:2] * frame[2] + tube[:, 2:3] * frame[0]

    h0 = np.vstack([
        arm([1.0, 0.0, 0.0], int(rng.integers(2 ** 31))),
        _box_surface(box_n, 0.5, 0.2, 0.2, rng) + [0.95, 0.0, 0.0],
    ]) + corners[0] + [0.0, 0.0, top]
    h1 = np.vstack([
        arm([0.0, -1.0, 0.0], int(rng.integers(2 ** 31))),
        _box_surface(box_n, 0.1, 0.5, 0.1, rng) + [0.0, -0.95, 0.0],
    ]) + corners[1] + [0.0, 0.0, top]
    for h in (h0, h1):
        pts.append(h)
        labels.append(np.full(len(h), FAUCET_HANDLES, dtype=np.int64))
    return np.vstack(pts), np.concatenate(labels)


def _axis_frame(direction):
    """Rows: direction, two orthogonal completions (for oriented tubes)."""
    d = np.asarray(direction, dtype=np.float64)
    d /= np.linalg.norm(d)
    helper = np.array([0.0, 0.0, 1.0]) if abs(d[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
    o1 = np.cross(d, helper)
    o1 /= np.linalg.norm(o1)
    o2 = np.cross(d, o1)
    return np.vstack([d, o1, o2])


def _box_surface(n, sx, sy, sz, rng):
    areas = np.array([sx * sy, sx * sy, sx * sz, sx * sz, sy * sz, sy * sz])
    face = rng.choice(6, size=n, p=areas / areas.sum())
    u = rng.uniform(-0.5, 0.5, n)
    v = rng.uniform(-0.5, 0.5, n)
    pts = np.empty((n, 3))
    for fid in range(6):
        m = face == fid
        if fid < 2:
            pts[m] = np.column_stack([u[m] * sx, v[m] * sy,
                                      np.full(m.sum(), (fid - 0.5) * sz)])
        elif fid < 4:
            pts[m] = np.column_stack([u[m] * sx, np.full(m.sum(), (fid - 2.5) * sy),
                                      v[m] * sz])
        else:
            pts[m] = np.column_stack([np.full(m.sum(), (fid - 4.5) * sx), u[m] * sy,
                                      v[m] * sz])
    return pts


def box_cloud(n, sx, sy, sz, seed):
    return _box_surface(n, sx, sy, sz, np.random.default_rng(seed))


def sphere_cloud(n, radius, seed):
    rng = np.random.default_rng(seed)
    v = rng.normal(size=(n, 3))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    return radius * v


def random_ellipsoid(n, seed, axis_range=(0.4, 1.2)):
    """Randomly oriented ellipsoid surface sample (convex, generally asymmetric)."""
    rng = np.random.default_rng(seed)
    axes = rng.uniform(*axis_range, size=3)
    v = rng.normal(size=(n, 3))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    rot = np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])
    return (v * axes) @ rot.T


def bumpy_ellipsoid(n, seed, axes=(1.0, 0.62, 0.31), bump=0.1):
    """Well-conditioned asymmetric surface: distinct inertia axes plus fixed
    low-order bumps, so multi-restart ICP reliably recovers rigid copies."""
    rng = np.random.default_rng(seed)
    v = rng.normal(size=(n, 3))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    r = 1.0 + bump * (np.sin(3.0 * v[:, 0] + 1.0) * np.cos(2.0 * v[:, 1])
                      + 0.5 * np.sin(4.0 * v[:, 2]))
    return v * r[:, None] * np.asarray(axes)


def random_blob(n, seed, n_waves=8, amplitude=0.35):
    """Sphere with random radial waves: smooth, connected, no repeated geometry."""
    rng = np.random.default_rng(seed)
    v = rng.normal(size=(n, 3))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    r = np.ones(n)
    for _ in range(n_waves):
        d = rng.normal(size=3)
        d /= np.linalg.norm(d)
        r += amplitude / n_waves * np.sin(rng.uniform(2, 6) * (v @ d) + rng.uniform(0, 2 * np.pi))
    return v * r[:, None]


def two_plates(n, gap, plate=(1.0, 1.0), seed=0):
    """Two parallel square plates separated along z by gap; labels 0/1."""
    rng = np.random.default_rng(seed)
    half = n // 2
    def plate_pts(m, z):
        return np.column_stack([rng.uniform(-plate[0] / 2, plate[0] / 2, m),
                                rng.uniform(-plate[1] / 2, plate[1] / 2, m),
                                np.full(m, z)])
    pts = np.vstack([plate_pts(half, 0.0), plate_pts(n - half, gap)])
    labels = np.concatenate([np.zeros(half, dtype=np.int64),
                             np.ones(n - half, dtype=np.int64)])
    return pts, labels


def cube_mesh(edge=1.0) -> Mesh:
    """Unit cube: 8 vertices, 12 triangles."""
    v = np.array([[x, y, z] for x in (0.0, edge) for y in (0.0, edge) for z in (0.0, edge)])
    f = np.array([
        [0, 1, 3], [0, 3, 2], [4, 6, 7], [4, 7, 5],
        [0, 4, 5], [0, 5, 1], [2, 3, 7], [2, 7, 6],
        [0, 2, 6], [0, 6, 4], [1, 5, 7], [1, 7, 3],
    ], dtype=np.int64)
    return Mesh(vertices=v, faces=f)


def table_shape(n_points=2 ** 14, n_centers=64, seed=0, k=None, **kwargs):
    """SampledShape of the table fixture plus its part labels."""
    pts, labels = table_fixture(n_points=n_points, seed=seed, **kwargs)
    from .geometry import DEFAULT_K
    shape = sample_shape(PointCloud(points=pts), n_centers=n_centers,
                         k=k or DEFAULT_K, seed=seed)
    return shape, labels
