"""Command-line entry points for every pipeline stage.

Every subcommand accepts --seed and --config (a JSON file whose sections
provide defaults that explicit flags override). Exit codes: 0 success,
1 input error, 2 internal error.
"""

import argparse
import json
import os
import sys

import numpy as np

from . import containers, meshio
from .bench import BenchConfig, run_benchmark
from .detect import (DetectConfig, detect_symmetries, export_hypotheses_ply,
                     symmetry_set_from_json, symmetry_set_to_json)
from .errors import SymscanError
from .geometry import (DEFAULT_CENTERS, DEFAULT_K, DEFAULT_POINTS, PointCloud,
                       load_sampled_shape, load_shape, sample_shape, save_shape)
from .grow import export_growth_ply, grow_hypothesis, select_by_threshold
from .icp import ConvergenceTable, DistanceMatrix, IcpConfig, convergence_study, \
    distance_matrix, icp_distance
from .patches import (load_patch_set, normalize_patch, sample_patch_set,
                      save_normalized_batch, save_patch_set)


def _load_config(path):
    if not path:
        return {}
    with open(path) as fh:
        return json.load(fh)


def _section(cfg, name):
    return cfg.get(name, {})


def _pick(cli_value, cfg, key, default):
    if cli_value is not None:
        return cli_value
    if key in cfg:
        return cfg[key]
    return default


def _load_points(path):
    """Point cloud from .syms, .ply or .obj (vertices)."""
    if path.endswith(".syms"):
        return load_sampled_shape(path).cloud.points
    if path.endswith(".obj"):
        return meshio.load_obj(path)[0]
    return meshio.load_ply(path)[0]


def _icp_config(args, cfg, seed):
    sec = _section(cfg, "icp")
    return IcpConfig(
        restarts=_pick(getattr(args, "restarts", None), sec, "restarts", 30),
        max_iters=_pick(getattr(args, "max_iters", None), sec, "max_iters", 100),
        fps_points=_pick(getattr(args, "fps_points", None), sec, "fps_points", 512),
        convergence_tol=_pick(getattr(args, "tol", None), sec, "convergence_tol", 1e-7),
        seed=seed)


def cmd_sample(args, cfg, seed):
    sec = _section(cfg, "sample")
    n_points = _pick(args.points, sec, "points", DEFAULT_POINTS)
    n_centers = _pick(args.centers, sec, "centers", DEFAULT_CENTERS)
    k = _pick(args.k, sec, "k", DEFAULT_K)
    mesh = load_shape(args.input, fmt=args.format)
    shape = sample_shape(mesh, n_points=n_points, n_centers=n_centers, k=k, seed=seed)
    save_shape(args.output, shape)
    print(f"wrote {args.output}: {len(shape.cloud)} points, {len(shape.centers)} centers")
    return 0


def cmd_patches(args, cfg, seed):
    sec = _section(cfg, "patches")
    sizes = [int(s) for s in _pick(args.sizes, sec, "sizes", "512").split(",")]
    counts = [int(c) for c in _pick(args.counts, sec, "counts", "64").split(",")]
    shape = load_sampled_shape(args.shape, k=_pick(args.k, sec, "k", DEFAULT_K))
    patches, skipped = sample_patch_set(shape, sizes, counts, seed)
    save_patch_set(args.output, patches)
    msg = f"wrote {args.output}: {len(patches)} patches"
    if skipped:
        msg += f" ({skipped} island centers skipped)"
    if args.batch:
        normalized = [normalize_patch(p, shape, seed=containers.config_fingerprint([seed, i]))
                      for i, p in enumerate(patches)]
        save_normalized_batch(args.batch, normalized)
        msg += f"; normalized batch -> {args.batch}"
    print(msg)
    return 0


def cmd_icpdist(args, cfg, seed):
    a = _load_points(args.a)
    b = _load_points(args.b)
    d = icp_distance(a, b, _icp_config(args, cfg, seed))
    print(f"{d!r}")
    return 0


def cmd_matrix(args, cfg, seed):
    icp_cfg = _icp_config(args, cfg, seed)
    if args.input.endswith(".symb"):
        items = list(containers.read_symb(args.input))
    else:
        files = sorted(f for f in os.listdir(args.input) if f.endswith(".ply"))
        if not files:
            raise SymscanError(f"no .ply parts under {args.input}")
        items = [meshio.load_ply(os.path.join(args.input, f))[0] for f in files]
    m = distance_matrix(items, icp_cfg, parallelism=args.parallelism)
    containers.write_symd(args.output, m.values, m.kind, m.fingerprint)
    if args.csv:
        np.savetxt(args.csv, m.values, delimiter=",")
    print(f"wrote {args.output}: {m.n}x{m.n} {m.kind} matrix"
          + (f", {len(m.failures)} failed pairs" if m.failures else ""))
    return 0


def cmd_detect(args, cfg, seed):
    sec = _section(cfg, "detect")
    shape = load_sampled_shape(args.shape, k=_pick(args.k, sec, "k", DEFAULT_K))
    patches = load_patch_set(args.patches, shape)
    det_cfg = DetectConfig(
        min_patch_count=_pick(args.min_patches, sec, "min_patch_count", 1024),
        min_cluster_size=_pick(args.min_cluster_size, sec, "min_cluster_size", 8),
        min_samples=_pick(args.min_samples, sec, "min_samples", 4),
        alpha=_pick(args.alpha, sec, "alpha", 2.0),
        epsilon=_pick(args.epsilon, sec, "epsilon", None),
        delta_sim=_pick(args.delta_sim, sec, "delta_sim", 0.005),
        max_regions=_pick(args.max_regions, sec, "max_regions", 30),
        seed=seed)
    if args.features.endswith(".syme"):
        from .detect import EmbeddingSet
        vectors, ids = containers.read_syme(args.features)
        features = EmbeddingSet(vectors=vectors, patch_ids=ids)
    else:
        values, kind, fp = containers.read_symd(args.features)
        features = DistanceMatrix(values=values, kind=kind, fingerprint=fp)
    sset = detect_symmetries(shape, patches, features, det_cfg,
                             _icp_config(args, cfg, seed))
    with open(args.output, "w") as fh:
        fh.write(symmetry_set_to_json(sset))
    print(f"wrote {args.output}: {len(sset)} hypotheses")
    if args.ply_dir:
        os.makedirs(args.ply_dir, exist_ok=True)
        for p in export_hypotheses_ply(shape, sset, args.ply_dir):
            print(f"  {p}")
    return 0


def cmd_grow(args, cfg, seed):
    sec = _section(cfg, "grow")
    shape = load_sampled_shape(args.shape, k=_pick(args.k, sec, "k", DEFAULT_K))
    with open(args.symmetries) as fh:
        sset = symmetry_set_from_json(fh.read())
    if not sset.hypotheses:
        raise SymscanError("symmetry set is empty")
    which = range(len(sset.hypotheses)) if args.hypothesis is None else [args.hypothesis]
    icp_cfg = _icp_config(args, cfg, seed)
    steps = _pick(args.steps, sec, "steps", 100)
    for k in which:
        h = sset.hypotheses[k]
        profile = grow_hypothesis(h, shape, icp_cfg, steps=steps)
        base = args.output.replace(".csv", "")
        csv_path = f"{base}_{k:02d}.csv" if len(list(which)) > 1 else args.output
        profile.to_csv(csv_path)
        line = (f"hypothesis {k}: selected step {profile.selected_step}"
                f" (delta_d={profile.grid[profile.selected_step]:.6g},"
                f" max_icp={profile.max_pairwise[profile.selected_step]:.6g})")
        if args.threshold is not None:
            step, _ = select_by_threshold(profile, args.threshold)
            line += f"; threshold {args.threshold} -> step {step}"
        print(line)
        if args.ply:
            ply_path = f"{args.ply.removesuffix('.ply')}_{k:02d}.ply" \
                if len(list(which)) > 1 else args.ply
            export_growth_ply(shape, h, profile, ply_path)
            print(f"  {ply_path}")
    return 0


def cmd_bench(args, cfg, seed):
    sec = _section(cfg, "bench")
    det_sec = _section(cfg, "detect")
    bench_cfg = BenchConfig(
        mode=args.mode,
        n_points=_pick(args.points, sec, "n_points", 2 ** 16),
        n_centers=_pick(args.centers, sec, "n_centers", 2 ** 11),
        patch_size=_pick(args.patch_size, sec, "patch_size", 512),
        eval_size=_pick(args.eval_size, sec, "eval_size", None),
        pred_delta_sym=_pick(args.pred_delta_sym, sec, "pred_delta_sym", 0.005),
        parallelism=args.parallelism,
        seed=seed,
        detect=DetectConfig(
            min_patch_count=_pick(None, det_sec, "min_patch_count", 1024),
            min_cluster_size=_pick(None, det_sec, "min_cluster_size", 8),
            min_samples=_pick(None, det_sec, "min_samples", 4),
            alpha=_pick(None, det_sec, "alpha", 2.0),
            delta_sim=_pick(None, det_sec, "delta_sim", 0.005),
            seed=seed),
        icp=_icp_config(args, cfg, seed))
    report = run_benchmark(args.dataset, bench_cfg)
    with open(args.output, "w") as fh:
        fh.write(report.to_json())
    if args.csv:
        report.to_csv(args.csv)
    print(f"wrote {args.output}: {report.n_models}/{report.n_shapes} models with symmetries; "
          f"macro {report.macro}")
    return 0


def cmd_converge(args, cfg, seed):
    items = []
    for path in args.inputs:
        if path.endswith(".symb"):
            items.extend(containers.read_symb(path))
        else:
            items.append(_load_points(path))
    table = convergence_study(items, trials=args.trials, max_n=args.max_n,
                              cfg=_icp_config(args, cfg, seed))
    table.to_csv(args.output)
    print(f"wrote {args.output}: mean d at N={args.max_n} is {table.mean[-1]:.6g}")
    return 0


def cmd_export_pairs(args, cfg, seed):
    sec = _section(cfg, "patches")
    shape = load_sampled_shape(args.shape, k=_pick(args.k, sec, "k", DEFAULT_K))
    patches = load_patch_set(args.patches, shape)
    from .patches import export_pairs
    pairs = export_pairs(shape, patches, offset_fraction=args.offset_fraction, seed=seed)
    batch = np.stack([q.points for p in pairs for q in (p.patch_a, p.patch_b)])
    containers.write_symb(args.output, batch)
    print(f"wrote {args.output}: {len(pairs)} pairs (anchor/partner interleaved)")
    return 0


def cmd_serve(args, cfg, seed):
    import uvicorn

    from .service import create_app
    app = create_app(args.dataset, static_dir=args.static)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="symscan",
                                description="Partial extrinsic symmetry toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--config", default=None, help="JSON config with per-stage defaults")
        return sp

    sp = common(sub.add_parser("sample", help="sample a mesh into a SYMS shape"))
    sp.add_argument("input")
    sp.add_argument("-o", "--output", required=True)
    sp.add_argument("--points", type=int)
    sp.add_argument("--centers", type=int)
    sp.add_argument("--k", type=int)
    sp.add_argument("--format", choices=["obj", "ply"], default=None)
    sp.set_defaults(func=cmd_sample)

    sp = common(sub.add_parser("patches", help="extract geodesic patches (SYMP/SYMB)"))
    sp.add_argument("shape")
    sp.add_argument("-o", "--output", required=True)
    sp.add_argument("--sizes", help="comma-separated delta_n values")
    sp.add_argument("--counts", help="comma-separated patch counts per size")
    sp.add_argument("--batch", help="also write normalized patches to this SYMB file")
    sp.add_argument("--k", type=int)
    sp.set_defaults(func=cmd_patches)

    sp = common(sub.add_parser("icpdist", help="ICP distance between two clouds"))
    sp.add_argument("a")
    sp.add_argument("b")
    for flag in ("--restarts", "--max-iters", "--fps-points"):
        sp.add_argument(flag, type=int, dest=flag[2:].replace("-", "_"))
    sp.add_argument("--tol", type=float)
    sp.set_defaults(func=cmd_icpdist)

    sp = common(sub.add_parser("matrix", help="pairwise ICP distance matrix (SYMD)"))
    sp.add_argument("input", help=".symb batch or a directory of part .ply files")
    sp.add_argument("-o", "--output", required=True)
    sp.add_argument("--csv", help="also write the full matrix as CSV")
    sp.add_argument("--parallelism", type=int, default=1)
    for flag in ("--restarts", "--max-iters", "--fps-points"):
        sp.add_argument(flag, type=int, dest=flag[2:].replace("-", "_"))
    sp.add_argument("--tol", type=float)
    sp.set_defaults(func=cmd_matrix)

    sp = common(sub.add_parser("detect", help="extract symmetry hypotheses"))
    sp.add_argument("shape")
    sp.add_argument("patches")
    sp.add_argument("--features", required=True, help=".symd matrix or .syme embeddings")
    sp.add_argument("-o", "--output", required=True)
    sp.add_argument("--ply-dir", help="write one colored PLY per hypothesis")
    sp.add_argument("--min-patches", type=int, dest="min_patches")
    sp.add_argument("--min-cluster-size", type=int, dest="min_cluster_size")
    sp.add_argument("--min-samples", type=int, dest="min_samples")
    sp.add_argument("--alpha", type=float)
    sp.add_argument("--epsilon", type=float)
    sp.add_argument("--delta-sim", type=float, dest="delta_sim")
    sp.add_argument("--max-regions", type=int, dest="max_regions")
    sp.add_argument("--k", type=int)
    sp.set_defaults(func=cmd_detect)

    sp = common(sub.add_parser("grow", help="grow hypothesis regions"))
    sp.add_argument("shape")
    sp.add_argument("symmetries", help="detect output JSON")
    sp.add_argument("-o", "--output", required=True, help="profile CSV path")
    sp.add_argument("--hypothesis", type=int, default=None)
    sp.add_argument("--steps", type=int)
    sp.add_argument("--threshold", type=float, help="also report the largest step within this distance")
    sp.add_argument("--ply", help="colored PLY at the selected step")
    sp.add_argument("--k", type=int)
    sp.set_defaults(func=cmd_grow)

    sp = common(sub.add_parser("bench", help="run the PSPSB/PSB benchmark"))
    sp.add_argument("dataset")
    sp.add_argument("--mode", choices=["pspsb", "psb"], required=True)
    sp.add_argument("-o", "--output", required=True)
    sp.add_argument("--csv")
    sp.add_argument("--points", type=int)
    sp.add_argument("--centers", type=int)
    sp.add_argument("--patch-size", type=int, dest="patch_size")
    sp.add_argument("--eval-size", type=int, dest="eval_size")
    sp.add_argument("--pred-delta-sym", type=float, dest="pred_delta_sym")
    sp.add_argument("--parallelism", type=int, default=1)
    for flag in ("--restarts", "--max-iters", "--fps-points"):
        sp.add_argument(flag, type=int, dest=flag[2:].replace("-", "_"))
    sp.add_argument("--tol", type=float)
    sp.set_defaults(func=cmd_bench)

    sp = common(sub.add_parser("converge", help="restart-convergence study"))
    sp.add_argument("inputs", nargs="+")
    sp.add_argument("-o", "--output", required=True)
    sp.add_argument("--trials", type=int, default=1)
    sp.add_argument("--max-n", type=int, default=30, dest="max_n")
    for flag in ("--restarts", "--max-iters", "--fps-points"):
        sp.add_argument(flag, type=int, dest=flag[2:].replace("-", "_"))
    sp.add_argument("--tol", type=float)
    sp.set_defaults(func=cmd_converge)

    sp = common(sub.add_parser("export-pairs", help="training pairs for the encoder"))
    sp.add_argument("shape")
    sp.add_argument("patches")
    sp.add_argument("-o", "--output", required=True)
    sp.add_argument("--offset-fraction", type=float, default=0.1, dest="offset_fraction")
    sp.add_argument("--k", type=int)
    sp.set_defaults(func=cmd_export_pairs)

    sp = common(sub.add_parser("serve", help="annotation HTTP service"))
    sp.add_argument("dataset")
    sp.add_argument("--host", default="127.0.0.1")
    sp.add_argument("--port", type=int, default=8008)
    sp.add_argument("--static", default=None, help="directory with the UI bundle")
    sp.set_defaults(func=cmd_serve)

    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _load_config(args.config)
        seed = args.seed
        if seed is None:
            seed = cfg.get("seed", 0)
        return args.func(args, cfg, seed)
    except (SymscanError, FileNotFoundError, json.JSONDecodeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception:  # internal errors get a traceback and a distinct code
        import traceback
        traceback.print_exc()
        return 2


if __name__ == "__main__":
    sys.exit(main())
