"""Command-line entry point: ``manifold-atlas {generate,diagnose,train,sample,ajd}``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from . import __version__
from .atlas import (DEFAULT_BATCH, DEFAULT_EPOCHS, DEFAULT_HIDDEN_LAYERS, DEFAULT_LR, Atlas, AtlasChart,
                    chart_fidelity, cross_validate, generate, load_atlas, save_atlas, train_inverse)
from .clustering import choose_k, expand_transitions, kmeans
from .connectivity import DEFAULT_GRID_SIZE, DEFAULT_JUMP, classify_components, epsilon_curve, transition_graph
from .dataset import (PointCloud, gen_plane_union, gen_s_curve, gen_sphere_circle_union, gen_swiss_roll,
                      load_matrix, preprocess, sample_hypersphere, save_matrix)
from .distortion import DEFAULT_H, ajd
from .embedding import DEFAULT_DELTA, DEFAULT_TAU, RankError, ajd_sweep, estimate_dimension, fit_pca, project
from .neighbors import knn

log = logging.getLogger("manifold_atlas")

MIN_CLUSTER_SIZE = 50
GENERATORS = ("s-curve", "swiss-roll", "hypersphere", "sphere-circle", "plane-union")


class StageError(RuntimeError):
    pass


@contextmanager
def stage(name: str):
    try:
        yield
    except StageError:
        raise
    except Exception as exc:
        raise StageError(f"{name}: {exc}") from exc


def _write_csv(path: Path, header, rows):
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _write_manifest(out: Path, command: str, args, status: str, outputs, error: str | None = None, extra=None):
    config = {k: v for k, v in vars(args).items() if k != "func"}
    manifest = {
        "tool": "manifold-atlas",
        "version": __version__,
        "command": command,
        "status": status,
        "seed": getattr(args, "seed", None),
        "config": config,
        "outputs": sorted(outputs),
        "created": time.strftime("%Y-%m-%dT%H:%M:%S"),
    }
    if error:
        manifest["error"] = error
    if extra:
        manifest.update(extra)
    out.mkdir(parents=True, exist_ok=True)
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, default=str) + "\n")


# ---------------------------------------------------------------------------
# generate


def cmd_generate(args) -> list[str]:
    out = Path(args.out)
    written = []

    def save(pc, name, extra=None):
        save_matrix(pc, out / name, extra_columns=extra)
        written.append(name)

    if args.spec == "s-curve":
        cloud, latent = gen_s_curve(args.n, args.seed)
        save(cloud, "points.csv")
        save(latent, "latent.csv")
    elif args.spec == "swiss-roll":
        cloud, latent = gen_swiss_roll(args.n, args.seed, return_latent=True)
        save(cloud, "points.csv")
        save(latent, "latent.csv")
    elif args.spec == "hypersphere":
        ambient = args.ambient if args.ambient is not None else args.dim + 1
        save(sample_hypersphere(args.dim, ambient, args.n, args.seed), "points.csv")
    elif args.spec == "sphere-circle":
        n_circle = args.n_circle if args.n_circle is not None else args.n
        cloud, labels = gen_sphere_circle_union(args.n, n_circle, args.offset, args.seed)
        save(cloud, "points.csv")
        _write_csv(out / "labels.csv", ["component"], [[int(v)] for v in labels])
        written.append("labels.csv")
    elif args.spec == "plane-union":
        dims = tuple(int(d) for d in args.patch_dims.split(","))
        ambient = args.ambient if args.ambient is not None else 20
        cloud, labels = gen_plane_union(dims, args.n, ambient, seed=args.seed)
        save(cloud, "points.csv")
        _write_csv(out / "labels.csv", ["component"], [[int(v)] for v in labels])
        written.append("labels.csv")
    else:
        raise StageError(f"unknown generator {args.spec!r}; choose from {', '.join(GENERATORS)}")
    return written


# ---------------------------------------------------------------------------
# diagnose


def _load_input(args) -> PointCloud:
    with stage("load"):
        pc = load_matrix(args.input)
    if getattr(args, "preprocess", None):
        with stage("preprocess"):
            pc = preprocess(pc, args.preprocess)
    return pc


def _build_cover(pc: PointCloud, args):
    with stage("clustering"):
        if args.k is None:
            k, cover = choose_k(pc, MIN_CLUSTER_SIZE, seed=args.seed)
            args.k = k
            log.info("chose k=%d", k)
        else:
            cover = kmeans(pc, args.k, seed=args.seed)
        smallest = int(cover.raw_sizes().min())
        if smallest < MIN_CLUSTER_SIZE:
            log.warning("smallest cluster has %d points (< %d); consider a smaller k",
                        smallest, MIN_CLUSTER_SIZE)
    with stage("transition expansion"):
        l = min(args.l, pc.n_points - 1)
        cover = expand_transitions(cover, knn(pc, l))
    return cover


def run_diagnosis(pc: PointCloud, args, out: Path | None = None):
    """Cluster, sweep and check connectivity; optionally write the report bundle."""
    written = []
    cover = _build_cover(pc, args)
    with stage("ajd sweep"):
        sweep = ajd_sweep(cover, pc, args.h, args.d_max)
    with stage("dimension estimate"):
        verdict = estimate_dimension(sweep, args.tau, args.delta)
    with stage("transition graph"):
        graph = transition_graph(cover)
    comp = None
    curve = None
    if not args.no_epsilon:
        with stage("epsilon curve"):
            curve = epsilon_curve(pc, args.grid_size)
            comp = classify_components(curve, args.jump)

    summary = {
        "n_points": pc.n_points,
        "ambient_dim": pc.dim,
        "k": cover.k,
        "l": cover.l,
        "h": args.h,
        "verdict": verdict.kind,
        "dimension": verdict.dimension,
        "crossings": {str(c): d for c, d in verdict.crossings.items()},
        "skipped_clusters": sweep.skipped,
        "graph_components": graph.n_components,
        "epsilon_verdict": None if comp is None else comp.kind,
        "epsilon_component_lower_bound": None if comp is None else comp.count_lower_bound,
    }
    if out is not None:
        _write_csv(out / "ajd_curves.csv", ["cluster_id", "dimension", "ajd"], sweep.long_rows())
        dims, means = sweep.mean_curve()
        _write_csv(out / "ajd_mean.csv", ["dimension", "ajd"], zip(dims.tolist(), means.tolist()))
        rows = cover.report_rows()
        _write_csv(out / "cluster_sizes.csv", list(rows[0]), [list(r.values()) for r in rows])
        _write_csv(out / "graph_nodes.csv", ["cluster_id", "raw_size", "expanded_size", "component"],
                   [[c, *graph.node_sizes[c], next(i for i, g in enumerate(graph.components) if c in g)]
                    for c in graph.nodes])
        _write_csv(out / "graph_edges.csv", ["source", "target", "weight"],
                   [[i, j, w] for (i, j), w in graph.edges.items()])
        written += ["ajd_curves.csv", "ajd_mean.csv", "cluster_sizes.csv", "graph_nodes.csv", "graph_edges.csv"]
        if curve is not None:
            _write_csv(out / "epsilon_curve.csv",
                       ["epsilon", "gcc_fraction", "second_fraction", "n_components"], curve.rows())
            written.append("epsilon_curve.csv")
        (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
        written.append("summary.json")
    return cover, sweep, verdict, graph, comp, summary, written


def cmd_diagnose(args) -> list[str]:
    pc = _load_input(args)
    *_, summary, written = run_diagnosis(pc, args, Path(args.out))
    print(f"verdict: {summary['verdict']}"
          + (f" (dimension {summary['dimension']})" if summary["dimension"] is not None else ""))
    print(f"transition-graph components: {summary['graph_components']}")
    if summary["epsilon_verdict"] is not None:
        print(f"epsilon-network: {summary['epsilon_verdict']}")
    return written


# ---------------------------------------------------------------------------
# train


def _train_kwargs(args) -> dict:
    return {
        "epochs": args.epochs,
        "batch_size": args.batch_size,
        "learning_rate": args.lr,
        "hidden_layers": args.hidden_layers,
        "hidden_width": args.hidden_width,
    }


def cmd_train(args) -> list[str]:
    out = Path(args.out)
    pc = _load_input(args)
    written = []
    if args.force_dim is not None:
        n = args.force_dim
        cover = _build_cover(pc, args)
    else:
        cover, _, verdict, *_ = run_diagnosis(pc, args, None)
        if verdict.kind != "manifold":
            raise StageError(f"diagnosis: verdict is {verdict.kind}; pass --force-dim to train anyway")
        n = verdict.dimension
        log.info("training charts at dimension %d", n)

    rng = np.random.default_rng(args.seed)
    kwargs = _train_kwargs(args)
    charts, report, cv_rows, failures = [], [], [], []
    raw = cover.raw_sizes()
    for c, mem in enumerate(cover.expanded_members):
        x = pc.points[mem]
        try:
            chart = fit_pca(x, n, cluster_id=c)
            y = project(chart, x)
            net = train_inverse(chart, x, embedded=y, seed=rng.integers(2**63), **kwargs)
        except (RankError, ValueError, RuntimeError) as exc:
            failures.append(f"chart {c}: {exc}")
            report.append([c, len(mem), "", "", "", "", "", str(exc)])
            continue
        ac = AtlasChart(chart, net, np.asarray(mem), y, int(raw[c]))
        charts.append(ac)
        fid = chart_fidelity(ac, pc, args.h)
        report.append([c, len(mem), args.epochs, net.initial_loss, net.final_loss,
                       fid["ajd_network"], fid["ajd_linear"], ""])
        log.info("chart %d: final mse %.3g, network ajd %.3f", c, net.final_loss, fid["ajd_network"])
        if args.cv_folds:
            with stage(f"cross-validation of chart {c}"):
                scores = cross_validate(chart, x, folds=args.cv_folds, seed=rng.integers(2**63), **kwargs)
            cv_rows += [[c, f, s] for f, s in enumerate(scores)]

    _write_csv(out / "training_report.csv",
               ["cluster_id", "size", "epochs", "initial_mse", "final_mse", "ajd_network", "ajd_linear", "error"],
               report)
    written.append("training_report.csv")
    if args.cv_folds:
        _write_csv(out / "cv_report.csv", ["cluster_id", "fold", "mse"], cv_rows)
        written.append("cv_report.csv")
    if failures:
        raise StageError("training: " + "; ".join(failures))

    atlas = Atlas(charts, cover, {
        "epochs": args.epochs,
        "final_loss": [ch.inverse.final_loss for ch in charts],
        "column_names": pc.column_names,
        "seed": args.seed,
    })
    save_atlas(atlas, out / "atlas.npz")
    written.append("atlas.npz")
    return written


# ---------------------------------------------------------------------------
# sample / ajd


def cmd_sample(args) -> list[str]:
    with stage("load atlas"):
        atlas = load_atlas(args.atlas)
    with stage("sampling"):
        cloud, labels = generate(atlas, args.n_per_cluster, args.r_rank, args.seed)
    out = Path(args.out)
    save_matrix(cloud, out / "generated.csv", extra_columns={"cluster": labels.tolist()})
    print(f"wrote {cloud.n_points} points from {atlas.k} charts")
    return ["generated.csv"]


def cmd_ajd(args) -> list[str]:
    with stage("load"):
        high = load_matrix(args.high)
        low = load_matrix(args.low)
    with stage("ajd"):
        report = ajd(high, low, args.h)
    out = Path(args.out)
    _write_csv(out / "per_point.csv", ["point", "jaccard"], report.rows())
    (out / "summary.json").write_text(json.dumps({"h": report.h, "n_points": len(report.per_point),
                                                  "ajd": report.ajd}, indent=2) + "\n")
    print(f"ajd={report.ajd:.6f} (h={report.h}, n={len(report.per_point)})")
    return ["per_point.csv", "summary.json"]


# ---------------------------------------------------------------------------
# parser


def _add_pipeline_args(p):
    p.add_argument("input", help="delimited text matrix, one row per point")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--k", type=int, default=None,
                   help=f"k-means clusters (default: largest k <= 10 with every cluster >= {MIN_CLUSTER_SIZE})")
    p.add_argument("--l", type=int, default=10, help="neighbours used to find transition points")
    p.add_argument("--h", type=int, default=DEFAULT_H, help="neighbourhood size for Jaccard distances")
    p.add_argument("--d-max", type=int, default=None, help="largest PCA dimension swept (default: ambient)")
    p.add_argument("--tau", type=float, default=DEFAULT_TAU, help="AJD threshold defining a crossing")
    p.add_argument("--delta", type=int, default=DEFAULT_DELTA, help="allowed spread of crossing dimensions")
    p.add_argument("--grid-size", type=int, default=DEFAULT_GRID_SIZE, help="epsilon grid points")
    p.add_argument("--jump", type=float, default=DEFAULT_JUMP, help="giant-component jump threshold")
    p.add_argument("--no-epsilon", action="store_true", help="skip the epsilon-network curve")
    p.add_argument("--preprocess", default=None, help='stages applied in order, e.g. "hvg:2000,cpm,log"')
    p.add_argument("--seed", type=int, default=0)


def _positive(value):
    v = int(value)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be positive, got {v}")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="manifold-atlas", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a synthetic dataset")
    g.add_argument("spec", help=f"one of: {', '.join(GENERATORS)}")
    g.add_argument("--n", type=_positive, default=5000, help="points (per component for unions)")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--dim", type=int, default=9, help="hypersphere intrinsic dimension")
    g.add_argument("--ambient", type=int, default=None, help="ambient dimension (zero-padded)")
    g.add_argument("--n-circle", type=int, default=None, help="circle points for sphere-circle")
    g.add_argument("--offset", type=float, default=5.0, help="circle centre offset for sphere-circle")
    g.add_argument("--patch-dims", default="3,7", help="patch dimensions for plane-union")
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_generate)

    d = sub.add_parser("diagnose", help="AJD sweep, dimension verdict and connectivity")
    _add_pipeline_args(d)
    d.set_defaults(func=cmd_diagnose)

    t = sub.add_parser("train", help="fit PCA charts and inverse networks")
    _add_pipeline_args(t)
    t.add_argument("--force-dim", type=int, default=None, help="chart dimension, bypassing the diagnosis")
    t.add_argument("--epochs", type=int, default=DEFAULT_EPOCHS)
    t.add_argument("--batch-size", type=_positive, default=DEFAULT_BATCH)
    t.add_argument("--lr", type=float, default=DEFAULT_LR)
    t.add_argument("--hidden-layers", type=int, default=DEFAULT_HIDDEN_LAYERS)
    t.add_argument("--hidden-width", type=int, default=None, help="default max(64, 2 * ambient dim)")
    t.add_argument("--cv-folds", type=int, default=10, help="k-fold cross-validation per chart (0 disables)")
    t.set_defaults(func=cmd_train, no_epsilon=True)

    s = sub.add_parser("sample", help="generate new points from a trained atlas")
    s.add_argument("atlas")
    s.add_argument("--out", required=True)
    s.add_argument("--r-rank", type=int, default=1, help="ball radius = distance to this nearest neighbour")
    s.add_argument("--n-per-cluster", type=int, default=None, help="default: each cluster's original size")
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_sample)

    a = sub.add_parser("ajd", help="score a representation against the original data")
    a.add_argument("high", help="original data matrix")
    a.add_argument("low", help="representation with the same rows")
    a.add_argument("--h", type=int, default=DEFAULT_H)
    a.add_argument("--out", required=True)
    a.set_defaults(func=cmd_ajd)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s", stream=sys.stderr)
    logging.captureWarnings(True)
    out = Path(args.out)
    try:
        written = args.func(args)
    except Exception as exc:  # every failure leaves a manifest marked "failed"
        log.error("%s", exc)
        partial = [p.name for p in out.glob("*") if p.name != "manifest.json"] if out.is_dir() else []
        _write_manifest(out, args.command, args, "failed", partial, str(exc),
                        {"partial_outputs": bool(partial)})
        return 1
    _write_manifest(out, args.command, args, "ok", written)
    return 0


if __name__ == "__main__":
    sys.exit(main())
