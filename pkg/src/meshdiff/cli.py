"""Command-line entry point: ``meshdiff <command> [options]``.

Exit status is 0 on success, 1 for user errors (bad flags, unreadable files,
invalid parameters) and 2 for numerical failures, which includes
non-convergence when ``--strict`` is given.
"""
from __future__ import annotations

import argparse
import contextlib
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import evaluation, line, metric
from .errors import FactorizationError, MeshDiffError
from .mesh import CorrespondedPair, classify_vertices, load_mesh, mean_edge_length, read_index_file, save_mesh
from .pyramid import build_pyramid, load_pyramid, pyramid_key, save_pyramid
from .registration import RegistrationConfig, prepare, refine

log = logging.getLogger("meshdiff")

EXIT_OK, EXIT_USER, EXIT_NUMERIC = 0, 1, 2


class UserError(Exception):
    pass


class NumericalFailure(Exception):
    pass


def _bool(text) -> bool:
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(text)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USER, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------------------
# config handling

# option name -> (type, default); flags for these default to None so that a
# config file value can fill the gap before the hard default applies
TUNABLES = {
    "mode": (str, "full"),
    "epsilon": (float, 1e-3),
    "max_iterations": (int, 1000),
    "levels": (int, 4),
    "lam_max": (float, 1.0),
    "lam_min": (float, 0.1),
    "sigma": (float, None),
    "geodesic": (str, "dijkstra"),
    "fixed_reaction": (_bool, False),
    "seed": (int, 0),
    "threads": (int, None),
}


def read_config(path) -> dict[str, str]:
    """Flat ``key = value`` file; ``#`` starts a comment, dashes in keys read as underscores."""
    out = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UserError(f"--config: cannot read {path}: {exc.strerror}") from None
    for lineno, raw in enumerate(text.splitlines(), 1):
        body = raw.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise UserError(f"{path}:{lineno}: expected key=value, got {raw.strip()!r}")
        key, value = (s.strip() for s in body.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def resolve(args, file_cfg: dict[str, str]) -> dict:
    """Merge flag > config file > default for every tunable the command knows about."""
    merged = {}
    for name, (kind, default) in TUNABLES.items():
        if not hasattr(args, name):
            continue
        val = getattr(args, name)
        if val is None and name in file_cfg:
            try:
                val = kind(file_cfg[name])
            except ValueError:
                raise UserError(f"config key {name}: cannot parse {file_cfg[name]!r} as {kind.__name__}") from None
        merged[name] = default if val is None else val
    unknown = set(file_cfg) - set(TUNABLES)
    for key in sorted(unknown):
        log.warning("ignoring unknown config key %r", key)
    return merged


def registration_config(opts: dict) -> RegistrationConfig:
    opts = {**{k: d for k, (_, d) in TUNABLES.items()}, **opts}
    cfg = RegistrationConfig(
        epsilon=opts["epsilon"], max_iterations=opts["max_iterations"], mode=opts["mode"],
        lam_max=opts["lam_max"], lam_min=opts["lam_min"], sigma=opts["sigma"], levels=opts["levels"],
        geodesic=opts["geodesic"], fixed_reaction=opts["fixed_reaction"],
    )
    return cfg.validate()


def thread_limit(args):
    """Cap BLAS/OpenMP pools from ``--threads`` or ``MESHDIFF_THREADS``."""
    n = getattr(args, "threads", None)
    if n is None and os.environ.get("MESHDIFF_THREADS"):
        try:
            n = int(os.environ["MESHDIFF_THREADS"])
        except ValueError:
            raise UserError("MESHDIFF_THREADS must be an integer") from None
    if n is None:
        return contextlib.nullcontext()
    if n < 1:
        raise UserError("--threads must be >= 1")
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:  # pragma: no cover - threadpoolctl ships with most scientific stacks
        log.warning("threadpoolctl unavailable; --threads has no effect")
        return contextlib.nullcontext()
    return threadpool_limits(limits=n)


def _need_file(path, flag):
    if path is None:
        raise UserError(f"{flag} is required")
    if not Path(path).is_file():
        raise UserError(f"{flag}: no such file: {path}")
    return Path(path)


def _load(path, flag):
    return load_mesh(_need_file(path, flag))


def _indices(path, flag):
    if path is None:
        return np.zeros(0, dtype=np.int64)
    return read_index_file(_need_file(path, flag))


def _fmt(x) -> str:
    return f"{x:.6g}"


# ---------------------------------------------------------------------------
# commands

def cmd_line_demo(args, opts):
    if args.preset is not None:
        a, b = line.PRESETS[args.preset]
    else:
        if not args.template_points or not args.target_points:
            raise UserError("line-demo needs --preset or both --template-points and --target-points")
        a = [float(x) for x in args.template_points.split(",")]
        b = [float(x) for x in args.target_points.split(",")]
    cfg = line.LineConfig(a, b, threshold=args.threshold, max_iterations=opts["max_iterations"])
    result = line.segment_line(cfg, mr=args.mr)
    sys.stdout.write(line.snapshots_to_csv(result))
    if args.strict and not result.converged:
        raise NumericalFailure("line segmentation did not converge")


def cmd_refine(args, opts):
    template = _load(args.template, "--template")
    target = _load(args.target, "--target")
    raw = _load(args.raw, "--raw") if args.raw else target
    cls = classify_vertices(template, _indices(args.landmarks, "--landmarks"),
                            _indices(args.non_interested, "--non-interested"))
    cfg = registration_config(opts)
    pair = CorrespondedPair(template, target, raw)
    pyramid = None
    if cfg.mode == "mr" and args.pyramid:
        pyramid = load_pyramid(_need_file(args.pyramid, "--pyramid"), pyramid_key(template, cls, cfg.levels))
    ctx = prepare(template, cls, cfg, pyramid)
    out, trace = refine(pair, config=cfg, context=ctx)
    mel = ctx.mean_edge_length
    moved = np.linalg.norm(out.vertices - target.vertices, axis=1)[cls.free]
    print(f"status: {trace.status}")
    print(f"iterations: {trace.iterations} (per level: {trace.iterations_per_level()})")
    print(f"final mean offset: {_fmt(trace.records[-1].mean_offset) if trace.records else 'n/a'} "
          f"({_fmt(trace.records[-1].mean_offset / mel) if trace.records else 'n/a'} x mel)")
    if moved.size:
        print(f"mean vertex displacement: {_fmt(moved.mean())} ({_fmt(moved.mean() / mel)} x mel)")
    print(f"template mean edge length: {_fmt(mel)}")
    print(f"wall time: {trace.wall_time:.3f} s")
    if args.out:
        save_mesh(out, args.out)
    if args.trace:
        Path(args.trace).write_text(trace.to_csv())
    if args.strict and not trace.converged:
        raise NumericalFailure("registration did not converge")


def cmd_metric(args, opts):
    ref = _load(args.reference, "--reference")
    a = _load(args.a, "--a")
    b = _load(args.b, "--b")
    q = metric.similarity_scores(a, b)
    d = metric.global_distance(a, b, metric.edge_weights(ref))
    local = metric.local_distance(a, b)
    print(f"edges: {len(q)}")
    print(f"Q (b/a edge ratio): min {_fmt(q.min())} mean {_fmt(q.mean())} max {_fmt(q.max())}")
    print(f"local distance: mean {_fmt(local.mean())} max {_fmt(local.max())}")
    print(f"D: {d!r}")
    if args.heatmap:
        e, v = metric.heatmap_export(a, b, args.heatmap)
        print(f"wrote {e} and {v}")


def cmd_pyramid(args, opts):
    template = _load(args.template, "--template")
    cls = classify_vertices(template, _indices(args.landmarks, "--landmarks"),
                            _indices(args.non_interested, "--non-interested"))
    if args.out is None:
        raise UserError("--out is required")
    cfg = registration_config(opts)
    from .registration import weighted_classification
    pyr = build_pyramid(template, weighted_classification(template, cls, cfg), cfg.levels)
    save_pyramid(pyr, args.out)
    print("level,free,fixed")
    for j, (f, x) in enumerate(zip(pyr.free_counts(), pyr.fixed_counts())):
        print(f"{j},{f},{x}")


def _write_report(text, out):
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def cmd_eval(args, opts):
    if args.eval_mode == "metric-batch":
        template = _load(args.template, "--template")
        corpus = evaluation.MeshCorpus.from_manifest(_need_file(args.manifest, "--manifest"))
        report = evaluation.batch_global_metric(corpus, template)
        _write_report(report.to_csv(), args.out)
    elif args.eval_mode == "pca":
        corpus = evaluation.MeshCorpus.from_manifest(_need_file(args.manifest, "--manifest"))
        if args.test_manifest:
            train = corpus
            test = evaluation.MeshCorpus.from_manifest(_need_file(args.test_manifest, "--test-manifest"))
        elif corpus.split:
            train, test = corpus.subset("train"), corpus.subset("test")
        else:
            train = test = corpus
        model = evaluation.fit_pca(train)
        counts = range(0, model.n_components + 1) if args.components is None else \
            [int(c) for c in args.components.split(",")]
        _write_report(evaluation.pca_report(model, test, counts, args.samples, opts["seed"]), args.out)
    elif args.eval_mode == "noise-sweep":
        template = _load(args.template, "--template")
        target = _load(args.target, "--target")
        raw = _load(args.raw, "--raw") if args.raw else target
        cls = classify_vertices(template, _indices(args.landmarks, "--landmarks"),
                                _indices(args.non_interested, "--non-interested"))
        sigmas = [float(s) for s in args.sigmas.split(",")]
        if any(s < 0 for s in sigmas):
            raise UserError("--sigmas must be non-negative")
        cfg = registration_config(opts)
        rows = evaluation.noise_sweep(CorrespondedPair(template, target, raw), cls, cfg, sigmas, opts["seed"])
        mel = mean_edge_length(template)
        lines = ["sigma_mel,sigma,mean_error_mel,mean_error,converged,iterations"]
        lines += [f"{r.sigma!r},{r.sigma * mel!r},{r.mean_error!r},{r.mean_error * mel!r},"
                  f"{int(r.converged)},{r.iterations}" for r in rows]
        _write_report("\n".join(lines) + "\n", args.out)
        if args.strict and not all(r.converged for r in rows):
            raise NumericalFailure("some noisy refinements did not converge")


# ---------------------------------------------------------------------------
# parser

def _add_common(p, tunables=()):
    p.add_argument("--config", help="key=value file; explicit flags take precedence")
    p.add_argument("--threads", type=int, help="cap on worker threads (env MESHDIFF_THREADS)")
    p.add_argument("--strict", action="store_true", help="exit 2 if an iteration does not converge")
    p.add_argument("-v", "--verbose", action="store_true")
    for name in tunables:
        kind, default = TUNABLES[name]
        flag = "--" + name.replace("_", "-")
        if kind is _bool:
            p.add_argument(flag, action="store_const", const=True, default=None,
                           help="feed fixed-vertex offsets into the diffusion right-hand side")
            continue
        extra = {"choices": ["full", "mr"]} if name == "mode" else {}
        if name == "geodesic":
            extra = {"choices": ["dijkstra", "heat"]}
        p.add_argument(flag, type=kind, default=None, help=f"default: {default}", **extra)


REG_TUNABLES = ("mode", "epsilon", "max_iterations", "levels", "lam_max", "lam_min", "sigma", "geodesic",
                "fixed_reaction")


def _add_classification(p):
    p.add_argument("--landmarks", help="file of 0-based landmark vertex indices")
    p.add_argument("--non-interested", dest="non_interested", help="file of 0-based excluded vertex indices")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="meshdiff", description="Dense mesh registration refinement by dividing and diffusing.")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("refine", help="refine a corresponded target against a template")
    p.add_argument("--template")
    p.add_argument("--target")
    p.add_argument("--raw", help="raw target surface to project onto (default: the target itself)")
    _add_classification(p)
    p.add_argument("--pyramid", help="precomputed pyramid file (mr mode)")
    p.add_argument("--out", help="refined OBJ output")
    p.add_argument("--trace", help="per-iteration CSV output")
    _add_common(p, REG_TUNABLES)
    p.set_defaults(func=cmd_refine)

    p = sub.add_parser("metric", help="global scale distance between two corresponded meshes")
    p.add_argument("--reference")
    p.add_argument("--a")
    p.add_argument("--b")
    p.add_argument("--heatmap", help="prefix for per-edge and per-vertex CSV files")
    _add_common(p)
    p.set_defaults(func=cmd_metric)

    p = sub.add_parser("line-demo", help="1D proportional segmentation snapshots as CSV")
    p.add_argument("--preset", choices=sorted(line.PRESETS))
    p.add_argument("--template-points", dest="template_points", help="comma-separated ascending values")
    p.add_argument("--target-points", dest="target_points", help="comma-separated values")
    p.add_argument("--mr", action="store_true", help="unlock points tier by tier")
    p.add_argument("--threshold", type=float, default=None)
    _add_common(p, ("max_iterations",))
    p.set_defaults(func=cmd_line_demo)

    p = sub.add_parser("pyramid", help="precompute and save the multi-resolution pyramid")
    p.add_argument("--template")
    _add_classification(p)
    p.add_argument("--out")
    _add_common(p, ("levels", "lam_max", "lam_min", "sigma", "geodesic"))
    p.set_defaults(func=cmd_pyramid)

    p = sub.add_parser("eval", help="batch evaluation reports")
    modes = p.add_subparsers(dest="eval_mode", parser_class=_Parser)
    q = modes.add_parser("metric-batch", help="global distance of each corpus mesh to the template")
    q.add_argument("--template")
    q.add_argument("--manifest", help="id<TAB>path lines")
    q.add_argument("--out")
    _add_common(q)
    q = modes.add_parser("pca", help="compactness, generalization and specificity")
    q.add_argument("--manifest", help="training corpus (id<TAB>path[<TAB>train|test])")
    q.add_argument("--test-manifest", dest="test_manifest")
    q.add_argument("--components", help="comma-separated component counts (default: all)")
    q.add_argument("--samples", type=int, default=100)
    q.add_argument("--out")
    _add_common(q, ("seed",))
    q = modes.add_parser("noise-sweep", help="refine noisy copies and compare with the clean run")
    q.add_argument("--template")
    q.add_argument("--target")
    q.add_argument("--raw")
    _add_classification(q)
    q.add_argument("--sigmas", default="0.1,0.25,0.5", help="noise levels in mean edge lengths")
    q.add_argument("--out")
    _add_common(q, REG_TUNABLES + ("seed",))
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:       # --help (0) or a usage error (1)
        return int(exc.code or 0)
    if args.command is None:
        parser.print_usage(sys.stderr)
        print("meshdiff: error: a command is required", file=sys.stderr)
        return EXIT_USER
    if args.command == "eval" and args.eval_mode is None:
        print("meshdiff eval: error: choose metric-batch, pca or noise-sweep", file=sys.stderr)
        return EXIT_USER
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        file_cfg = read_config(args.config) if args.config else {}
        opts = resolve(args, file_cfg)
        if "threads" not in opts:
            opts["threads"] = None
        args.threads = opts.get("threads")
        with thread_limit(args):
            args.func(args, opts)
    except UserError as exc:
        print(f"meshdiff: error: {exc}", file=sys.stderr)
        return EXIT_USER
    except NumericalFailure as exc:
        print(f"meshdiff: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except FactorizationError as exc:
        print(f"meshdiff: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (MeshDiffError, OSError) as exc:
        print(f"meshdiff: error: {exc}", file=sys.stderr)
        return EXIT_USER
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
