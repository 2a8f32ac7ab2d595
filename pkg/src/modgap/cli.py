"""Command-line entry point: ``modgap <subcommand> [options]``.

Every subcommand writes a ``report_v1`` JSON envelope to stdout (or
``--out``). Exit status is 0 on success, 2 for invalid input and 3 when a
numerical routine fails.
"""

from __future__ import annotations

import argparse
import math
import os
import sys

import numpy as np

from . import alignment, convergence, descent, evaluation, gap_analysis, io, specfun, vmf
from .geometry import PairedConfig, make_hyperplane_pair

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_NUMERIC = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def _angle_fields(rad: float, name: str) -> dict:
    return {f"{name}_rad": rad, f"{name}_deg": math.degrees(rad)}


def _parse_grid(text: str) -> list:
    """``"10:80:10"`` (start:stop:step, inclusive, degrees) or ``"10,20,45"`` to radians."""
    if ":" in text:
        lo, hi, st = (float(v) for v in text.split(":"))
        if st <= 0:
            raise ValueError("grid step must be > 0")
        vals = np.arange(lo, hi + 0.5 * st, st)
    else:
        vals = [float(v) for v in text.split(",") if v.strip()]
    return [math.radians(v) for v in vals]


def _cutoffs(text: str) -> list:
    return [int(v) for v in text.split(",") if v.strip()]


def _load(args, path):
    loaded = io.read_embeddings(path, args.format, normalize=args.normalize, header=args.csv_header)
    return loaded


def _load_pair(args):
    lx, ly = _load(args, args.x), _load(args, args.y)
    cfg = PairedConfig(lx.matrix, ly.matrix)
    info = {"max_norm_deviation_x": lx.max_norm_deviation, "max_norm_deviation_y": ly.max_norm_deviation}
    return cfg, info


def _write_pair(args, cfg: PairedConfig):
    written = {}
    for side, path in (("x", args.out_x), ("y", args.out_y)):
        if path:
            io.write_embeddings(path, getattr(cfg, side), args.format if args.format else None)
            written[side] = path
    return written


# ---------------------------------------------------------------------------
# Subcommand handlers; each returns the report body.


def cmd_gap(args):
    cfg, info = _load_pair(args)
    return {**gap_analysis.modality_gap(cfg).to_dict(), "input": info}


def cmd_similarity(args):
    cfg, _ = _load_pair(args)
    stats = gap_analysis.similarity_stats(cfg, args.max_negatives, seed=args.seed)
    if args.hist_prefix:
        for name, pop in stats.items():
            io.write_histogram_csv(f"{args.hist_prefix}{name}.csv", pop.edges, pop.hist)
    return {k: v.to_dict() for k, v in stats.items()}


def cmd_collapse(args):
    m = _load(args, args.input).matrix
    rep = gap_analysis.detect_collapse(m, centered=args.centered, threshold=args.threshold)
    body = rep.to_dict()
    theta = gap_analysis.theta_c_histogram(m)
    body["theta_c"] = theta.to_dict()
    if args.hist_csv:
        io.write_histogram_csv(args.hist_csv, theta.edges, theta.counts)
    return body


def cmd_shared_space(args):
    cfg, _ = _load_pair(args)
    return gap_analysis.estimate_shared_space(cfg, args.var_threshold, args.eps).to_dict()


def cmd_ssp(args):
    cfg, _ = _load_pair(args)
    out, rep = alignment.ssp(cfg, alignment.SspConfig(args.var_threshold, args.eps, args.k))
    body = rep.to_dict()
    body["written"] = _write_pair(args, out)
    return body


def cmd_translate(args):
    cfg, _ = _load_pair(args)
    out = alignment.translate_baseline(cfg, args.lam)
    return {
        "lambda": args.lam,
        "gap_before": gap_analysis.modality_gap(cfg).to_dict(),
        "gap_after": gap_analysis.modality_gap(out).to_dict(),
        "written": _write_pair(args, out),
    }


def cmd_remove_dims(args):
    cfg, _ = _load_pair(args)
    out = alignment.remove_dims_baseline(cfg, args.k)
    return {
        "k": args.k,
        "gap_before": gap_analysis.modality_gap(cfg).to_dict(),
        "gap_after": gap_analysis.modality_gap(out).to_dict(),
        "written": _write_pair(args, out),
    }


def cmd_check_align(args):
    cfg, _ = _load_pair(args)
    chk = alignment.check_alignment(cfg, args.tol)
    return {**chk.to_dict(), "ims_tol": args.tol, "ims_passed": chk.ims_max_deviation <= args.tol}


def cmd_eval_classify(args):
    images = evaluation.LabeledEmbeddings(_load(args, args.images).matrix, io.read_labels(args.labels))
    classes = _load(args, args.classes).matrix
    return evaluation.zero_shot_classify(images, classes, _cutoffs(args.cutoffs)).to_dict()


def cmd_eval_retrieve(args):
    cfg, _ = _load_pair(args)
    i2t, t2i = evaluation.cross_modal_retrieve(cfg, _cutoffs(args.cutoffs))
    return {"img2txt": i2t.to_dict(), "txt2img": t2i.to_dict()}


def cmd_sample_vmf(args):
    if args.mean:
        c = np.array([float(v) for v in args.mean.split(",")])
        if c.size != args.h:
            raise ValueError(f"--mean has {c.size} entries, expected {args.h}")
        c = c / np.linalg.norm(c)
    else:
        c = np.zeros(args.h)
        c[0] = 1.0
    m = vmf.sample(vmf.VmfParams(c, args.kappa), args.n, seed=args.seed)
    if args.out_emb:
        io.write_embeddings(args.out_emb, m)
    est = vmf.estimate_params(m) if args.n >= 2 else None
    return {
        "n": args.n,
        "h": args.h,
        "kappa": args.kappa,
        "written": args.out_emb,
        "kappa_hat": None if est is None else est.kappa,
        "halfspace_prob": vmf.halfspace_prob(args.h, args.kappa),
    }


def cmd_verify_theorem(args):
    which = f"T{args.which}"
    kx = args.kappa_x if args.kappa_x is not None else args.kappa
    ky = args.kappa_y if args.kappa_y is not None else args.kappa
    subspace = which in ("T3", "T4")
    scn = convergence.ConvergenceScenario(
        h=args.h,
        tau=args.tau,
        kappa_x=kx,
        kappa_y=ky,
        constraint="subspace" if subspace else "ambient",
        n=args.n,
        replicates=args.replicates,
        seed=args.seed,
        phi=math.radians(args.phi if args.phi is not None else 30.0) if which == "T4" else None,
        pair_seed=args.pair_seed,
    )
    grid_text = args.grid or (args.phi_grid if which == "T3" else None)
    grid = _parse_grid(grid_text) if grid_text else None
    rep = convergence.verify_theorem_mc(scn, which, grid)
    body = rep.to_dict()
    if which == "T1":
        m, se = convergence.t1_permuted_mc(scn)
        body["permuted"] = {"mc_mean": m, "mc_stderr": se, "exceeds_bound": m > rep.grid[0].analytic}
    return body


def cmd_simulate_descent(args):
    constraint = "ambient"
    if args.constraint == "subspace":
        constraint = make_hyperplane_pair(args.h, math.radians(args.phi), seed=args.seed)
    cfg = descent.DescentConfig(
        h=args.h,
        n=args.n,
        tau=args.tau,
        steps=args.steps,
        learning_rate=args.lr,
        seed=args.seed,
        constraint=constraint,
        kappa_x=args.kappa,
        kappa_y=args.kappa,
        delta0=math.radians(args.delta0),
        log_every=args.log_every,
    )
    traj = descent.run_descent(cfg)
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            traj.to_csv(fh)
    last = traj.final
    body = {
        "final_step": last.step,
        "final_loss": last.loss,
        **_angle_fields(last.delta_theta, "final_delta_theta"),
        "final_mean_pair_cos": last.mean_pair_cos,
        "final_violations": last.violations,
        "trajectory_csv": args.csv,
        "rows": len(traj.rows),
    }
    if traj.pair is not None:
        body["max_shared_deviation"] = traj.max_shared_deviation()
    if args.gradient_check:
        body["gradient_check_max_rel_error"] = descent.gradient_check(cfg, args.gradient_check)
    return body


_SPECFUN = {
    "log_bessel_i": lambda a: specfun.log_bessel_i(a.nu, a.x),
    "log_bessel_norm": lambda a: specfun.log_bessel_norm(a.nu, a.x),
    "bessel_ratio": lambda a: specfun.bessel_ratio(a.nu, a.x),
    "log_struve_l": lambda a: specfun.log_struve_l(a.nu, a.x),
    "halfspace_prob": lambda a: vmf.halfspace_prob(a.h, a.kappa),
    "uniform_partition_z": lambda a: specfun.uniform_partition_z(a.h, a.tau),
    "dot_marginal_density": lambda a: specfun.dot_marginal_density(a.x, a.h),
    "thm1_bound": lambda a: convergence.thm1_bound(a.h, a.tau),
}


def cmd_specfun_eval(args):
    needs = {
        "log_bessel_i": ("nu", "x"),
        "log_bessel_norm": ("nu", "x"),
        "bessel_ratio": ("nu", "x"),
        "log_struve_l": ("nu", "x"),
        "halfspace_prob": ("h", "kappa"),
        "uniform_partition_z": ("h", "tau"),
        "dot_marginal_density": ("h", "x"),
        "thm1_bound": ("h", "tau"),
    }[args.fn]
    missing = [n for n in needs if getattr(args, n) is None]
    if missing:
        raise ValueError(f"{args.fn} needs --{' --'.join(missing)}")
    return {"fn": args.fn, "args": {n: getattr(args, n) for n in needs}, "value": float(_SPECFUN[args.fn](args))}


# ---------------------------------------------------------------------------


def _input_opts(p, pair=True):
    if pair:
        p.add_argument("--x", required=True, help="image embeddings")
        p.add_argument("--y", required=True, help="text embeddings")
    p.add_argument("--format", choices=("emb1", "csv"), default=None, help="default: from the file extension")
    p.add_argument("--normalize", action="store_true", help="rescale rows to unit norm on load")
    p.add_argument("--csv-header", action="store_true", help="CSV inputs start with a header row")


def _output_pair_opts(p):
    p.add_argument("--out-x")
    p.add_argument("--out-y")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", help="write the report here instead of stdout")
    common.add_argument("--deterministic", action="store_true", help="omit timestamps from the report")
    common.add_argument("--threads", type=int, default=None, help="BLAS threads (default: MG_THREADS or all cores)")

    parser = _Parser(prog="modgap", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, fn, help_):
        p = sub.add_parser(name, parents=[common], help=help_)
        p.set_defaults(func=fn)
        return p

    p = add("gap", cmd_gap, "mean difference and center angle")
    _input_opts(p)

    p = add("similarity", cmd_similarity, "cosine-similarity populations")
    _input_opts(p)
    p.add_argument("--max-negatives", type=int, default=gap_analysis.DEFAULT_NEGATIVE_CAP)
    p.add_argument("--hist-prefix", help="write <prefix><population>.csv histograms")

    p = add("collapse", cmd_collapse, "singular-value spectrum and angle-to-center histogram")
    p.add_argument("--input", required=True)
    _input_opts(p, pair=False)
    p.add_argument("--centered", action="store_true")
    p.add_argument("--threshold", type=float, default=0.99)
    p.add_argument("--hist-csv")

    p = add("shared-space", cmd_shared_space, "estimate the shared subspace")
    _input_opts(p)
    p.add_argument("--var-threshold", type=float, default=0.99)
    p.add_argument("--eps", type=float, default=1e-3)

    p = add("ssp", cmd_ssp, "shared space projection")
    _input_opts(p)
    _output_pair_opts(p)
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--var-threshold", type=float, default=0.99)
    p.add_argument("--eps", type=float, default=1e-3)

    p = add("translate", cmd_translate, "translation baseline")
    _input_opts(p)
    _output_pair_opts(p)
    p.add_argument("--lam", type=float, default=1.0)

    p = add("remove-dims", cmd_remove_dims, "dimension-removal baseline")
    _input_opts(p)
    _output_pair_opts(p)
    p.add_argument("--k", type=int, required=True)

    p = add("check-align", cmd_check_align, "perfect alignment and intra-modal isometry")
    _input_opts(p)
    p.add_argument("--tol", type=float, default=1e-6)

    p = add("eval-classify", cmd_eval_classify, "zero-shot classification accuracy")
    p.add_argument("--images", required=True)
    p.add_argument("--labels", required=True, help="one integer per line")
    p.add_argument("--classes", required=True)
    _input_opts(p, pair=False)
    p.add_argument("--cutoffs", default="1,5")

    p = add("eval-retrieve", cmd_eval_retrieve, "cross-modal retrieval recall")
    _input_opts(p)
    p.add_argument("--cutoffs", default="1,5,10")

    p = add("sample-vmf", cmd_sample_vmf, "draw vMF samples")
    p.add_argument("--h", type=int, required=True)
    p.add_argument("--kappa", type=float, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--mean", help="comma-separated mean direction (default e_1)")
    p.add_argument("--out-emb", help="write samples to this EMB1/CSV file")

    p = add("verify-theorem", cmd_verify_theorem, "Monte-Carlo check of a limit formula")
    p.add_argument("--which", choices=("1", "2", "3", "4"), required=True)
    p.add_argument("--h", type=int, required=True)
    p.add_argument("--tau", type=float, default=0.5)
    p.add_argument("--kappa", type=float, default=4.0)
    p.add_argument("--kappa-x", type=float, default=None)
    p.add_argument("--kappa-y", type=float, default=None)
    p.add_argument("--n", type=int, default=8192)
    p.add_argument("--replicates", type=int, default=32)
    p.add_argument("--grid", help="degrees, start:stop:step or comma list")
    p.add_argument("--phi-grid", help="alias of --grid for --which 3")
    p.add_argument("--phi", type=float, default=None, help="hyperplane angle in degrees (--which 4)")
    p.add_argument("--pair-seed", type=int, default=0)

    p = add("simulate-descent", cmd_simulate_descent, "projected gradient descent of the loss")
    p.add_argument("--h", type=int, default=8)
    p.add_argument("--n", type=int, default=256)
    p.add_argument("--tau", type=float, default=0.5)
    p.add_argument("--steps", type=int, default=4000)
    p.add_argument("--lr", type=float, default=0.5)
    p.add_argument("--constraint", choices=("ambient", "subspace"), default="ambient")
    p.add_argument("--phi", type=float, default=30.0, help="hyperplane angle in degrees")
    p.add_argument("--delta0", type=float, default=60.0, help="initial center angle in degrees")
    p.add_argument("--kappa", type=float, default=10.0)
    p.add_argument("--log-every", type=int, default=100)
    p.add_argument("--csv", help="write the trajectory CSV here")
    p.add_argument("--gradient-check", type=int, default=0, metavar="PROBES")

    p = add("specfun-eval", cmd_specfun_eval, "evaluate one special function")
    p.add_argument("--fn", choices=sorted(_SPECFUN), required=True)
    p.add_argument("--nu", type=float)
    p.add_argument("--x", type=float)
    p.add_argument("--h", type=int)
    p.add_argument("--kappa", type=float)
    p.add_argument("--tau", type=float)
    return parser


def _set_threads(n):
    if n is None:
        env = os.environ.get("MG_THREADS")
        n = int(env) if env else None
    if n is None:
        return None
    if n < 1:
        raise ValueError("thread count must be >= 1")
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:
        return n
    threadpool_limits(n)
    return n


def _params(args) -> dict:
    skip = {"func", "command", "out", "deterministic"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    started = io._now()
    try:
        args.threads = _set_threads(args.threads)
        body = args.func(args)
    except (descent.DivergenceDetected, FloatingPointError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"modgap {args.command}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, OSError, KeyError) as exc:
        print(f"modgap {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INVALID
    env = io.make_envelope(args.command, _params(args), body, started=started, deterministic=args.deterministic)
    text = io.dumps_envelope(env)
    if args.out:
        io.write_text(args.out, text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
