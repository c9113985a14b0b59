"""Command-line entry point: ``scbnb {solve,table,success,recover,theory,rerun}``.

Exit codes: 0 success/converged, 1 usage or input error, 2 iteration cap
reached without convergence. Every run writes ``manifest.json`` next to its
outputs; ``scbnb rerun manifest.json`` replays it.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .harness import (
    COMPARISON_COLUMNS,
    SUCCESS_COLUMNS,
    TRIAL_COLUMNS,
    ComparisonSpec,
    RecoverySpec,
    SuccessRateSpec,
    ensure_dir,
    run_comparison,
    run_recovery,
    run_success_grid,
    solver_seed,
    start_dual,
    system_seed,
    write_curve,
    write_rows,
)
from .problems import KINDS, LIN_DISTS, generate_quadratic_system, load_system, save_system, write_pgm
from .solvers import METHODS, SolverConfig, run_solver
from .theory import (
    TheoryConstants,
    admissible_eta_interval,
    contraction_factor,
    estimate_spectral_bounds,
    theory_report,
    verify_lemma_chain,
    write_theory_report,
)

OUTPUT_ENV = "SCBNB_OUTPUT_DIR"
EXIT_OK, EXIT_USAGE, EXIT_CAP = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


@dataclass
class RunManifest:
    subcommand: str
    argv: list
    params: dict
    seed: int | None
    outputs: list = field(default_factory=list)
    version: str = __version__

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "RunManifest":
        return cls(**json.loads(text))

    def write(self, out_dir: Path) -> Path:
        path = out_dir / "manifest.json"
        path.write_text(self.to_json())
        return path


def parse_range(text: str, cast=float) -> list:
    """'a:step:b' (inclusive, MATLAB style) or a comma list."""
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise argparse.ArgumentTypeError(f"range must be a:step:b, got {text!r}")
        a, step, b = (float(p) for p in parts)
        if step <= 0 or b < a:
            raise argparse.ArgumentTypeError(f"bad range {text!r}")
        count = int(np.floor((b - a) / step + 1e-9)) + 1
        return [cast(round(a + k * step, 12)) for k in range(count)]
    try:
        return [cast(p) for p in text.split(",") if p]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def parse_sizes(text: str) -> list:
    sizes = []
    for item in text.split(","):
        try:
            m, n = item.lower().split("x")
            sizes.append((int(m), int(n)))
        except ValueError as exc:
            raise argparse.ArgumentTypeError(f"size must look like 200x100, got {item!r}") from exc
    return sizes


def _methods(text: str) -> list:
    out = [m.strip().lower() for m in text.split(",") if m.strip()]
    for m in out:
        if m not in METHODS:
            raise argparse.ArgumentTypeError(f"unknown method {m!r}; choose from {', '.join(METHODS)}")
    return out


def _out_dir(args) -> Path:
    return ensure_dir(args.out or os.environ.get(OUTPUT_ENV) or "results")


def _positive(name, value):
    if value <= 0:
        raise UsageError(f"--{name} must be positive, got {value}")


def _write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def cmd_solve(args, argv) -> int:
    out = _out_dir(args)
    if args.load_problem:
        try:
            sys_ = load_system(args.load_problem)
        except (OSError, ValueError, KeyError) as exc:
            raise UsageError(f"cannot read problem file {args.load_problem}: {exc}") from exc
        m, n = sys_.m, sys_.n
    else:
        for name in ("m", "n"):
            _positive(name, getattr(args, name))
        if not 0 < args.sp <= 1:
            raise UsageError(f"--sp must lie in (0, 1], got {args.sp}")
        m, n = args.m, args.n
        sys_ = generate_quadratic_system(m, n, args.sp, args.kind,
                                         seed=system_seed(args.seed, args.kind, m, n, args.sp, 0),
                                         lin_dist=args.lin_dist)
    kind = sys_.kind if sys_.kind in KINDS else "gaussian"
    x0_star = None
    if args.init == "normal":
        x0_star = start_dual(args.seed, kind, m, n, args.sp, 0)
    cfg = SolverConfig(method=args.method, delta=args.delta, gamma=args.gamma, block_size=args.q,
                       lam=args.lam, tol=args.tol, max_iters=args.max_iters, init=args.init,
                       seed=solver_seed(args.seed, kind, m, n, args.sp, 0, args.method))
    try:
        cfg.validate(n)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    report = run_solver(sys_, cfg, ground_truth=sys_.ground_truth, x0_star=x0_star)

    outputs = []
    if args.save_problem:
        save_system(args.save_problem, sys_)
        outputs.append(str(args.save_problem))
    summary = report.summary()
    summary["m"], summary["n"] = m, n
    if args.format == "json":
        summary["residual_history"] = [float(v) for v in report.residual_history]
        summary["bregman_history"] = [float(v) for v in report.bregman_history]
    else:
        report.write_csv(out / "report.csv")
        outputs.append(str(out / "report.csv"))
    _write_json(out / "report.json", summary)
    outputs.append(str(out / "report.json"))
    RunManifest("solve", argv, vars_clean(args), args.seed, outputs).write(out)
    status = "converged" if report.converged else "iteration cap reached"
    print(f"{args.method}: IT={report.iterations} rel_res={report.final_relative_residual:.3e} ({status})")
    return EXIT_OK if report.converged else EXIT_CAP


def cmd_table(args, argv) -> int:
    out = _out_dir(args)
    for m, n in args.sizes:
        _positive("sizes", min(m, n))
    trials = 1 if args.single_run else args.trials
    _positive("trials", trials)
    params = {"scbnb": {"delta": args.delta}}
    spec = ComparisonSpec(sizes=args.sizes, sparsities=args.sp, matrix_kind=args.kind, methods=args.methods,
                          method_params=params, lam=args.lam, tol=args.tol, max_iters=args.max_iters,
                          trials=trials, base_seed=args.seed, block_size=args.q)
    result = run_comparison(spec, jobs=args.jobs)
    outputs = _emit(out, "table", result.cells, COMPARISON_COLUMNS, args.format)
    outputs += _emit(out, "trials", result.trials, TRIAL_COLUMNS, args.format)
    RunManifest("table", argv, vars_clean(args), args.seed, outputs).write(out)
    for c in result.cells:
        it = "--" if c["failed"] else c["median_IT"]
        print(f"{c['m']:>5} {c['n']:>5} {c['sp']:<5} {c['method']:<7} IT={it}")
    return EXIT_OK


def cmd_success(args, argv) -> int:
    out = _out_dir(args)
    _positive("m", args.m)
    _positive("trials", args.trials)
    spec = SuccessRateSpec(m=args.m, n_values=args.n, sp_values=args.sp, trials=args.trials,
                           iter_cap=args.cap, tol=args.tol, base_seed=args.seed, matrix_kind=args.kind,
                           methods=args.methods, method_params={"scbnb": {"delta": args.delta}}, lam=args.lam)
    grid = run_success_grid(spec, jobs=args.jobs)
    outputs = _emit(out, "success", grid, SUCCESS_COLUMNS, args.format)
    RunManifest("success", argv, vars_clean(args), args.seed, outputs).write(out)
    for r in grid:
        print(f"{r['method']:<7} n={r['n']:<4} sp={r['sp']:<5} rate={r['success_rate']:.2f}")
    return EXIT_OK


def cmd_recover(args, argv) -> int:
    out = _out_dir(args)
    _positive("m", args.m)
    spec = RecoverySpec(image_source="file" if args.image else "synthetic", image_path=args.image,
                        image_side=args.side, m=args.m, noise_level=args.noise, lam=args.lam,
                        iter_budget=args.iters, methods=args.methods,
                        method_params={"scbnb": {"delta": args.delta}}, block_size=args.q, base_seed=args.seed)
    try:
        res = run_recovery(spec)
    except (OSError, ValueError) as exc:
        raise UsageError(str(exc)) from exc
    rows = [{"method": k, "psnr": res.psnr[k], "initial_psnr": res.initial_psnr[k]} for k in spec.methods]
    outputs = _emit(out, "psnr", rows, ["method", "psnr", "initial_psnr"], args.format)
    write_pgm(out / "truth.pgm", res.truth)
    outputs.append(str(out / "truth.pgm"))
    for k in spec.methods:
        write_pgm(out / f"recovered_{k}.pgm", res.recovered[k])
        write_curve(out / f"curve_{k}.csv", res.histories[k])
        outputs += [str(out / f"recovered_{k}.pgm"), str(out / f"curve_{k}.csv")]
    RunManifest("recover", argv, vars_clean(args), args.seed, outputs).write(out)
    for r in rows:
        print(f"{r['method']:<7} PSNR={r['psnr']:.2f} dB (start {r['initial_psnr']:.2f} dB)")
    return EXIT_OK


def cmd_theory(args, argv) -> int:
    out = _out_dir(args)
    spectral = None
    lo, hi = args.sigma_min, args.sigma_max
    if args.probe_m:
        sys_ = generate_quadratic_system(args.probe_m, args.probe_n, args.probe_sp, args.kind,
                                         seed=system_seed(args.seed, args.kind, args.probe_m, args.probe_n,
                                                          args.probe_sp, 0))
        rng = np.random.default_rng(args.seed)
        probes = [sys_.ground_truth + args.probe_radius * rng.standard_normal(sys_.n) for _ in range(args.probes)]
        spectral = estimate_spectral_bounds(sys_, probes)
        if lo is None:
            lo, hi = spectral
    if lo is None or hi is None:
        raise UsageError("give --sigma-min/--sigma-max or a probe system via --probe-m/--probe-n")
    if not 0 < lo <= hi:
        raise UsageError("need 0 < sigma-min <= sigma-max")
    consts = TheoryConstants(sigma_min=lo, sigma_max=hi, eta=args.eta, tau=args.tau, m_smooth=args.M,
                             gamma=args.gamma, delta=args.delta)
    lemmas = verify_lemma_chain(args.samples, args.lam, seed=args.seed) if args.samples else None
    report = theory_report(consts, lemmas, spectral, formal_m=args.lam > 0)
    write_theory_report(out / "theory.json", report)
    RunManifest("theory", argv, vars_clean(args), args.seed, [str(out / "theory.json")]).write(out)
    interval = admissible_eta_interval(lo, hi)
    print(f"c={float(contraction_factor(consts)):.12g}")
    print(f"Q={report['derived']['Q']:.12g}")
    print("eta interval: " + ("none" if interval is None else f"(0, {float(interval[1]):.6g})"))
    if lemmas is not None:
        print(f"lemma checks: {'pass' if lemmas.passed else 'FAIL'} {lemmas.violations}")
    return EXIT_OK


def cmd_rerun(args, argv) -> int:
    try:
        manifest = RunManifest.from_json(Path(args.manifest).read_text())
    except (OSError, ValueError, TypeError) as exc:
        raise UsageError(f"cannot read manifest {args.manifest}: {exc}") from exc
    return main(manifest.argv)


def _emit(out: Path, stem: str, rows, columns, fmt) -> list:
    if fmt == "json":
        path = out / f"{stem}.json"
        _write_json(path, [{c: r.get(c) for c in columns} for r in rows])
    else:
        path = out / f"{stem}.csv"
        write_rows(path, rows, columns)
    return [str(path)]


def vars_clean(args) -> dict:
    d = {k: v for k, v in vars(args).items() if k != "func"}
    return json.loads(json.dumps(d, default=list))


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="scbnb", description="Bregman-projection solvers for sparse solutions of nonlinear systems")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, seed=True):
        sp.add_argument("--out", help=f"output directory (default ${OUTPUT_ENV} or ./results)")
        sp.add_argument("--format", choices=["csv", "json"], default="csv")
        if seed:
            sp.add_argument("--seed", type=int, default=0)

    s = sub.add_parser("solve", help="run one method on one system")
    s.add_argument("--method", choices=METHODS, required=True)
    s.add_argument("--kind", choices=KINDS, default="gaussian")
    s.add_argument("--lin-dist", choices=LIN_DISTS, default="normal")
    s.add_argument("--m", type=int, default=200)
    s.add_argument("--n", type=int, default=100)
    s.add_argument("--sp", type=float, default=0.1)
    s.add_argument("--q", type=int, default=None)
    s.add_argument("--lambda", dest="lam", type=float, default=2.0)
    s.add_argument("--delta", type=float, default=1.0)
    s.add_argument("--gamma", type=float, default=1.0)
    s.add_argument("--tol", type=float, default=1e-6)
    s.add_argument("--max-iters", type=int, default=1000)
    s.add_argument("--init", choices=["normal", "zero"], default="normal")
    s.add_argument("--save-problem")
    s.add_argument("--load-problem")
    common(s)
    s.set_defaults(func=cmd_solve)

    t = sub.add_parser("table", help="method comparison table (IT/CPU)")
    t.add_argument("--sizes", type=parse_sizes, default=parse_sizes("200x100"))
    t.add_argument("--sp", type=parse_range, default=[0.1])
    t.add_argument("--kind", choices=KINDS, default="gaussian")
    t.add_argument("--methods", type=_methods, default=list(METHODS))
    t.add_argument("--trials", type=int, default=5)
    t.add_argument("--single-run", action="store_true", help="one trial per cell")
    t.add_argument("--q", type=int, default=None)
    t.add_argument("--lambda", dest="lam", type=float, default=2.0)
    t.add_argument("--delta", type=float, default=1.5)
    t.add_argument("--tol", type=float, default=1e-6)
    t.add_argument("--max-iters", type=int, default=1000)
    t.add_argument("--jobs", type=int, default=1)
    common(t)
    t.set_defaults(func=cmd_table)

    g = sub.add_parser("success", help="success-rate grid over n and sp")
    g.add_argument("--m", type=int, default=100)
    g.add_argument("--n", type=lambda s: parse_range(s, int), default=parse_range("50:20:150", int))
    g.add_argument("--sp", type=parse_range, default=parse_range("0.05:0.05:0.15"))
    g.add_argument("--kind", choices=KINDS, default="gaussian")
    g.add_argument("--methods", type=_methods, default=list(METHODS))
    g.add_argument("--trials", type=int, default=100)
    g.add_argument("--cap", type=int, default=3000)
    g.add_argument("--tol", type=float, default=1e-6)
    g.add_argument("--lambda", dest="lam", type=float, default=2.0)
    g.add_argument("--delta", type=float, default=1.5)
    g.add_argument("--jobs", type=int, default=1)
    common(g)
    g.set_defaults(func=cmd_success)

    r = sub.add_parser("recover", help="sparse image recovery with PSNR")
    r.add_argument("--image", help="PGM file; omitted means a synthetic sparse image")
    r.add_argument("--side", type=int, default=16)
    r.add_argument("--m", type=int, default=400)
    r.add_argument("--noise", type=float, default=0.01)
    r.add_argument("--lambda", dest="lam", type=float, default=1.0)
    r.add_argument("--iters", type=int, default=1000)
    r.add_argument("--methods", type=_methods, default=["mrnbk", "rmrnbk", "scbnb"])
    r.add_argument("--q", type=int, default=None)
    r.add_argument("--delta", type=float, default=1.5)
    common(r)
    r.set_defaults(func=cmd_recover)

    th = sub.add_parser("theory", help="rate constants and lemma checks")
    th.add_argument("--sigma-min", type=float)
    th.add_argument("--sigma-max", type=float)
    th.add_argument("--eta", type=float, default=0.0)
    th.add_argument("--tau", type=int, default=1)
    th.add_argument("--M", type=float, default=1.0)
    th.add_argument("--gamma", type=float, default=1.0)
    th.add_argument("--delta", type=float, default=1.0)
    th.add_argument("--lambda", dest="lam", type=float, default=2.0)
    th.add_argument("--samples", type=int, default=1000, help="lemma fuzzing samples (0 disables)")
    th.add_argument("--probe-m", type=int)
    th.add_argument("--probe-n", type=int)
    th.add_argument("--probe-sp", type=float, default=0.1)
    th.add_argument("--probe-radius", type=float, default=0.01)
    th.add_argument("--probes", type=int, default=20)
    th.add_argument("--kind", choices=KINDS, default="gaussian")
    common(th)
    th.set_defaults(func=cmd_theory)

    rr = sub.add_parser("rerun", help="replay a run from its manifest.json")
    rr.add_argument("manifest")
    rr.set_defaults(func=cmd_rerun)
    return p


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args, argv)
    except UsageError as exc:
        print(f"scbnb: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
