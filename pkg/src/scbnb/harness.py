"""Experiment suites: method-comparison tables, success-rate grids, image recovery.

Every random quantity is seeded from the base seed and the cell coordinates
(kind, m, n, sp, trial), never from a running counter, so cells can be
evaluated in any order or in parallel with identical results. Systems are
shared by all methods within a trial so comparisons are paired.
"""
from __future__ import annotations

import csv
import math
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .problems import (
    generate_linear_sensing,
    generate_quadratic_system,
    normalize_range,
    read_pgm,
)
from .solvers import METHODS, SolverConfig, default_block_size, run_solver

PSNR_CAP = 99.0
_KIND_CODES = {"gaussian": 1, "dct": 2, "linear": 3}
_METHOD_CODES = {name: i + 1 for i, name in enumerate(METHODS)}

COMPARISON_COLUMNS = ["method", "m", "n", "sp", "trials", "converged", "median_IT", "median_CPU", "failed"]
TRIAL_COLUMNS = ["method", "m", "n", "sp", "trial", "IT", "converged", "final_relative_residual", "CPU"]
SUCCESS_COLUMNS = ["method", "m", "n", "sp", "trials", "successes", "success_rate"]


def derive_seed(base_seed: int, *key) -> int:
    """Deterministic 32-bit seed from the base seed and integer cell coordinates."""
    ss = np.random.SeedSequence([int(base_seed) & 0xFFFFFFFF, *[int(k) for k in key]])
    return int(ss.generate_state(1)[0])


def _sp_key(sp: float) -> int:
    return int(round(sp * 1_000_000))


def system_seed(base_seed, kind, m, n, sp, trial) -> int:
    return derive_seed(base_seed, _KIND_CODES[kind], m, n, _sp_key(sp), trial)


def solver_seed(base_seed, kind, m, n, sp, trial, method) -> int:
    return derive_seed(base_seed, _KIND_CODES[kind], m, n, _sp_key(sp), trial, _METHOD_CODES[method])


DEFAULT_METHOD_PARAMS = {"scbnb": {"delta": 1.5}}


@dataclass
class ComparisonSpec:
    sizes: list
    sparsities: list = field(default_factory=lambda: [0.1])
    matrix_kind: str = "gaussian"
    methods: list = field(default_factory=lambda: list(METHODS))
    method_params: dict = field(default_factory=lambda: {k: dict(v) for k, v in DEFAULT_METHOD_PARAMS.items()})
    lam: float = 2.0
    tol: float = 1e-6
    max_iters: int = 1000
    trials: int = 1
    base_seed: int = 0
    block_size: int | None = None

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        if not self.sizes:
            raise ValueError("sizes must be nonempty")
        for meth in self.methods:
            if meth not in METHODS:
                raise ValueError(f"unknown method {meth!r}")

    def solver_config(self, method, n, seed) -> SolverConfig:
        params = dict(self.method_params.get(method, {}))
        if method == "scbnb":
            params.setdefault("block_size", self.block_size or default_block_size(n))
        return SolverConfig(method=method, lam=self.lam, tol=self.tol,
                            max_iters=self.max_iters, seed=seed, **params)


@dataclass
class SuccessRateSpec:
    m: int = 100
    n_values: list = field(default_factory=lambda: [50, 70, 90, 110, 130, 150])
    sp_values: list = field(default_factory=lambda: [0.05, 0.10, 0.15])
    trials: int = 100
    iter_cap: int = 3000
    tol: float = 1e-6
    base_seed: int = 0
    matrix_kind: str = "gaussian"
    methods: list = field(default_factory=lambda: list(METHODS))
    method_params: dict = field(default_factory=lambda: {k: dict(v) for k, v in DEFAULT_METHOD_PARAMS.items()})
    lam: float = 2.0

    def solver_config(self, method, n, seed) -> SolverConfig:
        params = dict(self.method_params.get(method, {}))
        if method == "scbnb":
            params.setdefault("block_size", default_block_size(n))
        return SolverConfig(method=method, lam=self.lam, tol=self.tol, max_iters=self.iter_cap,
                            seed=seed, init="zero", **params)


@dataclass
class RecoverySpec:
    image_source: str = "synthetic"
    image_path: str | None = None
    image_side: int = 16
    density: float = 0.15
    m: int = 400
    noise_level: float = 0.01
    lam: float = 1.0
    iter_budget: int = 1000
    methods: list = field(default_factory=lambda: ["mrnbk", "rmrnbk", "scbnb"])
    method_params: dict = field(default_factory=lambda: {k: dict(v) for k, v in DEFAULT_METHOD_PARAMS.items()})
    block_size: int | None = None
    base_seed: int = 0


def start_dual(base_seed, kind, m, n, sp, trial) -> np.ndarray:
    """Standard-normal initial dual vector shared by all methods of a trial."""
    return np.random.default_rng(derive_seed(base_seed, _KIND_CODES[kind], m, n, _sp_key(sp), trial, 0)).standard_normal(n)


def _run_trial(spec: ComparisonSpec, m, n, sp, trial):
    """All methods on one generated system; returns per-trial rows."""
    kind = spec.matrix_kind
    sys = generate_quadratic_system(m, n, sp, kind, seed=system_seed(spec.base_seed, kind, m, n, sp, trial))
    x0_star = start_dual(spec.base_seed, kind, m, n, sp, trial)
    rows = []
    for method in spec.methods:
        cfg = spec.solver_config(method, n, solver_seed(spec.base_seed, kind, m, n, sp, trial, method))
        rep = run_solver(sys, cfg, x0_star=x0_star)
        rows.append({
            "method": method, "m": m, "n": n, "sp": sp, "trial": trial,
            "IT": rep.iterations, "converged": rep.converged,
            "final_relative_residual": rep.final_relative_residual, "CPU": rep.wall_time,
        })
    return rows


def _map(fn, tasks, jobs):
    if jobs and jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fn, *zip(*tasks)))
    return [fn(*t) for t in tasks]


@dataclass
class ComparisonResult:
    cells: list
    trials: list


def summarize_cell(rows, max_iters):
    """Median IT/CPU over converged trials; failed when the median run hit the cap."""
    conv = [r for r in rows if r["converged"]]
    failed = len(conv) * 2 <= len(rows) if len(rows) % 2 == 0 else len(conv) * 2 < len(rows)
    return {
        "trials": len(rows),
        "converged": len(conv),
        "median_IT": None if failed else statistics.median(r["IT"] for r in conv),
        "median_CPU": None if failed else statistics.median(r["CPU"] for r in conv),
        "failed": failed,
    }


def run_comparison(spec: ComparisonSpec, jobs: int = 1) -> ComparisonResult:
    tasks = [(spec, m, n, sp, t) for (m, n) in spec.sizes for sp in spec.sparsities for t in range(spec.trials)]
    trial_rows = [row for rows in _map(_run_trial, tasks, jobs) for row in rows]
    trial_rows.sort(key=lambda r: (r["m"], r["n"], r["sp"], spec.methods.index(r["method"]), r["trial"]))
    cells = []
    for (m, n) in spec.sizes:
        for sp in spec.sparsities:
            for method in spec.methods:
                rows = [r for r in trial_rows if (r["m"], r["n"], r["sp"], r["method"]) == (m, n, sp, method)]
                cells.append({"method": method, "m": m, "n": n, "sp": sp, **summarize_cell(rows, spec.max_iters)})
    return ComparisonResult(cells=cells, trials=trial_rows)


def _success_trial(spec: SuccessRateSpec, n, sp, trial):
    kind, m = spec.matrix_kind, spec.m
    sys = generate_quadratic_system(m, n, sp, kind, seed=system_seed(spec.base_seed, kind, m, n, sp, trial))
    out = {}
    for method in spec.methods:
        cfg = spec.solver_config(method, n, solver_seed(spec.base_seed, kind, m, n, sp, trial, method))
        out[method] = run_solver(sys, cfg).converged
    return (n, sp, trial, out)


def run_success_grid(spec: SuccessRateSpec, jobs: int = 1) -> list:
    """Fraction of trials per (method, n, sp) that reach tol within the iteration cap."""
    tasks = [(spec, n, sp, t) for n in spec.n_values for sp in spec.sp_values for t in range(spec.trials)]
    results = _map(_success_trial, tasks, jobs)
    counts = {}
    for n, sp, _, out in results:
        for method, ok in out.items():
            counts[(method, n, sp)] = counts.get((method, n, sp), 0) + int(ok)
    grid = []
    for method in spec.methods:
        for n in spec.n_values:
            for sp in spec.sp_values:
                k = counts.get((method, n, sp), 0)
                grid.append({"method": method, "m": spec.m, "n": n, "sp": sp, "trials": spec.trials,
                             "successes": k, "success_rate": k / spec.trials})
    return grid


def psnr(truth, recovered) -> float:
    """10*log10(max(truth)^2 / MSE), capped at 99 dB (also for MSE = 0)."""
    truth = np.asarray(truth, dtype=float)
    recovered = np.asarray(recovered, dtype=float)
    if truth.shape != recovered.shape:
        raise ValueError(f"shape mismatch: {truth.shape} vs {recovered.shape}")
    if not truth.any():
        raise ValueError("truth image is identically zero")
    mse = float(np.mean((truth - recovered) ** 2))
    if mse == 0.0:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * math.log10(float(truth.max()) ** 2 / mse))


def synthetic_image(side: int, density: float, rng) -> np.ndarray:
    """Sparse nonnegative 'ink' image: round(density*side^2) pixels of |N(0,1)| on a zero background."""
    rng = np.random.default_rng(rng)
    img = np.zeros(side * side)
    k = int(round(density * side * side))
    idx = rng.choice(side * side, size=k, replace=False)
    img[idx] = np.abs(rng.standard_normal(k))
    return img.reshape(side, side)


@dataclass
class RecoveryResult:
    truth: np.ndarray
    recovered: dict
    psnr: dict
    initial_psnr: dict
    histories: dict


def load_truth_image(spec: RecoverySpec) -> np.ndarray:
    if spec.image_source == "file":
        if spec.image_path is None:
            raise ValueError("image_source='file' needs image_path")
        img = read_pgm(spec.image_path)
    elif spec.image_source == "synthetic":
        img = synthetic_image(spec.image_side, spec.density, derive_seed(spec.base_seed, 7, spec.image_side))
    else:
        raise ValueError(f"unknown image source {spec.image_source!r}")
    return normalize_range(img)


def recovery_block_size(n: int) -> int:
    """Four column blocks; the dense nonnegative sensing matrix needs wide blocks."""
    return max(1, n // 4)


def run_recovery(spec: RecoverySpec) -> RecoveryResult:
    """Recover a normalized image from b = A x + e with each method for a fixed budget."""
    truth = load_truth_image(spec)
    n = truth.size
    sys = generate_linear_sensing(spec.m, n, truth.ravel(), spec.noise_level,
                                  seed=derive_seed(spec.base_seed, _KIND_CODES["linear"], spec.m, n))
    x0 = np.zeros(n)
    recovered, scores, initial, hist = {}, {}, {}, {}
    for method in spec.methods:
        params = dict(spec.method_params.get(method, {}))
        if method == "scbnb":
            params.setdefault("block_size", spec.block_size or recovery_block_size(n))
        cfg = SolverConfig(method=method, lam=spec.lam, tol=0.0, max_iters=spec.iter_budget,
                           seed=derive_seed(spec.base_seed, _METHOD_CODES[method], n), init="zero", **params)
        rep = run_solver(sys, cfg, ground_truth=truth.ravel(), x0_star=x0)
        img = rep.final_primal.reshape(truth.shape)
        recovered[method] = img
        scores[method] = psnr(truth, img)
        initial[method] = psnr(truth, x0.reshape(truth.shape))
        hist[method] = rep.residual_history
    return RecoveryResult(truth=truth, recovered=recovered, psnr=scores, initial_psnr=initial, histories=hist)


def _fmt(v):
    if v is None:
        return "--"
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_rows(path, rows, columns) -> None:
    """CSV with a fixed column order; missing medians of failed cells print as '--'."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r.get(c)) for c in columns])


def write_curve(path, history) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iteration", "relative_residual"])
        for k, v in enumerate(history):
            w.writerow([k, repr(float(v))])


def ensure_dir(path) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p
