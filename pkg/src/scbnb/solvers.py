"""Bregman-projection iterations for sparse solutions of f(x) = 0.

Five methods share one engine:

* ``nbk`` / ``mrnbk``: exact Bregman projection onto the linearized row
  hyperplane, rows picked with probability r_i^2/||r||^2 (nbk) or by maximum
  residual (mrnbk).
* ``rnbk`` / ``rmrnbk``: the relaxed step t = gamma*f_i/||grad f_i||^2 with the
  same two row rules.
* ``scbnb``: a uniformly sampled column block of the Jacobian drives a dual
  update restricted to that block.

Every method keeps the dual iterate x* and maps it to the primal iterate with
soft-thresholding, x = S_lam(x*).
"""
from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numba
import numpy as np

from .convex import DualPair, SparsityPotential, bregman_distance, soft_threshold

METHODS = ("nbk", "rnbk", "mrnbk", "rmrnbk", "scbnb")
EXACT_METHODS = ("nbk", "mrnbk")
MAX_ROW_METHODS = ("mrnbk", "rmrnbk")
INIT_MODES = ("normal", "zero")

_MAX_DOUBLINGS = 200


class NoFiniteMinimizerError(ArithmeticError):
    """The linearized hyperplane does not meet the domain of the subdifferential."""


def default_block_size(n: int) -> int:
    return min(25 if n == 100 else 30, n)


@dataclass
class SolverConfig:
    method: str = "scbnb"
    delta: float = 1.0
    gamma: float = 1.0
    block_size: int | None = None
    lam: float = 2.0
    tol: float = 1e-6
    max_iters: int = 1000
    seed: int = 0
    init: str = "normal"

    def validate(self, n: int | None = None) -> None:
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; expected one of {METHODS}")
        if self.method == "scbnb" and not 0 < self.delta < 2:
            raise ValueError(f"delta must lie in (0, 2), got {self.delta}")
        if self.gamma <= 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")
        if self.lam < 0:
            raise ValueError(f"lam must be nonnegative, got {self.lam}")
        if not self.tol >= 0:
            raise ValueError(f"tol must be nonnegative, got {self.tol}")
        if self.max_iters < 0:
            raise ValueError(f"max_iters must be nonnegative, got {self.max_iters}")
        if self.init not in INIT_MODES:
            raise ValueError(f"unknown init mode {self.init!r}")
        if self.block_size is not None:
            if self.block_size < 1 or (n is not None and self.block_size > n):
                raise ValueError(f"block_size must lie in [1, n], got {self.block_size}")


@dataclass(frozen=True)
class BlockPartition:
    blocks: tuple

    @property
    def tau(self) -> int:
        return len(self.blocks)


def partition_columns(n: int, q: int) -> BlockPartition:
    """Contiguous column blocks of size q; the last one is ragged when q does not divide n."""
    if not 1 <= q <= n:
        raise ValueError(f"block size must satisfy 1 <= q <= n, got q={q}, n={n}")
    return BlockPartition(tuple(np.arange(s, min(s + q, n)) for s in range(0, n, q)))


def select_row_weighted(residual, rng) -> int:
    """Sample row i with probability r_i^2 / ||r||^2 (0-based)."""
    r = np.asarray(residual, dtype=float)
    w = np.cumsum(r * r)
    total = w[-1]
    if total == 0:
        raise ValueError("cannot select a row from an all-zero residual")
    i = int(np.searchsorted(w, rng.random() * total, side="right"))
    # guard the u*total == total edge and skip zero-weight rows
    i = min(i, r.size - 1)
    while r[i] == 0:
        i -= 1
    return i


def select_row_max(residual) -> int:
    """Index of the largest |r_i|; ties go to the smallest index."""
    r = np.abs(np.asarray(residual, dtype=float))
    i = int(np.argmax(r))
    if r[i] == 0:
        raise ValueError("cannot select a row from an all-zero residual")
    return i


@numba.njit(cache=True)
def _dual_slope(x_star, a, beta, lam, t):
    # g'(t) = beta - <a, S_lam(x_star - t a)>
    s = 0.0
    for i in range(a.size):
        y = x_star[i] - t * a[i]
        if y > lam:
            s += a[i] * (y - lam)
        elif y < -lam:
            s += a[i] * (y + lam)
    return beta - s


@numba.njit(cache=True)
def _bisect_dual_step(x_star, a, beta, lam, max_doublings):
    lo, hi = -1.0, 1.0
    k = 0
    while _dual_slope(x_star, a, beta, lam, lo) >= 0.0:
        lo *= 2.0
        k += 1
        if k > max_doublings:
            return np.nan
    k = 0
    while _dual_slope(x_star, a, beta, lam, hi) < 0.0:
        hi *= 2.0
        k += 1
        if k > max_doublings:
            return np.nan
    while hi - lo > 1e-12 * (1.0 + abs(0.5 * (lo + hi))):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if _dual_slope(x_star, a, beta, lam, mid) < 0.0:
            lo = mid
        else:
            hi = mid
    return hi


def exact_dual_step(x_star, a, beta: float, lam: float) -> float:
    """Step t minimizing g(t) = 0.5*||S_lam(x_star - t a)||^2 + t*beta.

    g is convex with the nondecreasing piecewise-linear derivative
    g'(t) = beta - <a, S_lam(x_star - t a)>, so the minimizer is found by
    bisection on g' after geometric bracket expansion from [-1, 1]. When
    the minimizers form an interval its left endpoint is returned.
    """
    x_star = np.ascontiguousarray(x_star, dtype=float)
    a = np.ascontiguousarray(a, dtype=float)
    if not np.any(a):
        raise ValueError("direction a must be nonzero")
    t = _bisect_dual_step(x_star, a, float(beta), float(lam), _MAX_DOUBLINGS)
    if math.isnan(t):
        raise NoFiniteMinimizerError("g'(t) has no sign change on a finite bracket")
    return float(t)


def relaxed_step(f_i: float, grad_i, gamma: float) -> float:
    """Polyak-like step gamma*f_i/||grad_i||_2^2."""
    grad_i = np.asarray(grad_i, dtype=float)
    nrm2 = float(np.dot(grad_i, grad_i))
    if nrm2 == 0.0:
        if f_i == 0:
            return 0.0
        raise ZeroDivisionError("zero gradient with nonzero residual")
    return gamma * f_i / nrm2


def _scbnb_update(pair: DualPair, jac_block, f, block, delta, gamma, lam) -> bool:
    """In-place block update; returns False when the step is skipped as degenerate."""
    g = jac_block.T @ f
    if not g.any():
        return True
    h = jac_block @ g
    h_norm = math.sqrt(float(np.dot(h, h)))
    if h_norm < 1e-300:
        return False
    step = delta * gamma * float(np.dot(g, g)) / (h_norm * h_norm)
    pair.dual[block] -= step * g
    pair.primal[block] = soft_threshold(pair.dual[block], lam)
    return True


def scbnb_step(pair: DualPair, sys, block, delta: float, gamma: float, lam: float) -> DualPair:
    """One column-block step; returns a new pair, the input is left untouched."""
    block = np.asarray(block, dtype=np.intp)
    out = DualPair(primal=pair.primal.copy(), dual=pair.dual.copy())
    f = sys.residual(out.primal)
    jac = sys.jacobian_column_block(block, out.primal)
    _scbnb_update(out, jac, f, block, delta, gamma, lam)
    return out


def relative_residual(sys, x, x0) -> float:
    """||f(x)||^2 / ||f(x0)||^2; a zero initial residual counts as solved (0.0)."""
    f0 = sys.residual(x0)
    d = float(np.dot(f0, f0))
    if d == 0.0:
        return 0.0
    f = sys.residual(x)
    return float(np.dot(f, f)) / d


@dataclass
class SolveReport:
    method: str
    iterations: int
    wall_time: float
    final_relative_residual: float
    residual_history: list
    final_primal: np.ndarray
    converged: bool
    bregman_history: list | None = None
    degenerate_steps: int = 0
    config: dict = field(default_factory=dict)

    def summary(self, include_timing: bool = True) -> dict:
        out = {
            "method": self.method,
            "params": self.config,
            "IT": self.iterations,
            "converged": self.converged,
            "final_relative_residual": self.final_relative_residual,
            "degenerate_steps": self.degenerate_steps,
        }
        if include_timing:
            out["CPU"] = self.wall_time
        return out

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            header = ["iteration", "relative_residual"]
            if self.bregman_history is not None:
                header.append("bregman_distance")
            w.writerow(header)
            for k, rel in enumerate(self.residual_history):
                row = [k, repr(float(rel))]
                if self.bregman_history is not None:
                    row.append(repr(float(self.bregman_history[k])))
                w.writerow(row)

    def write_json(self, path, include_timing: bool = True) -> None:
        Path(path).write_text(json.dumps(self.summary(include_timing), indent=2, sort_keys=True) + "\n")


def initial_dual(n: int, config: SolverConfig, rng) -> np.ndarray:
    if config.init == "zero":
        return np.zeros(n)
    return rng.standard_normal(n)


def run_solver(sys, config: SolverConfig, ground_truth=None, x0_star=None) -> SolveReport:
    """Iterate the configured method from x0 = S_lam(x0*) until tol or max_iters.

    The relative residual ||f(x_k)||^2/||f(x_0)||^2 is checked after every
    step; ``iterations`` counts executed steps (0 when x0 already solves).
    """
    n = sys.n
    config.validate(n)
    rng = np.random.default_rng(config.seed)
    lam = config.lam
    if x0_star is None:
        x0_star = initial_dual(n, config, rng)
    x0_star = np.array(x0_star, dtype=float)
    if x0_star.shape != (n,):
        raise ValueError(f"x0_star must have length {n}, got shape {x0_star.shape}")
    pair = DualPair.from_dual(x0_star, lam)
    pot = SparsityPotential.canonical(lam)
    if ground_truth is not None:
        ground_truth = np.asarray(ground_truth, dtype=float)
        if ground_truth.shape != (n,):
            raise ValueError("ground_truth has the wrong length")

    def bregman():
        return bregman_distance(pair.dual, pair.primal, ground_truth, pot, check=False)

    f = sys.residual(pair.primal)
    r0 = float(np.dot(f, f))
    rel = 0.0 if r0 == 0.0 else 1.0
    history = [rel]
    breg = [bregman()] if ground_truth is not None else None
    degenerate = 0
    iterations = 0
    method = config.method
    if method == "scbnb":
        q = config.block_size or default_block_size(n)
        blocks = partition_columns(n, q).blocks
    exact = method in EXACT_METHODS
    use_max = method in MAX_ROW_METHODS

    start = time.perf_counter()
    while rel > config.tol and iterations < config.max_iters:
        iterations += 1
        if method == "scbnb":
            block = blocks[rng.integers(len(blocks))]
            jac = sys.jacobian_column_block(block, pair.primal)
            if not _scbnb_update(pair, jac, f, block, config.delta, config.gamma, lam):
                degenerate += 1
        else:
            i = select_row_max(f) if use_max else select_row_weighted(f, rng)
            fi = float(f[i])
            a = sys.jacobian_row(i, pair.primal)
            if fi != 0.0 and a.any():
                t = None
                if exact:
                    beta = float(np.dot(a, pair.primal)) - fi
                    try:
                        t = exact_dual_step(pair.dual, a, beta, lam)
                    except NoFiniteMinimizerError:
                        t = None
                if t is None:
                    t = relaxed_step(fi, a, config.gamma)
                pair.dual -= t * a
                pair.primal = soft_threshold(pair.dual, lam)
        f = sys.residual(pair.primal)
        rel = float(np.dot(f, f)) / r0
        history.append(rel)
        if breg is not None:
            breg.append(bregman())
    wall = time.perf_counter() - start

    cfg = asdict(config)
    if method == "scbnb":
        cfg["block_size"] = q
    return SolveReport(
        method=method,
        iterations=iterations,
        wall_time=wall,
        final_relative_residual=rel,
        residual_history=history,
        final_primal=pair.primal.copy(),
        converged=rel <= config.tol,
        bregman_history=breg,
        degenerate_steps=degenerate,
        config=cfg,
    )
