"""Convergence-rate constants and numerical checks of the supporting inequalities.

The formula evaluators (``step_upper_bound_Q``, ``contraction_factor``,
``admissible_eta_interval``, ``error_bound_from_rate``) use plain arithmetic
only, so they accept ``mpmath.mpf`` or ``fractions.Fraction`` inputs as well
as floats.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .convex import soft_threshold

VIOLATION_TOL = 1e-9


@dataclass
class TheoryConstants:
    sigma_min: float
    sigma_max: float
    eta: float = 0.0
    tau: int = 1
    m_smooth: float = 1.0
    gamma: float = 1.0
    delta: float = 1.0

    def __post_init__(self):
        if not 0 < self.sigma_min <= self.sigma_max:
            raise ValueError("need 0 < sigma_min <= sigma_max")

    @property
    def a(self):
        return self.sigma_min ** 4

    @property
    def b(self):
        return self.sigma_min ** 2 * self.sigma_max ** 2 - self.sigma_max ** 4

    def derived(self) -> dict:
        interval = admissible_eta_interval(self.sigma_min, self.sigma_max)
        return {
            "a": float(self.a),
            "b": float(self.b),
            "eta_upper": None if interval is None else float(interval[1]),
            "eta_admissible": interval is not None and 0 <= self.eta < interval[1],
            "Q": float(step_upper_bound_Q(self)),
            "c": float(contraction_factor(self)),
        }


def estimate_spectral_bounds(sys, probes) -> tuple[float, float]:
    """Smallest and largest Jacobian singular values seen over the probe points."""
    probes = list(probes)
    if not probes:
        raise ValueError("need at least one probe point")
    lo, hi = np.inf, 0.0
    for x in probes:
        s = np.linalg.svd(sys.jacobian(np.asarray(x, dtype=float)), compute_uv=False)
        lo = min(lo, float(s[-1]))
        hi = max(hi, float(s[0]))
    return lo, hi


def admissible_eta_interval(sigma_min, sigma_max):
    """Range (0, eta_upper) of tangential-cone constants giving a positive rate.

    Returns None when a + b <= 0, where a = sigma_min^4 and
    b = sigma_min^2*sigma_max^2 - sigma_max^4.
    """
    if not 0 < sigma_min <= sigma_max:
        raise ValueError("need 0 < sigma_min <= sigma_max")
    a = sigma_min ** 4
    b = sigma_min ** 2 * sigma_max ** 2 - sigma_max ** 4
    s = a + b
    if s <= 0:
        return None
    if b == 0:
        return (0, 1)
    upper = (a - b) / s - 2 * abs(a * b) ** 0.5 / s
    return (0, min(1, upper))


def eta_quadratic(eta, a, b):
    """(a+b)*eta^2 + 2*(b-a)*eta + (a+b); positive exactly on the admissible range."""
    return (a + b) * eta ** 2 + 2 * (b - a) * eta + (a + b)


def step_upper_bound_Q(consts: TheoryConstants):
    lo2, hi2, eta = consts.sigma_min ** 2, consts.sigma_max ** 2, consts.eta
    return 2 * (lo2 ** 2 / hi2 * (1 - eta) - (hi2 - lo2) * (1 + eta) ** 2 / (hi2 * (1 - eta)))


def _rate_coefficients(consts: TheoryConstants):
    """(linear, quadratic) coefficients of c as a polynomial in delta."""
    lo2, hi2, eta = consts.sigma_min ** 2, consts.sigma_max ** 2, consts.eta
    g, tau, M = consts.gamma, consts.tau, consts.m_smooth
    denom = 2 * tau * (1 + eta) ** 2 * hi2 * lo2 * (1 - eta)
    lin = (2 * g * lo2 ** 2 * (1 - eta) ** 2 - 2 * g * (hi2 - lo2) * (1 + eta) ** 2 * hi2) / denom
    quad = g * lo2 ** 2 * (1 - eta) / denom
    return lin / M, quad / M


def contraction_factor(consts: TheoryConstants):
    """Per-iteration contraction c of the expected Bregman distance.

    A value outside (0, 1) is returned as-is; it means the parameters do not
    certify a rate.
    """
    lin, quad = _rate_coefficients(consts)
    return lin * consts.delta - quad * consts.delta ** 2


def optimal_delta(consts: TheoryConstants):
    """Unconstrained maximizer of c over delta."""
    lin, quad = _rate_coefficients(consts)
    return lin / (2 * quad)


def error_bound_from_rate(c, k: int, phi_at_solution, gamma=1.0):
    """(2/gamma) * (1-c)^k * phi(x_hat), the bound on ||x_k - x_hat||^2 from a zero start."""
    if not 0 < c <= 1:
        raise ValueError(f"rate c must lie in (0, 1], got {c}")
    if k < 0:
        raise ValueError("k must be nonnegative")
    return 2 / gamma * (1 - c) ** k * phi_at_solution


@dataclass
class ConeReport:
    max_ratio: float
    eta: float
    passed: bool
    pairs_checked: int


def verify_tangential_cone(sys, pairs, eta: float) -> ConeReport:
    """Empirical tangential-cone ratio over sample pairs, row by row.

    The ratio |f_i(x1) - f_i(x2) - grad f_i(x1).(x1 - x2)| / |f_i(x1) - f_i(x2)|
    is skipped where the denominator falls below 1e-14.
    """
    worst, count = 0.0, 0
    for x1, x2 in pairs:
        x1 = np.asarray(x1, dtype=float)
        x2 = np.asarray(x2, dtype=float)
        diff = sys.residual(x1) - sys.residual(x2)
        rem = np.abs(diff - sys.jacobian(x1) @ (x1 - x2))
        den = np.abs(diff)
        ok = den >= 1e-14
        if ok.any():
            worst = max(worst, float(np.max(rem[ok] / den[ok])))
        count += 1
    return ConeReport(max_ratio=worst, eta=eta, passed=worst <= eta, pairs_checked=count)


def _batched_phi(X, lam):
    return lam * np.abs(X).sum(axis=1) + 0.5 * np.einsum("ij,ij->i", X, X)


def _batched_bregman(Xs, X, Y, lam):
    return _batched_phi(Y, lam) - _batched_phi(X, lam) - np.einsum("ij,ij->i", Xs, Y - X)


def _rowdot(U, V):
    return np.einsum("ij,ij->i", U, V)


def one_step_slack(dual_k, dual_next, x_hat, lam, gamma=1.0):
    """rhs - lhs of the one-step Bregman bound; nonnegative when it holds."""
    x_k = soft_threshold(dual_k, lam)
    x_next = soft_threshold(dual_next, lam)
    step = dual_next - dual_k
    lhs = _batched_bregman(dual_next, x_next, x_hat, lam)
    rhs = (
        _batched_bregman(dual_k, x_k, x_hat, lam)
        + _rowdot(step, x_k - x_hat)
        + 0.5 / gamma * _rowdot(step, step)
    )
    return rhs - lhs


def convexity_chain_slacks(dual_x, dual_y, lam, gamma=1.0):
    """Slacks of gamma/2*||x-y||^2 <= D <= <x*-y*, x-y> <= ||x*-y*||*||x-y||."""
    x = soft_threshold(dual_x, lam)
    y = soft_threshold(dual_y, lam)
    d = x - y
    dist = _batched_bregman(dual_x, x, y, lam)
    inner = _rowdot(dual_x - dual_y, d)
    cs = np.linalg.norm(dual_x - dual_y, axis=1) * np.linalg.norm(d, axis=1)
    return np.stack([dist - 0.5 * gamma * _rowdot(d, d), inner - dist, cs - inner])


def block_cone_slack(A, x1, x2, rows, eta=0.0):
    """||f_T(x1)-f_T(x2)||^2 - ||f'_T(x1)(x1-x2)||^2/(1+eta)^2 for f(x) = A x - b."""
    sub = A[rows]
    lhs_vec = sub @ x1 - sub @ x2
    rhs_vec = sub @ (x1 - x2)
    return float(lhs_vec @ lhs_vec - rhs_vec @ rhs_vec / (1 + eta) ** 2)


def smoothness_slacks(X, Y, M=1.0):
    """Smoothness statements (ii) and (iii) for the smooth potential 0.5*||x||^2."""
    d = Y - X
    upper = 0.5 * _rowdot(X, X) + _rowdot(X, d) + 0.5 * M * _rowdot(d, d) - 0.5 * _rowdot(Y, Y)
    mono = M * _rowdot(d, d) - _rowdot(Y - X, d)
    return np.stack([upper, mono])


@dataclass
class LemmaReport:
    lam: float
    samples: int
    worst_slack: dict
    violations: dict
    passed: bool

    def to_dict(self) -> dict:
        return asdict(self)


def verify_lemma_chain(samples: int, lam: float, seed=None, n: int = 8, gamma: float = 1.0) -> LemmaReport:
    """Fuzz the inequalities behind the rate proof on random instances.

    The one-step Bregman bound and the strong-convexity chain run on random
    dual vectors with the canonical potential at ``lam``; the block cone
    inequality on random linear maps (eta = 0); the smoothness statements on
    the smooth potential (lam = 0, M = 1).
    """
    if samples <= 0:
        raise ValueError("samples must be positive")
    rng = np.random.default_rng(seed)
    scale = 1.0 + lam
    dk = scale * rng.standard_normal((samples, n))
    dn = dk + rng.standard_normal((samples, n)) * rng.exponential(size=(samples, 1))
    x_hat = soft_threshold(scale * rng.standard_normal((samples, n)), lam)

    slacks = {
        "one_step_bound": one_step_slack(dk, dn, x_hat, lam, gamma),
        "convexity_chain": convexity_chain_slacks(dk, dn, lam, gamma).min(axis=0),
        "smoothness": smoothness_slacks(dk, dn).min(axis=0),
    }
    l2 = np.empty(samples)
    m = n + 2
    for s in range(samples):
        A = rng.standard_normal((m, n))
        rows = np.flatnonzero(rng.random(m) < 0.5)
        if rows.size == 0:
            rows = np.array([0])
        l2[s] = block_cone_slack(A, dk[s], dn[s], rows)
    slacks["block_cone"] = l2

    worst = {k: float(v.min()) for k, v in slacks.items()}
    violations = {k: int(np.sum(v < -VIOLATION_TOL)) for k, v in slacks.items()}
    return LemmaReport(
        lam=lam,
        samples=samples,
        worst_slack=worst,
        violations=violations,
        passed=not any(violations.values()),
    )


def theory_report(consts: TheoryConstants, lemmas: LemmaReport | None = None,
                  spectral: tuple | None = None, formal_m: bool = False) -> dict:
    """JSON-ready summary of inputs, derived constants, and lemma checks."""
    out = {
        "inputs": {k: float(v) if not isinstance(v, int) else v for k, v in asdict(consts).items()},
        "derived": consts.derived(),
        "rate_certified": 0 < float(contraction_factor(consts)) < 1,
        "m_smooth_is_formal": formal_m,
    }
    if spectral is not None:
        out["spectral_estimate"] = {"sigma_min": spectral[0], "sigma_max": spectral[1]}
    if lemmas is not None:
        out["lemmas"] = lemmas.to_dict()
    return out


def write_theory_report(path, report: dict) -> None:
    Path(path).write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")

