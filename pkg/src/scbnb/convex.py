"""Sparsity potential phi(x) = lam*||x||_1 + 0.5*||x||_2^2 and its duality tools.

The conjugate of this potential is phi*(y) = 0.5*||S_lam(y)||^2 with gradient
S_lam, the soft-thresholding map, which is what every solver uses to map a
dual iterate back to a (sparse) primal iterate.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PAIRING_TOL = 1e-10


class InvalidPairingError(ValueError):
    """Raised when x_star is not the canonical subgradient partner of x."""


@dataclass(frozen=True)
class SparsityPotential:
    lam: float = 1.0
    gamma: float = 1.0

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError(f"lam must be nonnegative, got {self.lam}")
        if self.gamma <= 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")

    @classmethod
    def canonical(cls, lam: float) -> "SparsityPotential":
        # lam*||x||_1 + 0.5*||x||^2 is exactly 1-strongly convex
        pot = cls(lam=float(lam), gamma=1.0)
        assert pot.gamma == 1.0
        return pot


@dataclass
class DualPair:
    """Primal/dual iterate kept consistent as primal = S_lam(dual)."""

    primal: np.ndarray
    dual: np.ndarray

    @classmethod
    def from_dual(cls, dual, lam: float) -> "DualPair":
        dual = np.array(dual, dtype=float)
        return cls(primal=soft_threshold(dual, lam), dual=dual)

    def is_consistent(self, lam: float) -> bool:
        return self.primal.shape == self.dual.shape and np.array_equal(
            self.primal, soft_threshold(self.dual, lam)
        )


def phi_value(x, pot: SparsityPotential) -> float:
    x = np.asarray(x, dtype=float)
    return float(pot.lam * np.abs(x).sum() + 0.5 * np.dot(x, x))


def soft_threshold(y, lam: float) -> np.ndarray:
    """Componentwise shrinkage: y+lam below -lam, 0 on [-lam, lam], y-lam above lam."""
    if lam < 0:
        raise ValueError(f"lam must be nonnegative, got {lam}")
    y = np.asarray(y, dtype=float)
    return np.sign(y) * np.maximum(np.abs(y) - lam, 0.0)


def conjugate_value(y, pot: SparsityPotential) -> float:
    """Closed-form Fenchel conjugate phi*(y) = 0.5*||S_lam(y)||^2."""
    s = soft_threshold(y, pot.lam)
    return float(0.5 * np.dot(s, s))


def bregman_distance(x_star, x, y, pot: SparsityPotential, check: bool = True) -> float:
    """D^{x_star}(x, y) = phi(y) - phi(x) - <x_star, y - x>.

    ``x_star`` must satisfy x = S_lam(x_star), i.e. x_star is a subgradient of
    phi at x; with ``check`` the pairing is validated to 1e-10.
    """
    x_star = np.asarray(x_star, dtype=float)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if not (x_star.shape == x.shape == y.shape):
        raise ValueError(f"shape mismatch: {x_star.shape}, {x.shape}, {y.shape}")
    if check:
        err = np.max(np.abs(x - soft_threshold(x_star, pot.lam)), initial=0.0)
        if err > PAIRING_TOL:
            raise InvalidPairingError(
                f"x_star is not a subgradient partner of x (deviation {err:.3e})"
            )
    return phi_value(y, pot) - phi_value(x, pot) - float(np.dot(x_star, y - x))
