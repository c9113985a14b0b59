"""Test problems: quadratic nonlinear systems and noisy linear sensing systems.

Both system types expose the same evaluation surface (``residual``,
``jacobian_row``, ``jacobian_column_block``, ``jacobian``) so the solvers are
problem-agnostic. Quadratic evaluation exploits sparsity of ``x``: the
iterates produced by soft-thresholding are mostly zero, so the cost scales
with the support size rather than with n**2.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _kernels

KINDS = ("gaussian", "dct")
LIN_DISTS = ("normal", "uniform")

# Above this support fraction the dense evaluation path is cheaper.
_DENSE_FRACTION = 0.5


def _support(x: np.ndarray) -> np.ndarray | None:
    idx = np.flatnonzero(x)
    if idx.size > _DENSE_FRACTION * x.size:
        return None
    return idx


def _check_vector(x, n: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (n,):
        raise ValueError(f"expected a vector of length {n}, got shape {x.shape}")
    return x


def _check_block(block, n: int) -> np.ndarray:
    block = np.asarray(block, dtype=np.intp)
    if block.ndim != 1 or block.size == 0:
        raise ValueError("block must be a nonempty 1-D index set")
    if block[0] < 0 or block[-1] >= n or np.any(np.diff(block) <= 0):
        raise ValueError("block indices must be strictly increasing and in range")
    return block


class QuadraticSystem:
    """f_i(x) = 0.5*<x, A_i x> + <b_i, x> + c_i for i = 1..m.

    ``mats`` is the (m, n, n) stack of A_i as generated (not symmetrized),
    ``lins`` is (m, n), ``consts`` is (m,). ``omegas`` holds the per-row
    frequency vectors for the dct kind. Evaluation uses a copy of the
    symmetric part laid out as ``[j, k, i]`` so sparse iterates read
    contiguous memory.
    """

    def __init__(self, mats, lins, consts, ground_truth, kind="gaussian", omegas=None, seed=None):
        mats = np.ascontiguousarray(mats, dtype=float)
        if mats.ndim != 3 or mats.shape[1] != mats.shape[2]:
            raise ValueError(f"mats must have shape (m, n, n), got {mats.shape}")
        self.mats = mats
        self.lins = np.asarray(lins, dtype=float)
        self.consts = np.asarray(consts, dtype=float)
        self.ground_truth = np.asarray(ground_truth, dtype=float)
        self.kind = kind
        self.omegas = omegas
        self.seed = seed
        # symmetric part, rows innermost: sym[j, k, i] = 0.5*(A_i[j, k] + A_i[k, j])
        self._sym = np.empty((self.n, self.n, self.m))
        for j in range(self.n):
            self._sym[j] = 0.5 * (mats[:, j, :] + mats[:, :, j]).T
        self._lins_t = np.ascontiguousarray(self.lins.T)

    @property
    def m(self) -> int:
        return self.mats.shape[0]

    @property
    def n(self) -> int:
        return self.mats.shape[1]

    def residual(self, x) -> np.ndarray:
        x = _check_vector(x, self.n)
        T = np.flatnonzero(x)
        if T.size == 0:
            return self.consts.copy()
        xt = x[T]
        quad = _kernels.quad_forms(self._sym, T, xt)
        return 0.5 * quad + xt @ self._lins_t[T] + self.consts

    def jacobian_row(self, i: int, x) -> np.ndarray:
        """Gradient of f_i: 0.5*(A_i + A_i^T) x + b_i (0-based ``i``)."""
        if not 0 <= i < self.m:
            raise IndexError(f"row index {i} out of range for m={self.m}")
        x = _check_vector(x, self.n)
        A = self.mats[i]
        T = np.flatnonzero(x)
        if T.size > _DENSE_FRACTION * self.n:
            return 0.5 * (A @ x + x @ A) + self.lins[i]
        xt = x[T]
        return 0.5 * (A[:, T] @ xt + xt @ A[T, :]) + self.lins[i]

    def jacobian_column_block(self, block, x) -> np.ndarray:
        x = _check_vector(x, self.n)
        block = _check_block(block, self.n)
        T = np.flatnonzero(x)
        return _kernels.jacobian_block_t(self._sym, block, T, x[T]).T + self.lins[:, block]

    def jacobian(self, x) -> np.ndarray:
        return self.jacobian_column_block(np.arange(self.n), x)


@dataclass
class LinearSystem:
    """f(x) = A x - b; the Jacobian is A for every x."""

    sensing: np.ndarray
    rhs: np.ndarray
    ground_truth: np.ndarray
    noise_level: float = 0.0
    seed: int | None = None
    kind: str = field(default="linear", init=False)

    @property
    def m(self) -> int:
        return self.sensing.shape[0]

    @property
    def n(self) -> int:
        return self.sensing.shape[1]

    def residual(self, x) -> np.ndarray:
        x = _check_vector(x, self.n)
        T = _support(x)
        if T is None:
            return self.sensing @ x - self.rhs
        return self.sensing[:, T] @ x[T] - self.rhs

    def jacobian_row(self, i: int, x) -> np.ndarray:
        if not 0 <= i < self.m:
            raise IndexError(f"row index {i} out of range for m={self.m}")
        _check_vector(x, self.n)
        return self.sensing[i].copy()

    def jacobian_column_block(self, block, x) -> np.ndarray:
        _check_vector(x, self.n)
        block = _check_block(block, self.n)
        return self.sensing[:, block]

    def jacobian(self, x) -> np.ndarray:
        _check_vector(x, self.n)
        return self.sensing


# Function-style surface mirroring the methods.
def residual(sys, x) -> np.ndarray:
    return sys.residual(x)


def jacobian_row(sys, i: int, x) -> np.ndarray:
    return sys.jacobian_row(i, x)


def jacobian_column_block(sys, block, x) -> np.ndarray:
    return sys.jacobian_column_block(block, x)


def generate_sparse_signal(n: int, sp: float, rng) -> np.ndarray:
    """Exactly round(sp*n) standard-normal entries on a uniformly random support."""
    if n <= 0:
        raise ValueError(f"n must be positive, got {n}")
    if not 0 < sp <= 1:
        raise ValueError(f"sp must lie in (0, 1], got {sp}")
    rng = np.random.default_rng(rng)
    k = int(round(sp * n))
    x = np.zeros(n)
    support = np.sort(rng.choice(n, size=k, replace=False))
    x[support] = rng.standard_normal(k)
    return x


def dct_matrix(omega: np.ndarray) -> np.ndarray:
    """Random partial DCT block: column j is cos(2*pi*(j-1)*omega)."""
    n = omega.size
    return np.cos(2.0 * np.pi * np.outer(omega, np.arange(n)))


def generate_quadratic_system(
    m: int,
    n: int,
    sp: float,
    kind: str = "gaussian",
    seed=None,
    lin_dist: str = "normal",
) -> QuadraticSystem:
    if m <= 0 or n <= 0:
        raise ValueError(f"dimensions must be positive, got m={m}, n={n}")
    if kind not in KINDS:
        raise ValueError(f"unknown matrix kind {kind!r}; expected one of {KINDS}")
    if lin_dist not in LIN_DISTS:
        raise ValueError(f"unknown lin_dist {lin_dist!r}")
    rng = np.random.default_rng(seed)
    omegas = None
    if kind == "gaussian":
        mats = rng.standard_normal((m, n, n))
    else:
        omegas = rng.random((m, n))
        mats = np.cos(2.0 * np.pi * omegas[:, :, None] * np.arange(n))
    if lin_dist == "normal":
        lins = rng.standard_normal((m, n))
    else:
        lins = rng.random((m, n))
    x_hat = generate_sparse_signal(n, sp, rng)
    sys = QuadraticSystem(
        mats=mats,
        lins=lins,
        consts=np.zeros(m),
        ground_truth=x_hat,
        kind=kind,
        omegas=omegas,
        seed=seed if isinstance(seed, int) else None,
    )
    sys.consts = -sys.residual(x_hat)
    return sys


def generate_linear_sensing(m: int, n: int, signal, noise_level: float = 0.0, seed=None) -> LinearSystem:
    """A with uniform[0,1] entries and b = A x + e, ||e|| = noise_level*||A x||."""
    if m <= 0 or n <= 0:
        raise ValueError(f"dimensions must be positive, got m={m}, n={n}")
    if noise_level < 0:
        raise ValueError(f"noise_level must be nonnegative, got {noise_level}")
    signal = _check_vector(signal, n)
    rng = np.random.default_rng(seed)
    A = rng.random((m, n))
    clean = A @ signal
    e = rng.standard_normal(m)
    scale = np.linalg.norm(clean)
    if noise_level > 0 and scale > 0:
        e *= noise_level * scale / np.linalg.norm(e)
    else:
        e[:] = 0.0
    return LinearSystem(
        sensing=A,
        rhs=clean + e,
        ground_truth=signal.copy(),
        noise_level=float(noise_level),
        seed=seed if isinstance(seed, int) else None,
    )


def save_system(path, sys) -> None:
    """Write a system to an ``.npz`` container; arrays round-trip bit-exactly."""
    path = Path(path)
    meta = {"kind": sys.kind, "m": sys.m, "n": sys.n, "seed": -1 if sys.seed is None else sys.seed}
    if isinstance(sys, QuadraticSystem):
        arrays = dict(mats=sys.mats, lins=sys.lins, consts=sys.consts, ground_truth=sys.ground_truth)
        if sys.omegas is not None:
            arrays["omegas"] = sys.omegas
    else:
        arrays = dict(sensing=sys.sensing, rhs=sys.rhs, ground_truth=sys.ground_truth,
                      noise_level=np.float64(sys.noise_level))
    with open(path, "wb") as fh:
        np.savez(fh, **{f"meta_{k}": np.asarray(v) for k, v in meta.items()}, **arrays)


def load_system(path):
    with np.load(Path(path), allow_pickle=False) as data:
        kind = str(data["meta_kind"])
        seed = int(data["meta_seed"])
        seed = None if seed < 0 else seed
        if kind == "linear":
            return LinearSystem(
                sensing=data["sensing"],
                rhs=data["rhs"],
                ground_truth=data["ground_truth"],
                noise_level=float(data["noise_level"]),
                seed=seed,
            )
        if kind not in KINDS:
            raise ValueError(f"unrecognized system kind {kind!r} in {path}")
        return QuadraticSystem(
            mats=data["mats"],
            lins=data["lins"],
            consts=data["consts"],
            ground_truth=data["ground_truth"],
            kind=kind,
            omegas=data["omegas"] if "omegas" in data.files else None,
            seed=seed,
        )


def _pgm_tokens(raw: bytes):
    """Split a PGM header into tokens, dropping '#' comments."""
    tokens, pos = [], 0
    while len(tokens) < 4:
        while raw[pos:pos + 1].isspace():
            pos += 1
        if raw[pos:pos + 1] == b"#":
            pos = raw.index(b"\n", pos) + 1
            continue
        start = pos
        while not raw[pos:pos + 1].isspace():
            pos += 1
        tokens.append(raw[start:pos])
    return tokens, pos + 1


def read_pgm(path) -> np.ndarray:
    """Read a binary (P5) or ASCII (P2) grey map as a float array."""
    raw = Path(path).read_bytes()
    try:
        (magic, w, h, maxval), offset = _pgm_tokens(raw)
        w, h, maxval = int(w), int(h), int(maxval)
    except (ValueError, IndexError) as exc:
        raise ValueError(f"{path}: not a readable PGM file") from exc
    if magic == b"P5":
        dtype = np.uint8 if maxval < 256 else np.dtype(">u2")
        img = np.frombuffer(raw, dtype=dtype, count=w * h, offset=offset)
    elif magic == b"P2":
        img = np.array(raw[offset:].split()[: w * h], dtype=float)
    else:
        raise ValueError(f"{path}: unsupported PGM magic {magic!r}")
    if img.size != w * h:
        raise ValueError(f"{path}: truncated image data")
    return img.reshape(h, w).astype(float)


def write_pgm(path, img) -> None:
    """Write an image with values in [0, 1] as an 8-bit binary PGM."""
    img = np.clip(np.asarray(img, dtype=float), 0.0, 1.0)
    h, w = img.shape
    data = np.round(img * 255).astype(np.uint8)
    Path(path).write_bytes(f"P5\n{w} {h}\n255\n".encode() + data.tobytes())


def normalize_range(img) -> np.ndarray:
    """Min-max rescale to [0, 1]; a constant image maps to zeros."""
    img = np.asarray(img, dtype=float)
    lo, hi = img.min(), img.max()
    if hi == lo:
        return np.zeros_like(img)
    return (img - lo) / (hi - lo)
