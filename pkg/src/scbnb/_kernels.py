"""Compiled evaluation loops for quadratic systems.

``sym[j, k, i]`` holds the symmetric part 0.5*(A_i + A_i^T)[j, k], so every
(j, k) pair touched by a sparse iterate is one contiguous run over the rows i.
"""
import numba
import numpy as np


@numba.njit(cache=True)
def quad_forms(sym, support, xs):
    """out[i] = x^T A_i x summed over the support, using the upper triangle only."""
    m = sym.shape[2]
    out = np.zeros(m)
    for a in range(support.size):
        j = support[a]
        row = sym[j, j]
        w = xs[a] * xs[a]
        for i in range(m):
            out[i] += w * row[i]
        for b in range(a + 1, support.size):
            w = 2.0 * xs[a] * xs[b]
            row = sym[j, support[b]]
            for i in range(m):
                out[i] += w * row[i]
    return out


@numba.njit(cache=True)
def jacobian_block_t(sym, block, support, xs):
    """out[c, i] = sum_t sym_i[block[c], t] * x_t (the block of the Jacobian, transposed)."""
    m = sym.shape[2]
    out = np.zeros((block.size, m))
    for c in range(block.size):
        j = block[c]
        for b in range(support.size):
            w = xs[b]
            row = sym[j, support[b]]
            for i in range(m):
                out[c, i] += w * row[i]
    return out
