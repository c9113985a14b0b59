import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from scbnb.problems import (
    LinearSystem,
    QuadraticSystem,
    generate_linear_sensing,
    generate_quadratic_system,
    generate_sparse_signal,
    jacobian_column_block,
    jacobian_row,
    load_system,
    normalize_range,
    read_pgm,
    residual,
    save_system,
    write_pgm,
)


def loop_residual(sys, x):
    # term-by-term evaluation straight from the defining formula
    out = []
    for i in range(sys.m):
        s = 0.0
        for j in range(sys.n):
            for k in range(sys.n):
                s += 0.5 * x[j] * sys.mats[i, j, k] * x[k]
            s += sys.lins[i, j] * x[j]
        out.append(s + sys.consts[i])
    return np.array(out)


def fd_jacobian(sys, x, h=1e-6):
    J = np.empty((sys.m, sys.n))
    for j in range(sys.n):
        e = np.zeros(sys.n)
        e[j] = h
        J[:, j] = (sys.residual(x + e) - sys.residual(x - e)) / (2 * h)
    return J


def test_sparse_signal_examples():
    x = generate_sparse_signal(100, 0.1, 3)
    assert np.count_nonzero(x) == 10
    assert np.count_nonzero(generate_sparse_signal(20, 1.0, 3)) == 20
    np.testing.assert_array_equal(generate_sparse_signal(50, 0.2, 9), generate_sparse_signal(50, 0.2, 9))
    with pytest.raises(ValueError):
        generate_sparse_signal(0, 0.1, 0)
    with pytest.raises(ValueError):
        generate_sparse_signal(10, 0.0, 0)


@pytest.mark.parametrize("kind", ["gaussian", "dct"])
def test_root_at_ground_truth(kind):
    sys = generate_quadratic_system(200, 100, 0.1, kind, seed=4)
    assert np.count_nonzero(sys.ground_truth) == 10
    f = sys.residual(sys.ground_truth)
    assert np.max(np.abs(f)) <= 1e-9 * (1 + np.max(np.abs(sys.consts)))


def test_small_system_root_and_origin():
    sys = generate_quadratic_system(5, 4, 0.25, seed=1)
    terms = np.abs(sys.consts).max() + 1
    assert np.max(np.abs(residual(sys, sys.ground_truth))) <= 1e-12 * terms
    np.testing.assert_array_equal(residual(sys, np.zeros(4)), sys.consts)


def test_dct_structure():
    sys = generate_quadratic_system(6, 8, 0.25, "dct", seed=2)
    assert np.all(np.abs(sys.mats) <= 1.0)
    np.testing.assert_array_equal(sys.mats[:, :, 0], 1.0)
    for i in range(sys.m):
        for j in range(sys.n):
            np.testing.assert_allclose(sys.mats[i][:, j], np.cos(2 * np.pi * j * sys.omegas[i]), atol=1e-13)


def test_uniform_lin_dist():
    sys = generate_quadratic_system(10, 6, 0.5, seed=1, lin_dist="uniform")
    assert np.all((sys.lins >= 0) & (sys.lins < 1))
    with pytest.raises(ValueError):
        generate_quadratic_system(10, 6, 0.5, seed=1, lin_dist="laplace")
    with pytest.raises(ValueError):
        generate_quadratic_system(10, 6, 0.5, kind="hadamard")


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from([0.2, 0.5, 1.0]))
def test_residual_matches_loop_oracle(seed, density):
    sys = generate_quadratic_system(3, 5, 0.4, seed=seed)
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(5) * (rng.random(5) < density)
    np.testing.assert_allclose(sys.residual(x), loop_residual(sys, x), rtol=1e-12, atol=1e-12)


@pytest.mark.parametrize("kind", ["gaussian", "dct"])
def test_jacobians_match_finite_differences(kind):
    rng = np.random.default_rng(11)
    for trial in range(10):
        sys = generate_quadratic_system(6, 5, 0.4, kind, seed=trial)
        x = rng.standard_normal(5) * (rng.random(5) < 0.6)
        J = fd_jacobian(sys, x)
        scale = 1 + np.abs(J).max()
        for i in range(sys.m):
            np.testing.assert_allclose(jacobian_row(sys, i, x), J[i], atol=1e-5 * scale)
        block = np.sort(rng.choice(5, size=rng.integers(1, 6), replace=False))
        np.testing.assert_allclose(jacobian_column_block(sys, block, x), J[:, block], atol=1e-5 * scale)
        np.testing.assert_allclose(sys.jacobian(x), J, atol=1e-5 * scale)


def test_jacobian_row_identities():
    sys = generate_quadratic_system(4, 6, 0.5, seed=3)
    np.testing.assert_allclose(sys.jacobian_row(2, np.zeros(6)), sys.lins[2], atol=1e-15)
    x = np.random.default_rng(0).standard_normal(6)
    full = sys.jacobian_column_block(np.arange(6), x)
    for i in range(4):
        np.testing.assert_allclose(full[i], sys.jacobian_row(i, x), rtol=1e-12, atol=1e-12)
    with pytest.raises((IndexError, ValueError)):
        sys.jacobian_row(4, x)


def test_symmetric_matrix_gradient():
    rng = np.random.default_rng(5)
    A = rng.standard_normal((2, 3, 3))
    A = A + A.transpose(0, 2, 1)
    sys = QuadraticSystem(A, rng.standard_normal((2, 3)), np.zeros(2), np.zeros(3))
    x = rng.standard_normal(3)
    np.testing.assert_allclose(sys.jacobian_row(1, x), A[1] @ x + sys.lins[1], rtol=1e-12)


def test_block_validation():
    sys = generate_quadratic_system(4, 6, 0.5, seed=3)
    x = np.zeros(6)
    for bad in ([], [2, 1], [0, 6], [1, 1]):
        with pytest.raises(ValueError):
            sys.jacobian_column_block(bad, x)
    with pytest.raises(ValueError):
        sys.residual(np.zeros(5))


def test_linear_sensing():
    x = generate_sparse_signal(30, 0.2, 0)
    clean = generate_linear_sensing(40, 30, x, 0.0, seed=1)
    assert np.all((clean.sensing >= 0) & (clean.sensing <= 1))
    np.testing.assert_allclose(clean.residual(x), 0.0, atol=1e-12)
    noisy = generate_linear_sensing(40, 30, x, 0.01, seed=1)
    ax = noisy.sensing @ x
    assert np.linalg.norm(noisy.rhs - ax) / np.linalg.norm(ax) == pytest.approx(0.01, abs=1e-12)
    y = np.random.default_rng(2).standard_normal(30)
    np.testing.assert_array_equal(noisy.jacobian(y), noisy.sensing)
    np.testing.assert_array_equal(noisy.jacobian_row(3, y), noisy.sensing[3])
    assert generate_linear_sensing(2000, 784, np.ones(784), 0.01, seed=0).sensing.shape == (2000, 784)


def test_seed_determinism():
    a = generate_quadratic_system(8, 6, 0.5, "dct", seed=42)
    b = generate_quadratic_system(8, 6, 0.5, "dct", seed=42)
    for name in ("mats", "lins", "consts", "ground_truth", "omegas"):
        np.testing.assert_array_equal(getattr(a, name), getattr(b, name))


@pytest.mark.parametrize("kind", ["gaussian", "dct"])
def test_save_load_round_trip(tmp_path, kind):
    sys = generate_quadratic_system(7, 5, 0.4, kind, seed=13)
    save_system(tmp_path / "s.npz", sys)
    back = load_system(tmp_path / "s.npz")
    assert isinstance(back, QuadraticSystem) and back.kind == kind and back.seed == 13
    for name in ("mats", "lins", "consts", "ground_truth"):
        np.testing.assert_array_equal(getattr(back, name), getattr(sys, name))
    x = np.random.default_rng(0).standard_normal(5)
    np.testing.assert_array_equal(back.residual(x), sys.residual(x))


def test_save_load_linear(tmp_path):
    lin = generate_linear_sensing(6, 4, np.array([1.0, 0, 0, 2.0]), 0.01, seed=5)
    save_system(tmp_path / "l.npz", lin)
    back = load_system(tmp_path / "l.npz")
    assert isinstance(back, LinearSystem)
    np.testing.assert_array_equal(back.sensing, lin.sensing)
    np.testing.assert_array_equal(back.rhs, lin.rhs)
    assert back.noise_level == lin.noise_level


def test_pgm_round_trip_and_comments(tmp_path):
    img = np.arange(12, dtype=float).reshape(3, 4) * 20
    write_pgm(tmp_path / "a.pgm", normalize_range(img))
    back = read_pgm(tmp_path / "a.pgm")
    assert back.shape == (3, 4)
    np.testing.assert_allclose(normalize_range(back), normalize_range(img), atol=1 / 255)
    (tmp_path / "b.pgm").write_text("P2\n# comment\n2 2\n255\n0 255\n128 64\n")
    np.testing.assert_array_equal(read_pgm(tmp_path / "b.pgm"), [[0, 255], [128, 64]])
    with pytest.raises((ValueError, OSError)):
        read_pgm(tmp_path / "missing.pgm")


def test_normalize_range():
    np.testing.assert_allclose(normalize_range([[2.0, 4.0], [6.0, 3.0]]), [[0, 0.5], [1, 0.25]])
    np.testing.assert_array_equal(normalize_range(np.full((2, 2), 3.0)), 0.0)
