"""Counter-based stream laws: purity, cell separation, reproducibility."""
import numpy as np

from impactmm import rng


def test_same_cell_same_draws():
    a = rng.uniforms(2026, 5, rng.SELL_COUNT, 100)
    b = rng.uniforms(2026, 5, rng.SELL_COUNT, 100)
    np.testing.assert_array_equal(a, b)


def test_cells_differ():
    base = rng.uniforms(2026, 5, rng.SELL_COUNT, 64)
    assert not np.array_equal(base, rng.uniforms(2026, 6, rng.SELL_COUNT, 64))
    assert not np.array_equal(base, rng.uniforms(2026, 5, rng.BUY_COUNT, 64))
    assert not np.array_equal(base, rng.uniforms(2027, 5, rng.SELL_COUNT, 64))
    assert not np.array_equal(base, rng.uniforms(2026, 5, rng.SELL_COUNT, 64, index=1))


def test_draws_in_unit_interval():
    u = rng.uniforms(1, 0, rng.SCRATCH, 10000)
    assert np.all((u >= 0.0) & (u < 1.0))
    assert abs(u.mean() - 0.5) < 0.02


def test_normals_and_betas_reproducible():
    n1 = rng.normals(9, 3, rng.POLICY_INIT, 50, index=2)
    n2 = rng.normals(9, 3, rng.POLICY_INIT, 50, index=2)
    np.testing.assert_array_equal(n1, n2)
    b1 = rng.betas(9, 3, rng.SELL_MARK, 50, 2.0, 5.0)
    assert np.all((b1 >= 0.0) & (b1 <= 1.0))


def test_poisson_inverse_cdf_monotone_in_u():
    u = np.linspace(0.0, 0.999, 500)
    counts = rng.poisson_from_uniform(np.full_like(u, 7.5), u)
    assert np.all(np.diff(counts) >= 0)


def test_poisson_rejects_bad_means():
    import pytest
    with pytest.raises(ValueError):
        rng.poisson_from_uniform(np.array([-1.0]), np.array([0.5]))
    with pytest.raises(ValueError):
        rng.poisson_from_uniform(np.array([701.0]), np.array([0.5]))
