import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mcreach.core import (
    ConfigError,
    EstimatorConfig,
    EvalSet,
    Phase,
    make_eval_grid,
    rng_stream,
    standard_normal_draws,
)


def test_grid_3x3_with_frozen_theta():
    es = make_eval_grid([(-1, 1), (-1, 1), (0, 0)], (3, 3), {2: 0.0})
    assert len(es) == 9
    np.testing.assert_array_equal(es.points[0], [-1, -1, 0])
    np.testing.assert_array_equal(es.points[-1], [1, 1, 0])
    # last free axis varies fastest
    np.testing.assert_array_equal(es.points[1], [-1, 0, 0])


def test_grid_40x40_slice():
    es = make_eval_grid([(-100, 100), (-100, 100), (-np.pi / 2, np.pi / 2)], (40, 40), {2: 0.0})
    assert len(es) == 1600
    assert es.layout.shape == (40, 40)
    assert np.all(es.points[:, 2] == 0.0)


def test_grid_single_point():
    es = make_eval_grid([(-2.0, 3.0)], (1,))
    assert len(es) == 1
    assert es.points[0, 0] == -2.0


def test_grid_dimension_mismatch():
    with pytest.raises(ConfigError) as err:
        make_eval_grid([(-1, 1), (-1, 1)], (3, 3), n=3)
    assert err.value.key == "eval.bounds"


def test_grid_bad_counts():
    with pytest.raises(ConfigError):
        make_eval_grid([(-1, 1), (-1, 1)], (3,))
    with pytest.raises(ConfigError):
        make_eval_grid([(-1, 1), (-1, 1)], (0, 3))
    with pytest.raises(ConfigError):
        make_eval_grid([(1, 1), (-1, 1)], (3, 3))


def test_eval_points_read_only():
    es = EvalSet(points=np.zeros((2, 2)))
    with pytest.raises(ValueError):
        es.points[0, 0] = 1.0


def test_eval_check_inside():
    es = EvalSet(points=[[0.0, 5.0]])
    with pytest.raises(ConfigError):
        es.check_inside([(-1, 1), (-1, 1)])
    es.check_inside([(-1, 1), (-10, 10)])


def test_phase_validation():
    Phase(0.5, [1.0, 2.0])
    with pytest.raises(ConfigError):
        Phase(0.5, [np.nan])
    with pytest.raises(ConfigError):
        Phase(-1.0, [0.0])


@pytest.mark.parametrize(
    "kwargs, key",
    [
        ({"delta": 0.0}, "estimator.delta"),
        ({"n_samples": 0}, "estimator.n_samples"),
        ({"coeff_bounds": (0.0, 1.0)}, "estimator.coeff_bounds"),
        ({"coeff_bounds": (2.0, 1.0)}, "estimator.coeff_bounds"),
        ({"grad_floor": -1.0}, "estimator.grad_floor"),
        ({"horizon": 0.0}, "estimator.horizon"),
    ],
)
def test_estimator_config_invariants(kwargs, key):
    with pytest.raises(ConfigError) as err:
        EstimatorConfig(**kwargs)
    assert err.value.key == key


def test_sigma_backward_convention():
    cfg = EstimatorConfig(delta=0.08, horizon=1.0)
    assert cfg.sigma(1.0) == 0.0
    assert cfg.sigma(0.0) == pytest.approx(np.sqrt(0.08))
    assert cfg.sigma(0.75) == pytest.approx(np.sqrt(0.02))


def test_rng_stream_reproducible():
    a = rng_stream(7, 0, 0).standard_normal(100)
    b = rng_stream(7, 0, 0).standard_normal(100)
    np.testing.assert_array_equal(a, b)


def test_rng_streams_uncorrelated():
    a = rng_stream(7, 0, 0).standard_normal(100_000)
    b = rng_stream(7, 1, 0).standard_normal(100_000)
    c = rng_stream(7, 0, 1).standard_normal(100_000)
    assert abs(np.corrcoef(a, b)[0, 1]) < 0.02
    assert abs(np.corrcoef(a, c)[0, 1]) < 0.02


def test_rng_thread_independence():
    from concurrent.futures import ThreadPoolExecutor

    want = [rng_stream(3, m, 0).standard_normal(50) for m in range(16)]
    with ThreadPoolExecutor(4) as pool:
        got = list(pool.map(lambda m: rng_stream(3, m, 0).standard_normal(50), reversed(range(16))))
    for w, g in zip(want, reversed(got)):
        np.testing.assert_array_equal(w, g)


@given(st.integers(1, 301), st.integers(1, 4))
@settings(max_examples=30, deadline=None)
def test_antithetic_pairs_sum_to_zero(n_samples, n):
    z = standard_normal_draws(11, 2, 0, n_samples, n, antithetic=True)
    half = n_samples // 2
    np.testing.assert_array_equal(z[:half], -z[half : 2 * half])
    # summed pairwise the cancellation is exact; a plain running sum may not be
    assert np.all((z[:half] + z[half : 2 * half]).sum(axis=0) == 0.0)
    if n_samples % 2:
        assert np.all(z[-1] == 0.0)


def test_draws_match_stream():
    z = standard_normal_draws(5, 1, 2, 10, 3, antithetic=False)
    np.testing.assert_array_equal(z, rng_stream(5, 1, 2).standard_normal((10, 3)))
