import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mcreach.core import ConfigError
from mcreach.systems import (
    cost_gradient,
    double_integrator_system,
    dubins_system,
    get_system,
    multiagent_system,
    quadratic_system,
    rockets_system,
    speed_regime,
    with_disk_obstacle,
)

GAMES = [rockets_system, dubins_system, double_integrator_system, multiagent_system]


def test_quadratic_hamiltonian():
    sys = quadratic_system(2)
    assert sys.hamiltonian(0, np.zeros(2), np.zeros(2)) == 0.0
    assert sys.hamiltonian(0, np.zeros(2), np.array([3.0, 4.0])) == 12.5
    assert sys.terminal_cost(np.array([1.0, 0.0])) == 0.0


def test_rockets_examples():
    sys = rockets_system()
    x = np.zeros(3)
    assert sys.hamiltonian(0, x, np.zeros(3)) == 0.0
    assert sys.hamiltonian(0, x, np.array([1.0, 0.0, 0.0])) == -64.0
    assert sys.terminal_cost(np.array([1.5, 0.0, 0.7])) == 0.0
    assert sys.bounds[0] == (-100.0, 100.0)


def test_dubins_examples():
    sys = dubins_system()
    x = np.zeros(3)
    assert sys.hamiltonian(0, x, np.array([1.0, 0.0, 0.0])) == 0.0
    assert sys.hamiltonian(0, x, np.array([0.0, 0.0, 1.0])) == 0.0
    assert sys.hamiltonian(0, x, np.zeros(3)) == 0.0
    # hand substitution at a generic point
    x = np.array([0.5, -1.0, 0.3])
    p = np.array([0.2, 0.7, -0.4])
    want = 0.2 * (np.cos(0.3) - 1) - 0.7 * np.sin(0.3) + abs(0.2 * -1.0 - 0.7 * 0.5 + 0.4) - 0.4
    assert sys.hamiltonian(0, x, p) == pytest.approx(want, abs=1e-15)


def test_double_integrator_examples():
    sys = double_integrator_system()
    assert sys.hamiltonian(0, np.array([0.0, 2.0]), np.array([1.0, 0.0])) == 2.0
    assert sys.hamiltonian(0, np.array([0.3, -0.2]), np.array([0.0, 1.0])) == -1.0
    assert sys.hamiltonian(0, np.array([0.3, -0.2]), np.zeros(2)) == 0.0
    assert sys.terminal_cost(np.array([0.1, 0.0])) == pytest.approx(0.0)


def test_multiagent_examples():
    sys = multiagent_system()
    assert sys.n == 45
    assert sys.hamiltonian(0, np.zeros(45), np.zeros(45)) == 0.0
    assert sys.terminal_cost(np.zeros(45)) == -1.5
    x = np.zeros(45)
    x[42] = 10.0  # evader at (10, 0), all pursuers at the origin
    assert sys.terminal_cost(x) == pytest.approx(8.5)


def test_multiagent_hamiltonian_terms():
    speeds = np.arange(1.0, 16.0)
    sys = multiagent_system(a=speeds)
    rng = np.random.default_rng(0)
    x, p = rng.normal(size=45), rng.normal(size=45)
    xs, ps = x.reshape(15, 3), p.reshape(15, 3)
    want = sum(speeds[i] * (ps[i, 0] * np.cos(xs[i, 2]) + ps[i, 1] * np.sin(xs[i, 2])) for i in range(15))
    want += abs(ps[14, 2]) - sum(abs(ps[i, 2]) for i in range(14))
    assert sys.hamiltonian(0, x, p) == pytest.approx(want, rel=1e-12)


def test_multiagent_speed_count():
    with pytest.raises(ConfigError):
        multiagent_system(a=[1.0] * 14)


def test_speed_regime_order():
    a = speed_regime(evader=2.0, pursuers=1.0)
    assert a[-1] == 2.0 and a[:14] == [1.0] * 14


@pytest.mark.parametrize("factory", GAMES)
def test_positive_homogeneity(factory):
    sys = factory()
    rng = np.random.default_rng(1)
    x = rng.uniform(-1, 1, size=(50, sys.n))
    p = rng.normal(size=(50, sys.n))
    lam = rng.uniform(0.1, 10, size=(50, 1))
    np.testing.assert_allclose(
        sys.hamiltonian(0, x, lam * p), lam[:, 0] * sys.hamiltonian(0, x, p), rtol=1e-12, atol=1e-12
    )


def test_quadratic_degree_two():
    sys = quadratic_system(3)
    p = np.array([0.3, -1.2, 2.0])
    assert sys.hamiltonian(0, 0, 3.0 * p) == pytest.approx(9.0 * sys.hamiltonian(0, 0, p))


@pytest.mark.parametrize("factory", GAMES + [lambda: quadratic_system(3)])
def test_lipschitz_in_p_finite(factory):
    sys = factory()
    rng = np.random.default_rng(2)
    lo = np.array([b[0] for b in sys.bounds])
    hi = np.array([b[1] for b in sys.bounds])
    x = rng.uniform(lo, hi, size=(200, sys.n))
    p = rng.uniform(-5, 5, size=(200, sys.n))
    q = p + rng.normal(scale=1e-3, size=p.shape)
    ratio = np.abs(sys.hamiltonian(0, x, p) - sys.hamiltonian(0, x, q)) / np.linalg.norm(p - q, axis=1)
    assert np.all(np.isfinite(ratio))


@pytest.mark.parametrize("factory", [rockets_system, dubins_system, double_integrator_system])
def test_zero_on_capture_circle(factory):
    sys = factory()
    r = sys.params.get("capture_radius", sys.params.get("target_radius"))
    ang = np.linspace(0, 2 * np.pi, 17)
    x = np.zeros((17, sys.n))
    x[:, 0], x[:, 1] = r * np.cos(ang), r * np.sin(ang)
    np.testing.assert_allclose(sys.terminal_cost(x), 0.0, atol=1e-14)


@pytest.mark.parametrize("factory", GAMES + [lambda: quadratic_system(2)])
def test_analytic_gradient_matches_differences(factory):
    sys = factory()
    rng = np.random.default_rng(3)
    x = rng.uniform(-3, 3, size=(20, sys.n))
    h = 1e-6
    fd = np.empty_like(x)
    for i in range(sys.n):
        e = np.zeros(sys.n)
        e[i] = h
        fd[:, i] = (sys.terminal_cost(x + e) - sys.terminal_cost(x - e)) / (2 * h)
    np.testing.assert_allclose(cost_gradient(sys, x), fd, atol=1e-6)


def test_registry_and_errors():
    assert get_system("rockets", a=10.0).params["a"] == 10.0
    with pytest.raises(ConfigError) as err:
        get_system("nope")
    assert "rockets" in str(err.value) and err.value.key == "system.name"
    with pytest.raises(ConfigError):
        get_system("dubins", bogus=1)
    ma = get_system("multiagent", evader_speed=2.0, pursuer_speed=1.0)
    assert ma.params["a15"] == 2.0 and ma.params["a1"] == 1.0


def test_disk_obstacle_sign():
    sys = with_disk_obstacle(double_integrator_system(), (0.5, 0.0), 0.2)
    assert sys.avoid_cost(np.array([0.5, 0.0])) == pytest.approx(0.2)
    assert sys.avoid_cost(np.array([0.0, 0.0])) < 0


@given(st.lists(st.floats(-50, 50), min_size=45, max_size=45))
@settings(max_examples=40, deadline=None)
def test_multiagent_cost_is_min_distance(vals):
    sys = multiagent_system()
    x = np.array(vals)
    xs = x.reshape(15, 3)
    d = min(np.hypot(*(xs[i, :2] - xs[14, :2])) for i in range(14))
    assert sys.terminal_cost(x) == pytest.approx(d - 1.5, abs=1e-9)
