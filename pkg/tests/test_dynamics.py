import numpy as np
import pytest

from rnnchaos import chaos, dynamics, netgen, pwl
from rnnchaos.errors import ContractError
from rnnchaos.netgen import InitScheme

T = pwl.triangle()
LOW = InitScheme("custom-variance", sigma2="low-variance")


def test_triangle_orbit():
    np.testing.assert_allclose(dynamics.trajectory(T, 2 / 9, 3), [2 / 9, 4 / 9, 8 / 9, 2 / 9], atol=1e-15)


def test_zero_map_orbit():
    traj = dynamics.trajectory(pwl.constant(0.0), 0.5, 5)
    np.testing.assert_array_equal(traj, [0.5, 0, 0, 0, 0, 0])


def test_fixed_point_orbit_is_constant():
    traj = dynamics.trajectory(T, 0.0, 10)
    assert np.all(traj == 0.0)


def test_trajectory_steps_are_exact_evaluations():
    m = netgen.build_map(netgen.sample_network(64, InitScheme(sigma2=50.0), 3))
    traj = dynamics.trajectory(m, 0.37, 200)
    for t in range(200):
        assert traj[t + 1] == pwl.evaluate(m, traj[t])
    assert np.all((traj >= 0) & (traj <= 1))


def test_trajectory_accepts_callables():
    traj = dynamics.trajectory(lambda x: 0.5 * x, 1.0, 3)
    np.testing.assert_array_equal(traj, [1.0, 0.5, 0.25, 0.125])


def test_trajectory_contract():
    with pytest.raises(ContractError):
        dynamics.trajectory(T, 0.5, 0)
    with pytest.raises(ContractError):
        dynamics.trajectory(T, 1.5, 3)


def test_scrambling_zero_gap():
    rep = dynamics.scrambling_report(T, 0.3, 0.0, 50)
    assert np.all(rep.pair_distances == 0.0)


def test_scrambling_zero_map():
    rep = dynamics.scrambling_report(pwl.constant(0.0), 0.2, 0.1, 20)
    assert rep.initial_distance == pytest.approx(0.1)
    assert np.all(rep.pair_distances[1:] == 0.0)


def test_scrambling_report_invariants():
    rep = dynamics.scrambling_report(T, 0.123, 1e-7, 150)
    d = rep.pair_distances
    assert d.size == 151 and d[0] == rep.initial_distance
    assert np.all(d >= 0) and rep.min_tail <= rep.max_tail
    assert rep.min_tail == d[75:].min() and rep.max_tail == d[75:].max()
    assert [r[0] for r in rep.rows()] == list(range(151))


def test_contracting_samples_are_asymptotic():
    checked = 0
    for i in range(50):
        m = netgen.build_map(netgen.sample_network(256, LOW, netgen.trial_seed(5, i)))
        if chaos.has_nonzero_fixed_point(m):
            continue
        x = float(np.random.default_rng(i).uniform(0, 1 - 1e-7))
        assert dynamics.scrambling_report(m, x, 1e-7, 150).max_tail < 1e-6
        checked += 1
    assert checked >= 45


def test_triangle_region_growth():
    series = dynamics.region_growth(T, 10)
    np.testing.assert_array_equal(series.counts, 2 ** np.arange(1, 11))
    assert abs(series.fitted_rate - 2.0) <= 1e-6
    assert series.truncated_at is None


def test_zero_map_region_growth():
    series = dynamics.region_growth(pwl.constant(0.0), 6)
    assert np.all(series.counts == 1)
    assert series.fitted_rate == pytest.approx(1.0)


def test_region_growth_truncates_on_budget():
    series = dynamics.region_growth(T, 12, budget=1000)
    assert series.truncated_at == 10
    assert series.counts.size == 9
    assert series.fitted_rate == pytest.approx(2.0)


def test_region_growth_contract():
    with pytest.raises(ContractError):
        dynamics.region_growth(T, 2)


def test_fit_growth_rate_window():
    rate, window = dynamics.fit_growth_rate(3.0 ** np.arange(1, 13), fit_start=4)
    assert rate == pytest.approx(3.0) and window == (4, 12)
    rate, window = dynamics.fit_growth_rate([2, 4, 8, 16], fit_start=3)
    assert window == (1, 4)


def test_non_chaotic_region_counts_plateau():
    k = 32
    checked = 0
    for i in range(50):
        m = netgen.build_map(netgen.sample_network(k, LOW, netgen.trial_seed(11, i)))
        v = chaos.detect_period3_exact(m)
        if v.is_period3 or chaos.has_nonzero_fixed_point(m):
            continue
        counts = dynamics.region_growth(m, 12).counts
        assert np.all(counts[5:][1:] <= counts[5:][:-1] + k)
        checked += 1
    assert checked >= 45
