import numpy as np
import pytest

from instances import example2, random_problem
from teamlq import oracle, radner
from teamlq.core import DecisionGain, InformationStructure, QuadraticForm


def _random_gain(rng, info):
    return DecisionGain(tuple(rng.standard_normal((m, p)) for m, p in zip(info.decision_dims, info.measurement_dims)))


def test_monte_carlo_is_deterministic():
    p = example2()
    policy = oracle.linear_policy(DecisionGain(([[0.2]], [[0.2]])))
    a = oracle.mc_expected_cost(p, policy, samples=150_000, seed=11)
    b = oracle.mc_expected_cost(p, policy, samples=150_000, seed=11)
    assert a == b
    c = oracle.mc_expected_cost(p, policy, samples=150_000, seed=12)
    assert c.mean != a.mean


def test_parallel_blocks_match_serial_exactly():
    p = example2()
    policy = oracle.linear_policy(DecisionGain(([[0.2]], [[0.2]])))
    serial = oracle.mc_expected_cost(p, policy, samples=300_000, seed=5)
    parallel = oracle.mc_expected_cost(p, policy, samples=300_000, seed=5, workers=4)
    assert serial == parallel


def test_example2_cost_at_one_million_samples():
    p = example2()
    est = oracle.mc_expected_cost(p, oracle.linear_policy(DecisionGain(([[0.2]], [[0.2]]))),
                                  samples=1_000_000, seed=3)
    assert est.within(0.6, 3.0)
    assert est.samples == 1_000_000


def test_zero_policy_costs_state_variance():
    p = example2()
    est = oracle.mc_expected_cost(p, oracle.linear_policy(DecisionGain(([[0.0]], [[0.0]]))),
                                  samples=200_000, seed=4)
    assert est.within(1.0, 4.0)


def test_random_linear_policies_match_closed_form():
    rng = np.random.default_rng(6)
    for i in range(20):
        p = random_problem(rng)
        gain = _random_gain(rng, p.info)
        est = oracle.mc_expected_cost(p, oracle.linear_policy(gain), samples=50_000, seed=100 + i)
        assert est.within(radner.expected_cost(p, gain), 4.0)


def test_sample_count_validation():
    with pytest.raises(ValueError):
        oracle.mc_expected_cost(example2(), oracle.linear_policy(DecisionGain(([[0.0]], [[0.0]]))), samples=1)


@pytest.mark.parametrize("seed", range(10))
def test_projection_oracle_matches_team_solver(seed):
    p = random_problem(np.random.default_rng(200 + seed))
    a = oracle.projection_oracle(p).assemble()
    b = radner.solve_unconstrained(p).assemble()
    assert np.max(np.abs(a - b)) <= 1e-8 * (1 + np.max(np.abs(b)))


def test_projection_oracle_single_player_full_information():
    rng = np.random.default_rng(7)
    p = random_problem(rng, n=3, players=1, noise=False)
    info = InformationStructure((p.info.m,), (np.eye(3),))
    from teamlq.core import TeamProblem
    p = TeamProblem(p.objective, (), info, p.stats, p.mode)
    np.testing.assert_allclose(oracle.projection_oracle(p).assemble(), radner.full_information_gain(p.objective),
                               atol=1e-10)


def test_example1_closed_form_values():
    assert oracle.example1_closed_form(2.0, 1.0) == 1.0
    assert oracle.example1_closed_form(0.5, 1.0) == 0.0
    assert oracle.example1_closed_form(-2.0, 1.0) == -1.0
    with pytest.raises(ValueError):
        oracle.example1_closed_form(1.0, -1.0)


def test_example1_grid_agrees_with_closed_form():
    x = np.round(np.arange(-300, 301) * 0.01, 12)
    u = np.round(np.arange(-30000, 30001) * 1e-4, 12)
    grid = oracle.example1_grid(1.0, x, u)
    exact = oracle.example1_closed_form(x, 1.0)
    assert np.max(np.abs(grid - exact)) <= 1e-4


def test_linear_decision_is_worse_than_nonlinear_somewhere():
    k = 0.5
    x = 1.5
    linear = k * x
    nonlinear = oracle.example1_closed_form(x, 1.0)
    assert (x - linear) ** 2 <= 1.0
    assert linear**2 == pytest.approx(0.5625)
    assert nonlinear**2 == pytest.approx(0.25)
    assert (k * 2.0) ** 2 == pytest.approx(oracle.example1_closed_form(2.0, 1.0) ** 2)


def test_congruence_max_eig_examples():
    info = InformationStructure((1,), ([[1.0]],))
    form = QuadraticForm([[-1.0]], [[0.0]], [[1.0]])
    assert oracle.congruence_max_eig(form, DecisionGain(([[0.5]],)), info) == pytest.approx(-0.75)
    assert oracle.congruence_max_eig(form, DecisionGain(([[2.0]],)), info) == pytest.approx(3.0)
