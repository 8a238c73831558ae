import numpy as np
import pytest

from instances import example2, random_problem
from teamlq import oracle, radner
from teamlq.core import DecisionGain, GaussianStatistics, InformationStructure, QuadraticForm, TeamProblem


def _scalar_blocks(gain):
    return [float(b.item()) for b in gain.blocks]


def _random_gain(rng, info, scale=1.0):
    return DecisionGain(tuple(scale * rng.standard_normal((m, p))
                              for m, p in zip(info.decision_dims, info.measurement_dims)))


RANDOM = [random_problem(np.random.default_rng(seed)) for seed in range(10)]


def test_full_information_gain_example2():
    np.testing.assert_allclose(radner.full_information_gain(example2().objective), [[1 / 3], [1 / 3]], atol=1e-12)


def test_full_information_gain_zero_coupling_and_residual():
    form = QuadraticForm(np.eye(2), np.zeros((2, 3)), np.eye(3))
    assert np.all(radner.full_information_gain(form) == 0)
    rng = np.random.default_rng(0)
    g = rng.standard_normal((3, 3))
    r = g @ g.T + np.eye(3)
    s = rng.standard_normal((2, 3))
    l = radner.full_information_gain(QuadraticForm(np.eye(2), s, r))
    assert np.linalg.norm(r @ l + s.T) <= 1e-10 * np.linalg.norm(s)


def test_team_system_example2_entries():
    system = radner.build_team_system(example2())
    np.testing.assert_allclose(system.matrix, [[4, 1], [1, 4]])
    np.testing.assert_allclose(system.rhs, [1, 1])


def test_team_system_is_symmetric_psd():
    for p in RANDOM:
        a = radner.build_team_system(p).matrix
        np.testing.assert_allclose(a, a.T, atol=1e-12 * np.abs(a).max())
        assert np.linalg.eigvalsh(a)[0] >= -1e-10 * np.abs(a).max()


def test_example2_solution():
    gain = radner.solve_unconstrained(example2())
    np.testing.assert_allclose(_scalar_blocks(gain), [0.2, 0.2], atol=1e-10)
    assert abs(radner.expected_cost(example2(), gain) - 0.6) < 1e-12


def test_single_player_full_information_reduces_to_l():
    rng = np.random.default_rng(1)
    p = random_problem(rng, n=3, players=1, noise=False)
    p = p.replace(info=InformationStructure((p.info.m,), (np.eye(3),)))
    gain = radner.solve_unconstrained(p)
    np.testing.assert_allclose(gain.blocks[0], radner.full_information_gain(p.objective), atol=1e-10)


def test_no_state_coupling_gives_zero_gain():
    p = example2()
    p = p.replace(objective=QuadraticForm(p.objective.q, np.zeros((1, 2)), p.objective.r))
    assert np.all(radner.solve_unconstrained(p).assemble() == 0)


def test_singular_system_names_players():
    info = InformationStructure((1, 1), ([[1.0]], [[0.0]]))
    p = TeamProblem(example2().objective, (), info, GaussianStatistics([[1.0]]), "gaussian")
    with pytest.raises(radner.SingularSystemError, match="players"):
        radner.solve_unconstrained(p)


def test_expected_cost_examples():
    p = example2()
    assert abs(radner.expected_cost(p, DecisionGain(([[1 / 6]], [[1 / 6]]))) - 11 / 18) < 1e-12
    assert abs(radner.expected_cost(p, DecisionGain(([[0.0]], [[0.0]]))) - 1.0) < 1e-15


def test_estimate_then_act():
    p = example2()
    np.testing.assert_allclose(_scalar_blocks(radner.estimate_then_act(p)), [1 / 6, 1 / 6], atol=1e-12)
    rng = np.random.default_rng(2)
    q = random_problem(rng, n=3, players=1, noise=False)
    q = q.replace(info=InformationStructure((q.info.m,), (np.eye(3),)))
    np.testing.assert_allclose(radner.estimate_then_act(q).blocks[0], radner.full_information_gain(q.objective),
                               atol=1e-10)
    for p in RANDOM:
        eta = radner.expected_cost(p, radner.estimate_then_act(p))
        assert eta >= radner.expected_cost(p, radner.solve_unconstrained(p)) - 1e-9


def test_orthogonality_residual():
    p = example2()
    assert radner.orthogonality_residual(p, radner.solve_unconstrained(p)) < 1e-9
    assert radner.orthogonality_residual(p, radner.estimate_then_act(p)) > 1e-3
    for q in RANDOM:
        assert radner.orthogonality_residual(q, radner.solve_unconstrained(q)) < 1e-9


def test_stationarity_and_first_order_change():
    for p in RANDOM:
        gain = radner.solve_unconstrained(p)
        grad = radner.cost_gradient(p, gain)
        scale = 1.0 + abs(radner.expected_cost(p, gain))
        assert max(np.abs(b).max() for b in grad.blocks) <= 1e-8 * scale
        # a single-block perturbation changes the cost only at second order
        rng = np.random.default_rng(0)
        d = [np.zeros_like(b) for b in gain.blocks]
        d[0] = rng.standard_normal(d[0].shape)
        eps = 1e-5
        plus = DecisionGain(tuple(b + eps * e for b, e in zip(gain.blocks, d)))
        minus = DecisionGain(tuple(b - eps * e for b, e in zip(gain.blocks, d)))
        first_order = (radner.expected_cost(p, plus) - radner.expected_cost(p, minus)) / (2 * eps)
        assert abs(first_order) < 1e-8 * scale * 10


def test_optimality_under_random_perturbations():
    for p in RANDOM[:5]:
        gain = radner.solve_unconstrained(p)
        best = radner.expected_cost(p, gain)
        rng = np.random.default_rng(3)
        for _ in range(200):
            d = _random_gain(rng, p.info)
            norm = np.linalg.norm(d.assemble())
            for eps in (1e-3, 1e-2):
                trial = DecisionGain(tuple(b + eps * e / norm for b, e in zip(gain.blocks, d.blocks)))
                assert radner.expected_cost(p, trial) >= best - 1e-10


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(4)
    for p in RANDOM:
        gain = _random_gain(rng, p.info)
        grad = radner.cost_gradient(p, gain).coefficients()
        z = gain.coefficients()
        h = 1e-6
        fd = np.empty_like(z)
        for k in range(z.size):
            e = np.zeros_like(z)
            e[k] = h
            fd[k] = (radner.expected_cost(p, DecisionGain.from_coefficients(z + e, p.info))
                     - radner.expected_cost(p, DecisionGain.from_coefficients(z - e, p.info))) / (2 * h)
        assert np.linalg.norm(grad - fd) <= 1e-6 * max(1.0, np.linalg.norm(grad))


@pytest.mark.parametrize("alpha", [1e-3, 0.5, 7.0, 1e4])
def test_argmin_invariant_under_objective_scaling(alpha):
    for p in RANDOM:
        base = radner.solve_unconstrained(p).assemble()
        scaled = radner.solve_unconstrained(p.replace(objective=p.objective.scaled(alpha))).assemble()
        assert np.max(np.abs(scaled - base)) <= 1e-9 * max(1.0, np.abs(base).max())


def test_nonlinear_perturbation_does_not_improve():
    p = example2()
    gain = radner.solve_unconstrained(p)
    linear = oracle.linear_policy(gain)
    bent = [lambda y, k=b: y @ k.T + 0.1 * np.tanh(y) for b in gain.blocks]
    diff = oracle.mc_cost_difference(p, bent, linear, samples=400_000, seed=5)
    assert diff.mean > 3 * diff.std_error
    est = oracle.mc_expected_cost(p, bent, samples=400_000, seed=6)
    assert est.mean - radner.expected_cost(p, gain) > 3 * est.std_error
