import math

import numpy as np
import pytest
from scipy.optimize import minimize

from fjlab.errors import (
    ConfidenceOrderViolated,
    InvalidScenario,
    UnbalancedScenario,
)
from fjlab.scenarios import (
    ExclusiveScenario,
    ImperfectScenario,
    empirical_route_crossover,
    exclusive_losses,
    gen_exclusive,
    gen_imperfect,
    imperfect_gap,
    moe_advantage_check,
    optimal_fixed_ensemble,
    project_simplex,
    route_loss,
    routing_error_threshold,
    uniform_mixture_profile,
    wrong_majority_holds,
)


def std_exclusive():
    return ExclusiveScenario(n=5, d=10, epsilon=0.1)


def std_imperfect():
    return ImperfectScenario(n=5, d=10, p=0.9, u=0.05, c=0.5)


class TestExclusiveScenario:
    def test_derived_masses(self):
        sc = std_exclusive()
        assert sc.p == pytest.approx(0.9)
        assert sc.u == pytest.approx(0.1)
        assert sc.balanced

    def test_epsilon_bounds(self):
        with pytest.raises(InvalidScenario):
            ExclusiveScenario(n=3, d=4, epsilon=0.0)
        with pytest.raises(InvalidScenario):
            ExclusiveScenario(n=3, d=4, epsilon=0.75)  # p would hit 1/d

    def test_frozen_balanced_gap(self):
        losses = exclusive_losses(std_exclusive(), np.full(5, 0.2))
        assert losses.gap_balanced == pytest.approx(1.2417, abs=1e-4)
        assert losses.gap_balanced == pytest.approx(math.log(0.9 / 0.26), abs=1e-12)

    def test_loss_components(self):
        sc = std_exclusive()
        losses = exclusive_losses(sc, np.full(5, 0.2))
        assert losses.l_moe == pytest.approx(-math.log(0.9), abs=1e-12)
        assert losses.l_ens == pytest.approx(-math.log(0.1 + 0.8 / 5.0), abs=1e-12)
        assert losses.gap_single == pytest.approx(
            (1.0 - 0.2) * math.log(0.9 / 0.1), abs=1e-12
        )

    def test_one_hot_weights_recover_single_agent(self):
        sc = std_exclusive()
        a = np.zeros(5)
        a[2] = 1.0
        losses = exclusive_losses(sc, a)
        # picking one agent: right region with mass rho_2, uniform elsewhere
        expected = -(0.2 * math.log(0.9) + 0.8 * math.log(0.1))
        assert losses.l_ens == pytest.approx(expected, abs=1e-12)

    def test_unbalanced_gap_is_none(self):
        sc = ExclusiveScenario(n=3, d=4, epsilon=0.1, rho=np.array([0.5, 0.25, 0.25]))
        losses = exclusive_losses(sc, np.full(3, 1.0 / 3.0))
        assert losses.gap_balanced is None
        assert not sc.balanced


class TestGenExclusive:
    def test_structure(self):
        sc = std_exclusive()
        sset = gen_exclusive(sc, 500, seed=1)
        beliefs, labels = sset.beliefs, sset.labels
        np.testing.assert_allclose(beliefs.sum(axis=2), 1.0, atol=1e-12)
        peak = beliefs.max(axis=2)
        competent = peak > 0.5
        assert np.all(competent.sum(axis=1) == 1)
        rows = np.argmax(peak, axis=1)
        idx = np.arange(500)
        np.testing.assert_allclose(beliefs[idx, rows, labels], sc.p, atol=1e-12)
        # everyone else is exactly uniform
        others = beliefs.copy()
        others[idx, rows, :] = 1.0 / sc.d
        np.testing.assert_allclose(others, 1.0 / sc.d, atol=1e-12)

    def test_bitwise_reproducible(self):
        sc = std_exclusive()
        a = gen_exclusive(sc, 200, seed=9)
        b = gen_exclusive(sc, 200, seed=9)
        assert a.beliefs.tobytes() == b.beliefs.tobytes()
        assert a.labels.tobytes() == b.labels.tobytes()
        c = gen_exclusive(sc, 200, seed=10)
        assert a.beliefs.tobytes() != c.beliefs.tobytes()

    def test_exact_risks_stored(self):
        sc = std_exclusive()
        sset = gen_exclusive(sc, 50, seed=2)
        assert sset.exact_risk
        plug_in = np.array(
            [
                [
                    float(((sset.beliefs[k, j] - np.eye(sc.d)[sset.labels[k]]) ** 2).sum())
                    for j in range(sc.n)
                ]
                for k in range(50)
            ]
        )
        np.testing.assert_allclose(sset.agent_risks(), plug_in, atol=1e-12)


class TestOptimalEnsemble:
    def test_balanced_returns_exact_uniform(self):
        a = optimal_fixed_ensemble(std_exclusive())
        np.testing.assert_array_equal(a, np.full(5, 0.2))

    def test_matches_slsqp_oracle_unbalanced(self):
        rho = np.array([0.5, 0.3, 0.2])
        sc = ExclusiveScenario(n=3, d=6, epsilon=0.15, rho=rho)
        ours = optimal_fixed_ensemble(sc, tol=1e-12)
        p, u = 1.0 - 0.15, 1.0 / 6.0

        def objective(a):
            return -(rho * np.log(u + (p - u) * np.clip(a, 1e-300, None))).sum()

        ref = minimize(
            objective,
            np.full(3, 1.0 / 3.0),
            method="SLSQP",
            bounds=[(0.0, 1.0)] * 3,
            constraints=[{"type": "eq", "fun": lambda a: a.sum() - 1.0}],
            options={"ftol": 1e-14, "maxiter": 500},
        )
        assert ref.success
        np.testing.assert_allclose(ours, ref.x, atol=1e-5)
        assert objective(ours) <= objective(ref.x) + 1e-10
        assert exclusive_losses(sc, ours).l_ens == pytest.approx(
            objective(ours), abs=1e-12
        )

    def test_project_simplex(self):
        v = np.array([0.4, 0.3, 0.3])
        np.testing.assert_allclose(project_simplex(v), v, atol=1e-12)
        out = project_simplex(np.array([2.0, -1.0, 0.5]))
        assert out.min() >= 0.0
        assert out.sum() == pytest.approx(1.0, abs=1e-12)
        np.testing.assert_allclose(out, [1.0, 0.0, 0.0], atol=1e-12)


class TestRoutingThreshold:
    def test_frozen_value(self):
        assert routing_error_threshold(std_exclusive()) == pytest.approx(
            0.56513, abs=1e-4
        )

    def test_route_loss_endpoints(self):
        sc = std_exclusive()
        assert route_loss(sc, 0.0) == pytest.approx(-math.log(0.9), abs=1e-12)
        assert route_loss(sc, 1.0) == pytest.approx(-math.log(0.1), abs=1e-12)

    def test_threshold_is_loss_crossover(self):
        sc = std_exclusive()
        delta = routing_error_threshold(sc)
        l_ens = exclusive_losses(sc, np.full(5, 0.2)).l_ens
        assert route_loss(sc, delta) == pytest.approx(l_ens, abs=1e-12)

    def test_requires_balanced(self):
        sc = ExclusiveScenario(n=3, d=4, epsilon=0.1, rho=np.array([0.5, 0.25, 0.25]))
        with pytest.raises(UnbalancedScenario):
            routing_error_threshold(sc)

    def test_empirical_crossover_near_theory(self):
        sc = std_exclusive()
        delta = empirical_route_crossover(sc, samples=100_000, seed=0)
        assert delta == pytest.approx(routing_error_threshold(sc), abs=0.01)


class TestMoEAdvantage:
    def test_holds_on_grid(self):
        for n in (2, 4, 8):
            for d in (2, 4, 10):
                for eps in (0.05, 0.1, 0.3):
                    if eps >= 1.0 - 1.0 / d:
                        continue
                    assert moe_advantage_check(ExclusiveScenario(n=n, d=d, epsilon=eps))


class TestImperfectScenario:
    def test_frozen_gap(self):
        assert imperfect_gap(std_imperfect()) == pytest.approx(1.4088, abs=1e-4)
        assert imperfect_gap(std_imperfect()) == pytest.approx(
            math.log(0.9 / ((0.9 + 4 * 0.05) / 5.0)), abs=1e-12
        )

    def test_parameter_validation(self):
        with pytest.raises(InvalidScenario):
            ImperfectScenario(n=2, d=4, p=0.9, u=0.05, c=0.5)
        with pytest.raises(InvalidScenario):
            ImperfectScenario(n=5, d=4, p=0.2, u=0.05, c=0.5)  # p below 1/d
        with pytest.raises(InvalidScenario):
            ImperfectScenario(n=5, d=4, p=0.9, u=0.05, c=0.02)  # c below u
        with pytest.raises(InvalidScenario):
            ImperfectScenario(n=5, d=4, p=0.9, u=0.05)  # c required

    def test_binary_labels_force_c(self):
        sc = ImperfectScenario(n=4, d=2, p=0.8, u=0.3)
        assert sc.c == pytest.approx(0.7)
        with pytest.raises(InvalidScenario):
            ImperfectScenario(n=4, d=2, p=0.8, u=0.3, c=0.5)

    def test_wrong_majority_frozen_case(self):
        assert wrong_majority_holds(ImperfectScenario(n=5, d=4, p=0.9, u=0.05, c=0.7))

    def test_wrong_majority_can_fail(self):
        # shared wrong mass too small: the leftover labels win the mixture
        assert not wrong_majority_holds(
            ImperfectScenario(n=5, d=4, p=0.9, u=0.05, c=0.25)
        )

    def test_uniform_mixture_profile(self):
        sc = ImperfectScenario(n=5, d=4, p=0.9, u=0.05, c=0.7)
        mix = uniform_mixture_profile(sc)
        assert mix.sum() == pytest.approx(1.0, abs=1e-12)
        assert mix[0] == pytest.approx((0.9 + 4 * 0.05) / 5.0, abs=1e-12)
        assert int(np.argmax(mix)) == 1


class TestGenImperfect:
    def test_structure(self):
        sc = ImperfectScenario(n=5, d=4, p=0.9, u=0.05, c=0.7)
        sset = gen_imperfect(sc, 300, seed=3)
        beliefs, labels = sset.beliefs, sset.labels
        np.testing.assert_allclose(beliefs.sum(axis=2), 1.0, atol=1e-12)
        idx = np.arange(300)
        competent = np.argmax(beliefs.max(axis=2), axis=1)
        np.testing.assert_allclose(beliefs[idx, competent, labels], sc.p, atol=1e-12)
        wrong = (labels + 1) % sc.d
        others = np.ones((300, 5), dtype=bool)
        others[idx, competent] = False
        rows_k, rows_j = np.nonzero(others)
        np.testing.assert_allclose(
            beliefs[rows_k, rows_j, labels[rows_k]], sc.u, atol=1e-12
        )
        np.testing.assert_allclose(
            beliefs[rows_k, rows_j, wrong[rows_k]], sc.c, atol=1e-12
        )

    def test_binary_structure(self):
        sc = ImperfectScenario(n=4, d=2, p=0.8, u=0.3)
        sset = gen_imperfect(sc, 100, seed=4)
        np.testing.assert_allclose(sset.beliefs.sum(axis=2), 1.0, atol=1e-12)

    def test_confidence_order_enforced(self):
        # competent row nearly uniform, others sharply peaked on the shared
        # wrong label: confidence routing would pick a wrong agent
        sc = ImperfectScenario(n=3, d=4, p=0.26, u=0.05, c=0.85)
        with pytest.raises(ConfidenceOrderViolated):
            gen_imperfect(sc, 10, seed=5)

    def test_bitwise_reproducible(self):
        sc = std_imperfect()
        a = gen_imperfect(sc, 150, seed=6)
        b = gen_imperfect(sc, 150, seed=6)
        assert a.beliefs.tobytes() == b.beliefs.tobytes()
        assert a.labels.tobytes() == b.labels.tobytes()
