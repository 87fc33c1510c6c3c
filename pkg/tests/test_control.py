import os
import unittest

import numpy as np

from fairdyn.population import PopulationState
from fairdyn.dynamics import DynamicsParams, simulate, mean_update
from fairdyn.equilibrium import fixed_point
from fairdyn.policy import FairPolicy, FixedPolicy, blind_threshold
from fairdyn.control import (
    LenderParams, reward, greedy_threshold, solve_bellman, solve_discrete_mdp, lemma1_check, detect_bifurcation,
    fair_constrained_simulation, optimize_fair_rate, discounted_reward, OptimalPolicy, lemma1_rate_bound,
)
from fairdyn.errors import DomainError, ConvergenceError, GroupCountError
from fairdyn.logger import Logger

SLOW_TESTS = os.environ.get("FAIRDYN_SLOW_TESTS", "0") == "1"

EXAMPLE_PARAMS = DynamicsParams(0.99, 0.2)
EXAMPLE_LENDER = LenderParams(0.25, 0.6)

# constants whose optimal policy splits the starting means into two basins
BASIN_PARAMS = DynamicsParams(0.99, 0.4)
BASIN_LENDER = LenderParams(0.25, 0.95)


def quiet():
    return Logger(print_level=Logger.DISABLED)


class TestReward(unittest.TestCase):

    def test_examples(self):
        state = PopulationState(0.5, 2)
        lender = LenderParams(0.25, 0.5)
        self.assertAlmostEqual(reward(0.0, state, lender), 1.25 * 0.5 - 1, places=14)
        self.assertEqual(reward(1.0, state, lender), 0.0)
        # uniform population: p_plus = 1/2, mu_plus = 3/4
        self.assertAlmostEqual(reward(0.5, state, lender), 0.5 * (1.25 * 0.75 - 1), places=14)

    def test_greedy(self):
        self.assertAlmostEqual(greedy_threshold(LenderParams(0.25, 0.5)), 0.8)
        self.assertEqual(greedy_threshold(0.0), 1.0)
        self.assertEqual(greedy_threshold(float("inf")), 0.0)
        with self.assertRaises(DomainError):
            greedy_threshold(-1.0)

    def test_greedy_is_one_step_argmax(self):
        state = PopulationState(0.6, 3)
        lender = LenderParams(0.5, 0.0)
        grid = np.linspace(0, 1, 10001)
        values = [reward(A, state, lender) for A in grid]
        self.assertLess(abs(grid[int(np.argmax(values))] - greedy_threshold(lender)), 2e-4)

    def test_lender_params(self):
        with self.assertRaises(DomainError):
            LenderParams(0.0, 0.5)
        with self.assertRaises(DomainError):
            LenderParams(0.25, 1.0)
        with self.assertRaises(DomainError):
            LenderParams(float("nan"), 0.5)
        self.assertEqual(LenderParams(1, 0).to_dict(), {"R": 1.0, "gamma": 0.0})
        self.assertAlmostEqual(lemma1_rate_bound(EXAMPLE_PARAMS), 3.95)


class TestBellman(unittest.TestCase):

    def test_myopic_lender_is_greedy(self):
        for R in [0.1, 0.25, 1.0, 3.0]:
            lender = LenderParams(R, 0.0)
            vf = solve_bellman(2.0, EXAMPLE_PARAMS, lender, grid_size=64, action_grid=65, log=quiet())
            self.assertTrue(vf.converged)
            np.testing.assert_allclose(vf.policy, greedy_threshold(lender), atol=vf.action_spacing)

    def test_contraction(self):
        lender = LenderParams(0.25, 0.6)
        vf = solve_bellman(2.0, EXAMPLE_PARAMS, lender, grid_size=64, action_grid=33, refine_rounds=0,
                           log=quiet())
        history = np.asarray(vf.residual_history)
        history = history[history > 1e-13]
        ratios = history[1:] / history[:-1]
        self.assertLessEqual(np.exp(np.mean(np.log(ratios))), 1.1 * lender.gamma)
        self.assertLessEqual(vf.residual, 1e-9)

    def test_discrete_oracle(self):
        params = DynamicsParams(0.8, 0.3)
        lender = LenderParams(0.25, 0.2)
        vf = solve_bellman(2.0, params, lender, grid_size=64, action_grid=64, refine_rounds=0, log=quiet())
        oracle = solve_discrete_mdp(2.0, params, lender, n_states=64, n_actions=64)
        np.testing.assert_array_equal(vf.mu_grid, oracle.mu_grid)
        gap = np.max(np.abs(vf.values - oracle.values))
        self.assertLessEqual(gap, 0.02 * np.max(np.abs(oracle.values)))

    def test_value_function_rows(self):
        vf = solve_bellman(2.0, EXAMPLE_PARAMS, LenderParams(0.25, 0.0), grid_size=64, action_grid=17,
                           refine_rounds=0, log=quiet())
        rows = vf.to_rows()
        self.assertEqual(len(rows), 64)
        self.assertEqual(set(rows[0].keys()), {"mu", "J", "A_star"})
        self.assertAlmostEqual(vf.value_at(vf.mu_grid[10]), vf.values[10], places=12)
        self.assertEqual(len(vf.solver_log.history), vf.iterations)

    def test_errors(self):
        with self.assertRaises(DomainError):
            solve_bellman(2.0, EXAMPLE_PARAMS, EXAMPLE_LENDER, grid_size=10, log=quiet())
        with self.assertRaises(DomainError):
            solve_bellman(0.0, EXAMPLE_PARAMS, EXAMPLE_LENDER, grid_size=64, log=quiet())
        with self.assertRaises(ConvergenceError) as context:
            solve_bellman(2.0, EXAMPLE_PARAMS, EXAMPLE_LENDER, grid_size=64, action_grid=9, max_iterations=1,
                          log=quiet())
        self.assertEqual(context.exception.iterations, 1)


class TestOptimalPolicy(unittest.TestCase):

    @classmethod
    def setUpClass(cls):
        cls.vf = solve_bellman(1.6, EXAMPLE_PARAMS, EXAMPLE_LENDER, grid_size=64, action_grid=65, refine_rounds=1,
                               log=quiet())

    def test_lemma1(self):
        report = lemma1_check(self.vf, log=quiet())
        self.assertTrue(report.applicable)
        self.assertTrue(report.passed, report.violations[:5])
        self.assertAlmostEqual(report.bound, 0.2 / 0.99)

    def test_lemma1_skipped(self):
        log = quiet()
        report = lemma1_check(self.vf, params=DynamicsParams(0.5, 0.4), lender=LenderParams(1.0, 0.6), log=log)
        self.assertFalse(report.applicable)
        self.assertIsNone(report.passed)
        self.assertTrue(any("exceeds" in line for line in log.messages(Logger.WARN)))

    def test_policy_thresholds(self):
        policy = OptimalPolicy(self.vf)
        states = [PopulationState(0.5, 1.6), PopulationState(0.9, 1.6)]
        thresholds = policy.thresholds(states)
        self.assertEqual(len(thresholds), 2)
        self.assertAlmostEqual(thresholds[0], self.vf.policy_at(0.5))
        self.assertEqual(OptimalPolicy([self.vf, self.vf]).thresholds(states), thresholds)
        with self.assertRaises(GroupCountError):
            OptimalPolicy([self.vf, self.vf]).thresholds(states[:1])
        with self.assertRaises(DomainError):
            OptimalPolicy([])


class TestBifurcation(unittest.TestCase):

    def test_fixed_threshold_single_cluster(self):
        report = detect_bifurcation(FixedPolicy(0.3), c=1.6, params=EXAMPLE_PARAMS, mu0_grid=np.linspace(0.05, 0.95, 19))
        self.assertEqual(report.n_clusters, 1)
        self.assertEqual(report.boundaries, [])
        self.assertEqual(len(report.basins), 1)
        self.assertEqual(report.to_dict()["mu0"][0], 0.05)

    def test_myopic_single_cluster(self):
        vf = solve_bellman(1.6, EXAMPLE_PARAMS, LenderParams(0.25, 0.0), grid_size=64, action_grid=65, log=quiet())
        report = detect_bifurcation(vf, mu0_grid=np.linspace(0.05, 0.95, 19))
        self.assertEqual(report.n_clusters, 1)

    def test_plain_policy_needs_dynamics(self):
        with self.assertRaises(DomainError):
            detect_bifurcation(FixedPolicy(0.3))

    def test_unconverged_starts_are_reported(self):
        mu_star = fixed_point(0.3, 1.6, EXAMPLE_PARAMS).mu_inf
        log = quiet()
        report = detect_bifurcation(FixedPolicy(0.3), c=1.6, params=EXAMPLE_PARAMS, mu0_grid=[0.1, mu_star, 0.9], T=5,
                                    log=log)
        self.assertEqual(report.unconverged, [0.1, 0.9])
        self.assertEqual(report.n_clusters, 1)
        self.assertAlmostEqual(report.clusters[0], mu_star, places=10)
        self.assertEqual(report.boundaries, [])
        self.assertEqual(report.to_dict()["unconverged"], [0.1, 0.9])
        self.assertTrue(any("still moving" in line for line in log.messages(Logger.WARN)))

    def test_no_start_settles(self):
        with self.assertRaises(ConvergenceError) as context:
            detect_bifurcation(FixedPolicy(0.3), c=1.6, params=EXAMPLE_PARAMS, mu0_grid=[0.1, 0.5, 0.9], T=5,
                               log=quiet())
        self.assertEqual(context.exception.iterations, 5)

    def test_upper_limit_bound(self):
        # no threshold lifts the mean above the fixed point of the social welfare threshold
        params = EXAMPLE_PARAMS
        best = fixed_point(params.nu / params.beta, 1.6, params).mu_inf
        self.assertAlmostEqual(best, 0.708, delta=0.005)
        A_grid = np.linspace(0.0, 1.0, 1001)
        self.assertLess(np.max(mean_update(A_grid, 0.976, 1.6, params.beta, params.nu)), 0.976)
        for mu in [0.75, 0.85, 0.95]:
            self.assertLess(np.max(mean_update(A_grid, mu, 1.6, params.beta, params.nu)), mu)

    @unittest.skipUnless(SLOW_TESTS, "set FAIRDYN_SLOW_TESTS=1 to run")
    def test_example_constants_single_cluster(self):
        vf = solve_bellman(1.6, EXAMPLE_PARAMS, EXAMPLE_LENDER, log=quiet())
        report = detect_bifurcation(vf, log=quiet())
        bound = fixed_point(EXAMPLE_PARAMS.nu / EXAMPLE_PARAMS.beta, 1.6, EXAMPLE_PARAMS).mu_inf
        self.assertEqual(report.n_clusters, 1)
        self.assertEqual(report.boundaries, [])
        self.assertEqual(report.unconverged, [])
        self.assertLessEqual(max(report.limits), bound + 1e-9)

    @unittest.skipUnless(SLOW_TESTS, "set FAIRDYN_SLOW_TESTS=1 to run")
    def test_two_basins(self):
        vf = solve_bellman(3.0, BASIN_PARAMS, BASIN_LENDER, log=quiet())
        report = detect_bifurcation(vf, log=quiet())
        self.assertEqual(report.n_clusters, 2)
        low, high = report.clusters
        self.assertAlmostEqual(low, 0.464, delta=0.01)
        self.assertAlmostEqual(high, 0.765, delta=0.01)
        self.assertEqual(len(report.boundaries), 1)
        self.assertAlmostEqual(report.boundaries[0], 0.718, delta=0.02)

        coarse = solve_bellman(3.0, BASIN_PARAMS, BASIN_LENDER, grid_size=257, log=quiet())
        coarse_report = detect_bifurcation(coarse, log=quiet())
        self.assertEqual(len(coarse_report.boundaries), 1)
        self.assertLess(abs(coarse_report.boundaries[0] - report.boundaries[0]), 0.01)


class TestFairConstrained(unittest.TestCase):

    def setUp(self):
        self.states = [PopulationState(0.4, 2), PopulationState(0.8, 2)]

    def test_demographic_parity_converges(self):
        for alpha in [0.0, 0.2]:
            _, verdict = fair_constrained_simulation(
                self.states, FairPolicy.demographic_parity(0.5), EXAMPLE_LENDER, params=EXAMPLE_PARAMS,
                alphas=[alpha, alpha], log=quiet(),
            )
            self.assertTrue(verdict.converged, verdict.final_gap)
            self.assertFalse(verdict.informational)
            self.assertEqual(verdict.label, "converged")

    def test_unequal_misestimation_diverges(self):
        _, verdict = fair_constrained_simulation(
            self.states, FairPolicy.demographic_parity(0.5), EXAMPLE_LENDER, params=EXAMPLE_PARAMS,
            alphas=[0.1, 0.4], log=quiet(),
        )
        self.assertFalse(verdict.converged)
        self.assertGreater(verdict.final_gap, 1e-3)

    def test_equality_of_opportunity(self):
        traj, verdict = fair_constrained_simulation(
            self.states, FairPolicy.equality_of_opportunity(0.5), EXAMPLE_LENDER, params=EXAMPLE_PARAMS, log=quiet(),
        )
        self.assertTrue(verdict.converged)
        self.assertEqual(traj.horizon, 1000)

    def test_informational(self):
        _, verdict = fair_constrained_simulation(
            self.states, FairPolicy.demographic_parity(0.5), LenderParams(5.0, 0.6), params=EXAMPLE_PARAMS, T=50,
            log=quiet(),
        )
        self.assertTrue(verdict.informational)
        self.assertTrue(verdict.label.endswith("(informational)"))

    def test_errors(self):
        with self.assertRaises(GroupCountError):
            fair_constrained_simulation(self.states[:1], FairPolicy.demographic_parity(0.5), EXAMPLE_LENDER,
                                        params=EXAMPLE_PARAMS)
        with self.assertRaises(DomainError):
            fair_constrained_simulation(self.states, FairPolicy.demographic_parity(0.5), EXAMPLE_LENDER,
                                        params=EXAMPLE_PARAMS, alphas=[0.1])

    @unittest.skipUnless(SLOW_TESTS, "set FAIRDYN_SLOW_TESTS=1 to run")
    def test_random_parity_battery(self):
        rng = np.random.RandomState(1)
        for _ in range(20):
            mu = rng.uniform(0.1, 0.9, size=2)
            c = rng.uniform(1.0, 6.0)
            s = rng.uniform(0.2, 0.8)
            states = [PopulationState(m, c) for m in mu]
            policies = [FairPolicy.demographic_parity(s), FairPolicy.equality_of_opportunity(s), blind_threshold(s)]
            for policy in policies:
                _, verdict = fair_constrained_simulation(states, policy, EXAMPLE_LENDER, params=EXAMPLE_PARAMS,
                                                         T=5000, log=quiet())
                self.assertTrue(verdict.converged, (mu, c, s, policy.kind))

    @unittest.skipUnless(SLOW_TESTS, "set FAIRDYN_SLOW_TESTS=1 to run")
    def test_random_misestimation_battery(self):
        rng = np.random.RandomState(2)
        for _ in range(10):
            mu = rng.uniform(0.2, 0.8, size=2)
            s = rng.uniform(0.3, 0.7)
            states = [PopulationState(m, 2.0) for m in mu]
            policy = FairPolicy.demographic_parity(s)
            _, equal = fair_constrained_simulation(states, policy, EXAMPLE_LENDER, params=EXAMPLE_PARAMS, T=5000,
                                                   alphas=[0.2, 0.2], log=quiet())
            _, unequal = fair_constrained_simulation(states, policy, EXAMPLE_LENDER, params=EXAMPLE_PARAMS, T=5000,
                                                     alphas=[0.1, 0.4], log=quiet())
            self.assertTrue(equal.converged, (mu, s))
            self.assertGreater(unequal.final_gap, 1e-3, (mu, s))


class TestDiscountedReward(unittest.TestCase):

    def test_accept_everyone(self):
        groups = [(PopulationState(0.5, 2), EXAMPLE_PARAMS), (PopulationState(0.9, 2), EXAMPLE_PARAMS)]
        traj = simulate(groups, FixedPolicy(0.0), 5, lender=EXAMPLE_LENDER)
        self.assertAlmostEqual(discounted_reward(traj, 0.0), (1.25 * 0.5 - 1) + (1.25 * 0.9 - 1), places=12)
        expected = sum(0.6 ** t * float(np.sum(traj.reward[t])) for t in range(6))
        self.assertAlmostEqual(discounted_reward(traj, 0.6), expected, places=12)

    def test_optimize_fair_rate(self):
        groups = [(PopulationState(0.5, 1.6), EXAMPLE_PARAMS), (PopulationState(0.9, 1.6), EXAMPLE_PARAMS)]
        grid = np.linspace(0.1, 0.9, 9)
        policy, value = optimize_fair_rate(FairPolicy.demographic_parity(0.5), groups, EXAMPLE_LENDER, T=50,
                                           grid=grid)
        self.assertTrue(0.1 <= policy.s <= 0.9)
        for s in grid:
            traj = simulate(groups, FairPolicy.demographic_parity(float(s)), 50, lender=EXAMPLE_LENDER)
            self.assertGreaterEqual(value, discounted_reward(traj, EXAMPLE_LENDER.gamma) - 1e-12)


if __name__ == '__main__':
    unittest.main()
