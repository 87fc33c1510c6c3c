import unittest

import numpy as np

from fairdyn.dynamics import DynamicsParams, mean_update
from fairdyn.population import PopulationState
from fairdyn.equilibrium import (
    fixed_point, equilibrium_curve, classify, EquilibriumClass, EquilibriumPoint, social_welfare_threshold,
    SocialWelfarePolicy, uniqueness_scan, iterate_fixed_threshold, count_sign_changes,
)
from fairdyn.errors import DomainError


class TestFixedPoint(unittest.TestCase):

    def test_deny_everyone(self):
        params = DynamicsParams(0.99, 0.2)
        for c in [0.5, 1.6, 20.0]:
            point = fixed_point(1.0, c, params)
            self.assertAlmostEqual(point.mu_inf, 0.2, places=10)
            self.assertTrue(point.stable)
            self.assertFalse(point.boundary)

    def test_accept_everyone(self):
        point = fixed_point(0.0, 1.6, DynamicsParams(0.99, 0.2))
        self.assertEqual(point.mu_inf, 0.0)
        self.assertTrue(point.boundary)

    def test_iteration_oracle(self):
        params = DynamicsParams(0.99, 0.2)
        point = fixed_point(0.3, 1.6, params)
        mu, steps, converged = iterate_fixed_threshold(0.3, [0.1, 0.5, 0.9], 1.6, params, max_steps=10000)
        self.assertTrue(converged)
        np.testing.assert_allclose(mu, point.mu_inf, atol=1e-8)
        self.assertEqual(point.n_roots, 1)

    def test_attraction_grid(self):
        rng = np.random.RandomState(7)
        for _ in range(12):
            A = rng.uniform(0.1, 0.95)
            c = rng.uniform(0.5, 5.0)
            params = DynamicsParams(rng.uniform(0.6, 0.99), rng.uniform(0.05, 0.6))
            point = fixed_point(A, c, params)
            self.assertTrue(point.stable, (A, c, params))
            mu, _, converged = iterate_fixed_threshold(A, [0.05, 0.5, 0.95], c, params, max_steps=50000, tol=1e-12)
            self.assertTrue(converged, (A, c, params))
            np.testing.assert_allclose(mu, point.mu_inf, atol=1e-7, err_msg=str((A, c, params)))

    def test_domain(self):
        with self.assertRaises(DomainError):
            fixed_point(1.2, 1.6, DynamicsParams(0.99, 0.2))
        with self.assertRaises(DomainError):
            fixed_point(0.5, 0.0, DynamicsParams(0.99, 0.2))


class TestEquilibriumCurve(unittest.TestCase):

    def test_social_welfare_peak(self):
        rng = np.random.RandomState(0)
        A_grid = np.linspace(0, 1, 201)
        spacing = A_grid[1] - A_grid[0]
        for _ in range(10):
            nu = rng.uniform(0.05, 0.5)
            beta = rng.uniform(0.6, 1.0)
            c = rng.uniform(0.5, 5.0)
            points = equilibrium_curve(A_grid, c, DynamicsParams(beta, nu))
            peak = max(points, key=lambda point: point.mu_inf)
            self.assertLessEqual(abs(peak.A - nu / beta), spacing + 1e-12, (nu, beta, c))

    def test_tail_decreases(self):
        rng = np.random.RandomState(3)
        for _ in range(8):
            params = DynamicsParams(rng.uniform(0.6, 1.0), rng.uniform(0.05, 0.5))
            c = rng.uniform(0.5, 10.0)
            A_grid = np.linspace(params.nu / params.beta, 1.0, 41)
            mu_inf = np.array([point.mu_inf for point in equilibrium_curve(A_grid, c, params)])
            self.assertLessEqual(np.diff(mu_inf).max(), 1e-10, (params, c))
            self.assertAlmostEqual(mu_inf[-1], params.nu, places=8)

    def test_classification(self):
        A_grid = np.linspace(0, 1, 21)
        points = equilibrium_curve(A_grid, 1.6, DynamicsParams(0.99, 0.2), mu0=(0.5, 0.9))
        for point in points:
            self.assertEqual(point.classification, classify(point.mu_inf, 0.5, 0.9))
        self.assertEqual(points[-1].classification, EquilibriumClass.NEGATIVE)
        row = points[-1].to_row()
        self.assertEqual(set(row.keys()), {"A", "mu_inf", "stable", "boundary", "classification"})
        self.assertEqual(row["classification"], "negative")

    def test_classify(self):
        self.assertEqual(classify(0.9, 0.5, 0.7), EquilibriumClass.POSITIVE)
        self.assertEqual(classify(0.3, 0.5, 0.7), EquilibriumClass.NEGATIVE)
        self.assertEqual(classify(0.6, 0.5, 0.7), EquilibriumClass.MIXED)
        self.assertEqual(classify(EquilibriumPoint(0.5, 0.6, True), 0.7, 0.5), EquilibriumClass.MIXED)


class TestSocialWelfare(unittest.TestCase):

    def test_no_misestimation(self):
        self.assertAlmostEqual(social_welfare_threshold(DynamicsParams(0.99, 0.2)), 0.2 / 0.99)
        self.assertEqual(social_welfare_threshold(DynamicsParams(1.0, 0.0)), 0.0)
        self.assertEqual(social_welfare_threshold(DynamicsParams(0.5, 0.9)), 1.0)

    def test_misestimation_argmax(self):
        params = DynamicsParams(0.99, 0.2, 0.3)
        mu, c = 0.6, 3.0
        A = social_welfare_threshold(params, mu)
        self.assertAlmostEqual(A, (0.2 - 0.3 * 0.99 * 0.6) / (0.99 * 0.7), places=14)

        grid = np.linspace(0, 1, 100001)
        values = mean_update(grid, mu, c, params.beta, params.nu, params.alpha)
        self.assertLess(abs(grid[np.argmax(values)] - A), 2e-5)

    def test_clamped(self):
        params = DynamicsParams(0.99, 0.1, 0.5)
        self.assertEqual(social_welfare_threshold(params, 0.9), 0.0)

    def test_domain(self):
        with self.assertRaises(DomainError):
            social_welfare_threshold(DynamicsParams(0.0, 0.2))
        with self.assertRaises(DomainError):
            social_welfare_threshold(DynamicsParams(0.9, 0.2, 1.0), 0.5)
        with self.assertRaises(DomainError):
            social_welfare_threshold(DynamicsParams(0.9, 0.2, 0.5))

    def test_policy(self):
        policy = SocialWelfarePolicy([DynamicsParams(0.99, 0.2), DynamicsParams(0.99, 0.2, 0.3)])
        thresholds = policy.thresholds([PopulationState(0.5, 2), PopulationState(0.6, 2)])
        self.assertAlmostEqual(thresholds[0], 0.2 / 0.99)
        self.assertAlmostEqual(thresholds[1], (0.2 - 0.3 * 0.99 * 0.6) / (0.99 * 0.7))
        with self.assertRaises(DomainError):
            policy.thresholds([PopulationState(0.5, 2)])


class TestUniqueness(unittest.TestCase):

    def test_default_grid(self):
        report = uniqueness_scan()
        self.assertTrue(report.passed, report.failures[:5])
        self.assertEqual(report.cells, 11 * 6 * 11 * 11)
        self.assertGreater(report.boundary_cells, 0)
        self.assertTrue(report.to_dict()["passed"])

    def test_single_cell(self):
        report = uniqueness_scan(A_grid=[0.5], c_grid=[2.0], beta_grid=[0.9], nu_grid=[0.2])
        self.assertEqual(report.cells, 1)
        self.assertEqual(report.boundary_cells, 0)
        self.assertTrue(report.passed)

    def test_count_sign_changes(self):
        self.assertEqual(int(count_sign_changes(np.array([1.0, 0.5, -0.2, -1.0]))), 1)
        self.assertEqual(int(count_sign_changes(np.array([1.0, 0.0, -1.0]))), 1)
        self.assertEqual(int(count_sign_changes(np.array([1.0, -1.0, 1.0]))), 2)


if __name__ == '__main__':
    unittest.main()
