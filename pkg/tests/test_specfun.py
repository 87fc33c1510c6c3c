import math
import unittest

import numpy as np
from scipy import integrate, optimize, special

from fairdyn import specfun
from fairdyn.specfun import BetaParams
from fairdyn.errors import DomainError, DegenerateSelectionError
from fairdyn.logger import Logger


def upper_tail_quad(f, A, a, b):
    """ integral of f(x) x^(a-1) (1-x)^(b-1) / B(a,b) over [A, 1], end point singularity handled by the weight """
    log_norm = special.betaln(a, b)
    value, _ = integrate.quad(
        lambda x: f(x) * math.exp((a - 1) * math.log(x) - log_norm), A, 1.0,
        weight="alg", wvar=(0.0, b - 1.0), epsabs=1e-14, epsrel=1e-13,
    )
    return value


class TestIncompleteBeta(unittest.TestCase):

    def test_forward(self):
        self.assertAlmostEqual(specfun.reg_inc_beta(0.5, BetaParams(1, 1)), 0.5, places=15)
        self.assertEqual(specfun.reg_inc_beta(0.0, BetaParams(2.5, 0.3)), 0.0)
        self.assertEqual(specfun.reg_inc_beta(1.0, BetaParams(2.5, 0.3)), 1.0)

        oracle, _ = integrate.quad(lambda x: 30 * x * (1 - x) ** 4, 0, 0.3, epsabs=1e-14)
        self.assertLess(abs(specfun.reg_inc_beta(0.3, BetaParams(2, 5)) - oracle), 1e-10)

    def test_forward_vectorised(self):
        xs = np.linspace(0, 1, 11)
        values = specfun.reg_inc_beta(xs, BetaParams(2, 3))
        self.assertEqual(values.shape, (11,))
        self.assertTrue(np.all(np.diff(values) >= 0))

    def test_inverse(self):
        self.assertAlmostEqual(specfun.inv_reg_inc_beta(0.5, BetaParams(1, 1)), 0.5, places=14)
        self.assertEqual(specfun.inv_reg_inc_beta(1.0, BetaParams(3, 2)), 1.0)
        self.assertEqual(specfun.inv_reg_inc_beta(0.0, BetaParams(3, 2)), 0.0)

        oracle = optimize.bisect(lambda x: special.betainc(3, 2, x) - 0.25, 0, 1, xtol=1e-15, maxiter=200)
        self.assertLess(abs(specfun.inv_reg_inc_beta(0.25, BetaParams(3, 2)) - oracle), 1e-12)

    def test_round_trip(self):
        for a in [0.1, 1.0, 5.0]:
            for b in [0.5, 2.0, 20.0]:
                p = BetaParams(a, b)
                for x in [0.05, 0.3, 0.5, 0.8]:
                    q = specfun.reg_inc_beta(x, p)
                    x2 = specfun.inv_reg_inc_beta(q, p)
                    self.assertLess(abs(specfun.reg_inc_beta(x2, p) - q), 1e-12, (a, b, x))

    def test_unrepresentable_quantile_warns(self):
        p = BetaParams(0.01, 0.01)
        log = Logger(print_level=Logger.DISABLED)
        x = specfun.inv_reg_inc_beta(0.8, p, log=log)
        self.assertGreater(x, 1 - 1e-15)
        self.assertGreater(abs(special.betainc(0.01, 0.01, x) - 0.8), 1e-3)
        warnings = log.messages(Logger.WARN)
        self.assertEqual(len(warnings), 1)
        self.assertIn("not representable", warnings[0])

        quiet = Logger(print_level=Logger.DISABLED)
        specfun.inv_reg_inc_beta(0.25, BetaParams(3, 2), log=quiet)
        self.assertEqual(quiet.messages(Logger.WARN), [])

    def test_identity_suite(self):
        results = specfun.identity_suite()
        self.assertEqual(len(results), 4)
        for name, passed, detail in results:
            self.assertTrue(passed, f"{name}: {detail}")

    def test_domain(self):
        with self.assertRaises(DomainError):
            BetaParams(0, 1)
        with self.assertRaises(DomainError):
            specfun.reg_inc_beta(1.5, BetaParams(1, 1))
        with self.assertRaises(DomainError):
            specfun.inv_reg_inc_beta(-0.1, BetaParams(1, 1))

    def test_from_mean(self):
        p = BetaParams.from_mean(0.25, 4)
        self.assertAlmostEqual(p.a, 1.0)
        self.assertAlmostEqual(p.b, 3.0)
        self.assertAlmostEqual(p.mu, 0.25)
        self.assertAlmostEqual(p.c, 4.0)


class TestDensity(unittest.TestCase):

    def test_closed_forms(self):
        self.assertAlmostEqual(specfun.beta_pdf(0.5, 0.5, 2), 1.0, places=13)
        self.assertAlmostEqual(specfun.beta_pdf(0.25, 0.5, 4), 1.125, places=13)

    def test_normalization(self):
        mu, c = 0.7, 3
        a, b = c * mu, c * (1 - mu)
        limit = math.exp(-special.betaln(a, b))
        total, _ = integrate.quad(
            lambda x: specfun.beta_pdf(x, mu, c) / (x ** (a - 1) * (1 - x) ** (b - 1)) if 0 < x < 1 else limit,
            0.0, 1.0, weight="alg", wvar=(a - 1.0, b - 1.0), epsabs=1e-13, epsrel=1e-12,
        )
        self.assertLess(abs(total - 1.0), 1e-8)

    def test_domain(self):
        with self.assertRaises(DomainError):
            specfun.beta_pdf(0.5, 0.0, 2)
        with self.assertRaises(DomainError):
            specfun.beta_pdf(0.5, 0.5, -1)


class TestSelection(unittest.TestCase):

    def test_selected_proportion(self):
        self.assertAlmostEqual(specfun.selected_proportion(0.5, 0.5, 2), 0.5, places=14)
        self.assertAlmostEqual(specfun.selected_proportion(0.0, 0.3, 5), 1.0, places=14)
        self.assertEqual(specfun.selected_proportion(1.0, 0.3, 5), 0.0)

        mu, c = 0.7, 3
        oracle = upper_tail_quad(lambda x: 1.0, 0.6, c * mu, c * (1 - mu))
        self.assertLess(abs(specfun.selected_proportion(0.6, mu, c) - oracle), 1e-10)

    def test_selected_mean(self):
        self.assertAlmostEqual(specfun.selected_mean(0.0, 0.4, 2), 0.4, places=14)
        self.assertAlmostEqual(specfun.selected_mean(0.5, 0.5, 2), 0.75, places=14)

        A, mu, c = 0.3, 0.6, 4
        a, b = c * mu, c * (1 - mu)
        oracle = upper_tail_quad(lambda x: x, A, a, b) / upper_tail_quad(lambda x: 1.0, A, a, b)
        self.assertLess(abs(specfun.selected_mean(A, mu, c) - oracle), 1e-8)

    def test_selected_mean_bounds(self):
        for A in [0.1, 0.5, 0.9]:
            for mu in [0.2, 0.6]:
                m = specfun.selected_mean(A, mu, 3)
                self.assertGreaterEqual(m, max(A, mu))
                self.assertLessEqual(m, 1.0)

    def test_nobody_selected(self):
        with self.assertRaises(DegenerateSelectionError):
            specfun.selected_mean(1.0, 0.5, 2)

    def test_tails_complement(self):
        A = np.linspace(0, 1, 21)
        mu = 0.35
        for c in [0.5, 2.0, 50.0]:
            p_plus, m_plus = specfun.selection_moments(A, mu, c)
            p_minus, m_minus = specfun.tail_moments(A, mu, c)
            np.testing.assert_allclose(p_plus + p_minus, 1.0, atol=1e-13)
            np.testing.assert_allclose(m_plus + m_minus, mu, atol=1e-13)

    def test_point_mass(self):
        c = 2 * specfun.POINT_MASS_SHAPE
        self.assertEqual(specfun.selected_proportion(0.5, 0.6, c), 1.0)
        self.assertAlmostEqual(specfun.selected_mean(0.5, 0.6, c), 0.6)
        self.assertEqual(specfun.selected_proportion(0.7, 0.6, c), 0.0)

    def test_moments_broadcast(self):
        p_plus, m_plus = specfun.selection_moments(np.linspace(0, 1, 5)[:, None], np.array([0.2, 0.5, 0.8]), 2.0)
        self.assertEqual(p_plus.shape, (5, 3))
        self.assertEqual(m_plus.shape, (5, 3))


if __name__ == '__main__':
    unittest.main()
