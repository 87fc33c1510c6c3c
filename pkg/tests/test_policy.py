import math
import unittest

import numpy as np
from scipy import integrate, optimize, special

from fairdyn.population import PopulationState
from fairdyn.policy import (
    FairPolicy, FixedPolicy, EqualizedOddsPolicy, PolicyKind, fair_threshold, achieved_proportion,
    equalized_odds_intersection, blind_threshold, BLIND_OFFSET,
)
from fairdyn.errors import DomainError, ParameterBoundError, ShapeMismatchError, GroupCountError, NoSolutionError


def weighted_upper_tail(f, A, a, b):
    log_norm = special.betaln(a, b)
    value, _ = integrate.quad(
        lambda x: f(x) * math.exp((a - 1) * math.log(x) - log_norm), A, 1.0,
        weight="alg", wvar=(0.0, b - 1.0), epsabs=1e-14, epsrel=1e-13,
    )
    return value


class TestFairThreshold(unittest.TestCase):

    def test_demographic_parity(self):
        state = PopulationState(0.5, 2)
        self.assertAlmostEqual(fair_threshold(FairPolicy.demographic_parity(0.5), state), 0.5, places=12)
        for mu, c in [(0.2, 1), (0.9, 7)]:
            self.assertEqual(fair_threshold(FairPolicy.demographic_parity(1.0), PopulationState(mu, c)), 0.0)

    def test_equality_of_opportunity(self):
        mu, c, s = 0.7, 3.0, 0.6
        a, b = c * mu, c * (1 - mu)
        A = fair_threshold(FairPolicy.equality_of_opportunity(s), PopulationState(mu, c))

        def tpr_gap(t):
            return weighted_upper_tail(lambda x: x, t, a, b) / mu - s

        oracle = optimize.bisect(tpr_gap, 0.01, 0.99, xtol=1e-12)
        self.assertLess(abs(A - oracle), 1e-8)
        self.assertAlmostEqual(achieved_proportion(PolicyKind.EQUALITY_OF_OPPORTUNITY, A, PopulationState(mu, c)),
                               s, places=10)

    def test_thresholds_equalize_rate(self):
        policy = FairPolicy.custom(0.35, 0.5, 1.5)
        states = [PopulationState(0.3, 4), PopulationState(0.75, 4)]
        thresholds = policy.thresholds(states)
        for A, state in zip(thresholds, states):
            self.assertAlmostEqual(achieved_proportion(policy, A, state), 0.35, places=10)

    def test_shape_mismatch(self):
        with self.assertRaises(ShapeMismatchError):
            FairPolicy.demographic_parity(0.5).thresholds([PopulationState(0.3, 2), PopulationState(0.6, 3)])

    def test_bounds(self):
        policy = FairPolicy.custom(0.5, -3.0, 0.0)
        with self.assertRaises(ParameterBoundError):
            policy.thresholds([PopulationState(0.6, 2), PopulationState(0.4, 2)])
        with self.assertRaises(DomainError):
            FairPolicy(0.5, 1.0, 0.0, PolicyKind.DEMOGRAPHIC_PARITY)
        with self.assertRaises(DomainError):
            FairPolicy.demographic_parity(1.5)


class TestAchievedProportion(unittest.TestCase):

    def test_examples(self):
        self.assertAlmostEqual(achieved_proportion("demographic_parity", 0.5, PopulationState(0.5, 2)), 0.5)
        self.assertEqual(achieved_proportion(PolicyKind.EQUALITY_OF_OPPORTUNITY, 0.0, PopulationState(0.3, 6)), 1.0)

    def test_false_positive_rate(self):
        mu, c, A = 0.6, 5.0, 0.4
        a, b = c * mu, c * (1 - mu)
        value = achieved_proportion(FairPolicy.custom(0.5, 0.0, 1.0), A, PopulationState(mu, c))
        self.assertAlmostEqual(value, 1 - special.betainc(3, 3, 0.4), places=14)
        oracle = weighted_upper_tail(lambda x: 1 - x, A, a, b) / (1 - mu)
        self.assertLess(abs(value - oracle), 1e-10)

    def test_custom_needs_policy(self):
        with self.assertRaises(DomainError):
            achieved_proportion(PolicyKind.CUSTOM, 0.5, PopulationState(0.5, 2))


class TestEqualizedOdds(unittest.TestCase):

    def test_identical_states(self):
        state = PopulationState(0.6, 3)
        solution = equalized_odds_intersection(state, state)
        self.assertEqual(solution.s, 0.5)
        self.assertEqual(solution.thresholds[0], solution.thresholds[1])

    def test_intersection(self):
        state_i, state_j = PopulationState(0.6, 4), PopulationState(0.8, 4)
        solution = equalized_odds_intersection(state_i, state_j)
        self.assertIsNotNone(solution)
        self.assertTrue(0 < solution.s < 1)
        A_i, A_j = solution.thresholds
        fpr = [achieved_proportion(FairPolicy.custom(0.5, 0.0, 1.0), A, state)
               for A, state in [(A_i, state_i), (A_j, state_j)]]
        tpr = [achieved_proportion(PolicyKind.EQUALITY_OF_OPPORTUNITY, A, state)
               for A, state in [(A_i, state_i), (A_j, state_j)]]
        self.assertLess(abs(fpr[0] - fpr[1]), 1e-9)
        self.assertAlmostEqual(tpr[0], solution.s, places=9)
        self.assertAlmostEqual(tpr[1], solution.s, places=9)

    def test_intersection_close_to_full_rate(self):
        # the false positive rates cross between s = 0.9995 and s = 0.9999
        state_i, state_j = PopulationState(0.6, 4), PopulationState(0.8, 4)
        solution = equalized_odds_intersection(state_i, state_j)
        self.assertIsNotNone(solution)
        self.assertAlmostEqual(solution.s, 0.99957679, delta=1e-6)

        state_i, state_j = PopulationState(0.4, 5), PopulationState(0.9, 5)
        solution = equalized_odds_intersection(state_i, state_j)
        self.assertIsNotNone(solution)
        self.assertTrue(0 < solution.s < 1)
        fpr = [1.0 - special.betainc(state.a, state.b + 1.0, A) for A, state in zip(solution.thresholds,
                                                                                     [state_i, state_j])]
        self.assertLess(abs(fpr[0] - fpr[1]), 1e-9)

    def test_point_mass_has_no_solution(self):
        state_i, state_j = PopulationState(0.3, 2e4), PopulationState(0.8, 2e4)
        self.assertIsNone(equalized_odds_intersection(state_i, state_j))
        with self.assertRaises(NoSolutionError):
            EqualizedOddsPolicy().thresholds([state_i, state_j])

    def test_group_count(self):
        with self.assertRaises(GroupCountError):
            EqualizedOddsPolicy().thresholds([PopulationState(0.5, 2)] * 3)

    def test_shape_mismatch(self):
        with self.assertRaises(ShapeMismatchError):
            equalized_odds_intersection(PopulationState(0.5, 2), PopulationState(0.6, 3))


class TestBlind(unittest.TestCase):

    def test_shared_threshold(self):
        policy = blind_threshold(0.7)
        self.assertEqual(policy.kind, PolicyKind.BLIND)
        self.assertTrue(math.isinf(policy.k1) and policy.k1 == BLIND_OFFSET)
        self.assertEqual(policy.thresholds([PopulationState(0.2, 2), PopulationState(0.9, 5)]), [0.7, 0.7])

    def test_universal_acceptance(self):
        policy = blind_threshold(0.0)
        state = PopulationState(0.4, 3)
        self.assertEqual(policy.thresholds([state]), [0.0])
        self.assertEqual(achieved_proportion(policy, 0.0, state), 1.0)

    def test_large_offset_limit(self):
        states = [PopulationState(0.3, 2), PopulationState(0.8, 2)]
        gaps = []
        for K in [1e2, 1e3, 1e4]:
            A = FairPolicy.custom(0.5, K, K).thresholds(states)
            gaps.append(abs(A[0] - A[1]))
        self.assertTrue(gaps[0] > gaps[1] > gaps[2])
        self.assertLess(gaps[2], 1e-3)

    def test_domain(self):
        with self.assertRaises(DomainError):
            blind_threshold(1.5)
        with self.assertRaises(DomainError):
            FairPolicy(None, 0.0, 0.0, PolicyKind.BLIND, threshold=0.5)


class TestFixedPolicy(unittest.TestCase):

    def test_fixed(self):
        policy = FixedPolicy(0.4)
        self.assertEqual(policy.thresholds([PopulationState(0.5, 2)] * 3), [0.4] * 3)
        self.assertEqual(policy.describe(), {"name": "fixed", "threshold": 0.4})
        self.assertEqual(FixedPolicy(0.8, label="greedy").name, "greedy")
        with self.assertRaises(DomainError):
            FixedPolicy(1.5)


if __name__ == '__main__':
    unittest.main()
