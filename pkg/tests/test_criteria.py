#!/usr/bin/env python3
"""
Tests for the variance blow-up criteria
"""
import math
import os
import sys
import unittest

from hypothesis import given, settings, strategies as st

# Add parent directory to path
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from criteria import (
    CRITICAL_MASS,
    alpha_blowup_interval,
    beta_constants,
    compare_gammas,
    criterion_holds,
    evaluate_criteria,
    gamma_cc,
    gamma_eps,
    gamma_ks,
    gamma_log,
    gamma_ratio_exact,
    gamma_star,
    h1,
    h2,
    m_eps_scan,
    mu_cc,
    mu_ks,
    ratio_lower_bound,
    require_criterion,
    second_moment_threshold,
)
from errors import CriterionNotSatisfiedError, InvalidInputError, SubcriticalMassError
from moments import ball_with_variance, compute_moments
from specialfn import g_one_inv

M16 = 16.0 * math.pi
M24 = 24.0 * math.pi

admissible_mass = st.floats(min_value=CRITICAL_MASS * 1.001, max_value=CRITICAL_MASS * 50.0)
admissible_alpha = st.floats(min_value=0.05, max_value=20.0)


class TestThresholds(unittest.TestCase):
    """Closed-form values and limits of each gamma"""

    def test_gamma_star(self):
        """Test gamma_star(1, 16pi) = (1/2) (g_1^{-1}(1/2))^2"""
        self.assertAlmostEqual(gamma_star(1.0, M16), 0.5 * g_one_inv(0.5) ** 2, places=14)
        self.assertAlmostEqual(gamma_star(2.0, M16), gamma_star(1.0, M16) / 2.0, places=14)

    def test_gamma_cc(self):
        """Test gamma_cc(1, 16pi, 1) = 1/16 and its large-mass limit"""
        self.assertAlmostEqual(gamma_cc(1.0, M16), 1.0 / 16.0, places=14)
        self.assertAlmostEqual(gamma_cc(1.0, M16, 2.0), 1.0 / 64.0, places=14)
        self.assertLessEqual(abs(gamma_cc(1.0, 1e8) - 0.25), 1e-3)

    def test_gamma_ks(self):
        """Test gamma_ks(1, 24pi) = (1/16) ln^2(3/2) and its large-mass limit"""
        self.assertAlmostEqual(gamma_ks(1.0, M24), 0.0102751, places=7)
        self.assertAlmostEqual(gamma_ks(1.0, M24), math.log(1.5) ** 2 / 16.0, places=14)
        self.assertLessEqual(abs(gamma_ks(1.0, 1e8) - math.log(2.0) ** 2 / 8.0), 1e-3)

    def test_gamma_log(self):
        """Test gamma_log(1, 16pi) = ln^2(2)/2"""
        self.assertAlmostEqual(gamma_log(1.0, M16), 0.240227, places=6)

    def test_near_critical_limit(self):
        """Test that every gamma tends to 0 as M -> 8pi+"""
        M = CRITICAL_MASS * (1.0 + 1e-6)
        for value in (gamma_star(1.0, M), gamma_cc(1.0, M), gamma_ks(1.0, M), gamma_log(1.0, M)):
            self.assertGreater(value, 0.0)
            self.assertLess(value, 1e-5)

    def test_subcritical_rejected(self):
        """Test that M <= 8pi is rejected by every gamma"""
        for func in (gamma_star, gamma_ks, gamma_log):
            with self.assertRaises(SubcriticalMassError):
                func(1.0, 25.0)
            with self.assertRaises(SubcriticalMassError):
                func(1.0, CRITICAL_MASS)

    def test_cc_constant_range(self):
        """Test that C < 1 is rejected"""
        with self.assertRaises(InvalidInputError):
            gamma_cc(1.0, M16, 0.5)

    @settings(max_examples=200, deadline=None)
    @given(admissible_alpha, admissible_mass)
    def test_log_below_star(self, alpha, M):
        """Test gamma_log <= gamma_star"""
        self.assertLessEqual(gamma_log(alpha, M), gamma_star(alpha, M) * (1.0 + 1e-12))

    def test_ordering_at_16pi(self):
        """Test that the new threshold dominates at M = 16pi"""
        comparison = compare_gammas(1.0, M16)
        self.assertEqual(comparison["ordering"], ["gamma_star", "gamma_log", "gamma_cc", "gamma_ks"])
        self.assertAlmostEqual(comparison["ratios"]["star_over_cc"], gamma_ratio_exact(M16), places=10)


class TestGammaEps(unittest.TestCase):
    """Asymptotic threshold Gamma*_eps"""

    def test_absent_below_validity(self):
        """Test that Gamma*_eps is absent while c_eps M / 8pi <= e"""
        self.assertIsNone(gamma_eps(1.0, M16, 0.1))

    def test_present_for_large_mass(self):
        """Test the closed form for large mass"""
        M = 1e6
        x = 0.9 * math.sqrt(math.pi / 2.0) * M / CRITICAL_MASS
        expected = math.log(x * math.sqrt(math.log(x))) ** 2 / 2.0
        self.assertAlmostEqual(gamma_eps(1.0, M, 0.1), expected, places=12)
        self.assertLessEqual(gamma_eps(1.0, M, 0.1), gamma_star(1.0, M))

    def test_eps_range(self):
        """Test that eps outside (0, 1) is rejected"""
        with self.assertRaises(InvalidInputError):
            gamma_eps(1.0, M16, 1.0)

    def test_scan(self):
        """Test that the scan finds a mass above which Gamma*_eps <= gamma_star"""
        threshold = m_eps_scan(0.1, m_max=1e6, points=20)
        self.assertIsNotNone(threshold)
        self.assertLessEqual(gamma_eps(1.0, 2.0 * threshold, 0.1), gamma_star(1.0, 2.0 * threshold))


class TestRatioBounds(unittest.TestCase):
    """The beta-family lower bound on gamma_star / gamma_cc"""

    def test_beta_constants(self):
        """Test K_beta at beta = 0.1, 0.25 and 0.4"""
        self.assertAlmostEqual(beta_constants(0.25)[1], 0.9413, places=3)
        self.assertAlmostEqual(beta_constants(0.4)[1], 0.7477, places=3)
        self.assertAlmostEqual(beta_constants(0.1)[1], 2.182, places=2)
        L, _ = beta_constants(0.25)
        self.assertAlmostEqual(L, 0.25 ** 0.25 * math.exp(-0.25), places=15)

    def test_beta_range(self):
        """Test that beta outside (0, 1/2) is rejected"""
        for beta in (0.0, 0.5, 0.7):
            with self.assertRaises(InvalidInputError):
                beta_constants(beta)

    def test_exact_ratio(self):
        """Test gamma_star / gamma_cc = 2 C^2 [r / (1 - 8pi/M)]^2"""
        for M in (M16, M24):
            for C in (1.0, 2.0):
                self.assertAlmostEqual(gamma_star(1.3, M) / gamma_cc(1.3, M, C), gamma_ratio_exact(M, C),
                                       delta=1e-10 * gamma_ratio_exact(M, C))

    @settings(max_examples=200, deadline=None)
    @given(st.floats(min_value=CRITICAL_MASS * 1.001, max_value=M16),
           st.sampled_from([0.1, 0.25, 0.4]))
    def test_ratio_lower_bound(self, M, beta):
        """Test gamma_star / gamma_cc >= ratio_lower_bound on (8pi, 16pi]"""
        self.assertGreaterEqual(gamma_ratio_exact(M) * (1.0 + 1e-9), ratio_lower_bound(M, beta))

    def test_lower_bound_blows_up(self):
        """Test that the bound grows without limit as M -> 8pi+"""
        near = ratio_lower_bound(CRITICAL_MASS * (1.0 + 1e-6), 0.25)
        far = ratio_lower_bound(CRITICAL_MASS * 1.1, 0.25)
        self.assertGreater(near, 10.0 * far)


class TestSecondMoment(unittest.TestCase):
    """Second-moment forms of the criteria"""

    def test_h_functions(self):
        """Test mu_cc = h1(M/8pi)/alpha and mu_ks = h2(M/8pi)/alpha"""
        for M in (M16, M24, 100.0):
            s = M / CRITICAL_MASS
            self.assertAlmostEqual(mu_cc(2.0, M, 1.5), h1(s, 1.5) / 2.0, places=12)
            self.assertAlmostEqual(mu_ks(2.0, M), h2(s) / 2.0, places=12)

    def test_threshold_with_center(self):
        """Test I0 threshold M gamma_star + M |B0|^2"""
        self.assertAlmostEqual(second_moment_threshold(1.0, M16, (1.0, 2.0)),
                               M16 * (gamma_star(1.0, M16) + 5.0), places=10)


class TestEvaluation(unittest.TestCase):
    """Criterion reports"""

    def test_report_flags(self):
        """Test satisfaction flags for a variance between gamma_log and gamma_star"""
        report = evaluate_criteria(1.0, M16, variance=0.5)
        self.assertTrue(report.satisfied["gamma_star"])
        self.assertFalse(report.satisfied["gamma_log"])
        self.assertFalse(report.satisfied["gamma_cc"])
        self.assertFalse(report.borderline)
        self.assertAlmostEqual(report.alpha_max, g_one_inv(0.5) ** 2 / 1.0, places=10)

    def test_report_from_second_moment(self):
        """Test that V2 is derived from I0 and B0 when absent"""
        report = evaluate_criteria(1.0, M16, second_moment=M16 * (0.1 + 1.0), center=(1.0, 0.0))
        self.assertAlmostEqual(report.variance, 0.1, places=12)
        self.assertIn("mu_cc", report.satisfied)

    def test_report_echoes_inputs(self):
        """Test that the report dictionary carries the inputs"""
        d = evaluate_criteria(2.0, M16, variance=0.01, C=1.5, eps=0.1).to_dict()
        self.assertEqual(d["M"], M16)
        self.assertEqual(d["alpha"], 2.0)
        self.assertEqual(d["cc_constant"], 1.5)
        self.assertEqual(d["eps"], 0.1)
        self.assertTrue(d["notes"])

    def test_criterion_holds(self):
        """Test the strict inequality V2 < gamma_star"""
        threshold = gamma_star(1.0, M16)
        self.assertTrue(criterion_holds(1.0, M16, 0.99 * threshold))
        self.assertFalse(criterion_holds(1.0, M16, threshold))
        with self.assertRaises(CriterionNotSatisfiedError):
            require_criterion(1.0, M16, threshold)
        self.assertEqual(require_criterion(1.0, M16, 0.1), threshold)

    def test_alpha_interval(self):
        """Test that every alpha inside the interval satisfies the criterion"""
        moments = compute_moments(ball_with_variance(0.3, mass=M16))
        _, alpha_max = alpha_blowup_interval(moments)
        self.assertTrue(criterion_holds(0.999 * alpha_max, M16, 0.3))
        self.assertFalse(criterion_holds(1.001 * alpha_max, M16, 0.3))


if __name__ == '__main__':
    unittest.main(verbosity=2)
