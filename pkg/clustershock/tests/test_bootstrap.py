import unittest

import numpy as np

from clustershock.core.bootstrap import (
    bootstrap_outcomes,
    enumerated_t,
    observed_t,
    p_value_from_draws,
    replicate_t,
    sign_matrix,
    wild_cluster_bootstrap,
)
from clustershock.core.design import ObservedSample
from clustershock.core.errors import TooManyClusters, ValidationError
from clustershock.core.estimators import cluster_contributions, report, stratum_table
from clustershock.core.rng import RandomStream
from clustershock.schemas.enums import BootstrapMode


def two_by_two(ate_k, cluster_of_stratum=None) -> ObservedSample:
    """Strata of four units, treated {1, 3} + ate_k and control {0, 2}."""
    stratum, treated, y = [], [], []
    for k, effect in enumerate(ate_k):
        stratum += [k] * 4
        treated += [1, 1, 0, 0]
        y += [1 + effect, 3 + effect, 1, 3]
    return ObservedSample(
        stratum=np.array(stratum),
        treated=np.array(treated, dtype=np.int8),
        y=np.array(y, dtype=float),
        cluster_of_stratum=None if cluster_of_stratum is None else np.array(cluster_of_stratum),
    )


class TestSigns(unittest.TestCase):
    def test_sign_matrix(self):
        full = sign_matrix(3)
        self.assertEqual(full.shape, (8, 3))
        self.assertEqual(len({tuple(r) for r in full}), 8)
        half = sign_matrix(3, fix_first=True)
        self.assertEqual(half.shape, (4, 3))
        self.assertTrue(np.all(half[:, 0] == 1.0))

    def test_halving_matches_full(self):
        contrib = np.array([0.5, 2.0, -1.0, 3.5, 1.25])
        np.testing.assert_allclose(np.sort(enumerated_t(contrib)), np.sort(enumerated_t(contrib, halve=False)))


class TestStatistics(unittest.TestCase):
    def test_observed_t(self):
        self.assertEqual(observed_t(np.array([1.0, 3.0]), 2.0), 2.0)
        self.assertEqual(observed_t(np.array([0.0, 0.0]), 0.0), 0.0)
        self.assertEqual(observed_t(np.array([2.0, 2.0]), 2.0), np.inf)

    def test_zero_variance_replicate(self):
        t = replicate_t(np.array([1.0, 1.0]), np.array([[1.0, 1.0], [1.0, -1.0]]))
        self.assertEqual(t[0], np.inf)
        self.assertEqual(t[1], 0.0)

    def test_p_value_conventions(self):
        draws = np.array([2.0, -0.5, -2.0, 0.5])
        self.assertEqual(p_value_from_draws(2.0, draws, BootstrapMode.FULL_ENUMERATION), 0.5)
        self.assertEqual(p_value_from_draws(2.0, draws, BootstrapMode.SAMPLED), 3 / 5)
        # draws equal to t_obs up to rounding still count
        self.assertEqual(p_value_from_draws(2.0 + 1e-14, draws, BootstrapMode.FULL_ENUMERATION), 0.5)


class TestWildClusterBootstrap(unittest.TestCase):
    def test_hand_enumeration(self):
        res = wild_cluster_bootstrap(two_by_two([1.0, 3.0]))
        self.assertEqual(res.mode, BootstrapMode.FULL_ENUMERATION)
        self.assertEqual(res.t_obs, 2.0)
        np.testing.assert_allclose(res.t_draws, [2.0, -0.5, -2.0, 0.5])
        self.assertEqual(res.p_value, 0.5)
        self.assertEqual((res.draws, res.n_clusters), (4, 2))

    def test_zero_t_obs(self):
        res = wild_cluster_bootstrap(two_by_two([1.0, -1.0]))
        self.assertEqual(res.t_obs, 0.0)
        self.assertEqual(res.p_value, 1.0)
        sampled = wild_cluster_bootstrap(two_by_two([1.0, -1.0]), B=99, stream=RandomStream(1), mode=BootstrapMode.SAMPLED)
        self.assertEqual(sampled.p_value, 1.0)

    def test_equal_contributions(self):
        res = wild_cluster_bootstrap(two_by_two([1.0, 1.0]))
        self.assertEqual(res.t_obs, np.inf)
        self.assertEqual(res.p_value, 0.5)

    def test_cluster_level(self):
        res = wild_cluster_bootstrap(two_by_two([1.0, 3.0, 2.0, 6.0], cluster_of_stratum=[0, 0, 1, 1]))
        self.assertEqual(res.n_clusters, 2)
        self.assertEqual(res.draws, 4)

    def test_scale_invariance(self):
        s = two_by_two([1.0, 3.0, 2.0, 6.0, -0.5])
        base = wild_cluster_bootstrap(s)
        for c in (1e-3, 7.0, -2.0):
            scaled = wild_cluster_bootstrap(s.with_y(c * s.y))
            self.assertEqual(scaled.p_value, base.p_value)

    def test_fast_path_matches_literal_outcomes(self):
        s = two_by_two([1.0, 3.0, 2.0, 6.0], cluster_of_stratum=[0, 1, 1, 0])
        contrib = cluster_contributions(stratum_table(s), s.cluster_of_stratum)
        for signs in sign_matrix(2):
            star = s.with_y(bootstrap_outcomes(s, signs))
            literal = cluster_contributions(stratum_table(star), s.cluster_of_stratum)
            np.testing.assert_allclose(literal, signs * contrib, atol=1e-12)
            self.assertAlmostEqual(report(star).t_clu, replicate_t(contrib, signs[None, :])[0], delta=1e-12)

    def test_sampled_deterministic(self):
        s = two_by_two([1.0, 3.0, 2.0, 6.0, -0.5, 0.25])
        a = wild_cluster_bootstrap(s, B=199, stream=RandomStream(4), mode=BootstrapMode.SAMPLED)
        b = wild_cluster_bootstrap(s, B=199, stream=RandomStream(4), mode=BootstrapMode.SAMPLED)
        self.assertEqual(a.t_draws, b.t_draws)
        self.assertEqual(a.draws, 199)
        self.assertAlmostEqual(a.p_value * 200, round(a.p_value * 200), delta=1e-9)
        self.assertGreaterEqual(a.p_value, 1 / 200)

    def test_sampled_needs_stream(self):
        with self.assertRaises(ValidationError):
            wild_cluster_bootstrap(two_by_two([1.0, 3.0]), B=99, mode=BootstrapMode.SAMPLED)

    def test_enumeration_cap(self):
        with self.assertRaises(TooManyClusters) as ctx:
            wild_cluster_bootstrap(two_by_two([1.0, 3.0, 2.0]), mode=BootstrapMode.FULL_ENUMERATION, cap=4)
        self.assertEqual(ctx.exception.n_clusters, 3)

    def test_single_cluster(self):
        with self.assertRaises(ValidationError):
            wild_cluster_bootstrap(two_by_two([1.0, 3.0], cluster_of_stratum=[0, 0]))


if __name__ == "__main__":
    unittest.main()
