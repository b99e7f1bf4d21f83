import itertools
import math
import unittest

import numpy as np

from clustershock.core.design import (
    Assignment,
    ObservedSample,
    assign,
    assignment_matrix,
    count_assignments,
    enumerate_assignments,
    observe,
)
from clustershock.core.errors import CapExceeded, ShapeMismatch, ValidationError
from clustershock.core.layout import StrataLayout
from clustershock.core.population import PotentialOutcomes, build_population, realize_outcomes, zero_shocks
from clustershock.core.rng import RandomStream
from clustershock.schemas.population import CompactPopulationConfig


def sample(stratum, treated, y, **kwargs) -> ObservedSample:
    return ObservedSample(
        stratum=np.asarray(stratum), treated=np.asarray(treated), y=np.asarray(y, dtype=float), **kwargs
    )


class TestLayout(unittest.TestCase):
    def test_offsets_and_index(self):
        layout = StrataLayout((2, 3, 1))
        self.assertEqual(layout.K, 3)
        self.assertEqual(layout.n, 6)
        np.testing.assert_array_equal(layout.offsets, [0, 2, 5, 6])
        np.testing.assert_array_equal(layout.index, [0, 0, 1, 1, 1, 2])
        self.assertEqual(layout.slice(1), slice(2, 5))


class TestAssign(unittest.TestCase):
    def test_fixed_margins(self):
        pop = build_population(CompactPopulationConfig(K=3, n_per_stratum=[4, 5, 6], n_treat=[2, 2, 3]))
        for seed in range(20):
            a = assign(pop, RandomStream(seed))
            self.assertTrue(set(np.unique(a.d)) <= {0, 1})
            np.testing.assert_array_equal(np.bincount(a.layout.index, weights=a.d), [2, 2, 3])

    def test_deterministic(self):
        pop = build_population(CompactPopulationConfig(K=4, n_per_stratum=6))
        np.testing.assert_array_equal(assign(pop, RandomStream(8)).d, assign(pop, RandomStream(8)).d)

    def test_marginal_probability(self):
        # one stratum per pair gives independent draws of (n_k = 2, n_1k = 1)
        K = 20_000
        pop = build_population(CompactPopulationConfig(K=K, n_per_stratum=2, n_treat=1))
        d = assign(pop, RandomStream(17)).d
        p = d[0::2].mean()
        self.assertLessEqual(abs(p - 0.5), 4.0 * math.sqrt(0.25 / K))

    def test_patterns_uniform(self):
        K = 15_000
        pop = build_population(CompactPopulationConfig(K=K, n_per_stratum=4, n_treat=2))
        d = assign(pop, RandomStream(23)).d.reshape(K, 4)
        codes = d @ np.array([8, 4, 2, 1])
        patterns = [sum(8 >> i for i in combo) for combo in itertools.combinations(range(4), 2)]
        sd = math.sqrt((1 / 6) * (5 / 6) / K)
        for code in patterns:
            self.assertLessEqual(abs(np.mean(codes == code) - 1 / 6), 4.0 * sd)
        self.assertEqual(np.isin(codes, patterns).sum(), K)


class TestEnumerate(unittest.TestCase):
    def test_single_stratum(self):
        items = list(enumerate_assignments([(4, 2)]))
        self.assertEqual(len(items), 6)
        for a, prob in items:
            self.assertAlmostEqual(prob, 1 / 6)
            self.assertEqual(a.d.sum(), 2)
        self.assertEqual(len({tuple(a.d) for a, _ in items}), 6)

    def test_two_strata(self):
        self.assertEqual(count_assignments([(3, 1), (3, 2)]), 9)
        items = list(enumerate_assignments([(3, 1), (3, 2)]))
        self.assertEqual(len(items), 9)
        self.assertAlmostEqual(sum(p for _, p in items), 1.0, places=12)

    def test_pair_moment(self):
        moment = sum(a.d[0] * a.d[1] * p for a, p in enumerate_assignments([(4, 2)]))
        self.assertAlmostEqual(moment, 1 / 6, places=12)

    def test_first_and_second_moments(self):
        for n_k in range(2, 9):
            for n_1k in range(1, n_k):
                m1 = m2 = 0.0
                for a, p in enumerate_assignments([(n_k, n_1k)]):
                    m1 += a.d[0] * p
                    m2 += a.d[0] * a.d[-1] * p
                self.assertAlmostEqual(m1, n_1k / n_k, delta=1e-12)
                self.assertAlmostEqual(m2, n_1k * (n_1k - 1) / (n_k * (n_k - 1)), delta=1e-12)

    def test_cap(self):
        with self.assertRaises(CapExceeded) as ctx:
            list(enumerate_assignments([(20, 10)], cap=1000))
        self.assertEqual(ctx.exception.count, math.comb(20, 10))
        with self.assertRaises(CapExceeded):
            assignment_matrix([(20, 10)], cap=1000)

    def test_matrix_matches_iterator(self):
        sizes = [(3, 1), (4, 2)]
        D = assignment_matrix(sizes)
        rows = [a.d for a, _ in enumerate_assignments(sizes)]
        np.testing.assert_array_equal(D, np.array(rows))


class TestObserve(unittest.TestCase):
    def test_selection(self):
        layout = StrataLayout((2,))
        po = PotentialOutcomes(np.array([1.0, 2.0]), np.array([5.0, 6.0]), layout)
        s = observe(po, Assignment(np.array([1, 0]), layout))
        np.testing.assert_array_equal(s.y, [5.0, 2.0])

    def test_swap_symmetry(self):
        layout = StrataLayout((2, 2))
        Y0, Y1 = np.array([1.0, 2.0, 3.0, 4.0]), np.array([5.0, 6.0, 7.0, 8.0])
        d = np.array([1, 0, 0, 1])
        a = observe(PotentialOutcomes(Y0, Y1, layout), Assignment(d, layout))
        b = observe(PotentialOutcomes(Y1, Y0, layout), Assignment(1 - d, layout))
        np.testing.assert_array_equal(a.y, b.y)

    def test_null_effect(self):
        pop = build_population(CompactPopulationConfig(K=3, n_per_stratum=4, tau=0.0))
        po = realize_outcomes(pop, zero_shocks(pop))
        ys = {tuple(observe(po, assign(pop, RandomStream(s))).y) for s in range(5)}
        self.assertEqual(len(ys), 1)

    def test_shape_mismatch(self):
        layout = StrataLayout((2, 2))
        po = PotentialOutcomes(np.zeros(4), np.zeros(4), layout)
        with self.assertRaises(ShapeMismatch):
            observe(po, Assignment(np.array([1, 0, 1]), StrataLayout((3,))))

    def test_counts(self):
        s = sample([0, 0, 0, 1, 1], [1, 0, 0, 1, 0], [1, 2, 3, 4, 5])
        self.assertEqual(s.K, 2)
        np.testing.assert_array_equal(s.n_k, [3, 2])
        np.testing.assert_array_equal(s.n_1k, [1, 1])
        np.testing.assert_array_equal(s.n_0k, [2, 1])
        self.assertEqual(s.labels, (1, 2))
        self.assertEqual(s.n_clusters, 2)


class TestObservedSampleValidation(unittest.TestCase):
    def test_one_armed(self):
        with self.assertRaisesRegex(ValidationError, "stratum 2"):
            sample([0, 0, 1, 1], [1, 0, 1, 1], [1, 2, 3, 4])

    def test_non_binary(self):
        with self.assertRaises(ValidationError):
            sample([0, 0, 1, 1], [1, 0, 2, 0], [1, 2, 3, 4])

    def test_lengths(self):
        with self.assertRaises(ShapeMismatch):
            sample([0, 0, 1], [1, 0, 1, 0], [1, 2, 3, 4])

    def test_cluster_map(self):
        s = sample([0, 0, 1, 1, 2, 2], [1, 0] * 3, [1, 2, 3, 4, 5, 6], cluster_of_stratum=np.array([0, 0, 1]))
        self.assertEqual(s.n_clusters, 2)
        self.assertEqual(s.cluster_labels, (1, 2))
        with self.assertRaises(ShapeMismatch):
            sample([0, 0, 1, 1], [1, 0] * 2, [1, 2, 3, 4], cluster_of_stratum=np.array([0]))

    def test_cluster_codes_without_gaps(self):
        for codes in ([0, 2, 2], [1, 1, 2], [-1, 0, 0]):
            with self.assertRaisesRegex(ValidationError, "cluster codes"):
                sample([0, 0, 1, 1, 2, 2], [1, 0] * 3, [1, 2, 3, 4, 5, 6], cluster_of_stratum=np.array(codes))


if __name__ == "__main__":
    unittest.main()
